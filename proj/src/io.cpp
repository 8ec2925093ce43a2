#include "meram/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace meram {

namespace {

using nlohmann::json;

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error("malformed JSON in " + path + ": " + e.what());
    }
    return j;
}

void dump_json(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("write failed for " + path);
}

double need_number(const json& j, const std::string& key, const std::string& path) {
    if (!j.contains(key) || !j.at(key).is_number()) {
        throw std::runtime_error(path + ": missing or non-numeric field '" + key + "'");
    }
    return j.at(key).get<double>();
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    std::istringstream ss(line);
    while (std::getline(ss, cur, ',')) {
        const auto b = cur.find_first_not_of(" \t\r");
        const auto e = cur.find_last_not_of(" \t\r");
        fields.push_back(b == std::string::npos ? std::string() : cur.substr(b, e - b + 1));
    }
    return fields;
}

double parse_double_field(const std::string& s, const std::string& path) {
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
        throw std::runtime_error(path + ": bad numeric field '" + s + "'");
    }
    return v;
}

} // namespace

std::string format_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

DeviceConfig load_device_config(const std::string& path) {
    const json j = load_json(path);
    if (!j.contains("device") || !j.at("device").is_object()) {
        throw std::runtime_error(path + ": missing 'device' section");
    }
    const json& d = j.at("device");
    DeviceConfig cfg;
    cfg.device.m_sat = need_number(d, "m_sat", path);
    cfg.device.k_eff0 = need_number(d, "k_eff0", path);
    cfg.device.xi_vcma = need_number(d, "xi_vcma", path);
    cfg.device.t_free = need_number(d, "t_free", path);
    cfg.device.t_ox = need_number(d, "t_ox", path);
    cfg.device.diameter = need_number(d, "diameter", path);
    cfg.device.alpha = need_number(d, "alpha", path);
    cfg.device.gamma = need_number(d, "gamma", path);
    cfg.device.temperature = need_number(d, "temperature", path);
    cfg.device.r_p = need_number(d, "r_p", path);
    cfg.device.r_ap = need_number(d, "r_ap", path);
    if (!d.contains("h_ext") || !d.at("h_ext").is_array() || d.at("h_ext").size() != 3) {
        throw std::runtime_error(path + ": 'h_ext' must be an array of three numbers");
    }
    cfg.device.h_ext = Vec3{d.at("h_ext")[0].get<double>(), d.at("h_ext")[1].get<double>(),
                            d.at("h_ext")[2].get<double>()};
    if (j.contains("simulation")) {
        const json& s = j.at("simulation");
        if (s.contains("dt")) cfg.sim.dt = need_number(s, "dt", path);
        if (s.contains("relax_time")) cfg.sim.relax_time = need_number(s, "relax_time", path);
    }
    cfg.device.validate();
    if (!(cfg.sim.dt > 0.0) || cfg.sim.dt > 1e-12) {
        throw std::runtime_error(path + ": simulation.dt must lie in (0, 1e-12]");
    }
    if (cfg.sim.relax_time < 0.0) {
        throw std::runtime_error(path + ": simulation.relax_time must be non-negative");
    }
    return cfg;
}

void save_device_config(const std::string& path, const DeviceConfig& cfg) {
    json j;
    j["device"] = {
        {"m_sat", cfg.device.m_sat},
        {"k_eff0", cfg.device.k_eff0},
        {"xi_vcma", cfg.device.xi_vcma},
        {"t_free", cfg.device.t_free},
        {"t_ox", cfg.device.t_ox},
        {"diameter", cfg.device.diameter},
        {"alpha", cfg.device.alpha},
        {"gamma", cfg.device.gamma},
        {"temperature", cfg.device.temperature},
        {"h_ext", {cfg.device.h_ext.x, cfg.device.h_ext.y, cfg.device.h_ext.z}},
        {"r_p", cfg.device.r_p},
        {"r_ap", cfg.device.r_ap},
    };
    j["simulation"] = {{"dt", cfg.sim.dt}, {"relax_time", cfg.sim.relax_time}};
    dump_json(path, j);
}

void save_calibration(const std::string& path, const CalibResult& result, double sigma) {
    json bits = json::array();
    for (const auto& b : result.config.bits) {
        bits.push_back({{"p_pa", b.p_pa}, {"p_ap", b.p_ap}});
    }
    json j;
    j["sigma"] = sigma;
    j["lsb_weight"] = result.config.lsb_weight;
    j["bits"] = bits;
    j["achieved_tv"] = result.achieved_tv;
    j["baseline_tv"] = result.baseline_tv;
    if (!result.pulses.empty()) {
        json pulses = json::array();
        for (std::size_t k = 0; k < result.pulses.size(); ++k) {
            pulses.push_back({{"voltage", result.pulses[k].voltage},
                              {"width", result.pulses[k].width},
                              {"residual", result.pulse_residuals[k]}});
        }
        j["pulses"] = pulses;
    }
    dump_json(path, j);
}

CalibResult load_calibration(const std::string& path, double* sigma_out) {
    const json j = load_json(path);
    CalibResult result;
    result.config.lsb_weight = need_number(j, "lsb_weight", path);
    if (!j.contains("bits") || !j.at("bits").is_array() || j.at("bits").empty()) {
        throw std::runtime_error(path + ": missing 'bits' array");
    }
    for (const auto& b : j.at("bits")) {
        result.config.bits.push_back(
            BitTransition{need_number(b, "p_pa", path), need_number(b, "p_ap", path)});
    }
    result.config.validate();
    result.achieved_tv = need_number(j, "achieved_tv", path);
    result.baseline_tv = need_number(j, "baseline_tv", path);
    if (j.contains("pulses")) {
        for (const auto& p : j.at("pulses")) {
            PulseSpec pulse;
            pulse.voltage = need_number(p, "voltage", path);
            pulse.width = need_number(p, "width", path);
            result.pulses.push_back(pulse);
            result.pulse_residuals.push_back(need_number(p, "residual", path));
        }
        if (result.pulses.size() != result.config.bits.size()) {
            throw std::runtime_error(path + ": pulse count does not match bit count");
        }
    }
    if (sigma_out) *sigma_out = need_number(j, "sigma", path);
    return result;
}

void write_prob_csv(const std::string& path, const std::vector<ProbPoint>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "voltage_V, width_s, p_pa, p_ap, ci, n_trials\n";
    for (const auto& r : rows) {
        out << format_double(r.voltage) << ", " << format_double(r.width) << ", "
            << format_double(r.p_pa) << ", " << format_double(r.p_ap) << ", "
            << format_double(r.ci_half_width) << ", " << r.n_trials << '\n';
    }
    if (!out) throw std::runtime_error("write failed for " + path);
}

std::vector<ProbPoint> read_prob_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
    const auto header = split_csv_line(line);
    const std::vector<std::string> expected = {"voltage_V", "width_s", "p_pa",
                                              "p_ap",      "ci",      "n_trials"};
    if (header != expected) throw std::runtime_error(path + ": unexpected header");
    std::vector<ProbPoint> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 6) throw std::runtime_error(path + ": malformed row '" + line + "'");
        ProbPoint p;
        p.voltage = parse_double_field(f[0], path);
        p.width = parse_double_field(f[1], path);
        p.p_pa = parse_double_field(f[2], path);
        p.p_ap = parse_double_field(f[3], path);
        p.ci_half_width = parse_double_field(f[4], path);
        p.n_trials = static_cast<long>(parse_double_field(f[5], path));
        rows.push_back(p);
    }
    return rows;
}

void write_dist_csv(const std::string& path, const std::vector<double>& values,
                    const std::vector<double>& probs) {
    if (values.size() != probs.size()) {
        throw std::invalid_argument("write_dist_csv: value/probability length mismatch");
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "value, probability\n";
    for (std::size_t i = 0; i < values.size(); ++i) {
        out << format_double(values[i]) << ", " << format_double(probs[i]) << '\n';
    }
    if (!out) throw std::runtime_error("write failed for " + path);
}

void write_samples_csv(const std::string& path, const std::vector<double>& values) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "value\n";
    for (const double v : values) out << format_double(v) << '\n';
    if (!out) throw std::runtime_error("write failed for " + path);
}

std::vector<double> read_samples_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || split_csv_line(line) != std::vector<std::string>{"value"}) {
        throw std::runtime_error(path + ": unexpected header");
    }
    std::vector<double> values;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        values.push_back(parse_double_field(split_csv_line(line)[0], path));
    }
    return values;
}

void write_loss_csv(const std::string& path, const std::vector<double>& losses,
                    const std::string& source) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "epoch, mean_loss, noise_source\n";
    for (std::size_t i = 0; i < losses.size(); ++i) {
        out << (i + 1) << ", " << format_double(losses[i]) << ", " << source << '\n';
    }
    if (!out) throw std::runtime_error("write failed for " + path);
}

void write_pgm(const std::string& path, const std::vector<double>& image, long height,
               long width) {
    if (static_cast<long>(image.size()) != height * width) {
        throw std::invalid_argument("write_pgm: image size does not match dimensions");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "P5\n" << width << ' ' << height << "\n255\n";
    std::vector<unsigned char> bytes(image.size());
    for (std::size_t i = 0; i < image.size(); ++i) {
        const double v = std::clamp(image[i], -1.0, 1.0);
        bytes[i] = static_cast<unsigned char>(std::lround((v + 1.0) * 0.5 * 255.0));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + path);
}

std::vector<double> read_pgm(const std::string& path, long& height, long& width) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string magic;
    long w = 0, h = 0, maxval = 0;
    in >> magic >> w >> h >> maxval;
    if (!in || magic != "P5" || w < 1 || h < 1 || maxval != 255) {
        throw std::runtime_error(path + ": not an 8-bit binary PGM");
    }
    in.get(); // single whitespace after the header
    std::vector<unsigned char> bytes(static_cast<std::size_t>(w * h));
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!in) throw std::runtime_error(path + ": truncated pixel data");
    std::vector<double> image(bytes.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        image[i] = static_cast<double>(bytes[i]) / 255.0 * 2.0 - 1.0;
    }
    height = h;
    width = w;
    return image;
}

} // namespace meram
