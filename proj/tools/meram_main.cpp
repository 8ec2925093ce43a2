// meram: command line front end for the stochastic MRAM noise pipeline.
//
// Subcommands mirror the pipeline stages: device-sweep measures switching
// probabilities, calibrate fits a bit unit to a Gaussian target, sample draws
// noise from the unit, train/generate/evaluate drive the diffusion model on
// that noise. Every subcommand takes --seed and is deterministic for a fixed
// seed; --threads never changes output bytes, only wall time.
//
// Exit codes: 0 success, 2 bad configuration or flags, 3 numerical failure,
// 4 missing input artifact (the message names the file).

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "meram/calibrate.hpp"
#include "meram/ddpm.hpp"
#include "meram/io.hpp"
#include "meram/macrospin.hpp"
#include "meram/markov.hpp"
#include "meram/sampler.hpp"
#include "meram/stats.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace meram;

namespace {

struct CliError {
    int code;
    std::string message;
};

[[noreturn]] void config_error(const std::string& msg) { throw CliError{2, msg}; }
[[noreturn]] void numeric_error(const std::string& msg) { throw CliError{3, msg}; }
[[noreturn]] void missing_artifact(const std::string& path, const std::string& hint) {
    throw CliError{4, "missing artifact: " + path + " (" + hint + ")"};
}

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t x = salt + 0x9E3779B97F4A7C15ULL;
    return seed ^ Rng::splitmix64(x);
}

// Inputs the user pointed us at directly count as configuration; artifacts
// produced by an earlier stage get exit code 4 so scripts can tell the two
// apart.
void require_config_file(const std::string& path) {
    if (!fs::exists(path)) config_error("config file not found: " + path);
}

void require_artifact(const std::string& path, const std::string& hint) {
    if (!fs::exists(path)) missing_artifact(path, hint);
}

template <class F>
auto load_stage(F&& f) {
    try {
        return f();
    } catch (const CliError&) {
        throw;
    } catch (const std::exception& e) {
        throw CliError{2, e.what()};
    }
}

template <class F>
auto compute_stage(F&& f) {
    try {
        return f();
    } catch (const CliError&) {
        throw;
    } catch (const std::exception& e) {
        throw CliError{3, e.what()};
    }
}

void write_stage(const std::function<void()>& f) {
    try {
        f();
    } catch (const CliError&) {
        throw;
    } catch (const std::exception& e) {
        throw CliError{3, e.what()};
    }
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) numeric_error("cannot create directory " + dir.string() + ": " + ec.message());
}

std::vector<double> parse_width_spec(const std::string& spec) {
    // start:stop:count, in nanoseconds
    double start = 0.0, stop = 0.0;
    long count = 0;
    char tail = 0;
    if (std::sscanf(spec.c_str(), "%lf:%lf:%ld%c", &start, &stop, &count, &tail) != 3) {
        config_error("--widths expects start:stop:count in nanoseconds, got '" + spec + "'");
    }
    if (!(start > 0.0) || stop < start || count < 1) {
        config_error("--widths needs 0 < start <= stop and count >= 1, got '" + spec + "'");
    }
    std::vector<double> widths;
    widths.reserve(static_cast<std::size_t>(count));
    for (long i = 0; i < count; ++i) {
        const double ns = count == 1 ? start
                                     : start + (stop - start) * static_cast<double>(i) /
                                                   static_cast<double>(count - 1);
        widths.push_back(ns * 1e-9);
    }
    return widths;
}

json moments_json(const Moments& m) {
    json j;
    j["mean"] = m.mean;
    j["stddev"] = m.stddev;
    if (m.skewness_defined) j["skewness"] = m.skewness;
    if (m.kurtosis_defined) j["excess_kurtosis"] = m.excess_kurtosis;
    return j;
}

json gof_json(const GofReport& r) {
    json j;
    j["test"] = r.test;
    j["statistic"] = r.statistic;
    j["dof"] = r.dof;
    j["p_value"] = r.p_value;
    j["alpha"] = r.alpha;
    j["pass"] = r.pass;
    if (!r.note.empty()) j["note"] = r.note;
    return j;
}

// ---------------------------------------------------------------- device-sweep

struct SweepArgs {
    std::string config = "configs/device_default.json";
    std::string out = "out";
    std::vector<double> voltages;
    std::string widths_spec;
    long trials = 2000;
    double dt_override = 0.0;
    std::uint64_t seed = 0;
    int threads = 1;
};

int run_device_sweep(const SweepArgs& a) {
    require_config_file(a.config);
    const DeviceConfig cfg = load_stage([&] { return load_device_config(a.config); });
    const double dt = a.dt_override > 0.0 ? a.dt_override : cfg.sim.dt;
    const std::vector<double> widths = parse_width_spec(a.widths_spec);
    if (a.trials < 1) config_error("--trials must be at least 1");
    if (a.trials < 385) {
        std::cerr << "warning: " << a.trials
                  << " trials cannot push the worst-case 95% CI half-width below 0.05;"
                     " use at least 385 for calibration-grade tables\n";
    }
    for (const double v : a.voltages) {
        if (v < 0.0) config_error("voltages must be non-negative");
    }

    const std::vector<ProbPoint> rows = compute_stage([&] {
        return sweep(cfg.device, a.voltages, widths, a.trials, dt, a.seed, a.threads);
    });

    const fs::path dir = fs::path(a.out) / "device";
    ensure_dir(dir);
    const std::string csv_path = (dir / "sweep.csv").string();
    write_stage([&] { write_prob_csv(csv_path, rows); });

    json summary;
    summary["critical_voltage_V"] = cfg.device.critical_voltage();
    summary["dt_s"] = dt;
    summary["trials_per_direction"] = a.trials;
    summary["rows"] = rows.size();
    json per_v = json::array();
    for (std::size_t iv = 0; iv < a.voltages.size(); ++iv) {
        const ProbPoint* first_half = nullptr;
        const ProbPoint* widest = nullptr;
        for (std::size_t iw = 0; iw < widths.size(); ++iw) {
            const ProbPoint& r = rows[iv * widths.size() + iw];
            if (!first_half && r.p_pa >= 0.5) first_half = &r;
            widest = &r;
        }
        json entry;
        entry["voltage_V"] = a.voltages[iv];
        entry["p_pa_at_max_width"] = widest->p_pa;
        entry["p_ap_at_max_width"] = widest->p_ap;
        if (first_half) {
            entry["first_width_with_p_pa_half_s"] = first_half->width;
        } else {
            entry["first_width_with_p_pa_half_s"] = nullptr;
        }
        per_v.push_back(entry);
    }
    summary["voltages"] = per_v;
    write_stage([&] {
        std::ofstream out((dir / "summary.json").string());
        out << summary.dump(2) << '\n';
        if (!out) numeric_error("write failed for summary.json");
    });

    std::cout << "wrote " << csv_path << " (" << rows.size() << " rows)\n";
    std::cout << "wrote " << (dir / "summary.json").string() << "\n";
    return 0;
}

// ------------------------------------------------------------------- calibrate

struct CalibArgs {
    std::string out = "out";
    std::string lookup;
    double voltage = -1.0;
    double sigma = 1.0;
    int bits = 8;
    double tol = 0.05;
    int starts = 8;
    int max_sweeps = 80;
    bool preset = false;
    std::uint64_t seed = 0;
};

LookupTable lookup_from_csv(const std::string& path, double voltage_request) {
    const std::vector<ProbPoint> all = load_stage([&] { return read_prob_csv(path); });
    if (all.empty()) config_error(path + " holds no rows");
    std::set<double> voltages;
    for (const auto& r : all) voltages.insert(r.voltage);
    double v = voltage_request;
    if (v < 0.0) {
        if (voltages.size() != 1) {
            config_error(path + " holds " + std::to_string(voltages.size()) +
                         " voltages; pick one with --voltage");
        }
        v = *voltages.begin();
    }
    LookupTable lt;
    lt.voltage = v;
    for (const auto& r : all) {
        const double tol = 1e-12 * std::max(1.0, std::abs(v));
        if (std::abs(r.voltage - v) <= tol) lt.rows.push_back(r);
    }
    if (lt.rows.empty()) {
        config_error(path + " has no rows at voltage " + format_double(v));
    }
    std::sort(lt.rows.begin(), lt.rows.end(),
              [](const ProbPoint& a, const ProbPoint& b) { return a.width < b.width; });
    for (const auto& r : lt.rows) {
        if (r.ci_half_width > 0.05) {
            numeric_error("lookup row at width " + format_double(r.width) +
                          " s has CI half-width " + format_double(r.ci_half_width) +
                          " > 0.05; rerun device-sweep with more trials");
        }
    }
    return lt;
}

int run_calibrate(const CalibArgs& a) {
    const std::string lookup_path =
        a.lookup.empty() ? (fs::path(a.out) / "device" / "sweep.csv").string() : a.lookup;
    require_artifact(lookup_path, "run device-sweep first");
    const LookupTable lt = lookup_from_csv(lookup_path, a.voltage);
    if (!(a.sigma > 0.0)) config_error("--sigma must be positive");
    if (a.bits < 2 || a.bits > 16) config_error("--bits must lie in [2, 16]");

    const TargetDist target =
        compute_stage([&] { return discretize_gaussian(a.sigma, a.bits); });

    CalibResult result = compute_stage([&] {
        if (a.preset) {
            CalibResult r;
            r.config = reference_preset(lt);
            const EpsDist law = epsilon_distribution(r.config);
            r.achieved_tv = divergence(law, target, Metric::TV);
            const EpsDist coins = epsilon_distribution(
                UnitConfig::all_coins(r.config.n_bits()));
            r.baseline_tv = divergence(coins, target, Metric::TV);
            return r;
        }
        FitOptions opts;
        opts.seed = mix(a.seed, 21);
        opts.n_starts = a.starts;
        opts.max_sweeps = a.max_sweeps;
        return fit_probabilities(target, a.bits, opts);
    });
    compute_stage([&] {
        probabilities_to_pulses(result, lt, a.tol);
        return 0;
    });

    const fs::path dir = fs::path(a.out) / "calib";
    ensure_dir(dir);
    const std::string calib_path = (dir / "calibration.json").string();
    write_stage([&] { save_calibration(calib_path, result, a.sigma); });

    std::vector<double> tv(target.dist.prob.size());
    std::vector<double> vv(target.dist.prob.size());
    for (std::size_t i = 0; i < tv.size(); ++i) {
        vv[i] = target.dist.value_at(i);
        tv[i] = target.dist.prob[i];
    }
    write_stage([&] { write_dist_csv((dir / "target_dist.csv").string(), vv, tv); });

    const EpsDist achieved = epsilon_distribution(result.config);
    std::vector<double> av(achieved.prob.size());
    std::vector<double> ap(achieved.prob.size());
    for (std::size_t i = 0; i < av.size(); ++i) {
        av[i] = achieved.value_at(i);
        ap[i] = achieved.prob[i];
    }
    write_stage([&] { write_dist_csv((dir / "fitted_dist.csv").string(), av, ap); });

    double worst = 0.0;
    for (const double r : result.pulse_residuals) worst = std::max(worst, r);
    std::cout << "fit TV distance " << result.achieved_tv << " (all-coins reference "
              << result.baseline_tv << ")\n";
    std::cout << "worst pulse residual " << worst << "\n";
    std::cout << "wrote " << calib_path << "\n";
    return 0;
}

// ---------------------------------------------------------------------- sample

struct SampleArgs {
    std::string out = "out";
    std::string calib;
    std::string config = "configs/device_default.json";
    long n = 0;
    Backend backend = Backend::Markov;
    Mode mode = Mode::Independent;
    double scale = 1.0;
    double offset = 0.0;
    long burn_in = 100;
    double defect_rate = 0.0;
    DefectKind defect_kind = DefectKind::Random;
    std::uint64_t seed = 0;
};

int run_sample(const SampleArgs& a) {
    const std::string calib_path =
        a.calib.empty() ? (fs::path(a.out) / "calib" / "calibration.json").string() : a.calib;
    require_artifact(calib_path, "run calibrate first");
    double sigma = 1.0;
    const CalibResult calib =
        load_stage([&] { return load_calibration(calib_path, &sigma); });
    if (a.n < 1) config_error("--n must be at least 1");
    if (a.n > 100000000L) config_error("--n is capped at 1e8");

    StreamSpec spec;
    spec.backend = a.backend;
    spec.mode = a.mode;
    spec.scale = a.scale;
    spec.offset = a.offset;
    spec.burn_in = a.burn_in;
    spec.defect_rate = a.defect_rate;
    spec.defect_kind = a.defect_kind;
    spec.seed = mix(a.seed, 5);
    load_stage([&] {
        spec.validate();
        return 0;
    });

    DeviceConfig dev;
    if (a.backend == Backend::Physical) {
        require_config_file(a.config);
        dev = load_stage([&] { return load_device_config(a.config); });
        if (calib.pulses.empty()) {
            config_error(calib_path + " carries no pulses; rerun calibrate against a lookup");
        }
        if (a.n * static_cast<long>(calib.config.bits.size()) > 200000L) {
            std::cerr << "warning: physical backend integrates the full model per draw;"
                         " this request may take a while\n";
        }
    }

    auto [samples, stuck] = compute_stage([&] {
        CalibResult c = calib;
        for (auto& p : c.pulses) p.relax_time = dev.sim.relax_time;
        NoiseStream stream = a.backend == Backend::Physical
                                 ? open_stream(c, spec, dev.device, dev.sim.dt)
                                 : open_stream(c.config, spec);
        std::vector<double> s = stream.draw(a.n);
        return std::make_pair(std::move(s), stream.stuck());
    });

    const fs::path dir = fs::path(a.out) / "noise";
    ensure_dir(dir);
    write_stage([&] { write_samples_csv((dir / "samples.csv").string(), samples); });
    NoiseBank bank;
    bank.values = samples;
    bank.digest = provenance_digest(calib.config, spec);
    write_stage([&] { save_bank((dir / "bank.bin").string(), bank); });

    std::vector<bool> frozen(calib.config.bits.size(), false);
    long n_stuck = 0;
    for (std::size_t k = 0; k < stuck.size(); ++k) {
        frozen[k] = stuck[k] != StuckState::Free;
        if (frozen[k]) ++n_stuck;
    }
    const EpsDist law = epsilon_distribution(calib.config, frozen);
    std::vector<double> lv(law.prob.size()), lp(law.prob.size());
    for (std::size_t i = 0; i < lv.size(); ++i) {
        lv[i] = law.value_at(i) * a.scale + a.offset;
        lp[i] = law.prob[i];
    }
    write_stage([&] { write_dist_csv((dir / "law.csv").string(), lv, lp); });

    json stats;
    stats["n"] = a.n;
    stats["stuck_bits"] = n_stuck;
    if (samples.size() >= 8) {
        stats["moments"] = moments_json(compute_stage([&] { return moments(samples); }));
    }
    if (a.scale == 1.0 && a.offset == 0.0) {
        try {
            GofReport r = chi2_gof(samples, law);
            if (a.mode == Mode::Sequential) {
                r.note += (r.note.empty() ? "" : "; ");
                r.note += "sequential draws are correlated, treat the p-value as a diagnostic";
            }
            stats["chi2"] = gof_json(r);
        } catch (const std::exception& e) {
            stats["chi2"] = json{{"error", e.what()}};
        }
    }
    if (samples.size() >= 50) {
        try {
            stats["ks_vs_target_normal"] =
                gof_json(ks_statistic(samples, a.offset, sigma * a.scale));
        } catch (const std::exception& e) {
            stats["ks_vs_target_normal"] = json{{"error", e.what()}};
        }
    }
    write_stage([&] {
        std::ofstream out((dir / "stats.json").string());
        out << stats.dump(2) << '\n';
        if (!out) numeric_error("write failed for stats.json");
    });

    std::cout << "wrote " << (dir / "samples.csv").string() << " (" << a.n << " values)\n";
    std::cout << "wrote " << (dir / "bank.bin").string() << "\n";
    std::cout << "wrote " << (dir / "stats.json").string() << "\n";
    return 0;
}

// ----------------------------------------------------------------------- train

struct NoiseFlags {
    std::string calib;
    Mode mode = Mode::Independent;
    double scale = 1.0;
    double offset = 0.0;
    long burn_in = 100;
    double defect_rate = 0.0;
    DefectKind defect_kind = DefectKind::Random;
};

StreamSpec stream_spec_from(const NoiseFlags& f, std::uint64_t seed) {
    StreamSpec spec;
    spec.backend = Backend::Markov;
    spec.mode = f.mode;
    spec.scale = f.scale;
    spec.offset = f.offset;
    spec.burn_in = f.burn_in;
    spec.defect_rate = f.defect_rate;
    spec.defect_kind = f.defect_kind;
    spec.seed = seed;
    load_stage([&] {
        spec.validate();
        return 0;
    });
    return spec;
}

UnitConfig load_unit_for(const NoiseFlags& f, const std::string& out) {
    const std::string calib_path =
        f.calib.empty() ? (fs::path(out) / "calib" / "calibration.json").string() : f.calib;
    require_artifact(calib_path, "run calibrate first");
    return load_stage([&] { return load_calibration(calib_path).config; });
}

struct TrainArgs {
    std::string out = "out";
    std::string letter = "U";
    long size = 16;
    long n_images = 512;
    long jitter = 1;
    double flip_prob = 0.01;
    long epochs = 50;
    long batch = 32;
    double lr = 1e-3;
    long steps = 100;
    double beta_lo = 1e-4;
    double beta_hi = 0.02;
    std::string source = "ideal";
    NoiseFlags noise;
    std::uint64_t seed = 0;
};

int run_train(const TrainArgs& a) {
    if (a.source != "ideal" && a.source != "meram") {
        config_error("--source must be ideal or meram");
    }
    UnitConfig unit;
    if (a.source == "meram") unit = load_unit_for(a.noise, a.out);

    const Schedule sched =
        load_stage([&] { return make_schedule(a.steps, a.beta_lo, a.beta_hi); });
    Rng data_rng(a.seed, 101);
    const ImageBatch dataset = load_stage([&] {
        return make_letter_dataset(a.letter.at(0), a.size, a.n_images, a.jitter,
                                   a.flip_prob, data_rng);
    });

    std::unique_ptr<NoiseSource> source;
    if (a.source == "ideal") {
        source = std::make_unique<GaussianSource>(mix(a.seed, 3));
    } else {
        source = std::make_unique<StreamSource>(
            open_stream(unit, stream_spec_from(a.noise, mix(a.seed, 7))));
    }

    TrainOptions opts;
    opts.epochs = a.epochs;
    opts.batch_size = a.batch;
    opts.lr = a.lr;
    opts.init_seed = mix(a.seed, 1);
    opts.shuffle_seed = mix(a.seed, 2);
    const TrainResult result =
        compute_stage([&] { return train(dataset, sched, *source, opts); });

    const fs::path dir = fs::path(a.out) / "train";
    ensure_dir(dir);
    const std::string ckpt = (dir / ("model_" + a.source + ".ckpt")).string();
    write_stage([&] { save_checkpoint(ckpt, result.model); });
    write_stage([&] {
        write_loss_csv((dir / ("loss_" + a.source + ".csv")).string(), result.epoch_loss,
                       a.source);
    });
    json sj;
    sj["steps"] = a.steps;
    sj["beta_lo"] = a.beta_lo;
    sj["beta_hi"] = a.beta_hi;
    sj["letter"] = a.letter;
    sj["size"] = a.size;
    write_stage([&] {
        std::ofstream out((dir / ("schedule_" + a.source + ".json")).string());
        out << sj.dump(2) << '\n';
        if (!out) numeric_error("write failed for schedule json");
    });
    write_stage([&] {
        write_pgm((dir / "dataset_preview.pgm").string(), dataset.images.front(), a.size,
                  a.size);
    });

    std::cout << "epoch 1 loss " << result.epoch_loss.front() << ", epoch " << a.epochs
              << " loss " << result.epoch_loss.back() << "\n";
    std::cout << "wrote " << ckpt << "\n";
    return 0;
}

// -------------------------------------------------------------------- generate

struct GenerateArgs {
    std::string out = "out";
    std::string source = "ideal";
    std::string checkpoint;
    std::string schedule;
    long n = 50;
    NoiseFlags noise;
    std::uint64_t seed = 0;
};

int run_generate(const GenerateArgs& a) {
    if (a.source != "ideal" && a.source != "meram") {
        config_error("--source must be ideal or meram");
    }
    const std::string ckpt_path =
        a.checkpoint.empty()
            ? (fs::path(a.out) / "train" / ("model_" + a.source + ".ckpt")).string()
            : a.checkpoint;
    require_artifact(ckpt_path, "run train first");
    const std::string sched_path =
        a.schedule.empty()
            ? (fs::path(a.out) / "train" / ("schedule_" + a.source + ".json")).string()
            : a.schedule;
    require_artifact(sched_path, "run train first");
    if (a.n < 1) config_error("--n must be at least 1");

    const Denoiser model = load_stage([&] { return load_checkpoint(ckpt_path); });
    long steps = 0, size = 0;
    double beta_lo = 0.0, beta_hi = 0.0;
    char letter = 'U';
    load_stage([&] {
        std::ifstream in(sched_path);
        json j;
        in >> j;
        steps = j.at("steps").get<long>();
        beta_lo = j.at("beta_lo").get<double>();
        beta_hi = j.at("beta_hi").get<double>();
        letter = j.at("letter").get<std::string>().at(0);
        size = j.at("size").get<long>();
        return 0;
    });
    if (size != model.height || size != model.width) {
        config_error(sched_path + " disagrees with the checkpoint image size");
    }
    const Schedule sched = load_stage([&] { return make_schedule(steps, beta_lo, beta_hi); });

    UnitConfig unit;
    if (a.source == "meram") unit = load_unit_for(a.noise, a.out);
    std::unique_ptr<NoiseSource> source;
    if (a.source == "ideal") {
        source = std::make_unique<GaussianSource>(mix(a.seed, 11));
    } else {
        source = std::make_unique<StreamSource>(
            open_stream(unit, stream_spec_from(a.noise, mix(a.seed, 13))));
    }

    const ImageBatch images =
        compute_stage([&] { return generate(model, sched, *source, a.n); });

    const fs::path dir = fs::path(a.out) / "gen";
    ensure_dir(dir);
    long hits = 0;
    std::ofstream labels((dir / "labels.csv").string());
    labels << "index, letter\n";
    for (long i = 0; i < images.n(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "img_%03ld.pgm", i);
        write_stage([&] {
            write_pgm((dir / name).string(), images.images[static_cast<std::size_t>(i)],
                      images.height, images.width);
        });
        const char got = nearest_template(images.images[static_cast<std::size_t>(i)], size);
        if (got == letter) ++hits;
        labels << i << ", " << got << '\n';
    }
    if (!labels) numeric_error("write failed for labels.csv");
    labels.close();

    json summary;
    summary["n"] = a.n;
    summary["target_letter"] = std::string(1, letter);
    summary["nearest_template_accuracy"] =
        static_cast<double>(hits) / static_cast<double>(a.n);
    write_stage([&] {
        std::ofstream out((dir / "summary.json").string());
        out << summary.dump(2) << '\n';
        if (!out) numeric_error("write failed for summary.json");
    });

    std::cout << hits << "/" << a.n << " images land nearest the '" << letter
              << "' template\n";
    std::cout << "wrote " << (dir / "labels.csv").string() << "\n";
    return 0;
}

// -------------------------------------------------------------------- evaluate

struct EvaluateArgs {
    std::string out = "out";
    std::vector<long> epochs = {10, 25, 50, 100};
    std::vector<std::string> sources = {"ideal", "meram"};
    std::string letter = "U";
    long size = 16;
    long n_images = 256;
    long n_gen = 50;
    long batch = 32;
    double lr = 1e-3;
    long steps = 100;
    double beta_lo = 1e-4;
    double beta_hi = 0.02;
    long jitter = 1;
    double flip_prob = 0.01;
    NoiseFlags noise;
    std::uint64_t seed = 0;
};

int run_evaluate(const EvaluateArgs& a) {
    if (a.epochs.empty()) config_error("--epochs needs at least one entry");
    if (a.n_gen < 20 || a.n_images < a.n_gen) {
        config_error("--n-gen must be >= 20 and no larger than --n-images");
    }
    std::vector<long> budgets = a.epochs;
    std::sort(budgets.begin(), budgets.end());
    budgets.erase(std::unique(budgets.begin(), budgets.end()), budgets.end());
    if (budgets.front() < 1) config_error("--epochs entries must be positive");
    for (const auto& s : a.sources) {
        if (s != "ideal" && s != "meram") config_error("--sources entries must be ideal or meram");
    }
    UnitConfig unit;
    const bool needs_unit =
        std::find(a.sources.begin(), a.sources.end(), "meram") != a.sources.end();
    if (needs_unit) unit = load_unit_for(a.noise, a.out);

    const Schedule sched =
        load_stage([&] { return make_schedule(a.steps, a.beta_lo, a.beta_hi); });
    Rng data_rng(a.seed, 101);
    const ImageBatch dataset = load_stage([&] {
        return make_letter_dataset(a.letter.at(0), a.size, a.n_images, a.jitter,
                                   a.flip_prob, data_rng);
    });
    std::vector<std::vector<double>> data_ref(
        dataset.images.begin(), dataset.images.begin() + a.n_gen);

    struct Row {
        std::string source;
        long epochs;
        double mean_loss;
        double accuracy;
        double mmd2;
        double mmd_p;
    };
    std::vector<Row> table;

    for (const auto& source_name : a.sources) {
        std::unique_ptr<NoiseSource> source;
        if (source_name == "ideal") {
            source = std::make_unique<GaussianSource>(mix(a.seed, 3));
        } else {
            source = std::make_unique<StreamSource>(
                open_stream(unit, stream_spec_from(a.noise, mix(a.seed, 7))));
        }
        TrainOptions opts;
        opts.epochs = budgets.back();
        opts.batch_size = a.batch;
        opts.lr = a.lr;
        opts.init_seed = mix(a.seed, 1);
        opts.shuffle_seed = mix(a.seed, 2);
        opts.snapshot_epochs = budgets;
        const TrainResult result =
            compute_stage([&] { return train(dataset, sched, *source, opts); });

        for (const auto& [budget, model] : result.snapshots) {
            std::unique_ptr<NoiseSource> gen_source;
            if (source_name == "ideal") {
                gen_source = std::make_unique<GaussianSource>(
                    mix(a.seed, 1000 + static_cast<std::uint64_t>(budget)));
            } else {
                gen_source = std::make_unique<StreamSource>(open_stream(
                    unit, stream_spec_from(
                              a.noise, mix(a.seed, 2000 + static_cast<std::uint64_t>(budget)))));
            }
            const ImageBatch gen = compute_stage(
                [&] { return generate(model, sched, *gen_source, a.n_gen); });
            long hits = 0;
            for (const auto& img : gen.images) {
                if (nearest_template(img, a.size) == a.letter.at(0)) ++hits;
            }
            const MmdReport mmd = compute_stage(
                [&] { return mmd2_rbf(gen.images, data_ref, mix(a.seed, 17)); });
            table.push_back(Row{source_name, budget,
                                result.epoch_loss[static_cast<std::size_t>(budget - 1)],
                                static_cast<double>(hits) / static_cast<double>(a.n_gen),
                                mmd.mmd2, mmd.p_value});
        }
    }

    const fs::path dir = fs::path(a.out) / "eval";
    ensure_dir(dir);
    write_stage([&] {
        std::ofstream out((dir / "metrics.csv").string());
        out << "source, epochs, mean_loss, letter_accuracy, mmd2, mmd_p\n";
        for (const auto& r : table) {
            out << r.source << ", " << r.epochs << ", " << format_double(r.mean_loss)
                << ", " << format_double(r.accuracy) << ", " << format_double(r.mmd2)
                << ", " << format_double(r.mmd_p) << '\n';
        }
        if (!out) numeric_error("write failed for metrics.csv");
    });

    json report;
    report["letter"] = a.letter;
    report["size"] = a.size;
    report["n_train_images"] = a.n_images;
    report["n_generated"] = a.n_gen;
    json rows = json::array();
    for (const auto& r : table) {
        rows.push_back({{"source", r.source},
                        {"epochs", r.epochs},
                        {"mean_loss", r.mean_loss},
                        {"letter_accuracy", r.accuracy},
                        {"mmd2_vs_data", r.mmd2},
                        {"mmd_p", r.mmd_p}});
    }
    report["results"] = rows;
    // Side-by-side MMD ratio per budget when both sources ran.
    json ratios = json::array();
    for (const long b : budgets) {
        const Row* ideal = nullptr;
        const Row* meram = nullptr;
        for (const auto& r : table) {
            if (r.epochs != b) continue;
            if (r.source == "ideal") ideal = &r;
            if (r.source == "meram") meram = &r;
        }
        if (ideal && meram && ideal->mmd2 > 0.0) {
            ratios.push_back({{"epochs", b}, {"mmd2_meram_over_ideal", meram->mmd2 / ideal->mmd2}});
        }
    }
    report["mmd_ratios"] = ratios;
    write_stage([&] {
        std::ofstream out((dir / "report.json").string());
        out << report.dump(2) << '\n';
        if (!out) numeric_error("write failed for report.json");
    });

    for (const auto& r : table) {
        std::cout << r.source << " @" << r.epochs << " epochs: loss " << r.mean_loss
                  << ", accuracy " << r.accuracy << ", mmd2 " << r.mmd2 << "\n";
    }
    std::cout << "wrote " << (dir / "metrics.csv").string() << "\n";
    return 0;
}

void add_noise_flags(CLI::App* sub, NoiseFlags& f) {
    const std::map<std::string, Mode> modes{{"sequential", Mode::Sequential},
                                            {"independent", Mode::Independent}};
    const std::map<std::string, DefectKind> kinds{{"stuck_p", DefectKind::StuckP},
                                                  {"stuck_ap", DefectKind::StuckAP},
                                                  {"random", DefectKind::Random}};
    sub->add_option("--calib", f.calib, "Calibration artifact path")
        ->default_str("<out>/calib/calibration.json");
    sub->add_option("--mode", f.mode, "Draw mode: consecutive chain increments or re-equilibrated draws")
        ->transform(CLI::CheckedTransformer(modes, CLI::ignore_case))
        ->default_str("independent");
    sub->add_option("--scale", f.scale, "Multiplier applied to every increment")
        ->capture_default_str();
    sub->add_option("--offset", f.offset, "Shift added to every increment")
        ->capture_default_str();
    sub->add_option("--burn-in", f.burn_in, "Equilibration steps before drawing")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    sub->add_option("--defect-rate", f.defect_rate, "Per-bit stuck probability")
        ->check(CLI::Range(0.0, 0.999999))
        ->capture_default_str();
    sub->add_option("--defect-kind", f.defect_kind, "Which way defective bits stick")
        ->transform(CLI::CheckedTransformer(kinds, CLI::ignore_case))
        ->default_str("random");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "meram: voltage-controlled MRAM bit-array noise pipeline.\n"
        "Stages: device-sweep -> calibrate -> sample, and train -> generate / evaluate\n"
        "for the diffusion model driven by that noise. All stages are deterministic\n"
        "for a fixed --seed; --threads trades wall time only, never output bytes.\n"
        "Exit codes: 0 ok, 2 bad config/flags, 3 numerical failure, 4 missing artifact."};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Print help for every subcommand");

    SweepArgs sweep_args;
    auto* sweep_cmd = app.add_subcommand(
        "device-sweep", "Monte Carlo switching probability table over a voltage/width grid");
    sweep_cmd->add_option("--config", sweep_args.config, "Device parameter JSON")
        ->capture_default_str();
    sweep_cmd->add_option("--out", sweep_args.out, "Output root directory")
        ->capture_default_str();
    sweep_cmd
        ->add_option("--voltages", sweep_args.voltages,
                     "Comma separated pulse voltages in volts")
        ->required()
        ->delimiter(',');
    sweep_cmd
        ->add_option("--widths", sweep_args.widths_spec,
                     "Width grid start:stop:count in nanoseconds")
        ->required();
    sweep_cmd->add_option("--trials", sweep_args.trials, "Trials per grid cell and direction")
        ->capture_default_str();
    sweep_cmd->add_option("--dt", sweep_args.dt_override,
                          "Integrator step in seconds (default: config value)");
    sweep_cmd->add_option("--seed", sweep_args.seed, "Base RNG seed")->required();
    sweep_cmd->add_option("--threads", sweep_args.threads, "Worker threads")
        ->check(CLI::Range(1, 1024))
        ->capture_default_str();

    CalibArgs calib_args;
    auto* calib_cmd = app.add_subcommand(
        "calibrate", "Fit per-bit transition probabilities to a discretized Gaussian and "
                     "invert them into pulse settings");
    calib_cmd->add_option("--out", calib_args.out, "Output root directory")
        ->capture_default_str();
    calib_cmd->add_option("--lookup", calib_args.lookup, "Switching table CSV")
        ->default_str("<out>/device/sweep.csv");
    calib_cmd->add_option("--voltage", calib_args.voltage,
                          "Voltage to slice from the table (default: the only one present)");
    calib_cmd->add_option("--sigma", calib_args.sigma, "Target Gaussian width in readout units")
        ->capture_default_str();
    calib_cmd->add_option("--bits", calib_args.bits, "Bits per unit")->capture_default_str();
    calib_cmd->add_option("--tol", calib_args.tol, "Per-bit feasibility tolerance")
        ->capture_default_str();
    calib_cmd->add_option("--starts", calib_args.starts, "Optimizer restarts")
        ->capture_default_str();
    calib_cmd->add_option("--max-sweeps", calib_args.max_sweeps, "Coordinate sweeps per start")
        ->capture_default_str();
    calib_cmd->add_flag("--preset", calib_args.preset,
                        "Skip the fit; use the fixed two-width reference unit");
    calib_cmd->add_option("--seed", calib_args.seed, "Base RNG seed")->required();

    SampleArgs sample_args;
    auto* sample_cmd =
        app.add_subcommand("sample", "Draw noise values from a calibrated unit");
    sample_cmd->add_option("--out", sample_args.out, "Output root directory")
        ->capture_default_str();
    sample_cmd->add_option("--calib", sample_args.calib, "Calibration artifact path")
        ->default_str("<out>/calib/calibration.json");
    sample_cmd->add_option("--config", sample_args.config,
                           "Device parameter JSON (physical backend only)")
        ->capture_default_str();
    sample_cmd->add_option("--n", sample_args.n, "Number of values to draw")->required();
    const std::map<std::string, Backend> backends{{"markov", Backend::Markov},
                                                  {"physical", Backend::Physical}};
    sample_cmd->add_option("--backend", sample_args.backend,
                           "markov: exact chain; physical: per-pulse integration")
        ->transform(CLI::CheckedTransformer(backends, CLI::ignore_case))
        ->default_str("markov");
    const std::map<std::string, Mode> modes{{"sequential", Mode::Sequential},
                                            {"independent", Mode::Independent}};
    sample_cmd->add_option("--mode", sample_args.mode,
                           "sequential: consecutive chain increments; independent: "
                           "re-equilibrated draws")
        ->transform(CLI::CheckedTransformer(modes, CLI::ignore_case))
        ->default_str("independent");
    sample_cmd->add_option("--scale", sample_args.scale, "Multiplier applied to every value")
        ->capture_default_str();
    sample_cmd->add_option("--offset", sample_args.offset, "Shift added to every value")
        ->capture_default_str();
    sample_cmd->add_option("--burn-in", sample_args.burn_in, "Equilibration steps")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    sample_cmd->add_option("--defect-rate", sample_args.defect_rate, "Per-bit stuck probability")
        ->check(CLI::Range(0.0, 0.999999))
        ->capture_default_str();
    const std::map<std::string, DefectKind> kinds{{"stuck_p", DefectKind::StuckP},
                                                  {"stuck_ap", DefectKind::StuckAP},
                                                  {"random", DefectKind::Random}};
    sample_cmd->add_option("--defect-kind", sample_args.defect_kind,
                           "Which way defective bits stick")
        ->transform(CLI::CheckedTransformer(kinds, CLI::ignore_case))
        ->default_str("random");
    sample_cmd->add_option("--seed", sample_args.seed, "Base RNG seed")->required();

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand(
        "train", "Train the diffusion denoiser on block-letter images");
    train_cmd->add_option("--out", train_args.out, "Output root directory")
        ->capture_default_str();
    train_cmd->add_option("--letter", train_args.letter, "Training letter (U, C, L or A)")
        ->check(CLI::IsMember({"U", "C", "L", "A"}))
        ->capture_default_str();
    train_cmd->add_option("--size", train_args.size, "Image side length")
        ->capture_default_str();
    train_cmd->add_option("--n-images", train_args.n_images, "Dataset size")
        ->capture_default_str();
    train_cmd->add_option("--jitter", train_args.jitter, "Max translation in pixels")
        ->capture_default_str();
    train_cmd->add_option("--flip-prob", train_args.flip_prob, "Per-pixel sign flip probability")
        ->capture_default_str();
    train_cmd->add_option("--epochs", train_args.epochs, "Training epochs")
        ->capture_default_str();
    train_cmd->add_option("--batch", train_args.batch, "Batch size")->capture_default_str();
    train_cmd->add_option("--lr", train_args.lr, "Adam learning rate")->capture_default_str();
    train_cmd->add_option("--steps", train_args.steps, "Diffusion steps T")
        ->capture_default_str();
    train_cmd->add_option("--beta-lo", train_args.beta_lo, "Variance schedule start")
        ->capture_default_str();
    train_cmd->add_option("--beta-hi", train_args.beta_hi, "Variance schedule end")
        ->capture_default_str();
    train_cmd->add_option("--source", train_args.source,
                          "Noise source: ideal (Gaussian RNG) or meram (calibrated unit)")
        ->check(CLI::IsMember({"ideal", "meram"}))
        ->capture_default_str();
    add_noise_flags(train_cmd, train_args.noise);
    train_cmd->add_option("--seed", train_args.seed, "Base RNG seed")->required();

    GenerateArgs gen_args;
    auto* gen_cmd = app.add_subcommand(
        "generate", "Sample images from a trained checkpoint by the reverse walk");
    gen_cmd->add_option("--out", gen_args.out, "Output root directory")
        ->capture_default_str();
    gen_cmd->add_option("--source", gen_args.source,
                        "Noise source for the walk, also picks default checkpoint name")
        ->check(CLI::IsMember({"ideal", "meram"}))
        ->capture_default_str();
    gen_cmd->add_option("--checkpoint", gen_args.checkpoint, "Checkpoint path")
        ->default_str("<out>/train/model_<source>.ckpt");
    gen_cmd->add_option("--schedule", gen_args.schedule, "Schedule sidecar JSON path")
        ->default_str("<out>/train/schedule_<source>.json");
    gen_cmd->add_option("--n", gen_args.n, "Images to generate")->capture_default_str();
    add_noise_flags(gen_cmd, gen_args.noise);
    gen_cmd->add_option("--seed", gen_args.seed, "Base RNG seed")->required();

    EvaluateArgs eval_args;
    auto* eval_cmd = app.add_subcommand(
        "evaluate", "Train at several epoch budgets per noise source and score the "
                    "generated images");
    eval_cmd->add_option("--out", eval_args.out, "Output root directory")
        ->capture_default_str();
    eval_cmd->add_option("--epochs", eval_args.epochs, "Comma separated epoch budgets")
        ->delimiter(',')
        ->capture_default_str();
    eval_cmd->add_option("--sources", eval_args.sources, "Comma separated noise sources")
        ->delimiter(',')
        ->capture_default_str();
    eval_cmd->add_option("--letter", eval_args.letter, "Training letter (U, C, L or A)")
        ->check(CLI::IsMember({"U", "C", "L", "A"}))
        ->capture_default_str();
    eval_cmd->add_option("--size", eval_args.size, "Image side length")
        ->capture_default_str();
    eval_cmd->add_option("--n-images", eval_args.n_images, "Dataset size")
        ->capture_default_str();
    eval_cmd->add_option("--n-gen", eval_args.n_gen, "Images generated per budget")
        ->capture_default_str();
    eval_cmd->add_option("--batch", eval_args.batch, "Batch size")->capture_default_str();
    eval_cmd->add_option("--lr", eval_args.lr, "Adam learning rate")->capture_default_str();
    eval_cmd->add_option("--steps", eval_args.steps, "Diffusion steps T")
        ->capture_default_str();
    eval_cmd->add_option("--beta-lo", eval_args.beta_lo, "Variance schedule start")
        ->capture_default_str();
    eval_cmd->add_option("--beta-hi", eval_args.beta_hi, "Variance schedule end")
        ->capture_default_str();
    eval_cmd->add_option("--jitter", eval_args.jitter, "Max translation in pixels")
        ->capture_default_str();
    eval_cmd->add_option("--flip-prob", eval_args.flip_prob, "Per-pixel sign flip probability")
        ->capture_default_str();
    add_noise_flags(eval_cmd, eval_args.noise);
    eval_cmd->add_option("--seed", eval_args.seed, "Base RNG seed")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            // help requested: print the deepest selected subcommand, or the
            // full tree at top level so every flag is on screen
            const auto subs = app.get_subcommands();
            if (!subs.empty()) {
                std::cout << subs.front()->help();
            } else {
                std::cout << app.help("", CLI::AppFormatMode::All);
            }
            return 0;
        }
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (sweep_cmd->parsed()) return run_device_sweep(sweep_args);
        if (calib_cmd->parsed()) return run_calibrate(calib_args);
        if (sample_cmd->parsed()) return run_sample(sample_args);
        if (train_cmd->parsed()) return run_train(train_args);
        if (gen_cmd->parsed()) return run_generate(gen_args);
        if (eval_cmd->parsed()) return run_evaluate(eval_args);
    } catch (const CliError& e) {
        std::cerr << "error: " << e.message << "\n";
        return e.code;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
