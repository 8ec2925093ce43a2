#include "meram/sampler.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace meram {

namespace {

constexpr char bank_magic[8] = {'M', 'E', 'R', 'A', 'M', 'N', 'B', '1'};
constexpr std::uint32_t bank_version = 1;

struct Fnv1a {
    std::uint64_t h = 0xCBF29CE484222325ULL;

    void add_bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 0x100000001B3ULL;
        }
    }
    void add_u64(std::uint64_t v) { add_bytes(&v, sizeof v); }
    void add_double(double v) { add_u64(std::bit_cast<std::uint64_t>(v)); }
};

} // namespace

void StreamSpec::validate() const {
    if (!(scale > 0.0)) throw std::invalid_argument("stream: scale must be positive");
    if (!(defect_rate >= 0.0 && defect_rate < 1.0)) {
        throw std::invalid_argument("stream: defect_rate must lie in [0, 1)");
    }
    if (burn_in < 0) throw std::invalid_argument("stream: burn_in must be non-negative");
}

std::uint64_t provenance_digest(const UnitConfig& config, const StreamSpec& spec) {
    Fnv1a f;
    f.add_u64(static_cast<std::uint64_t>(config.n_bits()));
    f.add_double(config.lsb_weight);
    for (const auto& bt : config.bits) {
        f.add_double(bt.p_pa);
        f.add_double(bt.p_ap);
    }
    f.add_u64(static_cast<std::uint64_t>(spec.backend));
    f.add_u64(static_cast<std::uint64_t>(spec.mode));
    f.add_double(spec.scale);
    f.add_double(spec.offset);
    f.add_u64(static_cast<std::uint64_t>(spec.burn_in));
    f.add_double(spec.defect_rate);
    f.add_u64(static_cast<std::uint64_t>(spec.defect_kind));
    f.add_u64(spec.seed);
    return f.h;
}

NoiseStream::NoiseStream(const UnitConfig& config, const StreamSpec& spec)
    : config_(config), spec_(spec), rng_(spec.seed, 1) {
    config_.validate();
    spec_.validate();
    digest_ = provenance_digest(config_, spec_);
    init_defects();
    seed_states();
}

NoiseStream::NoiseStream(const UnitConfig& config, const StreamSpec& spec,
                         const DeviceParams& params, const std::vector<PulseSpec>& pulses,
                         double dt)
    : config_(config), spec_(spec), physical_(true), params_(params), pulses_(pulses),
      dt_(dt), rng_(spec.seed, 1) {
    config_.validate();
    spec_.validate();
    params_.validate();
    if (pulses_.size() != config_.bits.size()) {
        throw std::invalid_argument("stream: physical backend needs one pulse per bit");
    }
    for (const auto& pulse : pulses_) pulse.validate();
    digest_ = provenance_digest(config_, spec_);
    init_defects();
    seed_states();
}

void NoiseStream::init_defects() {
    const int n = config_.n_bits();
    stuck_.assign(static_cast<std::size_t>(n), StuckState::Free);
    if (spec_.defect_rate == 0.0) return;
    Rng defect_rng(spec_.seed, 0x5EEDULL);
    for (int k = 0; k < n; ++k) {
        if (defect_rng.uniform() >= spec_.defect_rate) continue;
        switch (spec_.defect_kind) {
        case DefectKind::StuckP:
            stuck_[static_cast<std::size_t>(k)] = StuckState::AtP;
            break;
        case DefectKind::StuckAP:
            stuck_[static_cast<std::size_t>(k)] = StuckState::AtAP;
            break;
        case DefectKind::Random:
            stuck_[static_cast<std::size_t>(k)] =
                defect_rng.uniform() < 0.5 ? StuckState::AtP : StuckState::AtAP;
            break;
        }
    }
}

void NoiseStream::seed_states() {
    const int n = config_.n_bits();
    state_ = 0;
    for (int k = 0; k < n; ++k) {
        if (stuck_[static_cast<std::size_t>(k)] == StuckState::AtAP) state_ |= 1U << k;
    }
    if (physical_) {
        spins_.assign(static_cast<std::size_t>(n), Vec3{0.0, 0.0, 1.0});
        for (int k = 0; k < n; ++k) {
            if ((state_ >> k) & 1U) spins_[static_cast<std::size_t>(k)] = Vec3{0.0, 0.0, -1.0};
        }
    }
}

void NoiseStream::step_once() {
    const int n = config_.n_bits();
    for (int k = 0; k < n; ++k) {
        if (stuck_[static_cast<std::size_t>(k)] != StuckState::Free) continue;
        const bool ap = (state_ >> k) & 1U;
        if (physical_) {
            auto& m = spins_[static_cast<std::size_t>(k)];
            const SpinState out = simulate_pulse(params_, make_state(m),
                                                 pulses_[static_cast<std::size_t>(k)],
                                                 dt_, rng_);
            m = out.m;
            if (out.bit == Bit::AP) state_ |= 1U << k; else state_ &= ~(1U << k);
        } else {
            const auto& bt = config_.bits[static_cast<std::size_t>(k)];
            const double flip_p = ap ? bt.p_ap : bt.p_pa;
            if (rng_.uniform() < flip_p) state_ ^= 1U << k;
        }
    }
}

double NoiseStream::value() const { return readout_value(config_, state_); }

double NoiseStream::next() {
    if (spec_.mode == Mode::Independent) {
        for (long i = 0; i < spec_.burn_in; ++i) step_once();
        const double before = value();
        step_once();
        return spec_.scale * (value() - before) + spec_.offset;
    }
    if (!primed_) {
        for (long i = 0; i < spec_.burn_in; ++i) step_once();
        last_value_ = value();
        primed_ = true;
    }
    step_once();
    const double now = value();
    const double eps = now - last_value_;
    last_value_ = now;
    return spec_.scale * eps + spec_.offset;
}

std::vector<double> NoiseStream::draw(long n) {
    if (n < 1) throw std::invalid_argument("draw: need at least one value");
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) out.push_back(next());
    return out;
}

NoiseStream open_stream(const UnitConfig& config, const StreamSpec& spec) {
    if (spec.backend == Backend::Physical) {
        throw std::invalid_argument("open_stream: physical backend needs device "
                                    "parameters and per-bit pulses");
    }
    return NoiseStream(config, spec);
}

NoiseStream open_stream(const UnitConfig& config, const StreamSpec& spec,
                        const DeviceParams& params, const std::vector<PulseSpec>& pulses,
                        double dt) {
    return NoiseStream(config, spec, params, pulses, dt);
}

NoiseStream open_stream(const CalibResult& calib, const StreamSpec& spec,
                        const DeviceParams& params, double dt) {
    if (calib.pulses.empty()) {
        throw std::invalid_argument("open_stream: calibration result carries no pulses; "
                                    "run the pulse inversion first");
    }
    return NoiseStream(calib.config, spec, params, calib.pulses, dt);
}

std::vector<double> fill(const std::vector<long>& shape, NoiseStream& stream) {
    if (shape.empty()) throw std::invalid_argument("fill: empty shape");
    long total = 1;
    for (long d : shape) {
        if (d < 1) throw std::invalid_argument("fill: dimensions must be positive");
        if (total > 100000000L / d) throw std::invalid_argument("fill: more than 1e8 elements");
        total *= d;
    }
    return stream.draw(total);
}

NoiseBank make_bank(NoiseStream& stream, long count) {
    NoiseBank bank;
    bank.values = stream.draw(count);
    bank.digest = stream.digest();
    return bank;
}

void save_bank(const std::string& path, const NoiseBank& bank) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_bank: cannot open " + path);
    out.write(bank_magic, sizeof bank_magic);
    const std::uint32_t ver = bank_version;
    const std::uint64_t count = bank.values.size();
    out.write(reinterpret_cast<const char*>(&ver), sizeof ver);
    out.write(reinterpret_cast<const char*>(&count), sizeof count);
    out.write(reinterpret_cast<const char*>(&bank.digest), sizeof bank.digest);
    out.write(reinterpret_cast<const char*>(bank.values.data()),
              static_cast<std::streamsize>(count * sizeof(double)));
    if (!out) throw std::runtime_error("save_bank: write failed for " + path);
}

NoiseBank load_bank(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_bank: cannot open " + path);
    char magic[8];
    std::uint32_t ver = 0;
    std::uint64_t count = 0;
    NoiseBank bank;
    in.read(magic, sizeof magic);
    in.read(reinterpret_cast<char*>(&ver), sizeof ver);
    in.read(reinterpret_cast<char*>(&count), sizeof count);
    in.read(reinterpret_cast<char*>(&bank.digest), sizeof bank.digest);
    if (!in || std::memcmp(magic, bank_magic, sizeof bank_magic) != 0 || ver != bank_version) {
        throw std::runtime_error("load_bank: corrupt noise bank header in " + path);
    }
    bank.values.resize(count);
    in.read(reinterpret_cast<char*>(bank.values.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in || in.gcount() != static_cast<std::streamsize>(count * sizeof(double))) {
        throw std::runtime_error("load_bank: truncated noise bank " + path);
    }
    return bank;
}

NoiseBank load_bank(const std::string& path, std::uint64_t expected_digest) {
    NoiseBank bank = load_bank(path);
    if (bank.digest != expected_digest) {
        char buf[2 * sizeof(std::uint64_t) * 2 + 64];
        std::snprintf(buf, sizeof buf, "expected %016llx, file has %016llx",
                      static_cast<unsigned long long>(expected_digest),
                      static_cast<unsigned long long>(bank.digest));
        throw std::runtime_error("load_bank: noise bank digest mismatch (" +
                                 std::string(buf) + ")");
    }
    return bank;
}

BankSource::BankSource(const NoiseBank& bank, std::uint64_t seed)
    : bank_(bank), seed_(seed) {
    if (bank.values.empty()) throw std::invalid_argument("bank source: empty bank");
    order_.resize(bank.values.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<std::uint32_t>(i);
}

double BankSource::next() {
    if (pos_ == order_.size()) {
        pos_ = 0;
        ++pass_;
        Rng rng(seed_, pass_);
        for (std::size_t i = order_.size() - 1; i > 0; --i) {
            const std::size_t j = rng.uniform_index(i + 1);
            std::swap(order_[i], order_[j]);
        }
    }
    return bank_.values[order_[pos_++]];
}

} // namespace meram
