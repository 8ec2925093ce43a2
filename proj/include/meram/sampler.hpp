#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "meram/calibrate.hpp"
#include "meram/macrospin.hpp"
#include "meram/markov.hpp"
#include "meram/noise_source.hpp"

namespace meram {

enum class Backend { Markov, Physical };
enum class Mode { Sequential, Independent };
enum class DefectKind { StuckP, StuckAP, Random };

struct StreamSpec {
    Backend backend = Backend::Markov;
    Mode mode = Mode::Independent;
    double scale = 1.0;
    double offset = 0.0;
    long burn_in = 100;
    double defect_rate = 0.0;
    DefectKind defect_kind = DefectKind::Random;
    std::uint64_t seed = 1;

    void validate() const;
};

// Per-bit stuck status: a stuck bit keeps one readout value forever and
// contributes nothing to the increments.
enum class StuckState : std::uint8_t { Free = 0, AtP = 1, AtAP = 2 };

// Stateful noise stream over one unit. Sequential mode walks a single chain
// and emits consecutive readout differences; independent mode re-equilibrates
// for burn_in steps before every draw. The physical backend replaces the
// exact Bernoulli step with per-bit pulse integration of the macrospin model.
class NoiseStream {
public:
    NoiseStream(const UnitConfig& config, const StreamSpec& spec);
    NoiseStream(const UnitConfig& config, const StreamSpec& spec,
                const DeviceParams& params, const std::vector<PulseSpec>& pulses,
                double dt);

    double next();
    std::vector<double> draw(long n);

    const UnitConfig& config() const { return config_; }
    const StreamSpec& spec() const { return spec_; }
    const std::vector<StuckState>& stuck() const { return stuck_; }
    std::uint64_t digest() const { return digest_; }

private:
    void init_defects();
    void seed_states();
    void step_once();
    double value() const;

    UnitConfig config_;
    StreamSpec spec_;
    bool physical_ = false;
    DeviceParams params_;
    std::vector<PulseSpec> pulses_;
    double dt_ = 1e-13;
    std::vector<StuckState> stuck_;
    std::uint32_t state_ = 0;
    std::vector<Vec3> spins_; // physical backend only
    Rng rng_;
    bool primed_ = false;
    double last_value_ = 0.0;
    std::uint64_t digest_ = 0;
};

NoiseStream open_stream(const UnitConfig& config, const StreamSpec& spec);
NoiseStream open_stream(const UnitConfig& config, const StreamSpec& spec,
                        const DeviceParams& params, const std::vector<PulseSpec>& pulses,
                        double dt);
// Physical backend from a calibration result; the result must carry pulses.
NoiseStream open_stream(const CalibResult& calib, const StreamSpec& spec,
                        const DeviceParams& params, double dt);

// Row-major noise tensor; the element count is capped at 1e8.
std::vector<double> fill(const std::vector<long>& shape, NoiseStream& stream);

struct NoiseBank {
    std::vector<double> values;
    std::uint64_t digest = 0; // provenance: config plus stream spec
};

// Stable fingerprint of (unit config, stream spec) used to tie banks to the
// exact generator settings.
std::uint64_t provenance_digest(const UnitConfig& config, const StreamSpec& spec);

NoiseBank make_bank(NoiseStream& stream, long count);

// Self-describing binary round trip: magic, version, count, digest, raw
// doubles. load_bank with an expected digest enforces provenance.
void save_bank(const std::string& path, const NoiseBank& bank);
NoiseBank load_bank(const std::string& path);
NoiseBank load_bank(const std::string& path, std::uint64_t expected_digest);

// Replays a bank as a noise source: the first pass runs in stored order, each
// later pass in a freshly seeded shuffle, so values are reused without
// replacement until exhausted.
class BankSource final : public NoiseSource {
public:
    BankSource(const NoiseBank& bank, std::uint64_t seed);
    double next() override;

private:
    const NoiseBank& bank_;
    std::uint64_t seed_;
    std::vector<std::uint32_t> order_;
    std::size_t pos_ = 0;
    std::uint64_t pass_ = 0;
};

// Adapts a live stream to the diffusion noise interface.
class StreamSource final : public NoiseSource {
public:
    explicit StreamSource(NoiseStream stream) : stream_(std::move(stream)) {}
    double next() override { return stream_.next(); }
    NoiseStream& stream() { return stream_; }

private:
    NoiseStream stream_;
};

} // namespace meram
