#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "meram/macrospin.hpp"
#include "meram/markov.hpp"

namespace meram {

// Discretized zero-mean Gaussian on the unit's increment grid, in readout
// units. Kept alongside sigma so reports can name the target.
struct TargetDist {
    double sigma = 1.0;
    EpsDist dist;
};

TargetDist discretize_gaussian(double sigma, int n_bits, double lsb = 1.0 / 64.0);

enum class Metric { TV, KL, Chi2 };

// Distance between an increment law and the target on an identical grid.
// KL returns +infinity when p carries mass where the target has none.
double divergence(const EpsDist& p, const TargetDist& q, Metric metric);

struct CalibResult {
    UnitConfig config;
    double achieved_tv = 1.0;
    double baseline_tv = 1.0;            // all-coins reference value
    std::vector<PulseSpec> pulses;       // filled by probabilities_to_pulses
    std::vector<double> pulse_residuals; // per bit, same order as config.bits
};

struct FitOptions {
    int n_starts = 8;
    std::uint64_t seed = 1;
    int max_sweeps = 80;
    double step0 = 0.2;
    double step_min = 1e-4;
    bool include_coins_start = true; // start 0 at p = 0.5 everywhere
};

// Derivative-free fit of the 2N transition probabilities in [0.01, 0.99]
// minimizing the exact TV distance of the stationary increment law to the
// target. Multi-start coordinate descent with a halving step schedule,
// deterministic for a fixed seed; ties between starts break toward the lower
// start index. Fails with "no improvement" when the best result cannot even
// match the all-coins reference.
CalibResult fit_probabilities(const TargetDist& target, int n_bits,
                              const FitOptions& options = {});

// Map requested per-bit probability pairs onto lookup rows by max-coordinate
// distance, smallest width winning ties. A bit whose request sits farther
// than feasibility_tol from every row is reported infeasible.
void probabilities_to_pulses(CalibResult& result, const LookupTable& lookup,
                             double feasibility_tol = 0.05);

// Fixed two-width unit: bit 8 from the 0.4 ns lookup row, bits 1..7 from the
// 2 ns row. Requires both rows present.
UnitConfig reference_preset(const LookupTable& lookup);

} // namespace meram
