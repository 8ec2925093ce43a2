#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "meram/rng.hpp"

namespace meram {

// Per-pulse transition probabilities of one bit. p_pa is P->AP, p_ap is AP->P.
struct BitTransition {
    double p_pa = 0.0;
    double p_ap = 0.0;
};

// Ordered unit of N bits. Bit k (1-based) carries digit weight
// lsb_weight * 2^(k-1), so bit N is the most significant. The default lsb of
// 1/64 puts an 8-bit unit's readout on the [0, 255/64] grid.
struct UnitConfig {
    std::vector<BitTransition> bits;
    double lsb_weight = 1.0 / 64.0;

    int n_bits() const { return static_cast<int>(bits.size()); }
    double weight(int k) const; // k is 1-based
    double max_value() const;   // all-AP readout
    void validate() const;

    static UnitConfig all_coins(int n_bits, double p = 0.5);
};

// Joint distribution over the 2^N bit-states. Bit k of state s is
// (s >> (k-1)) & 1, i.e. bit 1 varies fastest.
struct DistVec {
    std::vector<double> p;

    std::size_t size() const { return p.size(); }
    void validate() const; // non-negative, sums to 1 within 1e-12

    static DistVec delta(int n_bits, std::uint32_t state);
    static DistVec uniform(int n_bits);
};

struct DenseMatrix {
    std::size_t dim = 0;
    std::vector<double> a; // row-major

    double& at(std::size_t r, std::size_t c) { return a[r * dim + c]; }
    double at(std::size_t r, std::size_t c) const { return a[r * dim + c]; }
};

// Distribution of the readout increment eps = A_i - A_{i-1}. Support is the
// signed integer grid d in [-(2^N - 1), 2^N - 1] scaled by lsb.
struct EpsDist {
    int n_bits = 0;
    double lsb = 1.0 / 64.0;
    std::vector<double> prob; // index i holds d = i - (2^N - 1)

    long half_span() const { return (1L << n_bits) - 1; }
    double value_at(std::size_t i) const {
        return (static_cast<long>(i) - half_span()) * lsb;
    }
    double prob_of_step(long d) const { return prob[static_cast<std::size_t>(d + half_span())]; }
    double mean() const;
    double variance() const;
};

// Column-stochastic 2x2 factor [[1-p_pa, p_ap], [p_pa, 1-p_ap]] with state
// order (P, AP).
DenseMatrix single_matrix(const BitTransition& bt);

// Dense joint transition matrix, the Kronecker product of the per-bit factors
// ordered so bit 1 has stride 1. Rejected above 16 bits; use evolve for the
// factored application instead.
DenseMatrix kron_chain(const UnitConfig& config);

// One chain step: M applied to dist through the factored form, O(N * 2^N).
DistVec evolve(const DistVec& dist, const UnitConfig& config);

// Product of the per-bit stationary marginals (p_ap, p_pa)/(p_pa + p_ap).
// A bit with p_pa = p_ap = 0 never moves, so the fixed point is not unique;
// that case is reported as an error.
DistVec stationary(const UnitConfig& config);

struct ValueDist {
    std::vector<double> values; // ascending
    std::vector<double> probs;
};

// Pushforward of a joint distribution through the digit-weight readout.
ValueDist value_distribution(const DistVec& dist, const UnitConfig& config);

// Exact law of eps for one step from `start`, via the double sum over
// (from, to) state pairs. No sampling involved.
EpsDist epsilon_distribution(const UnitConfig& config, const DistVec& start);

// Stationary-start eps law. Because both the stationary distribution and the
// transition matrix factor over bits, per-bit increments are independent and
// the law is assembled by convolution, which is what makes calibration
// objective evaluations cheap.
EpsDist epsilon_distribution(const UnitConfig& config);

// Same law with some bits frozen in place (entry true = bit never moves and
// contributes zero increment). The grid keeps the full unit's span so results
// stay comparable with the unrestricted law.
EpsDist epsilon_distribution(const UnitConfig& config,
                             const std::vector<bool>& frozen_bits);

struct ChainSample {
    std::vector<std::uint32_t> states; // length n_steps + 1, including init
    std::vector<double> values;        // readout A per state
    std::vector<double> eps;           // length n_steps, consecutive differences
};

ChainSample sample_chain(const UnitConfig& config, long n_steps, Rng& rng,
                         std::uint32_t init_state = 0);

// Advance one exact per-bit Bernoulli step from the given state.
std::uint32_t step_state(const UnitConfig& config, std::uint32_t state, Rng& rng);

double readout_value(const UnitConfig& config, std::uint32_t state);

// Sample Pearson autocorrelation at the given lag; empty when the sequence
// variance is zero.
std::optional<double> lag_autocorr(const std::vector<double>& seq, long lag);

} // namespace meram
