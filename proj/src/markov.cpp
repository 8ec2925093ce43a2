#include "meram/markov.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace meram {

double UnitConfig::weight(int k) const {
    if (k < 1 || k > n_bits()) throw std::out_of_range("unit: bit index out of range");
    return lsb_weight * static_cast<double>(1L << (k - 1));
}

double UnitConfig::max_value() const {
    return lsb_weight * static_cast<double>((1L << n_bits()) - 1);
}

void UnitConfig::validate() const {
    if (bits.empty()) throw std::invalid_argument("unit: needs at least one bit");
    if (n_bits() > 30) throw std::invalid_argument("unit: more than 30 bits is not supported");
    if (!(lsb_weight > 0.0)) throw std::invalid_argument("unit: lsb_weight must be positive");
    for (const auto& bt : bits) {
        if (!(bt.p_pa >= 0.0 && bt.p_pa <= 1.0 && bt.p_ap >= 0.0 && bt.p_ap <= 1.0)) {
            throw std::invalid_argument("unit: transition probabilities must lie in [0, 1]");
        }
    }
}

UnitConfig UnitConfig::all_coins(int n_bits, double p) {
    UnitConfig c;
    c.bits.assign(static_cast<std::size_t>(n_bits), BitTransition{p, p});
    return c;
}

void DistVec::validate() const {
    double sum = 0.0;
    for (double x : p) {
        if (!(x >= 0.0)) throw std::invalid_argument("distribution: negative entry");
        sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-12) {
        throw std::invalid_argument("distribution: entries sum to " + std::to_string(sum) +
                                    ", expected 1");
    }
}

DistVec DistVec::delta(int n_bits, std::uint32_t state) {
    DistVec d;
    d.p.assign(std::size_t{1} << n_bits, 0.0);
    d.p.at(state) = 1.0;
    return d;
}

DistVec DistVec::uniform(int n_bits) {
    DistVec d;
    const std::size_t n = std::size_t{1} << n_bits;
    d.p.assign(n, 1.0 / static_cast<double>(n));
    return d;
}

DenseMatrix single_matrix(const BitTransition& bt) {
    DenseMatrix m;
    m.dim = 2;
    m.a = {1.0 - bt.p_pa, bt.p_ap,
           bt.p_pa, 1.0 - bt.p_ap};
    return m;
}

DenseMatrix kron_chain(const UnitConfig& config) {
    config.validate();
    const int n = config.n_bits();
    if (n > 16) {
        throw std::invalid_argument("kron_chain: dense form capped at 16 bits; "
                                    "use evolve for larger units");
    }
    // Build up the product one factor at a time, keeping bit 1 at stride 1:
    // after absorbing k factors, entry (r, c) holds the transition probability
    // of the low-k-bit sub-unit.
    DenseMatrix m;
    m.dim = 1;
    m.a = {1.0};
    for (int k = 0; k < n; ++k) {
        const DenseMatrix f = single_matrix(config.bits[static_cast<std::size_t>(k)]);
        DenseMatrix next;
        next.dim = m.dim * 2;
        next.a.assign(next.dim * next.dim, 0.0);
        for (std::size_t fr = 0; fr < 2; ++fr) {
            for (std::size_t fc = 0; fc < 2; ++fc) {
                const double w = f.at(fr, fc);
                for (std::size_t r = 0; r < m.dim; ++r) {
                    for (std::size_t c = 0; c < m.dim; ++c) {
                        next.at(fr * m.dim + r, fc * m.dim + c) = w * m.at(r, c);
                    }
                }
            }
        }
        m = std::move(next);
    }
    return m;
}

DistVec evolve(const DistVec& dist, const UnitConfig& config) {
    config.validate();
    const std::size_t n = std::size_t{1} << config.n_bits();
    if (dist.p.size() != n) {
        throw std::invalid_argument("evolve: distribution size does not match unit");
    }
    DistVec out = dist;
    for (int k = 0; k < config.n_bits(); ++k) {
        const auto& bt = config.bits[static_cast<std::size_t>(k)];
        const double m00 = 1.0 - bt.p_pa, m01 = bt.p_ap;
        const double m10 = bt.p_pa, m11 = 1.0 - bt.p_ap;
        const std::size_t stride = std::size_t{1} << k;
        for (std::size_t base = 0; base < n; base += 2 * stride) {
            for (std::size_t i = 0; i < stride; ++i) {
                const double d0 = out.p[base + i];
                const double d1 = out.p[base + i + stride];
                out.p[base + i] = m00 * d0 + m01 * d1;
                out.p[base + i + stride] = m10 * d0 + m11 * d1;
            }
        }
    }
    return out;
}

DistVec stationary(const UnitConfig& config) {
    config.validate();
    const int n = config.n_bits();
    for (int k = 0; k < n; ++k) {
        const auto& bt = config.bits[static_cast<std::size_t>(k)];
        if (bt.p_pa + bt.p_ap == 0.0) {
            throw std::runtime_error("stationary: absorbing bit " + std::to_string(k + 1) +
                                     " (p_pa = p_ap = 0), fixed point is not unique");
        }
    }
    DistVec out;
    out.p.assign(std::size_t{1} << n, 1.0);
    for (std::size_t s = 0; s < out.p.size(); ++s) {
        for (int k = 0; k < n; ++k) {
            const auto& bt = config.bits[static_cast<std::size_t>(k)];
            const double denom = bt.p_pa + bt.p_ap;
            const bool ap = (s >> k) & 1U;
            out.p[s] *= (ap ? bt.p_pa : bt.p_ap) / denom;
        }
    }
    return out;
}

double readout_value(const UnitConfig& config, std::uint32_t state) {
    double v = 0.0;
    for (int k = 0; k < config.n_bits(); ++k) {
        if ((state >> k) & 1U) v += config.lsb_weight * static_cast<double>(1L << k);
    }
    return v;
}

ValueDist value_distribution(const DistVec& dist, const UnitConfig& config) {
    config.validate();
    const std::size_t n = std::size_t{1} << config.n_bits();
    if (dist.p.size() != n) {
        throw std::invalid_argument("value_distribution: distribution size does not match unit");
    }
    // Binary digit weights make the readout map s -> s * lsb, so states are
    // already in ascending value order.
    ValueDist out;
    out.values.reserve(n);
    out.probs.reserve(n);
    for (std::size_t s = 0; s < n; ++s) {
        out.values.push_back(readout_value(config, static_cast<std::uint32_t>(s)));
        out.probs.push_back(dist.p[s]);
    }
    return out;
}

EpsDist epsilon_distribution(const UnitConfig& config, const DistVec& start) {
    config.validate();
    start.validate();
    const int n = config.n_bits();
    const std::size_t dim = std::size_t{1} << n;
    if (start.p.size() != dim) {
        throw std::invalid_argument("epsilon_distribution: start size does not match unit");
    }
    EpsDist out;
    out.n_bits = n;
    out.lsb = config.lsb_weight;
    out.prob.assign(2 * dim - 1, 0.0);
    const long offset = static_cast<long>(dim) - 1;
    for (std::size_t a = 0; a < dim; ++a) {
        const double pa = start.p[a];
        if (pa == 0.0) continue;
        for (std::size_t b = 0; b < dim; ++b) {
            double trans = 1.0;
            for (int k = 0; k < n; ++k) {
                const auto& bt = config.bits[static_cast<std::size_t>(k)];
                const bool fa = (a >> k) & 1U;
                const bool fb = (b >> k) & 1U;
                trans *= fa ? (fb ? 1.0 - bt.p_ap : bt.p_ap)
                            : (fb ? bt.p_pa : 1.0 - bt.p_pa);
                if (trans == 0.0) break;
            }
            const long d = static_cast<long>(b) - static_cast<long>(a);
            out.prob[static_cast<std::size_t>(d + offset)] += pa * trans;
        }
    }
    return out;
}

EpsDist epsilon_distribution(const UnitConfig& config) {
    return epsilon_distribution(config, std::vector<bool>(config.bits.size(), false));
}

EpsDist epsilon_distribution(const UnitConfig& config,
                             const std::vector<bool>& frozen_bits) {
    config.validate();
    const int n = config.n_bits();
    if (frozen_bits.size() != config.bits.size()) {
        throw std::invalid_argument("epsilon_distribution: frozen mask size mismatch");
    }
    for (int k = 0; k < n; ++k) {
        const auto& bt = config.bits[static_cast<std::size_t>(k)];
        if (!frozen_bits[static_cast<std::size_t>(k)] && bt.p_pa + bt.p_ap == 0.0) {
            throw std::runtime_error("epsilon_distribution: absorbing bit " +
                                     std::to_string(k + 1) +
                                     " (p_pa = p_ap = 0), stationary start undefined");
        }
    }
    // At stationarity the joint law of (previous, next) factors over bits, so
    // eps is a sum of independent per-bit increments in {-2^(k-1), 0, 2^(k-1)}
    // grid steps. Convolve them directly on the signed step grid.
    const long span = (1L << n) - 1;
    std::vector<double> acc(2 * span + 1, 0.0);
    acc[static_cast<std::size_t>(span)] = 1.0;
    std::vector<double> next(acc.size());
    for (int k = 0; k < n; ++k) {
        if (frozen_bits[static_cast<std::size_t>(k)]) continue;
        const auto& bt = config.bits[static_cast<std::size_t>(k)];
        const double denom = bt.p_pa + bt.p_ap;
        const double pi_p = bt.p_ap / denom;
        const double pi_ap = bt.p_pa / denom;
        const double p_up = pi_p * bt.p_pa;   // P -> AP, +1 digit
        const double p_down = pi_ap * bt.p_ap; // AP -> P, -1 digit
        const double p_stay = 1.0 - p_up - p_down;
        const long step = 1L << k;
        std::fill(next.begin(), next.end(), 0.0);
        for (long d = -span; d <= span; ++d) {
            const double mass = acc[static_cast<std::size_t>(d + span)];
            if (mass == 0.0) continue;
            next[static_cast<std::size_t>(d + span)] += mass * p_stay;
            if (p_up > 0.0) next[static_cast<std::size_t>(d + step + span)] += mass * p_up;
            if (p_down > 0.0) next[static_cast<std::size_t>(d - step + span)] += mass * p_down;
        }
        acc.swap(next);
    }
    EpsDist out;
    out.n_bits = n;
    out.lsb = config.lsb_weight;
    out.prob = std::move(acc);
    return out;
}

double EpsDist::mean() const {
    double m = 0.0;
    for (std::size_t i = 0; i < prob.size(); ++i) m += value_at(i) * prob[i];
    return m;
}

double EpsDist::variance() const {
    const double m = mean();
    double v = 0.0;
    for (std::size_t i = 0; i < prob.size(); ++i) {
        const double d = value_at(i) - m;
        v += d * d * prob[i];
    }
    return v;
}

std::uint32_t step_state(const UnitConfig& config, std::uint32_t state, Rng& rng) {
    std::uint32_t out = state;
    for (int k = 0; k < config.n_bits(); ++k) {
        const auto& bt = config.bits[static_cast<std::size_t>(k)];
        const bool ap = (state >> k) & 1U;
        const double flip_p = ap ? bt.p_ap : bt.p_pa;
        if (rng.uniform() < flip_p) out ^= (1U << k);
    }
    return out;
}

ChainSample sample_chain(const UnitConfig& config, long n_steps, Rng& rng,
                         std::uint32_t init_state) {
    config.validate();
    if (n_steps < 1) throw std::invalid_argument("sample_chain: n_steps must be >= 1");
    if (init_state >= (std::uint32_t{1} << config.n_bits())) {
        throw std::invalid_argument("sample_chain: init state out of range");
    }
    ChainSample out;
    out.states.reserve(static_cast<std::size_t>(n_steps) + 1);
    out.values.reserve(static_cast<std::size_t>(n_steps) + 1);
    out.eps.reserve(static_cast<std::size_t>(n_steps));
    std::uint32_t s = init_state;
    out.states.push_back(s);
    out.values.push_back(readout_value(config, s));
    for (long i = 0; i < n_steps; ++i) {
        s = step_state(config, s, rng);
        out.states.push_back(s);
        const double v = readout_value(config, s);
        out.values.push_back(v);
        out.eps.push_back(v - out.values[out.values.size() - 2]);
    }
    return out;
}

std::optional<double> lag_autocorr(const std::vector<double>& seq, long lag) {
    if (lag < 1) throw std::invalid_argument("lag_autocorr: lag must be >= 1");
    const long n = static_cast<long>(seq.size());
    if (n <= lag + 1) throw std::invalid_argument("lag_autocorr: sequence too short for lag");
    double mean = 0.0;
    for (double x : seq) mean += x;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double x : seq) var += (x - mean) * (x - mean);
    if (var == 0.0) return std::nullopt;
    double cov = 0.0;
    for (long i = 0; i + lag < n; ++i) {
        cov += (seq[static_cast<std::size_t>(i)] - mean) *
               (seq[static_cast<std::size_t>(i + lag)] - mean);
    }
    return cov / var;
}

} // namespace meram
