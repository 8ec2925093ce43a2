#include "meram/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "meram/rng.hpp"

namespace meram {

namespace {

constexpr double prob_lo = 0.01;
constexpr double prob_hi = 0.99;

void check_same_grid(const EpsDist& p, const EpsDist& q) {
    if (p.n_bits != q.n_bits || std::abs(p.lsb - q.lsb) > 1e-15) {
        throw std::invalid_argument("divergence: distributions live on different grids");
    }
}

double tv_distance(const EpsDist& p, const EpsDist& q) {
    double acc = 0.0;
    for (std::size_t i = 0; i < p.prob.size(); ++i) {
        acc += std::abs(p.prob[i] - q.prob[i]);
    }
    return 0.5 * acc;
}

struct Objective {
    const TargetDist& target;

    double operator()(const UnitConfig& config) const {
        return tv_distance(epsilon_distribution(config), target.dist);
    }
};

} // namespace

TargetDist discretize_gaussian(double sigma, int n_bits, double lsb) {
    if (!(sigma > 0.0)) throw std::invalid_argument("discretize_gaussian: sigma must be positive");
    if (n_bits < 1) throw std::invalid_argument("discretize_gaussian: need at least one bit");
    TargetDist t;
    t.sigma = sigma;
    t.dist.n_bits = n_bits;
    t.dist.lsb = lsb;
    const long span = (1L << n_bits) - 1;
    t.dist.prob.assign(static_cast<std::size_t>(2 * span + 1), 0.0);
    double sum = 0.0;
    for (std::size_t i = 0; i < t.dist.prob.size(); ++i) {
        const double x = t.dist.value_at(i);
        const double mass = std::exp(-x * x / (2.0 * sigma * sigma));
        t.dist.prob[i] = mass;
        sum += mass;
    }
    for (double& x : t.dist.prob) x /= sum;
    return t;
}

double divergence(const EpsDist& p, const TargetDist& q, Metric metric) {
    check_same_grid(p, q.dist);
    switch (metric) {
    case Metric::TV:
        return tv_distance(p, q.dist);
    case Metric::KL: {
        double acc = 0.0;
        for (std::size_t i = 0; i < p.prob.size(); ++i) {
            const double pi = p.prob[i];
            if (pi == 0.0) continue;
            const double qi = q.dist.prob[i];
            if (qi == 0.0) return std::numeric_limits<double>::infinity();
            acc += pi * std::log(pi / qi);
        }
        return acc;
    }
    case Metric::Chi2: {
        double acc = 0.0;
        for (std::size_t i = 0; i < p.prob.size(); ++i) {
            const double pi = p.prob[i];
            const double qi = q.dist.prob[i];
            if (qi == 0.0) {
                if (pi == 0.0) continue;
                return std::numeric_limits<double>::infinity();
            }
            const double d = pi - qi;
            acc += d * d / qi;
        }
        return acc;
    }
    }
    throw std::logic_error("divergence: unknown metric");
}

CalibResult fit_probabilities(const TargetDist& target, int n_bits,
                              const FitOptions& options) {
    if (n_bits < 2) throw std::invalid_argument("fit_probabilities: need at least 2 bits");
    if (options.n_starts < 1) throw std::invalid_argument("fit_probabilities: need at least one start");
    if (target.dist.n_bits != n_bits) {
        throw std::invalid_argument("fit_probabilities: target grid does not match n_bits");
    }
    const Objective objective{target};
    const double baseline = objective(UnitConfig::all_coins(n_bits));

    double best_tv = std::numeric_limits<double>::infinity();
    UnitConfig best_config;
    for (int start = 0; start < options.n_starts; ++start) {
        UnitConfig config;
        config.lsb_weight = target.dist.lsb;
        if (start == 0 && options.include_coins_start) {
            config.bits.assign(static_cast<std::size_t>(n_bits), BitTransition{0.5, 0.5});
        } else {
            Rng rng(options.seed, static_cast<std::uint64_t>(start));
            config.bits.resize(static_cast<std::size_t>(n_bits));
            for (auto& bt : config.bits) {
                bt.p_pa = prob_lo + (prob_hi - prob_lo) * rng.uniform();
                bt.p_ap = prob_lo + (prob_hi - prob_lo) * rng.uniform();
            }
        }
        double current = objective(config);
        double step = options.step0;
        for (int sweep = 0; sweep < options.max_sweeps && step >= options.step_min; ++sweep) {
            bool improved = false;
            for (int k = 0; k < n_bits; ++k) {
                for (int which = 0; which < 2; ++which) {
                    double& coord = which == 0 ? config.bits[static_cast<std::size_t>(k)].p_pa
                                               : config.bits[static_cast<std::size_t>(k)].p_ap;
                    const double saved = coord;
                    for (const double sign : {+1.0, -1.0}) {
                        const double candidate = std::clamp(saved + sign * step, prob_lo, prob_hi);
                        if (candidate == saved) continue;
                        coord = candidate;
                        const double value = objective(config);
                        if (value < current) {
                            current = value;
                            improved = true;
                            break;
                        }
                        coord = saved;
                    }
                }
            }
            if (!improved) step *= 0.5;
        }
        if (current < best_tv) {
            best_tv = current;
            best_config = config;
        }
    }

    if (best_tv > baseline + 1e-12 && best_tv > 0.05) {
        throw std::runtime_error("fit_probabilities: no improvement over the all-coins "
                                 "reference (best TV " + std::to_string(best_tv) +
                                 " vs " + std::to_string(baseline) + "); degenerate target");
    }

    CalibResult result;
    result.config = best_config;
    result.achieved_tv = best_tv;
    result.baseline_tv = baseline;
    return result;
}

void probabilities_to_pulses(CalibResult& result, const LookupTable& lookup,
                             double feasibility_tol) {
    if (lookup.rows.empty()) throw std::invalid_argument("probabilities_to_pulses: empty lookup");
    result.pulses.clear();
    result.pulse_residuals.clear();
    for (int k = 0; k < result.config.n_bits(); ++k) {
        const auto& want = result.config.bits[static_cast<std::size_t>(k)];
        double best_residual = std::numeric_limits<double>::infinity();
        const ProbPoint* best_row = nullptr;
        for (const auto& row : lookup.rows) {
            const double r = std::max(std::abs(row.p_pa - want.p_pa),
                                      std::abs(row.p_ap - want.p_ap));
            if (r < best_residual) { // strict keeps the smallest width on ties
                best_residual = r;
                best_row = &row;
            }
        }
        if (best_residual > feasibility_tol) {
            throw std::runtime_error(
                "probabilities_to_pulses: bit " + std::to_string(k + 1) + " requesting (" +
                std::to_string(want.p_pa) + ", " + std::to_string(want.p_ap) +
                ") is infeasible at " + std::to_string(lookup.voltage) +
                " V; closest row misses by " + std::to_string(best_residual));
        }
        PulseSpec pulse;
        pulse.voltage = lookup.voltage;
        pulse.width = best_row->width;
        result.pulses.push_back(pulse);
        result.pulse_residuals.push_back(best_residual);
    }
}

UnitConfig reference_preset(const LookupTable& lookup) {
    const double w_msb = 0.4e-9;
    const double w_rest = 2.0e-9;
    if (!lookup.has_width(w_msb) || !lookup.has_width(w_rest)) {
        throw std::runtime_error("reference_preset: missing lookup rows; "
                                 "need widths 0.4 ns and 2 ns");
    }
    const ProbPoint& msb = lookup.row_at(w_msb);
    const ProbPoint& rest = lookup.row_at(w_rest);
    UnitConfig config;
    config.bits.assign(8, BitTransition{rest.p_pa, rest.p_ap});
    config.bits[7] = BitTransition{msb.p_pa, msb.p_ap};
    return config;
}

} // namespace meram
