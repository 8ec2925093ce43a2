#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "meram/markov.hpp"

namespace meram {

struct Moments {
    double mean = 0.0;
    double stddev = 0.0;
    double skewness = 0.0;
    double excess_kurtosis = 0.0;
    bool skewness_defined = false;
    bool kurtosis_defined = false;
};

// Unbiased mean/stddev plus bias-adjusted skewness and excess kurtosis.
// Needs at least 8 samples; higher moments come back flagged undefined when
// the variance degenerates.
Moments moments(const std::vector<double>& samples);

struct GofReport {
    std::string test;
    double statistic = 0.0;
    long dof = 0; // zero where not applicable
    double p_value = 0.0;
    double alpha = 0.01;
    bool pass = false;
    std::string note;
};

// Pearson chi-square of grid-aligned samples against a discrete target law.
// Adjacent grid cells are merged until every bin expects at least
// min_expected counts; dof = merged bins - 1. The tail probability comes from
// the regularized incomplete gamma (series/continued fraction, accurate to
// about 1e-8).
GofReport chi2_gof(const std::vector<double>& samples, const EpsDist& target,
                   double min_expected = 5.0, double alpha = 0.01);

// Kolmogorov-Smirnov statistic against a continuous normal CDF with the
// asymptotic p-value. Grid-valued inputs carry an inherent floor on the
// statistic (about phi(0)*step, i.e. ~0.0062 for a unit normal on a 1/64
// grid); the report notes this rather than correcting for it.
GofReport ks_statistic(const std::vector<double>& samples, double mu, double sigma,
                       double alpha = 0.01);

struct MmdReport {
    double mmd2 = 0.0;      // unbiased estimate, may be negative near the null
    double bandwidth = 0.0; // median pairwise distance of the pooled sample
    double p_value = 0.0;
    std::size_t n_a = 0;
    std::size_t n_b = 0;
    int n_permutations = 0;
};

// Unbiased squared maximum mean discrepancy under an RBF kernel on flattened
// vectors, with a seeded permutation p-value. Rejects fewer than 20 samples a
// side, mismatched dimensions, and pooled sets with no pairwise spread.
MmdReport mmd2_rbf(const std::vector<std::vector<double>>& a,
                   const std::vector<std::vector<double>>& b,
                   std::uint64_t seed, int n_permutations = 200);

// Regularized upper incomplete gamma Q(s, x); the chi-square tail is
// Q(dof/2, stat/2). Exposed for tests.
double gamma_q(double s, double x);

double normal_cdf(double z);

} // namespace meram
