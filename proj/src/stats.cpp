#include "meram/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace meram {

namespace {

double gamma_p_series(double s, double x) {
    double term = 1.0 / s;
    double sum = term;
    double a = s;
    for (int i = 0; i < 500; ++i) {
        a += 1.0;
        term *= x / a;
        sum += term;
        if (std::abs(term) < std::abs(sum) * 1e-12) break;
    }
    return sum * std::exp(-x + s * std::log(x) - std::lgamma(s));
}

double gamma_q_contfrac(double s, double x) {
    // Lentz's method for the continued fraction of Q(s, x).
    const double tiny = 1e-300;
    double b = x + 1.0 - s;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 500; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - s);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-12) break;
    }
    return h * std::exp(-x + s * std::log(x) - std::lgamma(s));
}

double kolmogorov_tail(double lambda) {
    if (lambda < 1e-8) return 1.0;
    double sum = 0.0;
    double sign = 1.0;
    for (int j = 1; j <= 100; ++j) {
        const double term = std::exp(-2.0 * j * j * lambda * lambda);
        sum += sign * term;
        if (term < 1e-12) break;
        sign = -sign;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

double sq_dist(const std::vector<double>& x, const std::vector<double>& y) {
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double t = x[i] - y[i];
        d += t * t;
    }
    return d;
}

// Unbiased MMD^2 from a precomputed pooled kernel matrix and an assignment of
// pooled indices to the two groups.
double mmd2_from_kernel(const std::vector<double>& kmat, std::size_t total,
                        const std::vector<std::size_t>& idx, std::size_t m) {
    const std::size_t n = total - m;
    double kaa = 0.0, kbb = 0.0, kab = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i + 1; j < m; ++j) {
            kaa += kmat[idx[i] * total + idx[j]];
        }
    }
    for (std::size_t i = m; i < total; ++i) {
        for (std::size_t j = i + 1; j < total; ++j) {
            kbb += kmat[idx[i] * total + idx[j]];
        }
    }
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = m; j < total; ++j) {
            kab += kmat[idx[i] * total + idx[j]];
        }
    }
    const double ma = static_cast<double>(m);
    const double mb = static_cast<double>(n);
    return 2.0 * kaa / (ma * (ma - 1.0)) + 2.0 * kbb / (mb * (mb - 1.0)) -
           2.0 * kab / (ma * mb);
}

} // namespace

double gamma_q(double s, double x) {
    if (!(s > 0.0) || x < 0.0) throw std::invalid_argument("gamma_q: bad arguments");
    if (x == 0.0) return 1.0;
    if (x < s + 1.0) return 1.0 - gamma_p_series(s, x);
    return gamma_q_contfrac(s, x);
}

double normal_cdf(double z) {
    return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

Moments moments(const std::vector<double>& samples) {
    const std::size_t n = samples.size();
    if (n < 8) throw std::invalid_argument("moments: need at least 8 samples");
    const double nn = static_cast<double>(n);
    double mean = 0.0;
    for (double x : samples) mean += x;
    mean /= nn;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double x : samples) {
        const double d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    Moments out;
    out.mean = mean;
    const double var = m2 / (nn - 1.0);
    out.stddev = std::sqrt(var);
    if (m2 == 0.0) return out; // higher moments stay flagged undefined
    const double s = out.stddev;
    out.skewness = nn / ((nn - 1.0) * (nn - 2.0)) * m3 / (s * s * s);
    out.skewness_defined = true;
    out.excess_kurtosis =
        nn * (nn + 1.0) / ((nn - 1.0) * (nn - 2.0) * (nn - 3.0)) * m4 / (var * var) -
        3.0 * (nn - 1.0) * (nn - 1.0) / ((nn - 2.0) * (nn - 3.0));
    out.kurtosis_defined = true;
    return out;
}

GofReport chi2_gof(const std::vector<double>& samples, const EpsDist& target,
                   double min_expected, double alpha) {
    if (samples.empty()) throw std::invalid_argument("chi2_gof: no samples");
    const std::size_t cells = target.prob.size();
    const long offset = target.half_span();
    std::vector<long> observed(cells, 0);
    for (double x : samples) {
        const double steps = x / target.lsb;
        const long d = std::lround(steps);
        if (std::abs(steps - static_cast<double>(d)) > 1e-6 || d < -offset || d > offset) {
            throw std::invalid_argument("chi2_gof: sample " + std::to_string(x) +
                                        " is not aligned to the target grid");
        }
        observed[static_cast<std::size_t>(d + offset)] += 1;
    }
    const double n = static_cast<double>(samples.size());

    // Merge adjacent cells left to right until each bin expects at least
    // min_expected counts; fold any deficient remainder into the last bin.
    std::vector<double> exp_bins;
    std::vector<double> obs_bins;
    double e_acc = 0.0, o_acc = 0.0;
    for (std::size_t i = 0; i < cells; ++i) {
        e_acc += target.prob[i] * n;
        o_acc += static_cast<double>(observed[i]);
        if (e_acc >= min_expected) {
            exp_bins.push_back(e_acc);
            obs_bins.push_back(o_acc);
            e_acc = 0.0;
            o_acc = 0.0;
        }
    }
    if (e_acc > 0.0 || o_acc > 0.0) {
        if (!exp_bins.empty()) {
            exp_bins.back() += e_acc;
            obs_bins.back() += o_acc;
        } else {
            exp_bins.push_back(e_acc);
            obs_bins.push_back(o_acc);
        }
    }
    if (exp_bins.size() < 2) {
        throw std::runtime_error("chi2_gof: fewer than two bins survive merging; "
                                 "not enough samples for the test");
    }
    double stat = 0.0;
    for (std::size_t i = 0; i < exp_bins.size(); ++i) {
        const double d = obs_bins[i] - exp_bins[i];
        stat += d * d / exp_bins[i];
    }
    GofReport rep;
    rep.test = "chi2";
    rep.statistic = stat;
    rep.dof = static_cast<long>(exp_bins.size()) - 1;
    rep.p_value = gamma_q(static_cast<double>(rep.dof) / 2.0, stat / 2.0);
    rep.alpha = alpha;
    rep.pass = rep.p_value >= alpha;
    return rep;
}

GofReport ks_statistic(const std::vector<double>& samples, double mu, double sigma,
                       double alpha) {
    if (samples.size() < 50) throw std::invalid_argument("ks_statistic: need at least 50 samples");
    if (!(sigma > 0.0)) throw std::invalid_argument("ks_statistic: sigma must be positive");
    std::vector<double> sorted = samples;
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    double d_stat = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const double f = normal_cdf((sorted[i] - mu) / sigma);
        const double hi = (static_cast<double>(i) + 1.0) / n - f;
        const double lo = f - static_cast<double>(i) / n;
        d_stat = std::max({d_stat, hi, lo});
    }
    const double sqrt_n = std::sqrt(n);
    const double lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d_stat;
    GofReport rep;
    rep.test = "ks";
    rep.statistic = d_stat;
    rep.dof = 0;
    rep.p_value = kolmogorov_tail(lambda);
    rep.alpha = alpha;
    rep.pass = rep.p_value >= alpha;
    rep.note = "empirical CDF vs continuous normal; lattice-valued samples bound the "
               "statistic from below by about the density times the grid step";
    return rep;
}

MmdReport mmd2_rbf(const std::vector<std::vector<double>>& a,
                   const std::vector<std::vector<double>>& b,
                   std::uint64_t seed, int n_permutations) {
    if (a.size() < 20 || b.size() < 20) {
        throw std::invalid_argument("mmd2_rbf: need at least 20 samples per side");
    }
    if (n_permutations < 200) {
        throw std::invalid_argument("mmd2_rbf: need at least 200 permutations");
    }
    const std::size_t dim = a.front().size();
    for (const auto& v : a) {
        if (v.size() != dim) throw std::invalid_argument("mmd2_rbf: ragged input");
    }
    for (const auto& v : b) {
        if (v.size() != dim) throw std::invalid_argument("mmd2_rbf: dimension mismatch");
    }
    const std::size_t m = a.size();
    const std::size_t total = m + b.size();
    std::vector<const std::vector<double>*> pooled;
    pooled.reserve(total);
    for (const auto& v : a) pooled.push_back(&v);
    for (const auto& v : b) pooled.push_back(&v);

    std::vector<double> d2(total * total, 0.0);
    std::vector<double> dists;
    dists.reserve(total * (total - 1) / 2);
    for (std::size_t i = 0; i < total; ++i) {
        for (std::size_t j = i + 1; j < total; ++j) {
            const double d = sq_dist(*pooled[i], *pooled[j]);
            d2[i * total + j] = d;
            d2[j * total + i] = d;
            dists.push_back(std::sqrt(d));
        }
    }
    const std::size_t mid = dists.size() / 2;
    std::nth_element(dists.begin(), dists.begin() + static_cast<long>(mid), dists.end());
    const double bandwidth = dists[mid];
    if (!(bandwidth > 0.0)) {
        throw std::runtime_error("mmd2_rbf: degenerate input, median pairwise distance is zero");
    }
    const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
    std::vector<double> kmat(total * total, 1.0);
    for (std::size_t i = 0; i < total; ++i) {
        for (std::size_t j = 0; j < total; ++j) {
            kmat[i * total + j] = std::exp(-d2[i * total + j] * inv);
        }
    }

    std::vector<std::size_t> idx(total);
    for (std::size_t i = 0; i < total; ++i) idx[i] = i;
    const double observed = mmd2_from_kernel(kmat, total, idx, m);

    Rng rng(seed);
    int at_least = 0;
    for (int p = 0; p < n_permutations; ++p) {
        for (std::size_t i = total - 1; i > 0; --i) {
            const std::size_t j = rng.uniform_index(i + 1);
            std::swap(idx[i], idx[j]);
        }
        if (mmd2_from_kernel(kmat, total, idx, m) >= observed) ++at_least;
    }

    MmdReport rep;
    rep.mmd2 = observed; // negative values near the null are kept as-is
    rep.bandwidth = bandwidth;
    rep.p_value = (1.0 + at_least) / (1.0 + n_permutations);
    rep.n_a = m;
    rep.n_b = b.size();
    rep.n_permutations = n_permutations;
    return rep;
}

} // namespace meram
