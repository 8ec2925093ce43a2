#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "meram/markov.hpp"
#include "meram/rng.hpp"
#include "meram/stats.hpp"

using namespace meram;

namespace {

// inverse-CDF sampling of a discrete increment law
std::vector<double> sample_law(const EpsDist& law, long n, Rng& rng) {
    std::vector<double> cdf(law.prob.size());
    std::partial_sum(law.prob.begin(), law.prob.end(), cdf.begin());
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) {
        const double u = rng.uniform();
        const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
        const std::size_t idx = static_cast<std::size_t>(it - cdf.begin());
        out.push_back(law.value_at(std::min(idx, cdf.size() - 1)));
    }
    return out;
}

std::vector<std::vector<double>> gaussian_cloud(long n, long dim, Rng& rng,
                                                double shift = 0.0) {
    std::vector<std::vector<double>> out(static_cast<std::size_t>(n));
    for (auto& v : out) {
        v.resize(static_cast<std::size_t>(dim));
        for (auto& x : v) x = rng.normal() + shift;
    }
    return out;
}

} // namespace

TEST_CASE("moments of a known arithmetic sequence") {
    const std::vector<double> v = {1, 2, 3, 4, 5, 6, 7, 8};
    const Moments m = moments(v);
    CHECK(m.mean == doctest::Approx(4.5).epsilon(1e-15));
    CHECK(m.stddev == doctest::Approx(2.449489742783178).epsilon(1e-12));
    REQUIRE(m.skewness_defined);
    REQUIRE(m.kurtosis_defined);
    CHECK(m.skewness == doctest::Approx(0.0).scale(1).epsilon(1e-12));
    CHECK(m.excess_kurtosis == doctest::Approx(-1.2).epsilon(1e-12));
}

TEST_CASE("moments degenerate and short inputs") {
    CHECK_THROWS_WITH_AS(moments({1, 2, 3, 4, 5, 6, 7}),
                         doctest::Contains("at least 8"), std::invalid_argument);
    const Moments flat = moments(std::vector<double>(12, 3.25));
    CHECK(flat.mean == doctest::Approx(3.25).epsilon(1e-15));
    CHECK(flat.stddev == 0.0);
    CHECK_FALSE(flat.skewness_defined);
    CHECK_FALSE(flat.kurtosis_defined);
}

TEST_CASE("moments of familiar sampled distributions") {
    Rng rng(31);
    std::vector<double> gauss, unif;
    for (long i = 0; i < 100000; ++i) {
        gauss.push_back(rng.normal());
        unif.push_back(rng.uniform());
    }
    const Moments g = moments(gauss);
    CHECK(g.mean == doctest::Approx(0.0).scale(1).epsilon(0.02));
    CHECK(g.stddev == doctest::Approx(1.0).epsilon(0.02));
    CHECK(g.skewness == doctest::Approx(0.0).scale(1).epsilon(0.05));
    CHECK(g.excess_kurtosis == doctest::Approx(0.0).scale(1).epsilon(0.1));
    const Moments u = moments(unif);
    CHECK(u.mean == doctest::Approx(0.5).epsilon(0.01));
    CHECK(u.stddev == doctest::Approx(std::sqrt(1.0 / 12.0)).epsilon(0.02));
    CHECK(u.excess_kurtosis == doctest::Approx(-1.2).epsilon(0.08));
}

TEST_CASE("chi-square accepts samples drawn from the target law") {
    const EpsDist law = epsilon_distribution(UnitConfig::all_coins(2));
    Rng rng(17);
    const auto samples = sample_law(law, 40000, rng);
    const GofReport rep = chi2_gof(samples, law);
    CHECK(rep.test == "chi2");
    CHECK(rep.dof == 6); // 7 support points stay unmerged at this sample size
    CHECK(rep.p_value > 1e-4);
    CHECK(rep.pass);
}

TEST_CASE("chi-square rejects samples from a different law") {
    UnitConfig skew;
    for (int k = 0; k < 4; ++k) skew.bits.push_back(BitTransition{0.35, 0.65});
    const EpsDist wrong = epsilon_distribution(skew);
    const EpsDist coins = epsilon_distribution(UnitConfig::all_coins(4));
    Rng rng(23);
    const auto samples = sample_law(wrong, 40000, rng);
    const GofReport rep = chi2_gof(samples, coins);
    CHECK(rep.p_value < 1e-8);
    CHECK_FALSE(rep.pass);
}

TEST_CASE("chi-square input validation") {
    const EpsDist law = epsilon_distribution(UnitConfig::all_coins(3));
    CHECK_THROWS_AS(chi2_gof({}, law), std::invalid_argument);
    // a value off the 1/64 grid cannot be binned
    CHECK_THROWS_AS(chi2_gof({0.013}, law), std::invalid_argument);
    // far too few samples: every merged bin stays under the expectation floor
    Rng rng(5);
    const auto nine = sample_law(law, 9, rng);
    CHECK_THROWS_WITH_AS(chi2_gof(nine, law), doctest::Contains("bins"),
                         std::runtime_error);
}

TEST_CASE("chi-square p-values are uniform under the null") {
    const EpsDist law = epsilon_distribution(UnitConfig::all_coins(4));
    Rng rng(101);
    std::vector<double> pvals;
    for (int rep = 0; rep < 500; ++rep) {
        const auto samples = sample_law(law, 2000, rng);
        pvals.push_back(chi2_gof(samples, law).p_value);
    }
    std::sort(pvals.begin(), pvals.end());
    double d_stat = 0.0;
    const double n = static_cast<double>(pvals.size());
    for (std::size_t i = 0; i < pvals.size(); ++i) {
        const double hi = static_cast<double>(i + 1) / n - pvals[i];
        const double lo = pvals[i] - static_cast<double>(i) / n;
        d_stat = std::max({d_stat, hi, lo});
    }
    // 500 p-values against Uniform(0,1): the 0.1% critical value is ~0.087
    CHECK(d_stat < 0.087);
}

TEST_CASE("kolmogorov-smirnov on matching and mismatching normals") {
    Rng rng(47);
    std::vector<double> z;
    for (long i = 0; i < 2000; ++i) z.push_back(1.5 * rng.normal() + 0.25);
    const GofReport good = ks_statistic(z, 0.25, 1.5);
    CHECK(good.test == "ks");
    CHECK(good.pass);
    CHECK(good.p_value > 0.01);
    CHECK_FALSE(good.note.empty());

    const GofReport bad = ks_statistic(z, 0.0, 1.0);
    CHECK_FALSE(bad.pass);
    CHECK(bad.p_value < 1e-8);
}

TEST_CASE("kolmogorov-smirnov edge cases") {
    CHECK_THROWS_WITH_AS(ks_statistic(std::vector<double>(49, 0.0), 0.0, 1.0),
                         doctest::Contains("at least 50"), std::invalid_argument);
    CHECK_THROWS_AS(ks_statistic(std::vector<double>(100, 0.0), 0.0, 0.0),
                    std::invalid_argument);
    // a point mass sits half a CDF away from a centred normal
    const GofReport rep = ks_statistic(std::vector<double>(50, 0.0), 0.0, 1.0);
    CHECK(rep.statistic == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(rep.p_value < 1e-6);
}

TEST_CASE("lattice-valued samples keep a small but nonzero distance floor") {
    // fine-grid samples of a unit normal: the step-function CDF cannot hug the
    // continuous one tighter than about half the largest cell mass
    const long span = 255;
    std::vector<double> cdf;
    double acc = 0.0;
    for (long d = -span; d <= span; ++d) {
        const double x = static_cast<double>(d) / 64.0;
        acc += std::exp(-x * x / 2.0);
        cdf.push_back(acc);
    }
    for (double& c : cdf) c /= acc;
    Rng rng(9);
    std::vector<double> samples;
    for (long i = 0; i < 200000; ++i) {
        const double u = rng.uniform();
        const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
        samples.push_back(static_cast<double>(it - cdf.begin() - span) / 64.0);
    }
    const GofReport rep = ks_statistic(samples, 0.0, 1.0);
    CHECK(rep.statistic > 0.002);
    CHECK(rep.statistic < 0.012);
    CHECK(rep.note.find("lattice") != std::string::npos);
}

TEST_CASE("mmd is small on matched clouds and large on shifted ones") {
    Rng rng(61);
    const auto a = gaussian_cloud(60, 4, rng);
    const auto b = gaussian_cloud(60, 4, rng);
    const MmdReport same = mmd2_rbf(a, b, 7);
    CHECK(std::abs(same.mmd2) < 0.05);
    CHECK(same.p_value > 0.01);
    CHECK(same.bandwidth > 0.0);
    CHECK(same.n_a == 60);
    CHECK(same.n_permutations == 200);

    const auto c = gaussian_cloud(60, 4, rng, 1.5);
    const MmdReport far = mmd2_rbf(a, c, 7);
    CHECK(far.mmd2 > 0.05);
    CHECK(far.p_value < 0.01);
}

TEST_CASE("mmd permutation p-values are seeded and reproducible") {
    Rng rng(62);
    const auto a = gaussian_cloud(25, 3, rng);
    const auto b = gaussian_cloud(25, 3, rng);
    const MmdReport r1 = mmd2_rbf(a, b, 11);
    const MmdReport r2 = mmd2_rbf(a, b, 11);
    CHECK(r1.mmd2 == r2.mmd2);
    CHECK(r1.p_value == r2.p_value);
    CHECK(r1.bandwidth == r2.bandwidth);
}

TEST_CASE("the unbiased mmd estimate dips below zero near the null") {
    Rng rng(63);
    bool saw_negative = false;
    for (int rep = 0; rep < 40 && !saw_negative; ++rep) {
        const auto a = gaussian_cloud(20, 2, rng);
        const auto b = gaussian_cloud(20, 2, rng);
        if (mmd2_rbf(a, b, 5).mmd2 < 0.0) saw_negative = true;
    }
    CHECK(saw_negative);
}

TEST_CASE("mmd input validation") {
    Rng rng(64);
    const auto a = gaussian_cloud(20, 3, rng);
    const auto small = gaussian_cloud(19, 3, rng);
    CHECK_THROWS_WITH_AS(mmd2_rbf(small, a, 1), doctest::Contains("20 samples"),
                         std::invalid_argument);
    CHECK_THROWS_WITH_AS(mmd2_rbf(a, a, 1, 150), doctest::Contains("200 permutations"),
                         std::invalid_argument);
    auto ragged = a;
    ragged[3].pop_back();
    CHECK_THROWS_WITH_AS(mmd2_rbf(ragged, a, 1), doctest::Contains("ragged"),
                         std::invalid_argument);
    const auto wide = gaussian_cloud(20, 4, rng);
    CHECK_THROWS_WITH_AS(mmd2_rbf(a, wide, 1), doctest::Contains("dimension"),
                         std::invalid_argument);
    const std::vector<std::vector<double>> constant(20, std::vector<double>(3, 1.0));
    CHECK_THROWS_WITH_AS(mmd2_rbf(constant, constant, 1), doctest::Contains("degenerate"),
                         std::runtime_error);
}

TEST_CASE("upper incomplete gamma against closed forms and fixed points") {
    for (const double x : {0.25, 1.0, 4.0}) {
        CHECK(gamma_q(0.5, x) == doctest::Approx(std::erfc(std::sqrt(x))).epsilon(1e-10));
        CHECK(gamma_q(1.0, x) == doctest::Approx(std::exp(-x)).epsilon(1e-10));
    }
    CHECK(gamma_q(5.0, 2.5) == doctest::Approx(0.8911780189141513).epsilon(1e-10));
    CHECK(gamma_q(2.5, 3.2) == doctest::Approx(0.2692187989871035).epsilon(1e-10));
    CHECK(gamma_q(86.5, 99.0) == doctest::Approx(0.09347288277120246).epsilon(1e-8));
    CHECK(gamma_q(3.0, 0.0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS_AS(gamma_q(0.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(gamma_q(2.0, -1.0), std::invalid_argument);
}

TEST_CASE("normal cdf fixed points and symmetry") {
    CHECK(normal_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(normal_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-12));
    for (const double z : {0.3, 1.1, 2.7}) {
        CHECK(normal_cdf(-z) == doctest::Approx(1.0 - normal_cdf(z)).epsilon(1e-12));
    }
}
