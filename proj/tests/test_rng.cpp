#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <vector>

#include "meram/rng.hpp"

using namespace meram;

TEST_CASE("splitmix64 matches the reference sequence from state 0") {
    std::uint64_t x = 0;
    CHECK(Rng::splitmix64(x) == 0xE220A8397B1DCDAFULL);
    CHECK(Rng::splitmix64(x) == 0x6E789E6AA1B965F4ULL);
    CHECK(Rng::splitmix64(x) == 0x06C45D188009454FULL);
}

TEST_CASE("same seed reproduces the same stream") {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("substreams differ from each other and from the plain seed") {
    Rng plain(7);
    Rng s0(7, 0), s1(7, 1), s2(7, 2);
    int equal0 = 0, equal01 = 0, equal12 = 0;
    for (int i = 0; i < 64; ++i) {
        const std::uint64_t p = plain.next_u64();
        const std::uint64_t a = s0.next_u64();
        const std::uint64_t b = s1.next_u64();
        const std::uint64_t c = s2.next_u64();
        equal0 += p == a;
        equal01 += a == b;
        equal12 += b == c;
    }
    CHECK(equal0 == 0);
    CHECK(equal01 == 0);
    CHECK(equal12 == 0);
}

TEST_CASE("uniform lands in [0, 1) with the right mean and spread") {
    Rng rng(123);
    double sum = 0.0, sum2 = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        sum += u;
        sum2 += u * u;
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    CHECK(mean == doctest::Approx(0.5).epsilon(0.01));
    CHECK(var == doctest::Approx(1.0 / 12.0).epsilon(0.03));
}

TEST_CASE("uniform_index covers [0, n) roughly evenly") {
    Rng rng(9);
    const std::uint64_t n = 10;
    std::vector<long> counts(n, 0);
    const long draws = 100000;
    for (long i = 0; i < draws; ++i) {
        const std::uint64_t k = rng.uniform_index(n);
        REQUIRE(k < n);
        ++counts[k];
    }
    const double expected = static_cast<double>(draws) / static_cast<double>(n);
    for (const long c : counts) {
        // 5 sigma band around the binomial expectation
        CHECK(std::abs(c - expected) < 5.0 * std::sqrt(expected));
    }
}

TEST_CASE("normal has zero mean, unit variance and small skew") {
    Rng rng(31);
    const int n = 200000;
    double s1 = 0.0, s2 = 0.0, s3 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        s1 += z;
        s2 += z * z;
        s3 += z * z * z;
    }
    CHECK(s1 / n == doctest::Approx(0.0).epsilon(1.0).scale(0.01));
    CHECK(s2 / n == doctest::Approx(1.0).epsilon(0.02));
    CHECK(std::abs(s3 / n) < 0.05);
}

TEST_CASE("reseed restarts the stream and clears the spare normal") {
    Rng rng(5);
    rng.normal(); // leaves a cached spare
    rng.reseed(5);
    Rng fresh(5);
    CHECK(rng.normal() == fresh.normal());
    CHECK(rng.next_u64() == fresh.next_u64());
}
