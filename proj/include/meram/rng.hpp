#pragma once

#include <cstdint>
#include <cmath>

namespace meram {

// xoshiro256++ with splitmix64 seeding. We carry our own generator instead of
// <random> so that streams are reproducible across standard library
// implementations, and so that a (seed, stream) pair can be expanded into an
// independent substream cheaply.
class Rng {
public:
    explicit Rng(std::uint64_t seed) { reseed(seed); }

    Rng(std::uint64_t seed, std::uint64_t stream) {
        // Mix the stream index through splitmix64 before combining so that
        // consecutive stream ids land far apart in state space.
        reseed(seed ^ mix_stream(stream));
    }

    void reseed(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& word : state_) word = splitmix64(x);
        have_spare_ = false;
        spare_ = 0.0;
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform on [0, 1) with 53 bits of mantissa.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform on [0, n). Rejection-free modulo is fine for our n << 2^64.
    std::uint64_t uniform_index(std::uint64_t n) {
        // Multiply-shift trick maps next_u64 onto [0, n) with negligible bias.
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // Standard normal via the Marsaglia polar method. Keeps the spare sample
    // so pairs cost one rejection loop.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double factor = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * factor;
        have_spare_ = true;
        return u * factor;
    }

    static std::uint64_t splitmix64(std::uint64_t& x) {
        std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    static std::uint64_t mix_stream(std::uint64_t stream) {
        // One extra round keeps stream 0 distinct from the plain seed.
        std::uint64_t x = stream + 0x6A09E667F3BCC909ULL;
        return splitmix64(x);
    }

    std::uint64_t state_[4] = {};
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace meram
