#pragma once

#include <cstdint>

#include "meram/rng.hpp"

namespace meram {

// Scalar noise supplier consumed by the diffusion code. Training and
// generation must behave identically apart from the values returned here.
struct NoiseSource {
    virtual ~NoiseSource() = default;
    virtual double next() = 0;
};

struct GaussianSource final : NoiseSource {
    explicit GaussianSource(std::uint64_t seed) : rng(seed) {}
    double next() override { return rng.normal(); }
    Rng rng;
};

} // namespace meram
