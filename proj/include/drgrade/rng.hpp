#pragma once

// Counter-based generator. The n-th output (n = 1, 2, ...) of a stream with
// seed s is
//
//     z = s + n * 0x9E3779B97F4A7C15            (mod 2^64)
//     z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//     z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//     out = z ^ (z >> 31)
//
// which is the SplitMix64 sequence. Doubles in [0,1) take the top 53 bits:
// (out >> 11) * 2^-53. Normals use one Box-Muller pair per draw (cosine
// branch only): u1 = 1 - uniform01(), u2 = uniform01(),
// z = sqrt(-2 ln u1) * cos(2 pi u2). Sub-streams are derived by folding keys
// through mix64 (see Rng::derive), so a stream is identified by its seed alone.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

#include "drgrade/error.hpp"

namespace drgrade {

constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

class Rng {
public:
    static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

    explicit Rng(std::uint64_t seed = 0) noexcept : seed_(seed) {}

    /// Independent stream keyed by (seed, keys...). Used for per-epoch and
    /// per-sample streams so that work order never changes the draws.
    static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) noexcept
    {
        std::uint64_t s = mix64(seed ^ 0x5851F42D4C957F2DULL);
        for (std::uint64_t k : keys) s = mix64(s + kGolden * (k + 1));
        return Rng(s);
    }

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t counter() const noexcept { return counter_; }

    std::uint64_t next_u64() noexcept
    {
        ++counter_;
        return mix64(seed_ + counter_ * kGolden);
    }

    double uniform01() noexcept
    {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n)
    {
        require(n > 0, "Rng::below: n must be positive");
        const unsigned __int128 wide = static_cast<unsigned __int128>(next_u64()) * n;
        return static_cast<std::uint64_t>(wide >> 64);
    }

    double standard_normal() noexcept
    {
        const double u1 = 1.0 - uniform01();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::uint64_t seed_ = 0;
    std::uint64_t counter_ = 0;
};

inline double rng_uniform(Rng& rng, double lo, double hi)
{
    require(lo < hi, "rng_uniform: lo must be < hi");
    return lo + (hi - lo) * rng.uniform01();
}

inline double rng_normal(Rng& rng, double mu, double sigma)
{
    require(sigma >= 0.0, "rng_normal: sigma must be >= 0");
    const double z = rng.standard_normal();
    if (sigma == 0.0) return mu;
    return mu + sigma * z;
}

} // namespace drgrade
