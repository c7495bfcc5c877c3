#pragma once

#include <cstdint>

#include "tdse/stats.hpp"

namespace tdse {

namespace detail {

/// SplitMix64 finalizer (Stafford's mix13 variant, as used by splitmix64).
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

} // namespace detail

/// Deterministic stream RNG: a SplitMix64 sequence whose initial state is
/// derived from (seed, stream) so that each stream is statistically
/// independent and reproducible regardless of how many draws other streams
/// make. Simulation gives every path its own stream, which is what makes
/// threaded and sequential runs produce identical ensembles.
class StreamRng {
public:
    StreamRng(std::uint64_t seed, std::uint64_t stream)
        : state_(detail::mix64(seed ^ detail::mix64(stream + 0x5851f42d4c957f2dull))) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Uniform double in (0,1): 53 high bits plus half an ulp so 0 is excluded.
    double next_u01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53 + 0x1.0p-54;
    }

    /// Standard normal via the inverse-CDF transform. One uniform per normal;
    /// no rejection, so the draw count per path is deterministic.
    double next_normal() { return normal_quantile(next_u01()); }

private:
    std::uint64_t state_;
};

} // namespace tdse
