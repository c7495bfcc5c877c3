#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace tdse {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kModelFormatVersion = 1;

/// Thrown when an iterative numerical procedure fails (non-convergence,
/// singular system, infeasible constraint). Input/usage problems use
/// std::invalid_argument instead; the CLI maps the two to different exit codes.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// FNV-1a 64-bit hash, used for input-file provenance in manifests.
inline std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

} // namespace tdse
