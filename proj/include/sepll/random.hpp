#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace sepll {

using Rng = std::mt19937_64;

// FNV-1a, used only to turn a stream name into seed material.
inline constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
    std::uint64_t h = 1469598103934665603ULL;
    for (char ch : s) {
        h ^= static_cast<unsigned char>(ch);
        h *= 1099511628211ULL;
    }
    return h;
}

/// Derives an independent generator for a named component ("noise",
/// "shuffle", "init", "mv-ties", ...) from one root seed.
inline Rng make_stream(std::uint64_t root_seed, std::string_view name) {
    const std::uint64_t tag = fnv1a(name);
    std::seed_seq seq{static_cast<std::uint32_t>(root_seed), static_cast<std::uint32_t>(root_seed >> 32),
                      static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32)};
    return Rng(seq);
}

inline double uniform01(Rng& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace sepll
