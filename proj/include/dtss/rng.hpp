#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>

namespace dtss {

/// SplitMix64 finalizer. A bijection on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

/// Seed of path `index` in an ensemble. For a fixed master seed the map
/// index -> seed is injective (odd multiplier, then a bijective mix), so
/// per-path seeds are pairwise distinct.
constexpr std::uint64_t path_seed(std::uint64_t master_seed, std::uint64_t index) noexcept {
    return mix64(master_seed + (index + 1) * kGolden);
}

/// Key of one latent variable: (path seed, variable family, layer, index).
constexpr std::uint64_t stream_key(std::uint64_t seed, std::uint64_t family, std::uint64_t layer,
                                   std::uint64_t index) noexcept {
    std::uint64_t h = mix64(seed ^ (family * 0xD6E8FEB86659FD93ULL));
    h = mix64(h + (layer + 1) * kGolden);
    return mix64(h ^ ((index + 1) * 0xA0761D6478BD642FULL));
}

/// Small counter-based generator (SplitMix64 sequence) with the
/// conversions used across the library. All conversions are written out
/// here so that ensembles are bit-identical across standard libraries.
class Stream {
public:
    explicit constexpr Stream(std::uint64_t key) noexcept : state_(key) {}

    constexpr std::uint64_t next() noexcept {
        state_ += kGolden;
        return mix64(state_);
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform on {0, ..., bound-1}, unbiased (Lemire's method with rejection).
    std::uint64_t uniform_index(std::uint64_t bound) {
        if (bound == 0) throw std::invalid_argument("uniform_index: empty range");
        unsigned __int128 m = static_cast<unsigned __int128>(next()) * bound;
        auto low = static_cast<std::uint64_t>(m);
        if (low < bound) {
            const std::uint64_t threshold = (0 - bound) % bound;
            while (low < threshold) {
                m = static_cast<unsigned __int128>(next()) * bound;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    /// Standard normal via Box-Muller (one of the pair).
    double normal() noexcept {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::uint64_t state_;
};

}  // namespace dtss
