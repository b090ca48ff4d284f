#pragma once

#include <cstdint>

namespace fwi {

/// Counter-based SplitMix64: value k of stream `seed` is mix(seed + (k+1) * golden).
/// Identical sequences are easy to reproduce in any language.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) noexcept : seed_(seed) {}

    static std::uint64_t at(std::uint64_t seed, std::uint64_t counter) noexcept {
        std::uint64_t z = seed + (counter + 1) * 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t next() noexcept { return at(seed_, counter_++); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (one value per two draws).
    double normal() noexcept;

    std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

}  // namespace fwi
