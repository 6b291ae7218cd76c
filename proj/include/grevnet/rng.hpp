#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace grevnet {

/// Counter-based generator: draw i of a stream is mix(key, i), so the full
/// state is (key, counter) and streams can be split without coordination.
class Rng {
public:
    Rng() = default;
    explicit Rng(std::uint64_t seed) : key_(mix(seed ^ 0x6a09e667f3bcc909ULL)) {}
    Rng(std::uint64_t key, std::uint64_t counter, int) : key_(key), counter_(counter) {}

    /// Independent child stream; the parent is not advanced.
    Rng split(std::uint64_t stream) const { return Rng(mix(key_ ^ mix(stream + 0x9e3779b97f4a7c15ULL)), 0, 0); }

    std::uint64_t next_u64() { return mix(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Box-Muller; one normal per two uniforms so the state stays a plain counter.
    double normal() {
        double u1 = uniform();
        const double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // rejection keeps the distribution exact
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t r;
        do r = next_u64();
        while (r >= limit);
        return r % n;
    }

    std::uint64_t key() const { return key_; }
    std::uint64_t counter() const { return counter_; }

    bool operator==(const Rng&) const = default;

    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t key_ = mix(0x6a09e667f3bcc909ULL);
    std::uint64_t counter_ = 0;
};

/// Fisher-Yates with the counter generator.
template <typename It>
void shuffle(It first, It last, Rng& rng) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
        const auto j = rng.below(i);
        std::swap(first[i - 1], first[j]);
    }
}

} // namespace grevnet
