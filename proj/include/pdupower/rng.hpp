#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

#include "pdupower/core.hpp"

namespace pdupower {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Deterministic stream keyed by (seed, entity id, purpose). Streams are
// independent of iteration order, which keeps parallel simulation and
// training reproducible. Distributions are hand-evaluated because the
// standard library's are not pinned across implementations.
class RandomStream {
public:
    RandomStream(std::uint64_t seed, std::string_view entity, std::string_view purpose)
        : engine_(splitmix64(seed ^ splitmix64(fnv1a(entity) ^ splitmix64(fnv1a(purpose))))) {}

    explicit RandomStream(std::uint64_t seed) : engine_(splitmix64(seed)) {}

    RandomStream(std::uint64_t seed, std::uint64_t stream_index)
        : engine_(splitmix64(seed ^ splitmix64(stream_index * 0x9e3779b97f4a7c15ull + 1))) {}

    // Uniform in [0, 1).
    double uniform() {
        return (engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n) {
        // Rejection sampling keeps the draw exactly uniform.
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t v = engine_();
        while (v >= limit) v = engine_();
        return v % n;
    }

    // Box-Muller; one value per call, the pair's twin is discarded so the
    // stream position stays a simple function of the call count.
    double gaussian() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double gaussian(double mean, double sigma) { return mean + sigma * gaussian(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace pdupower
