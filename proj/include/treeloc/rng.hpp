#pragma once

#include <cstdint>
#include <cmath>

namespace treeloc {

// Deterministic 64-bit generator (splitmix64). Chosen over std::mt19937 +
// std::*_distribution because the standard distributions are
// implementation-defined: identical seeds must give identical streams on
// every compiler for the reproducibility contract to hold.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // uniform in [0,1) with 53-bit resolution
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform in (0,1), never exactly 0 (safe as inverse-CDF argument)
    double uniform01_open() {
        double u = uniform01();
        while (u == 0.0) u = uniform01();
        return u;
    }

    // index in [0, n)
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(next_u64() % n); }

private:
    std::uint64_t state_;
};

// Key mixing for counter-based substreams. Pool sweeps and sample batches
// derive one stream per (seed, sweep, element) so results do not depend on
// thread partitioning.
inline std::uint64_t mix_key(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 0x632be59bd9b4e019ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline std::uint64_t mix_key(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return mix_key(mix_key(a, b), c);
}

} // namespace treeloc
