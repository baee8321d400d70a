#pragma once

#include <cstdint>

namespace vtprune {

// Tiny deterministic generator (splitmix64). std:: distributions are not
// pinned across standard libraries, so probe and dump generation use this
// portable core only.
struct SplitMix64 {
    std::uint64_t state;

    explicit SplitMix64(std::uint64_t seed) : state(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    // uniform in [lo, hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // uniform integer in [0, n); n == 0 yields 0
    std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next() % n; }
    // uniform integer in [lo, hi]
    int range(int lo, int hi) { return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo + 1))); }
};

}  // namespace vtprune
