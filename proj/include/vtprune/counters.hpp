#pragma once

#include <cstdint>

namespace vtprune {

// Multiply-add counters for the instrumented pipeline steps. Counting is
// opt-in (pass a pointer); the counted loops have no early exits, so the
// totals are exact functions of the shapes involved.
struct OpCounters {
    std::uint64_t fusion_madds = 0;       // layer mixture
    std::uint64_t redundancy_madds = 0;   // candidate-vs-pivot dot products
    std::uint64_t kmeans_madds = 0;       // assignment dots + cluster-sum accumulation
    std::uint64_t medoid_madds = 0;       // token-vs-own-center dots

    void reset() { *this = OpCounters{}; }
};

}  // namespace vtprune
