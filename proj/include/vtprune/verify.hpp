#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vtprune/core.hpp"
#include "vtprune/fusion.hpp"
#include "vtprune/pruner.hpp"

namespace vtprune {

// Executable checks for the formal statements behind the engine: every
// bound here is a proved theorem, so any violation is an implementation
// defect, never tolerable noise.

struct ProbeConfig {
    long samples = 1000;
    int max_layers = 8;
    int max_tokens = 32;
    int max_dim = 16;
    double value_range = 10.0;            // score entries drawn from [-range, range]
    std::vector<double> taus = {0.1, 1.0, 4.0};
    double norm_bound = 4.0;              // B in the stability bound
    double tolerance = 1e-6;
    std::uint64_t seed = 0x5eedbead;
};

struct CheckReport {
    std::string name;
    long trials = 0;
    long violations = 0;
    double worst_slack = 0.0;             // min over trials of (bound - observed)
    std::vector<std::string> exemplars;   // first few violation descriptions
    std::uint64_t seed = 0;
    bool pass = true;                     // violations == 0
};

// || u - v ||^2 == 2 (1 - u.v) for unit vectors, within 1e-6.
CheckReport check_cos_euclid(const ProbeConfig& cfg);

// || a(tau w) - a(tau w') ||_1 <= (tau/2) || w - w' ||_1 + 1e-9.
CheckReport check_softmax_lipschitz(const ProbeConfig& cfg);

// Small-tau limit is uniform (within 1e-4 at tau=1e-6); large-tau limit is
// one-hot (max entry >= 1 - 1e-6). Throws degenerate_argmax when w has
// tied maxima.
CheckReport check_temp_limits(std::span<const double> w, double tau_small, double tau_large);
CheckReport check_temp_limits_probes(const ProbeConfig& cfg);

// || z(w) - z(w') ||_2 <= (B tau / 2) || w - w' ||_1 + 1e-6 for stacks with
// row norms <= B. When a profile table is supplied, all class pairs are
// also checked as misroute substitutions.
CheckReport check_stability_bound(const ProbeConfig& cfg,
                                  const ProfileTable* misroute_profiles = nullptr);

// Coordinate-interval containment, norm domination, and definitional
// equality of the fused output against a 64-bit recomputation.
CheckReport check_hull(const LayerStack& stack, const MixtureWeights& alpha);
CheckReport check_hull_probes(const ProbeConfig& cfg);

// Engine seed set vs exhaustive subset minimizer of the total redundancy
// (|U| <= 18, K2 <= 6). Exact sum match within 1e-9 and set equality under
// the lexicographic tie rule.
CheckReport check_seed_optimality(const ProbeConfig& cfg, SeedRule rule = SeedRule::bottom_k);

// Every J trace non-decreasing within 1e-6 and bounded by |U|.
CheckReport check_kmeans_monotone(std::span<const ClusterState> traces);
CheckReport check_kmeans_monotone_probes(const ProbeConfig& cfg);

// Seed/pivot separation: dot <= delta + 1e-6 and distance >=
// sqrt(2 (1 - delta)) - 1e-6 for every seed-pivot pair.
struct SeparationCase {
    UnitFeatureMatrix unit;   // unit features indexed by token id
    PruneStageResult result;
};
CheckReport check_separation(std::span<const SeparationCase> cases);
CheckReport check_separation_probes(const ProbeConfig& cfg, SeedRule rule = SeedRule::bottom_k);

// Step-cost model for one stage (plus fusion). Multiply-add terms match
// the engine's instrumented counters exactly, including the degenerate
// paths (k1 == 0 skips redundancy, k2 == 0 skips stage II entirely).
struct ComplexityEstimate {
    std::uint64_t fusion_madds = 0;        // L * M * d_v
    std::uint64_t redundancy_madds = 0;    // (M - K1) * K1 * d
    std::uint64_t kmeans_madds = 0;        // T (M - K1) K2 d + T (M - K1) d
    std::uint64_t medoid_madds = 0;        // (M - K1) * d
    double topk_comparisons = 0.0;         // M log2 K1 (heap model)
    double bottomk_comparisons = 0.0;      // (M - K1) log2 K2
};

ComplexityEstimate complexity_estimate(int m, int l, int d_v, int d, int k1, int k2, int t);

// Instrumented prune/fuse runs vs the formula, over random shapes plus the
// pinned 576/153/39/1024 configuration.
CheckReport check_complexity(const ProbeConfig& cfg);

struct SuiteResult {
    std::vector<CheckReport> checks;
    bool all_pass = true;
};

SuiteResult run_verify_suite(const ProbeConfig& cfg,
                             const ProfileTable* misroute_profiles = nullptr);

// Run one check by its report name ("cos-euclid", "softmax-lipschitz",
// "temp-limits", "convex-hull", "fusion-stability", "seed-optimality",
// "kmeans-monotone", "separation", "complexity"). Empty result for an
// unknown name.
std::optional<CheckReport> run_named_check(const std::string& name, const ProbeConfig& cfg,
                                           const ProfileTable* misroute_profiles = nullptr);

std::string suite_to_json(const SuiteResult& suite);

}  // namespace vtprune
