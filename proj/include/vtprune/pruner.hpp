#pragma once

#include <span>
#include <vector>

#include "vtprune/core.hpp"
#include "vtprune/counters.hpp"
#include "vtprune/fusion.hpp"
#include "vtprune/saliency.hpp"

namespace vtprune {

struct BudgetSplit {
    int k1 = 0;    // attention pivots
    int k2 = 0;    // completion tokens
    int total = 0; // k1 + k2
};

// k1 = floor(a * r), k2 = r - k1.
BudgetSplit split_budget(double a, int r);

struct StageSpec {
    int stage_layer = 0;   // decoder layer tag the stage fires at
    int budget = 0;        // tokens retained after this stage
};

struct StageSchedule {
    std::vector<StageSpec> stages;   // budgets strictly decreasing, all >= 1
};

void validate_schedule(const StageSchedule& s);

// Pinned progressive schedules for the effective budgets 192/128/64 at the
// standard 576-token resolution.
StageSchedule preset_schedule(int effective_budget);

// Seeding rule for the completion stage. top_k exists only so the test
// suite can verify that flipping the rule breaks the optimality and
// separation guarantees; the engine always uses bottom_k.
enum class SeedRule { bottom_k, top_k };

struct ClusterState {
    std::vector<int32_t> assignments;   // per candidate row -> cluster id 0..k-1
    UnitFeatureMatrix centers;          // k x d, unit rows
    std::vector<double> j_trace;        // coverage objective, length iterations_run+1
    int iterations_run = 0;
};

struct PruneStageResult {
    int stage_layer = 0;
    int budget = 0;
    IndexSet pivots;       // P
    IndexSet seeds;        // initial completion seeds (cluster init)
    IndexSet completion;   // Q (cluster medoids)
    IndexSet retained;     // P union Q, size == budget
    double delta = 0.0;    // K2-th smallest redundancy; -inf on the no-pivot
                           // path, NaN when no completion stage ran
    ClusterState cluster;
    bool attn_reused = false;
    bool rho_defined = true;   // false when K1 == 0 (sentinel seeding path)
};

struct PruneTrace {
    std::vector<PruneStageResult> stages;
    IndexSet final_retained;
    CategoryId category = kDefaultCategory;
    ClassProfile profile;
};

// Token ids of the k1 largest saliency scores; ties break toward the
// lowest token index.
IndexSet select_pivots(const SaliencyScores& phi, int k1);

// rho_t = max over pivot rows of cos(u_t, u_j), clamped to [-1, 1].
std::vector<double> pivot_redundancy(const UnitFeatureMatrix& candidates,
                                     const UnitFeatureMatrix& pivots,
                                     OpCounters* counters = nullptr);

// Positions of the k2 smallest rho values (ties toward the lowest index)
// plus the threshold delta = max rho over the selection, i.e. the k2-th
// smallest value overall.
struct SeedSelection {
    IndexSet positions;
    double delta = 0.0;
};
SeedSelection seed_completion(std::span<const double> rho, int k2,
                              SeedRule rule = SeedRule::bottom_k);

// Spherical K-means over unit features, centers initialized from the seed
// rows. Each iteration assigns every row to its arg-max-cosine center
// (ties toward the lowest cluster id) and re-normalizes cluster mean
// directions; a cluster that loses all members keeps its previous center.
// j_trace records the coverage objective after initialization and after
// each iteration. Iteration state is kept in double; the returned centers
// are rounded to float32.
ClusterState spherical_kmeans(const UnitFeatureMatrix& u, const IndexSet& seed_rows, int t,
                              OpCounters* counters = nullptr);

// sum over rows of the best cosine similarity to any center.
double coverage_objective(const UnitFeatureMatrix& centers, const UnitFeatureMatrix& u);

// One medoid row per cluster (arg-max similarity to the final center, ties
// toward the lowest row). Empty clusters are backfilled with the
// lowest-redundancy rows not already selected, so the result always has
// exactly k entries. rho may be empty when redundancy was never defined;
// backfill then falls back to lowest row index.
IndexSet select_medoids(const ClusterState& cluster, const UnitFeatureMatrix& u,
                        std::span<const double> rho, OpCounters* counters = nullptr);

// One full dual-stage pass over the current survivors. feats row i and
// phi.tokens[i] refer to the same token; returned index sets carry token
// ids. |retained| == budget exactly.
PruneStageResult prune_stage(const TokenMatrix& feats, const SaliencyScores& phi, double a,
                             int budget, int kmeans_iters, OpCounters* counters = nullptr,
                             SeedRule rule = SeedRule::bottom_k);

struct ScheduleOptions {
    int kmeans_iters = 5;
    SeedRule seed_rule = SeedRule::bottom_k;
    ResampleMode upsample = ResampleMode::bilinear;
};

// Progressive multi-stage pruning over an already fused+projected token
// matrix. Stage s resolves the attention record with the exact stage tag
// when present; otherwise the previous stage's record is reused (flagged).
PruneTrace run_schedule(const TokenMatrix& fused, const std::vector<AttentionRecord>& records,
                        const ClassProfile& profile, const StageSchedule& schedule,
                        const ScheduleOptions& opts = {}, OpCounters* counters = nullptr);

// Same, starting from the raw layer stack: aligns hierarchical layers,
// resolves the profile mixture, fuses, projects, then prunes.
PruneTrace run_schedule(const LayerStack& stack, const Projection& projection,
                        const std::vector<AttentionRecord>& records, const ClassProfile& profile,
                        const StageSchedule& schedule, const ScheduleOptions& opts = {},
                        OpCounters* counters = nullptr);

}  // namespace vtprune
