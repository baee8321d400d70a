#include "vtprune/pruner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace vtprune {

BudgetSplit split_budget(double a, int r) {
    if (!(a >= 0.0 && a <= 1.0)) {
        throw Error(ErrorKind::shape_inconsistency, "split ratio outside [0,1]");
    }
    if (r < 1) throw Error(ErrorKind::shape_inconsistency, "budget must be >= 1");
    BudgetSplit s;
    s.k1 = static_cast<int>(std::floor(a * r));
    s.k2 = r - s.k1;
    s.total = r;
    return s;
}

void validate_schedule(const StageSchedule& s) {
    if (s.stages.empty()) throw Error(ErrorKind::shape_inconsistency, "empty schedule");
    for (size_t i = 0; i < s.stages.size(); ++i) {
        if (s.stages[i].budget < 1) {
            throw Error(ErrorKind::shape_inconsistency, "stage budget must be >= 1",
                        static_cast<long long>(i));
        }
        if (i > 0 && s.stages[i].budget >= s.stages[i - 1].budget) {
            throw Error(ErrorKind::shape_inconsistency,
                        "stage budgets must be strictly decreasing",
                        static_cast<long long>(i));
        }
    }
}

StageSchedule preset_schedule(int effective_budget) {
    StageSchedule s;
    switch (effective_budget) {
        case 192: s.stages = {{2, 300}, {6, 200}, {15, 110}}; break;
        case 128: s.stages = {{2, 303}, {6, 110}, {15, 36}}; break;
        case 64:  s.stages = {{2, 66},  {6, 30},  {15, 17}}; break;
        default:
            throw Error(ErrorKind::shape_inconsistency,
                        "no preset for effective budget " + std::to_string(effective_budget) +
                            " (known: 192, 128, 64)");
    }
    return s;
}

IndexSet select_pivots(const SaliencyScores& phi, int k1) {
    const int n = static_cast<int>(phi.size());
    if (k1 > n) {
        throw Error(ErrorKind::budget_exceeds_pool,
                    "k1=" + std::to_string(k1) + " > pool " + std::to_string(n));
    }
    if (k1 < 0) throw Error(ErrorKind::shape_inconsistency, "negative k1");
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (phi.phi[a] != phi.phi[b]) return phi.phi[a] > phi.phi[b];
        return phi.tokens[a] < phi.tokens[b];
    });
    std::vector<int32_t> ids(k1);
    for (int i = 0; i < k1; ++i) ids[i] = phi.tokens[order[i]];
    return IndexSet::from_unsorted(std::move(ids));
}

std::vector<double> pivot_redundancy(const UnitFeatureMatrix& candidates,
                                     const UnitFeatureMatrix& pivots, OpCounters* counters) {
    if (pivots.rows == 0) throw Error(ErrorKind::empty_pivot_set, "no pivots");
    if (candidates.cols != pivots.cols) {
        throw Error(ErrorKind::dim_mismatch, "candidate/pivot dims differ");
    }
    const int d = candidates.cols;
    std::vector<double> rho(candidates.rows);
    for (int t = 0; t < candidates.rows; ++t) {
        const float* u = candidates.row(t);
        double best = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < pivots.rows; ++j) {
            const float* p = pivots.row(j);
            double dot = 0.0;
            for (int c = 0; c < d; ++c) dot += static_cast<double>(u[c]) * p[c];
            best = std::max(best, dot);
        }
        rho[t] = std::clamp(best, -1.0, 1.0);
    }
    if (counters) {
        counters->redundancy_madds +=
            static_cast<std::uint64_t>(candidates.rows) * pivots.rows * d;
    }
    return rho;
}

SeedSelection seed_completion(std::span<const double> rho, int k2, SeedRule rule) {
    const int n = static_cast<int>(rho.size());
    if (k2 > n) {
        throw Error(ErrorKind::budget_exceeds_pool,
                    "k2=" + std::to_string(k2) + " > pool " + std::to_string(n));
    }
    if (k2 < 0) throw Error(ErrorKind::shape_inconsistency, "negative k2");
    SeedSelection sel;
    if (k2 == 0) {
        sel.delta = std::numeric_limits<double>::quiet_NaN();
        return sel;
    }
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (rho[a] != rho[b]) {
            return rule == SeedRule::bottom_k ? rho[a] < rho[b] : rho[a] > rho[b];
        }
        return a < b;
    });
    std::vector<int32_t> pos(k2);
    double delta = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < k2; ++i) {
        pos[i] = order[i];
        delta = std::max(delta, rho[order[i]]);
    }
    sel.positions = IndexSet::from_unsorted(std::move(pos));
    sel.delta = delta;
    return sel;
}

namespace {

// Assign every row to its arg-max-cosine center; returns the objective
// value (sum of best similarities). Centers are double precision.
double assign_rows(const UnitFeatureMatrix& u, const std::vector<std::vector<double>>& centers,
                   std::vector<int32_t>& assignments) {
    const int n = u.rows;
    const int d = u.cols;
    const int k = static_cast<int>(centers.size());
    double j = 0.0;
    for (int t = 0; t < n; ++t) {
        const float* row = u.row(t);
        double best = -std::numeric_limits<double>::infinity();
        int best_k = 0;
        for (int c = 0; c < k; ++c) {
            const double* mu = centers[c].data();
            double dot = 0.0;
            for (int i = 0; i < d; ++i) dot += static_cast<double>(row[i]) * mu[i];
            if (dot > best) {   // strict: ties keep the lowest cluster id
                best = dot;
                best_k = c;
            }
        }
        assignments[t] = best_k;
        j += best;
    }
    return j;
}

}  // namespace

ClusterState spherical_kmeans(const UnitFeatureMatrix& u, const IndexSet& seed_rows, int t,
                              OpCounters* counters) {
    const int k = static_cast<int>(seed_rows.size());
    if (k < 1) throw Error(ErrorKind::shape_inconsistency, "need at least one seed");
    if (t < 0) throw Error(ErrorKind::shape_inconsistency, "negative iteration count");
    const int n = u.rows;
    const int d = u.cols;
    for (int32_t s : seed_rows) {
        if (s < 0 || s >= n) throw Error(ErrorKind::shape_inconsistency, "seed row out of range", s);
    }

    std::vector<std::vector<double>> centers(k, std::vector<double>(d));
    for (int c = 0; c < k; ++c) {
        const float* row = u.row(seed_rows[c]);
        for (int i = 0; i < d; ++i) centers[c][i] = row[i];
    }

    ClusterState state;
    state.assignments.assign(n, 0);
    state.iterations_run = t;
    state.j_trace.reserve(t + 1);

    if (t == 0) {
        // Zero-iteration contract: nearest-seed assignments, single J entry.
        // This pass is bookkeeping, not part of the counted refinement.
        state.j_trace.push_back(assign_rows(u, centers, state.assignments));
    } else {
        for (int r = 1; r <= t; ++r) {
            // Assignment against mu^(r-1); the objective it reports is
            // J(mu^(r-1)), i.e. the trace entry for the previous state.
            state.j_trace.push_back(assign_rows(u, centers, state.assignments));
            if (counters) {
                counters->kmeans_madds += static_cast<std::uint64_t>(n) * k * d;
            }
            // Mean-direction update; empty (or degenerate) clusters keep
            // their previous center.
            std::vector<std::vector<double>> sums(k, std::vector<double>(d, 0.0));
            std::vector<int> sizes(k, 0);
            for (int i = 0; i < n; ++i) {
                const float* row = u.row(i);
                double* dst = sums[state.assignments[i]].data();
                for (int c = 0; c < d; ++c) dst[c] += row[c];
                ++sizes[state.assignments[i]];
            }
            if (counters) {
                counters->kmeans_madds += static_cast<std::uint64_t>(n) * d;
            }
            for (int c = 0; c < k; ++c) {
                if (sizes[c] == 0) continue;
                double norm = 0.0;
                for (int i = 0; i < d; ++i) norm += sums[c][i] * sums[c][i];
                norm = std::sqrt(norm);
                if (norm <= 1e-12) continue;   // antipodal cancellation: freeze
                for (int i = 0; i < d; ++i) centers[c][i] = sums[c][i] / norm;
            }
        }
        // Final objective under the refined centers. Assignments stay as
        // computed in the last iteration.
        std::vector<int32_t> scratch(n);
        state.j_trace.push_back(assign_rows(u, centers, scratch));
    }

    state.centers = UnitFeatureMatrix(k, d);
    for (int c = 0; c < k; ++c) {
        float* dst = state.centers.row(c);
        for (int i = 0; i < d; ++i) dst[i] = static_cast<float>(centers[c][i]);
    }
    return state;
}

double coverage_objective(const UnitFeatureMatrix& centers, const UnitFeatureMatrix& u) {
    if (centers.cols != u.cols) throw Error(ErrorKind::dim_mismatch, "center/token dims differ");
    double j = 0.0;
    for (int t = 0; t < u.rows; ++t) {
        const float* row = u.row(t);
        double best = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < centers.rows; ++c) {
            const float* mu = centers.row(c);
            double dot = 0.0;
            for (int i = 0; i < u.cols; ++i) dot += static_cast<double>(row[i]) * mu[i];
            best = std::max(best, dot);
        }
        j += best;
    }
    return j;
}

IndexSet select_medoids(const ClusterState& cluster, const UnitFeatureMatrix& u,
                        std::span<const double> rho, OpCounters* counters) {
    const int k = cluster.centers.rows;
    const int n = u.rows;
    const int d = u.cols;
    if (static_cast<int>(cluster.assignments.size()) != n) {
        throw Error(ErrorKind::shape_mismatch, "assignments do not cover the candidate pool");
    }

    std::vector<int> best_row(k, -1);
    std::vector<double> best_sim(k, -std::numeric_limits<double>::infinity());
    for (int t = 0; t < n; ++t) {
        const int c = cluster.assignments[t];
        const float* row = u.row(t);
        const float* mu = cluster.centers.row(c);
        double dot = 0.0;
        for (int i = 0; i < d; ++i) dot += static_cast<double>(row[i]) * mu[i];
        if (dot > best_sim[c]) {   // strict: ties keep the lowest row
            best_sim[c] = dot;
            best_row[c] = t;
        }
    }
    if (counters) {
        counters->medoid_madds += static_cast<std::uint64_t>(n) * d;
    }

    std::vector<int32_t> rows;
    rows.reserve(k);
    std::vector<bool> taken(n, false);
    int empties = 0;
    for (int c = 0; c < k; ++c) {
        if (best_row[c] >= 0) {
            rows.push_back(best_row[c]);
            taken[best_row[c]] = true;
        } else {
            ++empties;
        }
    }
    // Backfill empty clusters from the not-yet-retained pool, lowest
    // redundancy first (lowest row index when redundancy is undefined).
    if (empties > 0) {
        std::vector<int> pool;
        pool.reserve(n);
        for (int i = 0; i < n; ++i) {
            if (!taken[i]) pool.push_back(i);
        }
        if (!rho.empty()) {
            std::sort(pool.begin(), pool.end(), [&](int a, int b) {
                if (rho[a] != rho[b]) return rho[a] < rho[b];
                return a < b;
            });
        }
        if (static_cast<int>(pool.size()) < empties) {
            throw Error(ErrorKind::budget_exceeds_pool, "cannot backfill empty clusters");
        }
        for (int i = 0; i < empties; ++i) rows.push_back(pool[i]);
    }
    return IndexSet::from_unsorted(std::move(rows));
}

namespace {

UnitFeatureMatrix gather_rows(const UnitFeatureMatrix& u, const std::vector<int>& rows) {
    UnitFeatureMatrix out(static_cast<int>(rows.size()), u.cols);
    for (size_t i = 0; i < rows.size(); ++i) {
        const float* src = u.row(rows[i]);
        std::copy(src, src + u.cols, out.row(static_cast<int>(i)));
    }
    return out;
}

}  // namespace

PruneStageResult prune_stage(const TokenMatrix& feats, const SaliencyScores& phi, double a,
                             int budget, int kmeans_iters, OpCounters* counters, SeedRule rule) {
    const int n = feats.rows;
    if (static_cast<int>(phi.size()) != n) {
        throw Error(ErrorKind::shape_mismatch, "saliency does not cover the survivor pool");
    }
    if (budget > n) {
        throw Error(ErrorKind::budget_exceeds_pool,
                    "stage budget " + std::to_string(budget) + " > survivors " + std::to_string(n));
    }
    const BudgetSplit split = split_budget(a, budget);

    PruneStageResult res;
    res.budget = budget;
    res.pivots = select_pivots(phi, split.k1);

    if (split.k2 == 0) {
        res.retained = res.pivots;
        res.delta = std::numeric_limits<double>::quiet_NaN();
        res.rho_defined = split.k1 > 0;
        return res;
    }

    const UnitFeatureMatrix unit = l2_normalize_rows(feats);

    // Split rows into pivots and the candidate pool, both in ascending
    // token order.
    std::vector<int> pivot_rows, cand_rows;
    pivot_rows.reserve(split.k1);
    cand_rows.reserve(n - split.k1);
    for (int i = 0; i < n; ++i) {
        if (res.pivots.contains(phi.tokens[i])) {
            pivot_rows.push_back(i);
        } else {
            cand_rows.push_back(i);
        }
    }
    const UnitFeatureMatrix cand_unit = gather_rows(unit, cand_rows);

    std::vector<double> rho;
    if (split.k1 > 0) {
        const UnitFeatureMatrix pivot_unit = gather_rows(unit, pivot_rows);
        rho = pivot_redundancy(cand_unit, pivot_unit, counters);
        res.rho_defined = true;
    } else {
        // No pivots: redundancy is undefined. The -inf sentinel makes
        // bottom-k2 pick the k2 lowest-index candidates.
        rho.assign(cand_rows.size(), -std::numeric_limits<double>::infinity());
        res.rho_defined = false;
    }

    const SeedSelection sel = seed_completion(rho, split.k2, rule);
    res.delta = sel.delta;
    {
        std::vector<int32_t> ids(sel.positions.size());
        for (size_t i = 0; i < sel.positions.size(); ++i) {
            ids[i] = phi.tokens[cand_rows[sel.positions[i]]];
        }
        res.seeds = IndexSet::from_unsorted(std::move(ids));
    }

    res.cluster = spherical_kmeans(cand_unit, sel.positions, kmeans_iters, counters);

    const IndexSet medoid_rows = select_medoids(res.cluster, cand_unit, rho, counters);
    {
        std::vector<int32_t> ids(medoid_rows.size());
        for (size_t i = 0; i < medoid_rows.size(); ++i) {
            ids[i] = phi.tokens[cand_rows[medoid_rows[i]]];
        }
        res.completion = IndexSet::from_unsorted(std::move(ids));
    }

    res.retained = res.pivots.set_union(res.completion);
    if (static_cast<int>(res.retained.size()) != budget) {
        throw Error(ErrorKind::shape_inconsistency,
                    "internal error: retained size != stage budget");
    }
    return res;
}

namespace {

const AttentionRecord* resolve_record(const std::vector<AttentionRecord>& records, int stage_layer,
                                      const AttentionRecord* previous, bool* reused) {
    for (const AttentionRecord& r : records) {
        if (r.stage_layer == stage_layer) {
            *reused = false;
            return &r;
        }
    }
    *reused = true;
    if (previous) return previous;
    // First stage without an exact match: fall back to the closest earlier
    // tag, else the earliest record.
    const AttentionRecord* best = nullptr;
    for (const AttentionRecord& r : records) {
        if (r.stage_layer <= stage_layer && (!best || r.stage_layer > best->stage_layer)) {
            best = &r;
        }
    }
    if (!best) {
        for (const AttentionRecord& r : records) {
            if (!best || r.stage_layer < best->stage_layer) best = &r;
        }
    }
    return best;
}

}  // namespace

PruneTrace run_schedule(const TokenMatrix& fused, const std::vector<AttentionRecord>& records,
                        const ClassProfile& profile, const StageSchedule& schedule,
                        const ScheduleOptions& opts, OpCounters* counters) {
    validate_schedule(schedule);
    if (records.empty()) {
        throw Error(ErrorKind::shape_inconsistency, "no attention records available");
    }
    if (schedule.stages.front().budget > fused.rows) {
        throw Error(ErrorKind::budget_exceeds_pool, "first stage budget exceeds token count");
    }

    PruneTrace trace;
    trace.category = profile.category;
    trace.profile = profile;

    IndexSet survivors = IndexSet::range(fused.rows);
    const AttentionRecord* previous = nullptr;
    for (const StageSpec& stage : schedule.stages) {
        try {
            bool reused = false;
            const AttentionRecord* rec =
                resolve_record(records, stage.stage_layer, previous, &reused);
            previous = rec;

            const SaliencyScores phi = saliency(*rec, survivors);
            TokenMatrix feats(static_cast<int>(survivors.size()), fused.cols);
            for (size_t i = 0; i < survivors.size(); ++i) {
                const float* src = fused.row(survivors[i]);
                std::copy(src, src + fused.cols, feats.row(static_cast<int>(i)));
            }

            PruneStageResult res = prune_stage(feats, phi, profile.split_ratio, stage.budget,
                                               opts.kmeans_iters, counters, opts.seed_rule);
            res.stage_layer = stage.stage_layer;
            res.attn_reused = reused;
            survivors = res.retained;
            trace.stages.push_back(std::move(res));
        } catch (const Error& e) {
            throw Error(e.kind(),
                        "stage " + std::to_string(stage.stage_layer) + " (budget " +
                            std::to_string(stage.budget) + "): " + e.what(),
                        e.index());
        }
    }
    trace.final_retained = survivors;
    return trace;
}

PruneTrace run_schedule(const LayerStack& stack, const Projection& projection,
                        const std::vector<AttentionRecord>& records, const ClassProfile& profile,
                        const StageSchedule& schedule, const ScheduleOptions& opts,
                        OpCounters* counters) {
    const LayerStack aligned = align_stack(stack, opts.upsample);
    const MixtureWeights alpha = mixture_for(profile, aligned);
    const TokenMatrix fused = fuse(aligned, alpha, counters);
    const TokenMatrix projected = project(fused, projection);
    return run_schedule(projected, records, profile, schedule, opts, counters);
}

}  // namespace vtprune
