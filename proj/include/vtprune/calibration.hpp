#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "vtprune/dump_io.hpp"
#include "vtprune/pruner.hpp"

namespace vtprune {

// One candidate layer prototype. Empty weights mean uniform over the
// support; explicit weights express non-uniform prototypes and must sum
// to 1.
struct WeightedLayerSet {
    std::vector<int> layers;
    std::vector<double> weights;
};

struct CandidateSpace {
    std::vector<WeightedLayerSet> layer_sets;
    std::vector<double> ratio_grid;   // candidate a values in [0, 1]
};

void validate_space(const CandidateSpace& space);

ClassProfile profile_from_candidate(const WeightedLayerSet& ls, double ratio, CategoryId c);

// |retained ∩ evidence| / max(1, |evidence|).
double synthetic_score(const IndexSet& retained, const IndexSet& evidence);

// Scoring callback: gets the sample and the final retained set.
using Scorer = std::function<double(const Dump&, const IndexSet& retained)>;

Scorer make_synthetic_scorer();

struct ScoredCandidate {
    int layer_set_index = 0;
    int ratio_index = 0;
    double score = 0.0;
    bool fully_scored = true;   // false for candidates dropped by early rejection
};

struct ClassResult {
    CategoryId category = kDefaultCategory;
    ClassProfile best;
    double best_score = 0.0;
    std::vector<ScoredCandidate> grid;   // layer-set major, ratio minor
    int sample_count = 0;
    bool inherited = false;              // no samples; copied from the fallback class
};

// Optional two-phase evaluation: phase 1 scores every candidate on a
// sample prefix, phase 2 fully scores only the top keep_top. Disabled by
// default so the grid is exact.
struct EarlyReject {
    bool enabled = false;
    double fraction = 0.25;
    int keep_top = 3;
};

struct CalibrateOptions {
    StageSchedule schedule;
    int kmeans_iters = 5;
    EarlyReject early;
};

// Exhaustive per-class search over layer_sets x ratio_grid; returns the
// arg-max candidate (ties toward the earliest grid position).
ClassResult calibrate_class(std::span<const Dump* const> samples, CategoryId category,
                            const CandidateSpace& space, const CalibrateOptions& opts,
                            const Scorer& scorer);

struct CalibrationReport {
    std::vector<ClassResult> classes;   // one per category 0..8
    std::string scorer_name;
    int layer_set_count = 0;
    int ratio_count = 0;
};

// Per-class search over the whole dataset. Classes without samples inherit
// the Default-class result (or the declared fallback profile), flagged as
// inherited. Sample categories come from the dump metadata.
std::pair<ProfileTable, CalibrationReport> calibrate_all(
    const std::vector<Dump>& dataset, const CandidateSpace& space, const CalibrateOptions& opts,
    const Scorer& scorer, const std::string& scorer_name,
    const ClassProfile* declared_fallback = nullptr);

std::string report_to_json(const CalibrationReport& report);

// Line-protocol child-process scorer: one JSON request object per line on
// its stdin, one decimal score per line on its stdout, same order. See
// docs/formats.md.
struct ScoreRequest {
    std::string sample_id;
    IndexSet retained;
    std::string prompt;
    CategoryId category = kDefaultCategory;
};

class ExternalScorer {
public:
    // command = argv vector, e.g. {"python3", "scorer.py", "evidence.json"}.
    explicit ExternalScorer(std::vector<std::string> command, int timeout_ms = 10000);
    ~ExternalScorer();
    ExternalScorer(const ExternalScorer&) = delete;
    ExternalScorer& operator=(const ExternalScorer&) = delete;

    // Throws timeout, malformed_score, or process_exit (exit code in the
    // error's index payload).
    double score(const ScoreRequest& req);

    static std::string encode_request(const ScoreRequest& req);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

Scorer make_external_scorer(std::shared_ptr<ExternalScorer> proc);

}  // namespace vtprune
