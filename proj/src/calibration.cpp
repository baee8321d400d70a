#include "vtprune/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

using nlohmann::json;

namespace vtprune {

void validate_space(const CandidateSpace& space) {
    if (space.layer_sets.empty() || space.ratio_grid.empty()) {
        throw Error(ErrorKind::shape_inconsistency, "candidate space is empty");
    }
    for (const WeightedLayerSet& ls : space.layer_sets) {
        if (ls.layers.empty() || ls.layers.size() > 5) {
            throw Error(ErrorKind::shape_inconsistency,
                        "candidate layer sets must have 1..5 layers");
        }
        if (!ls.weights.empty() && ls.weights.size() != ls.layers.size()) {
            throw Error(ErrorKind::shape_inconsistency,
                        "explicit weights must match the layer count");
        }
    }
    for (double a : space.ratio_grid) {
        if (!(a >= 0.0 && a <= 1.0)) {
            throw Error(ErrorKind::shape_inconsistency, "ratio grid value outside [0,1]");
        }
    }
}

ClassProfile profile_from_candidate(const WeightedLayerSet& ls, double ratio, CategoryId c) {
    ClassProfile p;
    p.category = c;
    p.mode = ClassProfile::Mode::weights;
    p.split_ratio = ratio;
    if (ls.weights.empty()) {
        const double w = 1.0 / static_cast<double>(ls.layers.size());
        for (int layer : ls.layers) p.layer_values[layer] = w;
        // make the coefficients sum to 1 exactly despite division rounding
        if (!ls.layers.empty()) {
            double sum = 0.0;
            for (auto& [k, v] : p.layer_values) sum += v;
            p.layer_values[ls.layers.front()] += 1.0 - sum;
        }
    } else {
        for (size_t i = 0; i < ls.layers.size(); ++i) {
            p.layer_values[ls.layers[i]] = ls.weights[i];
        }
    }
    validate_profile(p);
    return p;
}

double synthetic_score(const IndexSet& retained, const IndexSet& evidence) {
    size_t hit = 0;
    for (int32_t t : evidence) {
        if (retained.contains(t)) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(std::max<size_t>(1, evidence.size()));
}

Scorer make_synthetic_scorer() {
    return [](const Dump& d, const IndexSet& retained) {
        return synthetic_score(retained, d.meta.evidence);
    };
}

namespace {

double score_candidate(std::span<const Dump* const> samples, size_t sample_count,
                       const ClassProfile& profile, const CalibrateOptions& opts,
                       const Scorer& scorer, int ls_index, int ratio_index) {
    ScheduleOptions sched_opts;
    sched_opts.kmeans_iters = opts.kmeans_iters;
    std::vector<double> scores;
    scores.reserve(sample_count);
    for (size_t i = 0; i < sample_count; ++i) {
        const Dump& dump = *samples[i];
        const PruneTrace trace = run_schedule(dump.stack, dump.projection, dump.records, profile,
                                              opts.schedule, sched_opts);
        try {
            scores.push_back(scorer(dump, trace.final_retained));
        } catch (const std::exception& e) {
            throw Error(ErrorKind::scorer_failure,
                        "candidate (layer_set=" + std::to_string(ls_index) +
                            ", ratio=" + std::to_string(ratio_index) + ") sample " +
                            dump.meta.sample_id + ": " + e.what());
        }
    }
    // summed in sorted order so the mean is independent of dataset order
    std::sort(scores.begin(), scores.end());
    double total = 0.0;
    for (double s : scores) total += s;
    return total / static_cast<double>(sample_count);
}

}  // namespace

ClassResult calibrate_class(std::span<const Dump* const> samples, CategoryId category,
                            const CandidateSpace& space, const CalibrateOptions& opts,
                            const Scorer& scorer) {
    validate_space(space);
    validate_schedule(opts.schedule);
    if (samples.empty()) {
        throw Error(ErrorKind::no_samples, "no samples for category " + std::to_string(category));
    }

    ClassResult res;
    res.category = category;
    res.sample_count = static_cast<int>(samples.size());

    const size_t n_candidates = space.layer_sets.size() * space.ratio_grid.size();
    res.grid.reserve(n_candidates);

    // phase-1 subset prefix when early rejection is on
    size_t phase1_count = samples.size();
    if (opts.early.enabled) {
        phase1_count = std::max<size_t>(
            1, static_cast<size_t>(std::ceil(opts.early.fraction * samples.size())));
    }

    for (size_t ls = 0; ls < space.layer_sets.size(); ++ls) {
        for (size_t ri = 0; ri < space.ratio_grid.size(); ++ri) {
            const ClassProfile p =
                profile_from_candidate(space.layer_sets[ls], space.ratio_grid[ri], category);
            ScoredCandidate sc;
            sc.layer_set_index = static_cast<int>(ls);
            sc.ratio_index = static_cast<int>(ri);
            sc.score = score_candidate(samples, phase1_count, p, opts, scorer,
                                       static_cast<int>(ls), static_cast<int>(ri));
            sc.fully_scored = phase1_count == samples.size();
            res.grid.push_back(sc);
        }
    }

    if (opts.early.enabled && phase1_count < samples.size()) {
        // keep the top candidates by phase-1 score (ties: earliest grid
        // position) and fully score only those
        std::vector<size_t> order(res.grid.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
            return res.grid[a].score > res.grid[b].score;
        });
        const size_t keep = std::min<size_t>(std::max(1, opts.early.keep_top), order.size());
        for (size_t i = 0; i < keep; ++i) {
            ScoredCandidate& sc = res.grid[order[i]];
            const ClassProfile p = profile_from_candidate(space.layer_sets[sc.layer_set_index],
                                                          space.ratio_grid[sc.ratio_index],
                                                          category);
            sc.score = score_candidate(samples, samples.size(), p, opts, scorer,
                                       sc.layer_set_index, sc.ratio_index);
            sc.fully_scored = true;
        }
    }

    // arg-max over fully scored candidates, earliest grid position on ties
    const ScoredCandidate* best = nullptr;
    for (const ScoredCandidate& sc : res.grid) {
        if (!sc.fully_scored) continue;
        if (!best || sc.score > best->score) best = &sc;
    }
    if (!best) throw Error(ErrorKind::shape_inconsistency, "no fully scored candidate");
    res.best_score = best->score;
    res.best = profile_from_candidate(space.layer_sets[best->layer_set_index],
                                      space.ratio_grid[best->ratio_index], category);
    return res;
}

std::pair<ProfileTable, CalibrationReport> calibrate_all(
    const std::vector<Dump>& dataset, const CandidateSpace& space, const CalibrateOptions& opts,
    const Scorer& scorer, const std::string& scorer_name, const ClassProfile* declared_fallback) {
    validate_space(space);

    std::array<std::vector<const Dump*>, kNumCategories> by_class;
    for (const Dump& d : dataset) {
        if (!d.meta.category) {
            throw Error(ErrorKind::no_samples,
                        "calibration sample " + d.meta.sample_id + " has no category label");
        }
        by_class[*d.meta.category].push_back(&d);
    }

    CalibrationReport report;
    report.scorer_name = scorer_name;
    report.layer_set_count = static_cast<int>(space.layer_sets.size());
    report.ratio_count = static_cast<int>(space.ratio_grid.size());
    report.classes.resize(kNumCategories);

    // Default class first: it is the fallback source for empty classes.
    std::optional<ClassResult> default_result;
    if (!by_class[kDefaultCategory].empty()) {
        default_result = calibrate_class(by_class[kDefaultCategory], kDefaultCategory, space,
                                         opts, scorer);
    }

    ProfileTable table;
    for (CategoryId c = 0; c < kNumCategories; ++c) {
        if (!by_class[c].empty()) {
            ClassResult r = c == kDefaultCategory && default_result
                                ? *default_result
                                : calibrate_class(by_class[c], c, space, opts, scorer);
            table.profiles[c] = r.best;
            report.classes[c] = std::move(r);
        } else if (default_result) {
            ClassResult r;
            r.category = c;
            r.best = default_result->best;
            r.best.category = c;
            r.best_score = default_result->best_score;
            r.sample_count = 0;
            r.inherited = true;
            table.profiles[c] = r.best;
            report.classes[c] = std::move(r);
        } else if (declared_fallback) {
            ClassResult r;
            r.category = c;
            r.best = *declared_fallback;
            r.best.category = c;
            r.sample_count = 0;
            r.inherited = true;
            table.profiles[c] = r.best;
            report.classes[c] = std::move(r);
        } else {
            throw Error(ErrorKind::no_samples,
                        "category " + std::to_string(c) +
                            " has no samples and no fallback is available");
        }
    }
    return {table, report};
}

std::string report_to_json(const CalibrationReport& report) {
    json j;
    j["scorer"] = report.scorer_name;
    j["layer_set_count"] = report.layer_set_count;
    j["ratio_count"] = report.ratio_count;
    json classes = json::array();
    for (const ClassResult& r : report.classes) {
        json e;
        e["category"] = r.category;
        e["sample_count"] = r.sample_count;
        e["inherited"] = r.inherited;
        e["best_score"] = r.best_score;
        json best;
        best["split_ratio"] = r.best.split_ratio;
        json layers = json::object();
        for (const auto& [layer_id, v] : r.best.layer_values) {
            layers[std::to_string(layer_id)] = v;
        }
        best["layers"] = layers;
        e["best"] = best;
        json grid = json::array();
        for (const ScoredCandidate& sc : r.grid) {
            json g;
            g["layer_set"] = sc.layer_set_index;
            g["ratio"] = sc.ratio_index;
            g["score"] = sc.score;
            g["fully_scored"] = sc.fully_scored;
            grid.push_back(g);
        }
        e["grid"] = grid;
        classes.push_back(e);
    }
    j["classes"] = classes;
    return j.dump(2) + "\n";
}

std::string ExternalScorer::encode_request(const ScoreRequest& req) {
    json j;
    j["sample_id"] = req.sample_id;
    json r = json::array();
    for (int32_t t : req.retained) r.push_back(t);
    j["retained"] = r;
    j["prompt"] = req.prompt;
    j["category"] = req.category;
    return j.dump() + "\n";   // single line
}

Scorer make_external_scorer(std::shared_ptr<ExternalScorer> proc) {
    return [proc = std::move(proc)](const Dump& d, const IndexSet& retained) {
        ScoreRequest req;
        req.sample_id = d.meta.sample_id;
        req.retained = retained;
        req.prompt = d.meta.prompt;
        req.category = d.meta.category.value_or(kDefaultCategory);
        return proc->score(req);
    };
}

}  // namespace vtprune
