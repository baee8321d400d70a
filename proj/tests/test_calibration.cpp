#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "vtprune/calibration.hpp"
#include "vtprune/synth.hpp"

using namespace vtprune;
namespace fs = std::filesystem;

namespace {

StageSchedule small_schedule() {
    StageSchedule s;
    s.stages = {{2, 24}, {6, 12}};
    return s;
}

Dump small_dump(CategoryId c, std::uint64_t seed) {
    SynthSpec spec;
    spec.sample_id = "cal-" + std::to_string(c) + "-" + std::to_string(seed);
    spec.category = c;
    spec.grid_h = 6;
    spec.grid_w = 6;
    spec.d_v = 12;
    spec.evidence_count = 5;
    spec.seed = seed;
    return make_synthetic_dump(spec);
}

CandidateSpace two_by_two_space() {
    CandidateSpace space;
    space.layer_sets.push_back({{5, 15, 22}, {}});
    space.layer_sets.push_back({{22}, {}});
    space.ratio_grid = {0.25, 0.75};
    return space;
}

}  // namespace

TEST_CASE("synthetic_score counts evidence recall") {
    CHECK(synthetic_score(IndexSet::from_unsorted({1, 2, 3, 4, 9}),
                          IndexSet::from_unsorted({1, 2, 3, 4})) == doctest::Approx(1.0));
    CHECK(synthetic_score(IndexSet::from_unsorted({7, 8}),
                          IndexSet::from_unsorted({1, 2})) == doctest::Approx(0.0));
    CHECK(synthetic_score(IndexSet::from_unsorted({1, 2, 9}),
                          IndexSet::from_unsorted({1, 2, 3, 4})) == doctest::Approx(0.5));
    CHECK(synthetic_score(IndexSet::from_unsorted({1, 2}), IndexSet()) == doctest::Approx(0.0));
}

TEST_CASE("calibrate_class with a single candidate returns it") {
    const Dump d0 = small_dump(3, 1);
    const Dump d1 = small_dump(3, 2);
    const std::vector<const Dump*> samples = {&d0, &d1};
    CandidateSpace space;
    space.layer_sets.push_back({{5, 22}, {}});
    space.ratio_grid = {0.5};
    CalibrateOptions opts;
    opts.schedule = small_schedule();
    const ClassResult res =
        calibrate_class(samples, 3, space, opts, make_synthetic_scorer());
    CHECK(res.grid.size() == 1);
    CHECK(res.best_score == doctest::Approx(res.grid[0].score));
    CHECK(res.best.split_ratio == doctest::Approx(0.5));
    CHECK(res.best.layer_values.size() == 2);
    // score is the mean of the per-sample scores
    double manual = 0.0;
    for (const Dump* d : samples) {
        const PruneTrace t = run_schedule(d->stack, d->projection, d->records,
                                          res.best, opts.schedule);
        manual += synthetic_score(t.final_retained, d->meta.evidence);
    }
    CHECK(res.best_score == doctest::Approx(manual / 2.0));
}

TEST_CASE("calibrate_class picks the candidate that provably retains evidence") {
    // a=1.0 keeps the top-24 attention tokens, which include all planted
    // evidence; a=0.0 keeps medoids only, which provably cannot score
    // higher. The winner must be the a=1.0 candidate.
    const Dump d = small_dump(5, 7);
    const std::vector<const Dump*> samples = {&d};
    CandidateSpace space;
    space.layer_sets.push_back({{5, 15, 22}, {}});
    space.ratio_grid = {0.0, 1.0};
    CalibrateOptions opts;
    opts.schedule = small_schedule();
    const ClassResult res = calibrate_class(samples, 5, space, opts, make_synthetic_scorer());
    CHECK(res.grid.size() == 2);
    // exhaustive re-scan of the grid confirms the argmax
    double best = -1.0;
    for (const ScoredCandidate& sc : res.grid) best = std::max(best, sc.score);
    CHECK(res.best_score == doctest::Approx(best));
    CHECK(res.best.split_ratio == doctest::Approx(1.0));
    CHECK(res.best_score == doctest::Approx(1.0));
}

TEST_CASE("calibrate_class breaks score ties by earliest grid order") {
    const Dump d = small_dump(2, 11);
    const std::vector<const Dump*> samples = {&d};
    CandidateSpace space;
    // identical candidates -> identical scores -> first one wins
    space.layer_sets.push_back({{5, 22}, {}});
    space.layer_sets.push_back({{5, 22}, {}});
    space.ratio_grid = {0.5};
    CalibrateOptions opts;
    opts.schedule = small_schedule();
    const ClassResult res = calibrate_class(samples, 2, space, opts, make_synthetic_scorer());
    CHECK(res.grid[0].score == doctest::Approx(res.grid[1].score));
    CHECK(res.best_score == doctest::Approx(res.grid[0].score));
}

TEST_CASE("calibrate_class requires samples") {
    CandidateSpace space = two_by_two_space();
    CalibrateOptions opts;
    opts.schedule = small_schedule();
    const std::vector<const Dump*> none;
    try {
        calibrate_class(none, 1, space, opts, make_synthetic_scorer());
        FAIL("expected NoSamples");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::no_samples);
    }
}

TEST_CASE("calibrate_class wraps scorer exceptions with candidate context") {
    const Dump d = small_dump(0, 13);
    const std::vector<const Dump*> samples = {&d};
    CandidateSpace space = two_by_two_space();
    CalibrateOptions opts;
    opts.schedule = small_schedule();
    const Scorer broken = [](const Dump&, const IndexSet&) -> double {
        throw std::runtime_error("boom");
    };
    try {
        calibrate_class(samples, 0, space, opts, broken);
        FAIL("expected ScorerFailure");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::scorer_failure);
        CHECK(std::string(e.what()).find("layer_set=0") != std::string::npos);
    }
}

TEST_CASE("calibrate_all covers every class and inherits for empty ones") {
    std::vector<Dump> dataset;
    for (CategoryId c = 0; c < kNumCategories; ++c) {
        if (c == 6) continue;   // class 6 left empty on purpose
        dataset.push_back(small_dump(c, 20 + c));
    }
    CalibrateOptions opts;
    opts.schedule = small_schedule();
    const auto [table, report] =
        calibrate_all(dataset, two_by_two_space(), opts, make_synthetic_scorer(), "builtin");

    CHECK(report.classes.size() == 9);
    for (CategoryId c = 0; c < kNumCategories; ++c) {
        CHECK(report.classes[c].category == c);
        if (c == 6) {
            CHECK(report.classes[c].inherited);
            CHECK(table.profiles[6].layer_values == table.profiles[8].layer_values);
            CHECK(table.profiles[6].split_ratio == table.profiles[8].split_ratio);
            CHECK(table.profiles[6].category == 6);
        } else {
            CHECK_FALSE(report.classes[c].inherited);
            // grid is complete: |layer_sets| x |ratio_grid| entries
            CHECK(report.classes[c].grid.size() == 4);
        }
    }
}

TEST_CASE("calibrate_all fails without samples or fallback, works with declared fallback") {
    std::vector<Dump> dataset;
    dataset.push_back(small_dump(0, 31));   // only class 0, class 8 empty
    CalibrateOptions opts;
    opts.schedule = small_schedule();
    CHECK_THROWS_AS(
        calibrate_all(dataset, two_by_two_space(), opts, make_synthetic_scorer(), "builtin"),
        Error);

    ClassProfile fallback = profile_from_candidate({{5, 22}, {}}, 0.5, 8);
    const auto [table, report] = calibrate_all(dataset, two_by_two_space(), opts,
                                               make_synthetic_scorer(), "builtin", &fallback);
    CHECK_FALSE(report.classes[0].inherited);
    CHECK(report.classes[8].inherited);
    CHECK(table.profiles[8].split_ratio == doctest::Approx(0.5));
}

TEST_CASE("class results ignore dataset order within a class") {
    std::vector<Dump> dataset;
    for (int i = 0; i < 4; ++i) dataset.push_back(small_dump(8, 40 + i));
    CalibrateOptions opts;
    opts.schedule = small_schedule();
    const auto [t1, r1] =
        calibrate_all(dataset, two_by_two_space(), opts, make_synthetic_scorer(), "builtin");
    std::reverse(dataset.begin(), dataset.end());
    const auto [t2, r2] =
        calibrate_all(dataset, two_by_two_space(), opts, make_synthetic_scorer(), "builtin");
    CHECK(report_to_json(r1) == report_to_json(r2));
    CHECK(t1.profiles[8].layer_values == t2.profiles[8].layer_values);
}

TEST_CASE("adding a candidate never lowers the per-class best score") {
    std::vector<Dump> dataset;
    for (int i = 0; i < 3; ++i) dataset.push_back(small_dump(1, 80 + i));
    std::vector<const Dump*> samples;
    for (const Dump& d : dataset) samples.push_back(&d);
    CalibrateOptions opts;
    opts.schedule = small_schedule();

    CandidateSpace base;
    base.layer_sets.push_back({{22}, {}});
    base.ratio_grid = {0.2};
    const ClassResult before = calibrate_class(samples, 1, base, opts, make_synthetic_scorer());

    CandidateSpace wider = base;
    wider.ratio_grid.push_back(1.0);   // pivots-only retains all evidence
    const ClassResult after = calibrate_class(samples, 1, wider, opts, make_synthetic_scorer());
    CHECK(after.best_score >= before.best_score);
    CHECK(after.grid.size() == 2);
}

TEST_CASE("early rejection keeps the grid annotated and the best fully scored") {
    std::vector<Dump> dataset;
    for (int i = 0; i < 8; ++i) dataset.push_back(small_dump(4, 60 + i));
    std::vector<const Dump*> samples;
    for (const Dump& d : dataset) samples.push_back(&d);
    CandidateSpace space = two_by_two_space();
    CalibrateOptions opts;
    opts.schedule = small_schedule();
    opts.early.enabled = true;
    opts.early.fraction = 0.25;
    opts.early.keep_top = 2;
    const ClassResult res = calibrate_class(samples, 4, space, opts, make_synthetic_scorer());
    int fully = 0;
    for (const ScoredCandidate& sc : res.grid) fully += sc.fully_scored ? 1 : 0;
    CHECK(fully == 2);
    for (const ScoredCandidate& sc : res.grid) {
        if (sc.fully_scored) CHECK(sc.score <= res.best_score + 1e-12);
    }
}

TEST_CASE("profile_from_candidate normalizes uniform and explicit weights") {
    const ClassProfile uniform = profile_from_candidate({{3, 12, 18}, {}}, 0.2, 7);
    double sum = 0.0;
    for (const auto& [l, w] : uniform.layer_values) sum += w;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

    const ClassProfile weighted = profile_from_candidate({{5, 15, 22}, {0.2, 0.3, 0.5}}, 0.8, 0);
    CHECK(weighted.layer_values.at(22) == doctest::Approx(0.5));
    CHECK_THROWS_AS(profile_from_candidate({{1, 2}, {0.7, 0.7}}, 0.5, 0), Error);
}

// --- external scorer protocol ---------------------------------------------

TEST_CASE("external scorer: constant echo") {
    ExternalScorer scorer({"/bin/sh", "-c", "while read line; do echo 0.5; done"}, 5000);
    ScoreRequest req;
    req.sample_id = "s1";
    req.retained = IndexSet::from_unsorted({1, 2, 3});
    req.prompt = "How many?";
    req.category = 5;
    CHECK(scorer.score(req) == doctest::Approx(0.5));
    CHECK(scorer.score(req) == doctest::Approx(0.5));
}

TEST_CASE("external scorer: non-numeric reply is MalformedScore") {
    ExternalScorer scorer({"/bin/sh", "-c", "while read line; do echo not-a-number; done"}, 5000);
    ScoreRequest req;
    req.sample_id = "s1";
    try {
        scorer.score(req);
        FAIL("expected MalformedScore");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::malformed_score);
    }
}

TEST_CASE("external scorer: silent child times out") {
    ExternalScorer scorer({"/bin/sh", "-c", "sleep 30"}, 300);
    ScoreRequest req;
    req.sample_id = "s1";
    try {
        scorer.score(req);
        FAIL("expected Timeout");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::timeout);
    }
}

TEST_CASE("external scorer: exiting child reports ProcessExit with the code") {
    ExternalScorer scorer({"/bin/sh", "-c", "read line; exit 3"}, 5000);
    ScoreRequest req;
    req.sample_id = "s1";
    try {
        scorer.score(req);
        FAIL("expected ProcessExit");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::process_exit);
        CHECK(e.index() == 3);
    }
}

TEST_CASE("external evidence scorer matches the in-process score") {
    // build a small dataset, export its evidence map, then compare the
    // out-of-process scorer against synthetic_score on every sample
    std::vector<Dump> dataset;
    for (int i = 0; i < 10; ++i) dataset.push_back(small_dump(i % kNumCategories, 100 + i));

    const fs::path evidence_path =
        fs::temp_directory_path() / "vtprune_test_evidence.json";
    {
        nlohmann::json j;
        for (const Dump& d : dataset) {
            nlohmann::json arr = nlohmann::json::array();
            for (int32_t t : d.meta.evidence) arr.push_back(t);
            j[d.meta.sample_id] = arr;
        }
        std::ofstream f(evidence_path, std::ios::trunc);
        f << j.dump();
    }

    auto proc = std::make_shared<ExternalScorer>(
        std::vector<std::string>{"python3",
                                 std::string(VTPRUNE_SOURCE_DIR) + "/tools/evidence_scorer.py",
                                 evidence_path.string()},
        10000);
    const Scorer external = make_external_scorer(proc);

    SplitMix64 rng(131);
    int trials = 0;
    for (const Dump& d : dataset) {
        for (int rep = 0; rep < 10; ++rep) {
            std::vector<int32_t> retained;
            for (int t = 0; t < 36; ++t) {
                if (rng.uniform() < 0.4) retained.push_back(t);
            }
            const IndexSet set = IndexSet::from_unsorted(retained);
            CHECK(external(d, set) ==
                  doctest::Approx(synthetic_score(set, d.meta.evidence)).epsilon(1e-12));
            ++trials;
        }
    }
    CHECK(trials == 100);
    fs::remove(evidence_path);
}
