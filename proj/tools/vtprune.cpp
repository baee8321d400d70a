// vtprune: deterministic visual-token-reduction engine over recorded
// token/attention dumps. Subcommands: route, fuse, prune, calibrate,
// verify, bench, gen-synth. Exit codes: 0 ok, 2 usage, 3 data error,
// 4 verification failure.

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "vtprune/calibration.hpp"
#include "vtprune/dump_io.hpp"
#include "vtprune/pruner.hpp"
#include "vtprune/synth.hpp"
#include "vtprune/verify.hpp"

namespace fs = std::filesystem;
using namespace vtprune;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitVerify = 4;

fs::path exe_dir() {
    std::error_code ec;
    fs::path p = fs::read_symlink("/proc/self/exe", ec);
    if (ec) return fs::current_path();
    return p.parent_path();
}

// Resolution order: explicit flag, environment variable, configs/ next to
// the binary's parent, configs/ under the working directory.
fs::path find_config(const std::string& flag_value, const char* env_var,
                     const std::string& file_name) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv(env_var); env && *env) return env;
    const fs::path near_exe = exe_dir().parent_path() / "configs" / file_name;
    if (fs::exists(near_exe)) return near_exe;
    const fs::path in_cwd = fs::path("configs") / file_name;
    if (fs::exists(in_cwd)) return in_cwd;
    throw Error(ErrorKind::io_error,
                "cannot locate " + file_name + " (pass a path or set " + env_var + ")");
}

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(std::stoi(item));
    }
    return out;
}

StageSchedule schedule_from_flags(const std::string& schedule_flag, int budget_flag,
                                  const std::string& stage_layers_flag) {
    if (!schedule_flag.empty()) {
        const std::vector<int> budgets = parse_int_list(schedule_flag);
        std::vector<int> layers = parse_int_list(stage_layers_flag);
        if (layers.size() > budgets.size()) layers.resize(budgets.size());
        if (layers.size() != budgets.size()) {
            throw Error(ErrorKind::shape_inconsistency,
                        "--stage-layers must list one decoder layer per schedule entry");
        }
        StageSchedule s;
        for (size_t i = 0; i < budgets.size(); ++i) {
            s.stages.push_back({layers[i], budgets[i]});
        }
        validate_schedule(s);
        return s;
    }
    return preset_schedule(budget_flag);
}

CategoryId resolve_category(std::optional<int> flag, const DumpMeta& meta,
                            const RuleTable& rules) {
    if (flag) return *flag;
    if (meta.category) return *meta.category;
    return route(meta.prompt, rules);
}

// Collect manifest paths: a single manifest file, or every
// <dir>/*/manifest.json plus <dir>/*manifest.json one level deep.
std::vector<fs::path> collect_manifests(const fs::path& input) {
    if (fs::is_regular_file(input)) return {input};
    if (!fs::is_directory(input)) {
        throw Error(ErrorKind::io_error, "no such file or directory: " + input.string());
    }
    std::vector<fs::path> out;
    for (const auto& entry : fs::directory_iterator(input)) {
        if (entry.is_directory() && fs::exists(entry.path() / "manifest.json")) {
            out.push_back(entry.path() / "manifest.json");
        } else if (entry.is_regular_file() &&
                   entry.path().filename().string().ends_with("manifest.json")) {
            out.push_back(entry.path());
        }
    }
    std::sort(out.begin(), out.end());
    if (out.empty()) {
        throw Error(ErrorKind::io_error, "no manifests under " + input.string());
    }
    return out;
}

std::string iso_timestamp() {
    const std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    return buf;
}

int run_route(const std::string& prompt, const std::string& rules_path) {
    const RuleTable rules =
        load_rules_file(find_config(rules_path, "VTPRUNE_RULES", "router_rules.json").string());
    const CategoryId c = route(prompt, rules);
    std::cout << c << " " << category_name(c) << "\n";
    return 0;
}

int run_fuse(const std::string& dump_path, const std::string& profiles_path,
             const std::string& rules_path, std::optional<int> category_flag,
             const std::string& out_path) {
    const Dump dump = load_dump(dump_path);
    const ProfileTable profiles = load_profiles_file(
        find_config(profiles_path, "VTPRUNE_PROFILES", "profiles_llava.json").string());
    const RuleTable rules =
        load_rules_file(find_config(rules_path, "VTPRUNE_RULES", "router_rules.json").string());
    const CategoryId c = resolve_category(category_flag, dump.meta, rules);

    const LayerStack aligned = align_stack(dump.stack);
    const MixtureWeights alpha = mixture_for(profiles.for_category(c), aligned);
    const TokenMatrix fused = project(fuse(aligned, alpha), dump.projection);

    write_tensor_file(out_path, fused.data);
    nlohmann::json side;
    side["rows"] = fused.rows;
    side["cols"] = fused.cols;
    side["category"] = c;
    side["sample_id"] = dump.meta.sample_id;
    std::ofstream f(out_path + ".json", std::ios::trunc);
    f << side.dump(2) << "\n";
    std::cout << dump.meta.sample_id << ": fused " << fused.rows << "x" << fused.cols
              << " (category " << c << ") -> " << out_path << "\n";
    return 0;
}

int run_prune(const std::string& input, const std::string& profiles_path,
              const std::string& rules_path, std::optional<int> category_flag,
              const std::string& schedule_flag, int budget_flag,
              const std::string& stage_layers_flag, int iters, const std::string& out,
              bool timestamp, int threads) {
    const ProfileTable profiles = load_profiles_file(
        find_config(profiles_path, "VTPRUNE_PROFILES", "profiles_llava.json").string());
    const RuleTable rules =
        load_rules_file(find_config(rules_path, "VTPRUNE_RULES", "router_rules.json").string());
    const StageSchedule schedule = schedule_from_flags(schedule_flag, budget_flag,
                                                       stage_layers_flag);
    ScheduleOptions opts;
    opts.kmeans_iters = iters;

    const std::vector<fs::path> manifests = collect_manifests(input);
    const bool single = manifests.size() == 1 && fs::is_regular_file(input);

    auto process_one = [&](const fs::path& manifest) {
        const Dump dump = load_dump(manifest);
        const CategoryId c = resolve_category(category_flag, dump.meta, rules);
        const ClassProfile& profile = profiles.for_category(c);
        const PruneTrace trace =
            run_schedule(dump.stack, dump.projection, dump.records, profile, schedule, opts);
        RetainedOutput result =
            make_output(trace, dump.meta.sample_id, config_digest(profile, schedule, opts));
        if (timestamp) result.timestamp = iso_timestamp();
        const fs::path out_path =
            single ? fs::path(out) : fs::path(out) / (dump.meta.sample_id + ".json");
        save_result(result, out_path);
        return std::make_pair(dump.meta.sample_id, result.final_retained.size());
    };

    if (single) {
        const auto [id, kept] = process_one(manifests.front());
        std::cout << id << ": retained " << kept << " tokens -> " << out << "\n";
        return 0;
    }

    // work pool over samples; per-sample outputs are independent files
    fs::create_directories(out);
    std::atomic<size_t> next{0};
    std::atomic<int> failures{0};
    const int n_threads =
        std::max(1, threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency()));
    std::vector<std::thread> pool;
    std::mutex io_mutex;
    for (int w = 0; w < n_threads; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const size_t i = next.fetch_add(1);
                if (i >= manifests.size()) return;
                try {
                    const auto [id, kept] = process_one(manifests[i]);
                    std::lock_guard<std::mutex> lock(io_mutex);
                    std::cout << id << ": retained " << kept << " tokens\n";
                } catch (const std::exception& e) {
                    ++failures;
                    std::lock_guard<std::mutex> lock(io_mutex);
                    std::cerr << manifests[i].string() << ": " << e.what() << "\n";
                }
            }
        });
    }
    for (std::thread& t : pool) t.join();
    return failures.load() == 0 ? 0 : kExitData;
}

CandidateSpace space_from_flags(const std::string& layer_sets_flag, const std::string& ratios) {
    CandidateSpace space;
    std::stringstream ss(layer_sets_flag);
    std::string group;
    while (std::getline(ss, group, ';')) {
        if (group.empty()) continue;
        WeightedLayerSet ls;
        ls.layers = parse_int_list(group);
        space.layer_sets.push_back(std::move(ls));
    }
    std::stringstream rs(ratios);
    std::string item;
    while (std::getline(rs, item, ',')) {
        if (!item.empty()) space.ratio_grid.push_back(std::stod(item));
    }
    validate_space(space);
    return space;
}

int run_calibrate(const std::string& dataset_dir, const std::string& layer_sets_flag,
                  const std::string& ratios_flag, const std::string& schedule_flag,
                  int budget_flag, const std::string& stage_layers_flag, int iters,
                  const std::string& scorer_flag, int timeout_ms, const std::string& rules_path,
                  const std::string& out_profiles, const std::string& out_report,
                  bool early_reject, double early_fraction, int early_keep) {
    const RuleTable rules =
        load_rules_file(find_config(rules_path, "VTPRUNE_RULES", "router_rules.json").string());

    std::vector<Dump> dataset;
    for (const fs::path& manifest : collect_manifests(dataset_dir)) {
        Dump d = load_dump(manifest);
        if (!d.meta.category) d.meta.category = route(d.meta.prompt, rules);
        dataset.push_back(std::move(d));
    }

    CalibrateOptions opts;
    opts.schedule = schedule_from_flags(schedule_flag, budget_flag, stage_layers_flag);
    opts.kmeans_iters = iters;
    opts.early.enabled = early_reject;
    opts.early.fraction = early_fraction;
    opts.early.keep_top = early_keep;

    Scorer scorer;
    std::string scorer_name;
    std::shared_ptr<ExternalScorer> proc;
    if (scorer_flag == "builtin") {
        scorer = make_synthetic_scorer();
        scorer_name = "builtin-evidence-recall";
    } else if (scorer_flag.rfind("exec:", 0) == 0) {
        std::vector<std::string> argv;
        std::stringstream ss(scorer_flag.substr(5));
        std::string word;
        while (ss >> word) argv.push_back(word);
        proc = std::make_shared<ExternalScorer>(argv, timeout_ms);
        scorer = make_external_scorer(proc);
        scorer_name = "exec:" + scorer_flag.substr(5);
    } else {
        throw Error(ErrorKind::io_error, "--scorer must be builtin or exec:<command>");
    }

    const CandidateSpace space = space_from_flags(layer_sets_flag, ratios_flag);
    const auto [table, report] = calibrate_all(dataset, space, opts, scorer, scorer_name);

    {
        std::ofstream f(out_profiles, std::ios::trunc);
        if (!f) throw Error(ErrorKind::io_error, "cannot write " + out_profiles);
        f << profiles_to_json(table);
    }
    {
        std::ofstream f(out_report, std::ios::trunc);
        if (!f) throw Error(ErrorKind::io_error, "cannot write " + out_report);
        f << report_to_json(report);
    }
    for (const ClassResult& r : report.classes) {
        std::cout << "class " << r.category << " (" << category_name(r.category) << "): a="
                  << r.best.split_ratio << " score=" << r.best_score
                  << (r.inherited ? " [inherited]" : "") << "\n";
    }
    std::cout << "profiles -> " << out_profiles << ", report -> " << out_report << "\n";
    return 0;
}

int run_verify(long samples, std::uint64_t seed, const std::string& profiles_path,
               const std::string& report_path, const std::string& only_check) {
    ProbeConfig cfg;
    cfg.samples = samples;
    cfg.seed = seed;
    cfg.max_layers = 32;

    std::optional<ProfileTable> profiles;
    try {
        profiles = load_profiles_file(
            find_config(profiles_path, "VTPRUNE_PROFILES", "profiles_llava.json").string());
    } catch (const Error&) {
        // misroute specialization simply drops out without a profile table
    }

    SuiteResult suite;
    if (only_check.empty()) {
        suite = run_verify_suite(cfg, profiles ? &*profiles : nullptr);
    } else {
        const auto rep = run_named_check(only_check, cfg, profiles ? &*profiles : nullptr);
        if (!rep) {
            std::cerr << "unknown check: " << only_check << "\n";
            return kExitUsage;
        }
        suite.checks.push_back(*rep);
        suite.all_pass = rep->pass;
    }
    for (const CheckReport& c : suite.checks) {
        std::cout << (c.pass ? "PASS" : "FAIL") << " " << c.name << " trials=" << c.trials
                  << " violations=" << c.violations << " worst_slack=" << c.worst_slack << "\n";
    }
    if (!report_path.empty()) {
        std::ofstream f(report_path, std::ios::trunc);
        if (!f) throw Error(ErrorKind::io_error, "cannot write " + report_path);
        f << suite_to_json(suite);
    }
    std::cout << (suite.all_pass ? "verification suite: all checks passed"
                                 : "verification suite: FAILURES detected")
              << "\n";
    return suite.all_pass ? 0 : kExitVerify;
}

int run_bench(int tokens, int dim, int layers, int budget, int iters, int reps) {
    SynthSpec spec;
    spec.grid_h = static_cast<int>(std::sqrt(static_cast<double>(tokens)));
    while (tokens % spec.grid_h != 0) --spec.grid_h;
    spec.grid_w = tokens / spec.grid_h;
    spec.d_v = dim;
    spec.layer_ids.clear();
    for (int l = 0; l < layers; ++l) spec.layer_ids.push_back(l + 1);
    spec.evidence_count = std::min(8, tokens / 4);
    const Dump dump = make_synthetic_dump(spec);

    ClassProfile profile;
    profile.category = kDefaultCategory;
    profile.mode = ClassProfile::Mode::weights;
    {
        const double w = 1.0 / layers;
        double sum = 0.0;
        for (int l = 1; l <= layers; ++l) {
            profile.layer_values[l] = w;
            sum += w;
        }
        profile.layer_values[1] += 1.0 - sum;
    }
    profile.split_ratio = 0.7;

    const StageSchedule schedule = preset_schedule(budget);
    ScheduleOptions opts;
    opts.kmeans_iters = iters;

    OpCounters counters;
    const auto start = std::chrono::steady_clock::now();
    PruneTrace trace;
    for (int r = 0; r < reps; ++r) {
        counters.reset();
        trace = run_schedule(dump.stack, dump.projection, dump.records, profile, schedule, opts,
                             &counters);
    }
    const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start);
    const double per_run = elapsed.count() / reps;

    // formula totals across the stage chain
    ComplexityEstimate want;
    want.fusion_madds =
        complexity_estimate(tokens, layers, dim, dim, 0, 0, 0).fusion_madds;
    int pool = tokens;
    for (const StageSpec& st : schedule.stages) {
        const BudgetSplit split = split_budget(profile.split_ratio, st.budget);
        const ComplexityEstimate e =
            complexity_estimate(pool, 0, 0, dim, split.k1, split.k2, iters);
        want.redundancy_madds += e.redundancy_madds;
        want.kmeans_madds += e.kmeans_madds;
        want.medoid_madds += e.medoid_madds;
        pool = st.budget;
    }

    std::cout << "tokens=" << tokens << " dim=" << dim << " layers=" << layers
              << " budget=" << budget << " iters=" << iters << "\n";
    std::cout << "time/run: " << per_run * 1e3 << " ms  (" << tokens / per_run
              << " tokens/s, final " << trace.final_retained.size() << " kept)\n";
    auto line = [](const char* name, std::uint64_t got, std::uint64_t expect) {
        std::cout << name << ": counted=" << got << " formula=" << expect
                  << (got == expect ? "  [match]" : "  [MISMATCH]") << "\n";
        return got == expect;
    };
    bool ok = true;
    ok &= line("fusion     ", counters.fusion_madds, want.fusion_madds);
    ok &= line("redundancy ", counters.redundancy_madds, want.redundancy_madds);
    ok &= line("kmeans     ", counters.kmeans_madds, want.kmeans_madds);
    ok &= line("medoid     ", counters.medoid_madds, want.medoid_madds);
    return ok ? 0 : kExitVerify;
}

int run_gen_synth(const std::string& out_dir, int samples, int grid_h, int grid_w, int dim,
                  int proj_dim, const std::string& layers_flag, const std::string& stages_flag,
                  int refs, int evidence, std::optional<int> category, bool hierarchical,
                  std::uint64_t seed, int records) {
    for (int i = 0; i < samples; ++i) {
        SynthSpec spec;
        char id[32];
        std::snprintf(id, sizeof(id), "synth-%04d", i);
        spec.sample_id = id;
        spec.category = category ? *category : i % kNumCategories;
        spec.grid_h = grid_h;
        spec.grid_w = grid_w;
        spec.d_v = dim;
        spec.d_proj = proj_dim;
        spec.layer_ids = parse_int_list(layers_flag);
        spec.stage_layers = parse_int_list(stages_flag);
        if (records > 0 && records < static_cast<int>(spec.stage_layers.size())) {
            spec.stage_layers.resize(records);
        }
        spec.reference_rows = refs;
        spec.evidence_count = evidence;
        spec.hierarchical = hierarchical;
        spec.seed = seed + static_cast<std::uint64_t>(i);
        const Dump dump = make_synthetic_dump(spec);
        save_dump(dump, fs::path(out_dir) / spec.sample_id);
    }
    std::cout << "wrote " << samples << " synthetic dump(s) under " << out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deterministic visual-token-reduction engine"};
    app.require_subcommand(1);

    // route
    auto* route_cmd = app.add_subcommand("route", "map a prompt to its category");
    std::string prompt, rules_path;
    route_cmd->add_option("prompt", prompt, "prompt text")->required();
    route_cmd->add_option("--rules", rules_path, "rule table JSON");

    // fuse
    auto* fuse_cmd = app.add_subcommand("fuse", "fuse a dump's layers into one tensor");
    std::string dump_path, profiles_path, fuse_out = "fused.f32";
    std::optional<int> category_flag;
    fuse_cmd->add_option("--dump", dump_path, "dump manifest")->required();
    fuse_cmd->add_option("--profiles", profiles_path, "profile table JSON");
    fuse_cmd->add_option("--rules", rules_path, "rule table JSON");
    fuse_cmd->add_option("--category", category_flag, "category override (0..8)")
        ->check(CLI::Range(0, 8));
    fuse_cmd->add_option("--out", fuse_out, "output tensor file");

    // prune
    auto* prune_cmd = app.add_subcommand("prune", "run the dual-stage pruning schedule");
    std::string prune_input, schedule_flag, stage_layers_flag = "2,6,15";
    std::string prune_out = "retained.json";
    int budget_flag = 192, iters = 5, threads = 0;
    bool timestamp = false;
    prune_cmd->add_option("--dump", prune_input, "dump manifest or dataset directory")->required();
    prune_cmd->add_option("--profiles", profiles_path, "profile table JSON");
    prune_cmd->add_option("--rules", rules_path, "rule table JSON");
    prune_cmd->add_option("--category", category_flag, "category override (0..8)")
        ->check(CLI::Range(0, 8));
    prune_cmd->add_option("--schedule", schedule_flag, "per-stage budgets, e.g. 300,200,110");
    prune_cmd->add_option("--budget", budget_flag, "effective budget preset (192, 128, 64)");
    prune_cmd->add_option("--stage-layers", stage_layers_flag, "decoder layer tags per stage");
    prune_cmd->add_option("--iters", iters, "k-means iterations (default 5)")
        ->check(CLI::NonNegativeNumber);
    prune_cmd->add_option("--out", prune_out, "output file (or directory for datasets)");
    prune_cmd->add_flag("--timestamp", timestamp, "add the optional timestamp key");
    prune_cmd->add_option("--threads", threads, "worker threads for dataset mode");

    // calibrate
    auto* cal_cmd = app.add_subcommand("calibrate", "discrete subspace search per category");
    std::string dataset_dir, layer_sets_flag = "5,15,22;5,22;20,22;12,15,19;3,12,18";
    std::string ratios_flag = "0.2,0.4,0.6,0.8";
    std::string scorer_flag = "builtin";
    std::string out_profiles = "calibrated_profiles.json", out_report = "calibration_report.json";
    int timeout_ms = 10000;
    bool early_reject = false;
    double early_fraction = 0.25;
    int early_keep = 3;
    cal_cmd->add_option("--dataset", dataset_dir, "directory of dump manifests")->required();
    cal_cmd->add_option("--layer-sets", layer_sets_flag,
                        "candidate layer sets, ';'-separated comma lists");
    cal_cmd->add_option("--ratios", ratios_flag, "candidate split ratios");
    cal_cmd->add_option("--schedule", schedule_flag, "per-stage budgets");
    cal_cmd->add_option("--budget", budget_flag, "effective budget preset");
    cal_cmd->add_option("--stage-layers", stage_layers_flag, "decoder layer tags per stage");
    cal_cmd->add_option("--iters", iters, "k-means iterations");
    cal_cmd->add_option("--scorer", scorer_flag, "builtin | exec:<command>");
    cal_cmd->add_option("--timeout-ms", timeout_ms, "external scorer timeout");
    cal_cmd->add_option("--rules", rules_path, "rule table JSON");
    cal_cmd->add_option("--out-profiles", out_profiles, "output profile table");
    cal_cmd->add_option("--out-report", out_report, "output scored grid");
    cal_cmd->add_flag("--early-reject", early_reject, "two-phase candidate evaluation");
    cal_cmd->add_option("--early-fraction", early_fraction, "phase-1 sample fraction");
    cal_cmd->add_option("--early-keep", early_keep, "candidates kept for phase 2");

    // verify
    auto* verify_cmd = app.add_subcommand("verify", "run the formal-property suite");
    long verify_samples = 2000;
    std::uint64_t verify_seed = 0x5eedbead;
    std::string report_path;
    verify_cmd->add_option("--samples", verify_samples, "probes per check");
    verify_cmd->add_option("--seed", verify_seed, "probe seed");
    verify_cmd->add_option("--profiles", profiles_path, "profile table for misroute checks");
    verify_cmd->add_option("--report", report_path, "machine-readable report file");
    std::string only_check;
    verify_cmd->add_option("--check", only_check, "run a single check by name");

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "throughput and op-count accounting");
    int bench_tokens = 576, bench_dim = 64, bench_layers = 3, bench_reps = 5;
    bench_cmd->add_option("--tokens", bench_tokens, "visual token count");
    bench_cmd->add_option("--dim", bench_dim, "feature dim");
    bench_cmd->add_option("--layers", bench_layers, "stack depth");
    bench_cmd->add_option("--budget", budget_flag, "effective budget preset");
    bench_cmd->add_option("--iters", iters, "k-means iterations");
    bench_cmd->add_option("--reps", bench_reps, "timed repetitions");

    // gen-synth
    auto* synth_cmd = app.add_subcommand("gen-synth", "emit synthetic dumps");
    std::string synth_out = "synth_data";
    int synth_samples = 1, grid_h = 24, grid_w = 24, synth_dim = 64, proj_dim = 0;
    std::string synth_layers = "3,5,12,14,15,17,18,19,20,22", synth_stages = "2,6,15";
    int refs = 4, evidence = 6, synth_records = 0;
    bool hierarchical = false;
    std::uint64_t synth_seed = 1;
    synth_cmd->add_option("--out", synth_out, "output directory");
    synth_cmd->add_option("--samples", synth_samples, "number of samples");
    synth_cmd->add_option("--grid-h", grid_h, "token grid height");
    synth_cmd->add_option("--grid-w", grid_w, "token grid width");
    synth_cmd->add_option("--dim", synth_dim, "feature dim");
    synth_cmd->add_option("--proj-dim", proj_dim, "projection output dim (0 = none)");
    synth_cmd->add_option("--layers", synth_layers, "vision layer ids");
    synth_cmd->add_option("--stages", synth_stages, "attention stage tags");
    synth_cmd->add_option("--refs", refs, "reference rows per record");
    synth_cmd->add_option("--evidence", evidence, "planted evidence tokens");
    synth_cmd->add_option("--records", synth_records, "limit attention records (0 = all stages)");
    synth_cmd->add_option("--category", category_flag, "fixed category (default: cycle 0..8)")
        ->check(CLI::Range(0, 8));
    synth_cmd->add_flag("--hier", hierarchical, "hierarchical grids (first layer 2x)");
    synth_cmd->add_option("--seed", synth_seed, "generator seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (route_cmd->parsed()) return run_route(prompt, rules_path);
        if (fuse_cmd->parsed()) {
            return run_fuse(dump_path, profiles_path, rules_path, category_flag, fuse_out);
        }
        if (prune_cmd->parsed()) {
            return run_prune(prune_input, profiles_path, rules_path, category_flag, schedule_flag,
                             budget_flag, stage_layers_flag, iters, prune_out, timestamp, threads);
        }
        if (cal_cmd->parsed()) {
            return run_calibrate(dataset_dir, layer_sets_flag, ratios_flag, schedule_flag,
                                 budget_flag, stage_layers_flag, iters, scorer_flag, timeout_ms,
                                 rules_path, out_profiles, out_report, early_reject,
                                 early_fraction, early_keep);
        }
        if (verify_cmd->parsed()) {
            return run_verify(verify_samples, verify_seed, profiles_path, report_path, only_check);
        }
        if (bench_cmd->parsed()) {
            return run_bench(bench_tokens, bench_dim, bench_layers, budget_flag, iters,
                             bench_reps);
        }
        if (synth_cmd->parsed()) {
            return run_gen_synth(synth_out, synth_samples, grid_h, grid_w, synth_dim, proj_dim,
                                 synth_layers, synth_stages, refs, evidence, category_flag,
                                 hierarchical, synth_seed, synth_records);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
