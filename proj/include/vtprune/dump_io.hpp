#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vtprune/core.hpp"
#include "vtprune/fusion.hpp"
#include "vtprune/pruner.hpp"
#include "vtprune/router.hpp"
#include "vtprune/saliency.hpp"

namespace vtprune {

inline constexpr const char* kEngineVersion = "0.1.0";

// One recorded sample: JSON manifest plus raw headerless tensor files
// (little-endian float32, row-major). See docs/formats.md.
struct DumpMeta {
    std::string sample_id;
    std::string prompt;
    std::optional<CategoryId> category;   // gold label / routing override
    IndexSet evidence;                    // optional planted evidence tokens
};

struct Dump {
    LayerStack stack;
    std::vector<AttentionRecord> records;
    Projection projection;   // identity when the manifest has no entry
    DumpMeta meta;
};

// Raw tensor file helpers.
std::vector<float> read_tensor_file(const std::filesystem::path& path, size_t expected_count);
void write_tensor_file(const std::filesystem::path& path, const std::vector<float>& data);

// Load and fully validate a dump. Every manifest invariant is enforced
// before returning.
Dump load_dump(const std::filesystem::path& manifest_path);

// Write a dump in canonical form (sorted keys, fixed file naming). Loading
// the result and saving it again is byte-identical.
void save_dump(const Dump& dump, const std::filesystem::path& dir);

// Externalized prune trace.
struct StageOutput {
    int stage_layer = 0;
    int budget = 0;
    IndexSet retained;
    IndexSet pivots;
    IndexSet completion;
    IndexSet seeds;
    double delta = 0.0;
    std::vector<double> j_trace;
    bool attn_reused = false;
    bool rho_defined = true;
};

struct RetainedOutput {
    std::string sample_id;
    CategoryId category = kDefaultCategory;
    std::string engine_version;
    std::string config_digest;
    std::vector<StageOutput> stages;
    IndexSet final_retained;
    std::optional<std::string> timestamp;   // the single optional non-deterministic key
};

// Stable digest over everything that influences a prune run.
std::string config_digest(const ClassProfile& profile, const StageSchedule& schedule,
                          const ScheduleOptions& opts);

RetainedOutput make_output(const PruneTrace& trace, const std::string& sample_id,
                           const std::string& digest);

std::string output_to_json(const RetainedOutput& out);
void save_result(const RetainedOutput& out, const std::filesystem::path& path);
RetainedOutput load_result(const std::filesystem::path& path);

}  // namespace vtprune
