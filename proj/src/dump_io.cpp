#include "vtprune/dump_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace vtprune {

std::vector<float> read_tensor_file(const fs::path& path, size_t expected_count) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw Error(ErrorKind::io_error, "cannot open tensor file: " + path.string());
    const auto actual_bytes = static_cast<size_t>(f.tellg());
    const size_t expected_bytes = expected_count * sizeof(float);
    if (actual_bytes != expected_bytes) {
        throw Error(ErrorKind::tensor_size_mismatch,
                    path.string() + ": expected " + std::to_string(expected_bytes) +
                        " bytes, found " + std::to_string(actual_bytes));
    }
    f.seekg(0);
    std::vector<float> data(expected_count);
    f.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(expected_bytes));
    if (!f) throw Error(ErrorKind::io_error, "short read on " + path.string());
    return data;
}

void write_tensor_file(const fs::path& path, const std::vector<float>& data) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorKind::io_error, "cannot write tensor file: " + path.string());
    f.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
    if (!f) throw Error(ErrorKind::io_error, "short write on " + path.string());
}

namespace {

json parse_manifest(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw Error(ErrorKind::io_error, "cannot open manifest: " + path.string());
    try {
        return json::parse(f);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::manifest_parse, e.what());
    }
}

IndexSet index_set_from_json(const json& arr, const char* what) {
    if (!arr.is_array()) throw Error(ErrorKind::manifest_parse, std::string(what) + " must be an array");
    std::vector<int32_t> v;
    v.reserve(arr.size());
    for (const auto& e : arr) v.push_back(e.get<int32_t>());
    std::vector<int32_t> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw Error(ErrorKind::shape_inconsistency, std::string(what) + " contains duplicates");
    }
    IndexSet s;
    s.idx = std::move(sorted);
    return s;
}

json index_set_to_json(const IndexSet& s) {
    json arr = json::array();
    for (int32_t i : s) arr.push_back(i);
    return arr;
}

std::string layer_file_name(int layer_id) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "layer_%03d.f32", layer_id);
    return buf;
}

std::string attn_file_name(int stage_layer) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "attn_%03d.f32", stage_layer);
    return buf;
}

}  // namespace

Dump load_dump(const fs::path& manifest_path) {
    const json j = parse_manifest(manifest_path);
    const fs::path dir = manifest_path.parent_path();

    Dump dump;
    try {
        dump.meta.sample_id = j.at("sample_id").get<std::string>();
        dump.meta.prompt = j.value("prompt", std::string());
        if (j.contains("category")) {
            const int c = j["category"].get<int>();
            if (c < 0 || c >= kNumCategories) {
                throw Error(ErrorKind::shape_inconsistency, "category override out of range", c);
            }
            dump.meta.category = c;
        }

        const std::string cls_policy = j.value("cls_policy", std::string("drop"));
        if (cls_policy != "drop" && cls_policy != "fuse") {
            throw Error(ErrorKind::manifest_parse, "cls_policy must be \"drop\" or \"fuse\"");
        }

        if (!j.contains("layers") || !j["layers"].is_array() || j["layers"].empty()) {
            throw Error(ErrorKind::manifest_parse, "manifest needs a non-empty \"layers\" array");
        }
        if (j.contains("num_layers") &&
            j["num_layers"].get<size_t>() != j["layers"].size()) {
            throw Error(ErrorKind::shape_inconsistency, "num_layers != layers array length");
        }

        bool any_grid = false;
        for (const auto& e : j["layers"]) {
            const int layer_id = e.at("layer_id").get<int>();
            const int cols = e.at("cols").get<int>();
            const bool has_cls = e.value("has_cls", false);
            int rows;
            std::optional<Grid> grid;
            if (e.contains("grid")) {
                Grid g{e["grid"].at(0).get<int>(), e["grid"].at(1).get<int>()};
                if (g.h < 1 || g.w < 1) {
                    throw Error(ErrorKind::shape_inconsistency, "layer grid dims must be >= 1");
                }
                rows = g.h * g.w;
                grid = g;
                any_grid = true;
            } else {
                rows = e.at("rows").get<int>();
            }
            if (rows < 1 || cols < 1) {
                throw Error(ErrorKind::shape_inconsistency, "layer dims must be >= 1");
            }
            const int file_rows = rows + (has_cls ? 1 : 0);
            std::vector<float> data = read_tensor_file(
                dir / e.at("file").get<std::string>(), static_cast<size_t>(file_rows) * cols);

            TokenMatrix m;
            m.cols = cols;
            if (has_cls && cls_policy == "drop") {
                m.rows = rows;
                m.data.assign(data.begin() + cols, data.end());
                m.grid = grid;
            } else if (has_cls) {   // fuse: keep as token row 0; only valid ungridded
                if (grid) {
                    throw Error(ErrorKind::shape_inconsistency,
                                "cls_policy \"fuse\" cannot keep a special token on a "
                                "gridded layer; use \"drop\"");
                }
                m.rows = file_rows;
                m.data = std::move(data);
            } else {
                m.rows = rows;
                m.data = std::move(data);
                m.grid = grid;
            }
            dump.stack.layers.push_back(std::move(m));
            dump.stack.layer_ids.push_back(layer_id);
        }
        dump.stack.d_v = dump.stack.layers[0].cols;

        const ValidationReport rep = validate_stack(dump.stack);
        if (!rep.ok()) {
            throw Error(ErrorKind::shape_inconsistency, rep.violations.front());
        }
        (void)any_grid;

        if (j.contains("attention")) {
            for (const auto& e : j["attention"]) {
                AttentionRecord rec;
                rec.stage_layer = e.at("stage_layer").get<int>();
                rec.a.rows = e.at("rows").get<int>();
                rec.a.cols = e.at("cols").get<int>();
                rec.reference_rows = index_set_from_json(e.at("reference_rows"), "reference_rows");
                if (!e.contains("visual_cols") || !e["visual_cols"].is_array()) {
                    throw Error(ErrorKind::manifest_parse, "attention entry needs visual_cols");
                }
                for (const auto& c : e["visual_cols"]) {
                    rec.visual_cols.push_back(c.get<int32_t>());
                }
                rec.a.data = read_tensor_file(dir / e.at("file").get<std::string>(),
                                              static_cast<size_t>(rec.a.rows) * rec.a.cols);
                validate_attention(rec);
                dump.records.push_back(std::move(rec));
            }
        }

        if (j.contains("projection")) {
            const auto& e = j["projection"];
            dump.projection.d_in = e.at("rows").get<int>();
            dump.projection.d_out = e.at("cols").get<int>();
            if (dump.projection.d_in != dump.stack.d_v) {
                throw Error(ErrorKind::shape_inconsistency, "projection rows != stack d_v");
            }
            dump.projection.matrix = read_tensor_file(
                dir / e.at("file").get<std::string>(),
                static_cast<size_t>(dump.projection.d_in) * dump.projection.d_out);
            for (float x : dump.projection.matrix) {
                if (!std::isfinite(x)) {
                    throw Error(ErrorKind::shape_inconsistency, "projection has non-finite entries");
                }
            }
        }

        if (j.contains("evidence")) {
            dump.meta.evidence = index_set_from_json(j["evidence"], "evidence");
            const int m = dump.stack.layers.back().rows;
            for (int32_t t : dump.meta.evidence) {
                if (t < 0 || t >= m) {
                    throw Error(ErrorKind::shape_inconsistency, "evidence token out of range", t);
                }
            }
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::manifest_parse, e.what());
    }
    return dump;
}

void save_dump(const Dump& dump, const fs::path& dir) {
    fs::create_directories(dir);
    json j;
    j["sample_id"] = dump.meta.sample_id;
    j["prompt"] = dump.meta.prompt;
    if (dump.meta.category) j["category"] = *dump.meta.category;
    j["num_layers"] = dump.stack.layers.size();

    json layers = json::array();
    for (size_t i = 0; i < dump.stack.layers.size(); ++i) {
        const TokenMatrix& m = dump.stack.layers[i];
        json e;
        e["layer_id"] = dump.stack.layer_ids[i];
        e["cols"] = m.cols;
        if (m.grid) {
            e["grid"] = json::array({m.grid->h, m.grid->w});
        } else {
            e["rows"] = m.rows;
        }
        const std::string name = layer_file_name(dump.stack.layer_ids[i]);
        e["file"] = name;
        write_tensor_file(dir / name, m.data);
        layers.push_back(e);
    }
    j["layers"] = layers;

    if (!dump.records.empty()) {
        json attn = json::array();
        for (const AttentionRecord& rec : dump.records) {
            json e;
            e["stage_layer"] = rec.stage_layer;
            e["rows"] = rec.a.rows;
            e["cols"] = rec.a.cols;
            e["reference_rows"] = index_set_to_json(rec.reference_rows);
            json cols = json::array();
            for (int32_t c : rec.visual_cols) cols.push_back(c);
            e["visual_cols"] = cols;
            const std::string name = attn_file_name(rec.stage_layer);
            e["file"] = name;
            write_tensor_file(dir / name, rec.a.data);
            attn.push_back(e);
        }
        j["attention"] = attn;
    }

    if (!dump.projection.is_identity()) {
        json e;
        e["rows"] = dump.projection.d_in;
        e["cols"] = dump.projection.d_out;
        e["file"] = "projection.f32";
        write_tensor_file(dir / "projection.f32", dump.projection.matrix);
        j["projection"] = e;
    }

    if (!dump.meta.evidence.empty()) j["evidence"] = index_set_to_json(dump.meta.evidence);

    std::ofstream f(dir / "manifest.json", std::ios::trunc);
    if (!f) throw Error(ErrorKind::io_error, "cannot write manifest in " + dir.string());
    f << j.dump(2) << "\n";
}

namespace {

// FNV-1a 64.
std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

json double_to_json(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

double double_from_json(const json& v) {
    if (v.is_string()) {
        const std::string s = v.get<std::string>();
        if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        throw Error(ErrorKind::manifest_parse, "bad numeric literal: " + s);
    }
    return v.get<double>();
}

}  // namespace

std::string config_digest(const ClassProfile& profile, const StageSchedule& schedule,
                          const ScheduleOptions& opts) {
    std::ostringstream ss;
    ss << "cat=" << profile.category
       << ";mode=" << (profile.mode == ClassProfile::Mode::weights ? "w" : "s");
    ss.precision(17);
    for (const auto& [layer_id, v] : profile.layer_values) ss << ";" << layer_id << "=" << v;
    ss << ";tau=" << profile.tau << ";a=" << profile.split_ratio << ";sched=";
    for (const StageSpec& s : schedule.stages) ss << s.stage_layer << ":" << s.budget << ",";
    ss << ";iters=" << opts.kmeans_iters
       << ";seed_rule=" << (opts.seed_rule == SeedRule::bottom_k ? "bottom" : "top")
       << ";upsample=" << (opts.upsample == ResampleMode::bilinear ? "bilinear" : "nearest");
    char buf[32];
    std::snprintf(buf, sizeof(buf), "fnv1a:%016llx",
                  static_cast<unsigned long long>(fnv1a(ss.str())));
    return buf;
}

RetainedOutput make_output(const PruneTrace& trace, const std::string& sample_id,
                           const std::string& digest) {
    RetainedOutput out;
    out.sample_id = sample_id;
    out.category = trace.category;
    out.engine_version = kEngineVersion;
    out.config_digest = digest;
    out.final_retained = trace.final_retained;
    for (const PruneStageResult& s : trace.stages) {
        StageOutput o;
        o.stage_layer = s.stage_layer;
        o.budget = s.budget;
        o.retained = s.retained;
        o.pivots = s.pivots;
        o.completion = s.completion;
        o.seeds = s.seeds;
        o.delta = s.delta;
        o.j_trace = s.cluster.j_trace;
        o.attn_reused = s.attn_reused;
        o.rho_defined = s.rho_defined;
        out.stages.push_back(std::move(o));
    }
    return out;
}

std::string output_to_json(const RetainedOutput& out) {
    json j;
    j["sample_id"] = out.sample_id;
    j["category"] = out.category;
    j["engine_version"] = out.engine_version;
    j["config_digest"] = out.config_digest;
    j["final_retained"] = index_set_to_json(out.final_retained);
    json stages = json::array();
    for (const StageOutput& s : out.stages) {
        json e;
        e["stage_layer"] = s.stage_layer;
        e["budget"] = s.budget;
        e["retained"] = index_set_to_json(s.retained);
        e["pivots"] = index_set_to_json(s.pivots);
        e["completion"] = index_set_to_json(s.completion);
        e["seeds"] = index_set_to_json(s.seeds);
        e["delta"] = double_to_json(s.delta);
        json jt = json::array();
        for (double v : s.j_trace) jt.push_back(v);
        e["j_trace"] = jt;
        e["attn_reused"] = s.attn_reused;
        e["rho_defined"] = s.rho_defined;
        stages.push_back(e);
    }
    j["stages"] = stages;
    if (out.timestamp) j["timestamp"] = *out.timestamp;
    return j.dump(2) + "\n";
}

void save_result(const RetainedOutput& out, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw Error(ErrorKind::io_error, "cannot write result: " + path.string());
    f << output_to_json(out);
}

RetainedOutput load_result(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw Error(ErrorKind::io_error, "cannot open result: " + path.string());
    json j;
    try {
        j = json::parse(f);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::manifest_parse, e.what());
    }
    RetainedOutput out;
    try {
        out.sample_id = j.at("sample_id").get<std::string>();
        out.category = j.at("category").get<int>();
        out.engine_version = j.at("engine_version").get<std::string>();
        out.config_digest = j.at("config_digest").get<std::string>();
        out.final_retained = index_set_from_json(j.at("final_retained"), "final_retained");
        for (const auto& e : j.at("stages")) {
            StageOutput s;
            s.stage_layer = e.at("stage_layer").get<int>();
            s.budget = e.at("budget").get<int>();
            s.retained = index_set_from_json(e.at("retained"), "retained");
            s.pivots = index_set_from_json(e.at("pivots"), "pivots");
            s.completion = index_set_from_json(e.at("completion"), "completion");
            s.seeds = index_set_from_json(e.at("seeds"), "seeds");
            s.delta = double_from_json(e.at("delta"));
            for (const auto& v : e.at("j_trace")) s.j_trace.push_back(v.get<double>());
            s.attn_reused = e.at("attn_reused").get<bool>();
            s.rho_defined = e.at("rho_defined").get<bool>();
            out.stages.push_back(std::move(s));
        }
        if (j.contains("timestamp")) out.timestamp = j["timestamp"].get<std::string>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::manifest_parse, e.what());
    }
    return out;
}

}  // namespace vtprune
