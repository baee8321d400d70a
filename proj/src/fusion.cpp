#include "vtprune/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace vtprune {

const ClassProfile& ProfileTable::for_category(CategoryId c) const {
    if (c < 0 || c >= kNumCategories) {
        throw Error(ErrorKind::shape_inconsistency, "category out of range", c);
    }
    return profiles[c];
}

MixtureWeights softmax_mixture(std::span<const double> scores, double tau) {
    if (scores.empty()) throw Error(ErrorKind::shape_mismatch, "no scores");
    if (!(tau > 0.0) || !std::isfinite(tau)) {
        throw Error(ErrorKind::non_finite_score, "tau must be positive and finite");
    }
    double max_logit = -std::numeric_limits<double>::infinity();
    for (double w : scores) {
        if (std::isnan(w) || w == std::numeric_limits<double>::infinity()) {
            throw Error(ErrorKind::non_finite_score, "score is NaN or +inf");
        }
        max_logit = std::max(max_logit, tau * w);
    }
    if (!std::isfinite(max_logit)) {
        throw Error(ErrorKind::non_finite_score, "all scores are -inf");
    }
    MixtureWeights out;
    out.alpha.resize(scores.size());
    double sum = 0.0;
    for (size_t l = 0; l < scores.size(); ++l) {
        double e = std::exp(tau * scores[l] - max_logit);
        out.alpha[l] = e;
        sum += e;
    }
    for (double& a : out.alpha) a /= sum;
    return out;
}

void validate_mixture(const MixtureWeights& w) {
    double sum = 0.0;
    for (double a : w.alpha) {
        if (!(a >= 0.0)) throw Error(ErrorKind::shape_inconsistency, "negative mixture weight");
        sum += a;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
        throw Error(ErrorKind::shape_inconsistency,
                    "mixture weights sum to " + std::to_string(sum));
    }
}

MixtureWeights mixture_for(const ClassProfile& profile, const LayerStack& stack) {
    for (const auto& [layer_id, value] : profile.layer_values) {
        (void)value;
        if (std::find(stack.layer_ids.begin(), stack.layer_ids.end(), layer_id) ==
            stack.layer_ids.end()) {
            throw Error(ErrorKind::shape_mismatch,
                        "profile references layer " + std::to_string(layer_id) +
                            " not present in the stack");
        }
    }
    const size_t L = stack.layer_ids.size();
    if (profile.mode == ClassProfile::Mode::weights) {
        MixtureWeights w;
        w.alpha.assign(L, 0.0);
        for (size_t l = 0; l < L; ++l) {
            auto it = profile.layer_values.find(stack.layer_ids[l]);
            if (it != profile.layer_values.end()) w.alpha[l] = it->second;
        }
        validate_mixture(w);
        return w;
    }
    std::vector<double> scores(L, -std::numeric_limits<double>::infinity());
    for (size_t l = 0; l < L; ++l) {
        auto it = profile.layer_values.find(stack.layer_ids[l]);
        if (it != profile.layer_values.end()) scores[l] = it->second;
    }
    return softmax_mixture(scores, profile.tau);
}

TokenMatrix fuse(const LayerStack& stack, const MixtureWeights& alpha, OpCounters* counters) {
    if (stack.layers.empty()) throw Error(ErrorKind::shape_mismatch, "empty stack");
    if (alpha.size() != stack.layers.size()) {
        throw Error(ErrorKind::shape_mismatch, "mixture length != layer count");
    }
    const int rows = stack.layers[0].rows;
    const int cols = stack.layers[0].cols;
    std::optional<Grid> common_grid;
    for (const TokenMatrix& m : stack.layers) {
        if (m.rows != rows || m.cols != cols) {
            throw Error(ErrorKind::unaligned_layers, "layers are not token-aligned");
        }
        if (m.grid) {
            if (common_grid && !(*common_grid == *m.grid)) {
                throw Error(ErrorKind::unaligned_layers, "layer grids differ");
            }
            common_grid = m.grid;
        }
    }

    TokenMatrix out(rows, cols);
    out.grid = common_grid;
    std::vector<double> acc(cols);
    for (int t = 0; t < rows; ++t) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (size_t l = 0; l < stack.layers.size(); ++l) {
            const double a = alpha[l];
            const float* src = stack.layers[l].row(t);
            for (int c = 0; c < cols; ++c) acc[c] += a * src[c];
        }
        float* dst = out.row(t);
        for (int c = 0; c < cols; ++c) dst[c] = static_cast<float>(acc[c]);
    }
    if (counters) {
        counters->fusion_madds += static_cast<std::uint64_t>(stack.layers.size()) * rows * cols;
    }
    return out;
}

TokenMatrix project(const TokenMatrix& m, const Projection& p) {
    if (p.is_identity()) return m;
    if (p.d_in != m.cols) {
        throw Error(ErrorKind::shape_mismatch, "projection d_in != feature dim");
    }
    TokenMatrix out(m.rows, p.d_out);
    out.grid = m.grid;
    for (int t = 0; t < m.rows; ++t) {
        const float* src = m.row(t);
        float* dst = out.row(t);
        for (int o = 0; o < p.d_out; ++o) {
            double acc = 0.0;
            for (int i = 0; i < p.d_in; ++i) {
                acc += static_cast<double>(src[i]) * p.matrix[static_cast<size_t>(i) * p.d_out + o];
            }
            dst[o] = static_cast<float>(acc);
        }
    }
    return out;
}

namespace {

TokenMatrix average_pool(const TokenMatrix& m, Grid target) {
    const Grid in = *m.grid;
    const int fh = in.h / target.h;
    const int fw = in.w / target.w;
    TokenMatrix out(target.h * target.w, m.cols);
    out.grid = target;
    const double inv = 1.0 / (static_cast<double>(fh) * fw);
    std::vector<double> acc(m.cols);
    for (int oy = 0; oy < target.h; ++oy) {
        for (int ox = 0; ox < target.w; ++ox) {
            std::fill(acc.begin(), acc.end(), 0.0);
            for (int ky = 0; ky < fh; ++ky) {
                for (int kx = 0; kx < fw; ++kx) {
                    const float* src = m.row((oy * fh + ky) * in.w + (ox * fw + kx));
                    for (int c = 0; c < m.cols; ++c) acc[c] += src[c];
                }
            }
            float* dst = out.row(oy * target.w + ox);
            for (int c = 0; c < m.cols; ++c) dst[c] = static_cast<float>(acc[c] * inv);
        }
    }
    return out;
}

// Pixel-center (align-corners-false) source coordinate for output index i.
inline double src_coord(int i, int out_size, int in_size) {
    return (i + 0.5) * static_cast<double>(in_size) / out_size - 0.5;
}

TokenMatrix resample_bilinear(const TokenMatrix& m, Grid target) {
    const Grid in = *m.grid;
    TokenMatrix out(target.h * target.w, m.cols);
    out.grid = target;
    for (int oy = 0; oy < target.h; ++oy) {
        const double sy = std::clamp(src_coord(oy, target.h, in.h), 0.0, in.h - 1.0);
        const int y0 = static_cast<int>(sy);
        const int y1 = std::min(y0 + 1, in.h - 1);
        const double wy = sy - y0;
        for (int ox = 0; ox < target.w; ++ox) {
            const double sx = std::clamp(src_coord(ox, target.w, in.w), 0.0, in.w - 1.0);
            const int x0 = static_cast<int>(sx);
            const int x1 = std::min(x0 + 1, in.w - 1);
            const double wx = sx - x0;
            const float* p00 = m.row(y0 * in.w + x0);
            const float* p01 = m.row(y0 * in.w + x1);
            const float* p10 = m.row(y1 * in.w + x0);
            const float* p11 = m.row(y1 * in.w + x1);
            float* dst = out.row(oy * target.w + ox);
            for (int c = 0; c < m.cols; ++c) {
                const double top = p00[c] + (p01[c] - static_cast<double>(p00[c])) * wx;
                const double bot = p10[c] + (p11[c] - static_cast<double>(p10[c])) * wx;
                dst[c] = static_cast<float>(top + (bot - top) * wy);
            }
        }
    }
    return out;
}

TokenMatrix resample_nearest(const TokenMatrix& m, Grid target) {
    const Grid in = *m.grid;
    TokenMatrix out(target.h * target.w, m.cols);
    out.grid = target;
    for (int oy = 0; oy < target.h; ++oy) {
        int sy = std::min(static_cast<int>((oy + 0.5) * in.h / target.h), in.h - 1);
        for (int ox = 0; ox < target.w; ++ox) {
            int sx = std::min(static_cast<int>((ox + 0.5) * in.w / target.w), in.w - 1);
            const float* src = m.row(sy * in.w + sx);
            float* dst = out.row(oy * target.w + ox);
            std::copy(src, src + m.cols, dst);
        }
    }
    return out;
}

}  // namespace

TokenMatrix align_layer(const TokenMatrix& m, Grid target, ResampleMode upsample) {
    if (!m.grid) throw Error(ErrorKind::missing_grid, "align_layer needs a gridded matrix");
    if (target.h < 1 || target.w < 1) {
        throw Error(ErrorKind::shape_mismatch, "target grid dims must be >= 1");
    }
    const Grid in = *m.grid;
    if (in == target) return m;

    const long in_count = static_cast<long>(in.h) * in.w;
    const long out_count = static_cast<long>(target.h) * target.w;
    if (in_count > out_count && in.h % target.h == 0 && in.w % target.w == 0) {
        return average_pool(m, target);
    }
    if (in_count < out_count && upsample == ResampleMode::nearest) {
        return resample_nearest(m, target);
    }
    return resample_bilinear(m, target);
}

LayerStack align_stack(const LayerStack& stack, ResampleMode upsample) {
    bool uniform = true;
    for (const TokenMatrix& m : stack.layers) {
        if (m.rows != stack.layers[0].rows) uniform = false;
    }
    if (uniform) return stack;
    for (const TokenMatrix& m : stack.layers) {
        if (!m.grid) {
            throw Error(ErrorKind::missing_grid,
                        "hierarchical stack has a layer without a grid");
        }
    }
    const Grid target = *stack.layers.back().grid;
    LayerStack out;
    out.layer_ids = stack.layer_ids;
    out.d_v = stack.d_v;
    out.layers.reserve(stack.layers.size());
    for (const TokenMatrix& m : stack.layers) {
        out.layers.push_back(align_layer(m, target, upsample));
    }
    return out;
}

void validate_profile(const ClassProfile& p) {
    if (p.category < 0 || p.category >= kNumCategories) {
        throw Error(ErrorKind::parse_error, "profile category out of range");
    }
    if (!(p.split_ratio >= 0.0 && p.split_ratio <= 1.0)) {
        throw Error(ErrorKind::parse_error, "split_ratio outside [0,1]");
    }
    if (p.layer_values.empty()) {
        throw Error(ErrorKind::parse_error, "profile has no layers");
    }
    for (const auto& [layer_id, v] : p.layer_values) {
        if (layer_id < 0) throw Error(ErrorKind::parse_error, "negative layer id");
        if (!std::isfinite(v)) throw Error(ErrorKind::parse_error, "non-finite layer value");
    }
    if (p.mode == ClassProfile::Mode::weights) {
        double sum = 0.0;
        for (const auto& [layer_id, v] : p.layer_values) {
            (void)layer_id;
            if (v < 0.0) throw Error(ErrorKind::parse_error, "negative weight");
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-6) {
            throw Error(ErrorKind::parse_error, "weights must sum to 1");
        }
    } else {
        if (!(p.tau > 0.0)) throw Error(ErrorKind::parse_error, "tau must be positive");
    }
}

ProfileTable load_profiles(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::parse_error, e.what());
    }
    if (!j.is_object() || !j.contains("profiles") || !j["profiles"].is_array()) {
        throw Error(ErrorKind::parse_error, "expected object with a \"profiles\" array");
    }
    ProfileTable table;
    std::array<bool, kNumCategories> seen{};
    for (const auto& e : j["profiles"]) {
        ClassProfile p;
        p.category = e.at("category").get<int>();
        if (p.category < 0 || p.category >= kNumCategories) {
            throw Error(ErrorKind::parse_error, "category out of range 0..8");
        }
        if (seen[p.category]) {
            throw Error(ErrorKind::parse_error,
                        "duplicate profile for category " + std::to_string(p.category));
        }
        const std::string mode = e.value("mode", std::string("weights"));
        if (mode == "weights") {
            p.mode = ClassProfile::Mode::weights;
        } else if (mode == "scores") {
            p.mode = ClassProfile::Mode::scores;
        } else {
            throw Error(ErrorKind::parse_error, "mode must be \"weights\" or \"scores\"");
        }
        for (const auto& [key, val] : e.at("layers").items()) {
            p.layer_values[std::stoi(key)] = val.get<double>();
        }
        p.tau = e.value("tau", 1.0);
        p.split_ratio = e.at("split_ratio").get<double>();
        validate_profile(p);
        seen[p.category] = true;
        table.profiles[p.category] = std::move(p);
    }
    for (int c = 0; c < kNumCategories; ++c) {
        if (!seen[c]) {
            throw Error(ErrorKind::parse_error,
                        "missing profile for category " + std::to_string(c));
        }
    }
    return table;
}

ProfileTable load_profiles_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error(ErrorKind::io_error, "cannot open profile file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return load_profiles(ss.str());
}

std::string profiles_to_json(const ProfileTable& t) {
    nlohmann::json arr = nlohmann::json::array();
    for (const ClassProfile& p : t.profiles) {
        nlohmann::json e;
        e["category"] = p.category;
        e["mode"] = p.mode == ClassProfile::Mode::weights ? "weights" : "scores";
        nlohmann::json layers = nlohmann::json::object();
        for (const auto& [layer_id, v] : p.layer_values) {
            layers[std::to_string(layer_id)] = v;
        }
        e["layers"] = layers;
        if (p.mode == ClassProfile::Mode::scores) e["tau"] = p.tau;
        e["split_ratio"] = p.split_ratio;
        arr.push_back(e);
    }
    nlohmann::json root;
    root["profiles"] = arr;
    return root.dump(2) + "\n";
}

}  // namespace vtprune
