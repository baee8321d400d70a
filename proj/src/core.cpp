#include "vtprune/core.hpp"

#include <algorithm>
#include <cmath>

namespace vtprune {

const char* error_kind_name(ErrorKind k) {
    switch (k) {
        case ErrorKind::zero_norm_row:        return "ZeroNormRow";
        case ErrorKind::dim_mismatch:         return "DimMismatch";
        case ErrorKind::shape_mismatch:       return "ShapeMismatch";
        case ErrorKind::unaligned_layers:     return "UnalignedLayers";
        case ErrorKind::missing_grid:         return "MissingGrid";
        case ErrorKind::non_finite_score:     return "NonFiniteScore";
        case ErrorKind::parse_error:          return "ParseError";
        case ErrorKind::duplicate_priority:   return "DuplicatePriority";
        case ErrorKind::unknown_token:        return "UnknownToken";
        case ErrorKind::budget_exceeds_pool:  return "BudgetExceedsPool";
        case ErrorKind::empty_pivot_set:      return "EmptyPivotSet";
        case ErrorKind::degenerate_argmax:    return "DegenerateArgmax";
        case ErrorKind::no_samples:           return "NoSamples";
        case ErrorKind::scorer_failure:       return "ScorerFailure";
        case ErrorKind::timeout:              return "Timeout";
        case ErrorKind::malformed_score:      return "MalformedScore";
        case ErrorKind::process_exit:         return "ProcessExit";
        case ErrorKind::manifest_parse:       return "ManifestParse";
        case ErrorKind::tensor_size_mismatch: return "TensorSizeMismatch";
        case ErrorKind::shape_inconsistency:  return "ShapeInconsistency";
        case ErrorKind::io_error:             return "IoError";
    }
    return "UnknownError";
}

IndexSet::IndexSet(std::vector<int32_t> sorted_unique) : idx(std::move(sorted_unique)) {
    for (size_t i = 1; i < idx.size(); ++i) {
        if (idx[i] <= idx[i - 1]) {
            throw Error(ErrorKind::shape_inconsistency, "IndexSet not strictly increasing");
        }
    }
}

IndexSet IndexSet::from_unsorted(std::vector<int32_t> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    IndexSet s;
    s.idx = std::move(v);
    return s;
}

IndexSet IndexSet::range(int32_t n) {
    IndexSet s;
    s.idx.resize(n);
    for (int32_t i = 0; i < n; ++i) s.idx[i] = i;
    return s;
}

bool IndexSet::contains(int32_t t) const {
    return std::binary_search(idx.begin(), idx.end(), t);
}

IndexSet IndexSet::set_union(const IndexSet& other) const {
    IndexSet out;
    out.idx.reserve(idx.size() + other.idx.size());
    std::set_union(idx.begin(), idx.end(), other.idx.begin(), other.idx.end(),
                   std::back_inserter(out.idx));
    return out;
}

bool IndexSet::disjoint_with(const IndexSet& other) const {
    size_t i = 0, j = 0;
    while (i < idx.size() && j < other.idx.size()) {
        if (idx[i] == other.idx[j]) return false;
        if (idx[i] < other.idx[j]) ++i; else ++j;
    }
    return true;
}

bool IndexSet::subset_of(const IndexSet& other) const {
    return std::includes(other.idx.begin(), other.idx.end(), idx.begin(), idx.end());
}

double row_norm(std::span<const float> r) {
    double acc = 0.0;
    for (float x : r) acc += static_cast<double>(x) * x;
    return std::sqrt(acc);
}

double cosine_sim(std::span<const float> u, std::span<const float> v) {
    if (u.size() != v.size()) {
        throw Error(ErrorKind::dim_mismatch, "cosine_sim: dims differ");
    }
    double acc = 0.0;
    for (size_t i = 0; i < u.size(); ++i) acc += static_cast<double>(u[i]) * v[i];
    return std::clamp(acc, -1.0, 1.0);
}

UnitFeatureMatrix l2_normalize_rows(const TokenMatrix& m) {
    UnitFeatureMatrix out(m.rows, m.cols);
    for (int r = 0; r < m.rows; ++r) {
        double n = row_norm(m.row_span(r));
        if (n <= 1e-12) {
            throw Error(ErrorKind::zero_norm_row, "row has (near-)zero norm", r);
        }
        const float* src = m.row(r);
        float* dst = out.row(r);
        for (int c = 0; c < m.cols; ++c) {
            dst[c] = static_cast<float>(src[c] / n);
        }
    }
    return out;
}

ValidationReport validate_stack(const LayerStack& s) {
    ValidationReport rep;
    if (s.layers.empty()) {
        rep.violations.push_back("stack has no layers");
        return rep;
    }
    if (s.layer_ids.size() != s.layers.size()) {
        rep.violations.push_back("layer_ids count != layer count");
    }
    for (size_t i = 1; i < s.layer_ids.size(); ++i) {
        if (s.layer_ids[i] <= s.layer_ids[i - 1]) {
            rep.violations.push_back("layer_ids not strictly increasing at position " +
                                     std::to_string(i));
        }
    }
    bool any_grid = false, all_grids = true;
    for (size_t i = 0; i < s.layers.size(); ++i) {
        const TokenMatrix& m = s.layers[i];
        if (m.cols != s.d_v) {
            rep.violations.push_back("layer " + std::to_string(i) + " feature dim " +
                                     std::to_string(m.cols) + " != d_v " + std::to_string(s.d_v));
        }
        if (m.data.size() != static_cast<size_t>(m.rows) * m.cols) {
            rep.violations.push_back("layer " + std::to_string(i) + " data length mismatch");
        }
        if (m.grid) {
            any_grid = true;
            if (m.grid->h * m.grid->w != m.rows) {
                rep.violations.push_back("layer " + std::to_string(i) + " grid h*w != rows");
            }
        } else {
            all_grids = false;
        }
        for (float x : m.data) {
            if (!std::isfinite(x)) {
                rep.violations.push_back("layer " + std::to_string(i) + " has non-finite entries");
                break;
            }
        }
    }
    // Token counts may differ per layer only in the hierarchical case, where
    // every layer must carry a grid so alignment is possible.
    bool uniform_rows = true;
    for (size_t i = 1; i < s.layers.size(); ++i) {
        if (s.layers[i].rows != s.layers[0].rows) uniform_rows = false;
    }
    if (!uniform_rows && !(any_grid && all_grids)) {
        rep.violations.push_back("token counts differ across layers but not all layers have grids");
    }
    return rep;
}

}  // namespace vtprune
