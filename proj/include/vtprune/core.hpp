#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vtprune/error.hpp"

namespace vtprune {

struct Grid {
    int h = 0;
    int w = 0;
    bool operator==(const Grid&) const = default;
};

// Dense row-major float32 token-feature matrix. Accumulations over its
// entries are done in double everywhere in this codebase.
struct TokenMatrix {
    int rows = 0;                 // M tokens
    int cols = 0;                 // feature dim
    std::vector<float> data;      // rows*cols, row-major
    std::optional<Grid> grid;     // spatial shape, h*w == rows when present

    TokenMatrix() = default;
    TokenMatrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0f) {}

    float* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
    const float* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }
    std::span<const float> row_span(int r) const { return {row(r), static_cast<size_t>(cols)}; }
    float& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    float at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
};

// Same layout as TokenMatrix but every row is unit-norm (within 1e-6).
// Produced only by l2_normalize_rows / center updates; kept as a distinct
// type so cosine paths cannot be fed raw features by accident.
struct UnitFeatureMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<float> data;

    UnitFeatureMatrix() = default;
    UnitFeatureMatrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0f) {}

    float* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
    const float* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }
    std::span<const float> row_span(int r) const { return {row(r), static_cast<size_t>(cols)}; }
    float at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
};

// Sorted unique token indices.
struct IndexSet {
    std::vector<int32_t> idx;   // strictly increasing

    IndexSet() = default;
    explicit IndexSet(std::vector<int32_t> sorted_unique);
    static IndexSet from_unsorted(std::vector<int32_t> v);
    static IndexSet range(int32_t n);   // {0, 1, ..., n-1}

    size_t size() const { return idx.size(); }
    bool empty() const { return idx.empty(); }
    bool contains(int32_t t) const;
    int32_t operator[](size_t i) const { return idx[i]; }
    auto begin() const { return idx.begin(); }
    auto end() const { return idx.end(); }
    bool operator==(const IndexSet&) const = default;

    IndexSet set_union(const IndexSet& other) const;
    bool disjoint_with(const IndexSet& other) const;
    bool subset_of(const IndexSet& other) const;
};

struct LayerStack {
    std::vector<TokenMatrix> layers;
    std::vector<int> layer_ids;   // vision-encoder layer indices, strictly increasing
    int d_v = 0;                  // shared feature dim

    size_t num_layers() const { return layers.size(); }
};

struct ValidationReport {
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

// Dot product with double accumulation, clamped to [-1, 1].
// Inputs are expected unit-norm; only the dimension is enforced.
double cosine_sim(std::span<const float> u, std::span<const float> v);

// Row-wise L2 normalization. Throws zero_norm_row (with the row index) if
// any row has norm <= 1e-12.
UnitFeatureMatrix l2_normalize_rows(const TokenMatrix& m);

double row_norm(std::span<const float> r);

ValidationReport validate_stack(const LayerStack& s);

}  // namespace vtprune
