#pragma once

#include <vector>

#include "vtprune/core.hpp"

namespace vtprune {

// One recorded attention matrix with its reference-row set and the mapping
// from matrix columns to visual-token ids. Rows are post-softmax,
// head-averaged, and validated as row-stochastic but never renormalized.
struct AttentionRecord {
    TokenMatrix a;                       // rows x cols
    IndexSet reference_rows;             // non-empty, indices < rows
    std::vector<int32_t> visual_cols;    // column -> token id, unique, size == cols
    int stage_layer = 0;                 // decoder layer tag (2, 6, 15, ...)
};

void validate_attention(const AttentionRecord& rec);

struct SaliencyScores {
    IndexSet tokens;            // scored token ids (ascending)
    std::vector<double> phi;    // aligned with tokens, finite and >= 0

    size_t size() const { return tokens.size(); }
    double at(int32_t token) const;
};

// softmax(Q K^T / sqrt(d_k)), max-stabilized per row.
TokenMatrix attention_from_qk(const TokenMatrix& q, const TokenMatrix& k);

// phi_t = mean over reference rows of the attention mass on token t's
// column, for each surviving token. Scores are absolute received mass;
// no renormalization over survivors.
SaliencyScores saliency(const AttentionRecord& rec, const IndexSet& survivors);

}  // namespace vtprune
