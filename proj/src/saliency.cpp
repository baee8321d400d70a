#include "vtprune/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace vtprune {

void validate_attention(const AttentionRecord& rec) {
    const TokenMatrix& a = rec.a;
    if (a.data.size() != static_cast<size_t>(a.rows) * a.cols) {
        throw Error(ErrorKind::shape_inconsistency, "attention data length mismatch");
    }
    if (rec.reference_rows.empty()) {
        throw Error(ErrorKind::shape_inconsistency, "reference row set is empty");
    }
    for (int32_t r : rec.reference_rows) {
        if (r < 0 || r >= a.rows) {
            throw Error(ErrorKind::shape_inconsistency, "reference row out of range", r);
        }
    }
    if (rec.visual_cols.size() != static_cast<size_t>(a.cols)) {
        throw Error(ErrorKind::shape_inconsistency, "visual_cols size != column count");
    }
    std::vector<int32_t> sorted = rec.visual_cols;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw Error(ErrorKind::shape_inconsistency, "visual_cols contains duplicates");
    }
    for (int r = 0; r < a.rows; ++r) {
        double sum = 0.0;
        const float* row = a.row(r);
        for (int c = 0; c < a.cols; ++c) {
            if (row[c] < 0.0f || !std::isfinite(row[c])) {
                throw Error(ErrorKind::shape_inconsistency,
                            "attention entry negative or non-finite", r);
            }
            sum += row[c];
        }
        if (std::abs(sum - 1.0) > 1e-4) {
            throw Error(ErrorKind::shape_inconsistency,
                        "attention row " + std::to_string(r) + " sums to " + std::to_string(sum));
        }
    }
}

TokenMatrix attention_from_qk(const TokenMatrix& q, const TokenMatrix& k) {
    if (q.cols != k.cols || q.cols < 1) {
        throw Error(ErrorKind::dim_mismatch, "Q/K key dims differ");
    }
    if (k.rows < 1) throw Error(ErrorKind::shape_mismatch, "no keys");
    const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols));
    TokenMatrix out(q.rows, k.rows);
    std::vector<double> logits(k.rows);
    for (int i = 0; i < q.rows; ++i) {
        double max_logit = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < k.rows; ++j) {
            double dot = 0.0;
            const float* qi = q.row(i);
            const float* kj = k.row(j);
            for (int c = 0; c < q.cols; ++c) dot += static_cast<double>(qi[c]) * kj[c];
            logits[j] = dot * scale;
            max_logit = std::max(max_logit, logits[j]);
        }
        double sum = 0.0;
        for (int j = 0; j < k.rows; ++j) {
            logits[j] = std::exp(logits[j] - max_logit);
            sum += logits[j];
        }
        float* row = out.row(i);
        for (int j = 0; j < k.rows; ++j) row[j] = static_cast<float>(logits[j] / sum);
    }
    return out;
}

double SaliencyScores::at(int32_t token) const {
    auto it = std::lower_bound(tokens.idx.begin(), tokens.idx.end(), token);
    if (it == tokens.idx.end() || *it != token) {
        throw Error(ErrorKind::unknown_token, "token not scored", token);
    }
    return phi[it - tokens.idx.begin()];
}

SaliencyScores saliency(const AttentionRecord& rec, const IndexSet& survivors) {
    std::unordered_map<int32_t, int> col_of;
    col_of.reserve(rec.visual_cols.size());
    for (size_t c = 0; c < rec.visual_cols.size(); ++c) {
        col_of.emplace(rec.visual_cols[c], static_cast<int>(c));
    }
    SaliencyScores out;
    out.tokens = survivors;
    out.phi.resize(survivors.size());
    const double inv = 1.0 / static_cast<double>(rec.reference_rows.size());
    for (size_t i = 0; i < survivors.size(); ++i) {
        auto it = col_of.find(survivors[i]);
        if (it == col_of.end()) {
            throw Error(ErrorKind::unknown_token, "survivor has no attention column",
                        survivors[i]);
        }
        double acc = 0.0;
        for (int32_t r : rec.reference_rows) {
            acc += rec.a.at(r, it->second);
        }
        out.phi[i] = acc * inv;
    }
    return out;
}

}  // namespace vtprune
