#include "vtprune/synth.hpp"

#include <cmath>

namespace vtprune {

std::string prompt_for_category(CategoryId c) {
    switch (c) {
        case 0: return "What is this object shown near the center?";
        case 1: return "What breed is the dog in the photo?";
        case 2: return "Who wrote the message on the sign?";
        case 3: return "Describe the scene around the building.";
        case 4: return "What is to the left of the chair?";
        case 5: return "How many cups are on the table?";
        case 6: return "What is the person doing right now?";
        case 7: return "What is the purpose of this tool?";
        case 8: return "Tell me about the image.";
    }
    return "Tell me about the image.";
}

namespace {

TokenMatrix random_features(SplitMix64& rng, int rows, int cols) {
    TokenMatrix m(rows, cols);
    for (float& x : m.data) x = static_cast<float>(rng.uniform(-1.0, 1.0));
    // no (near-)zero rows: nudge the first coordinate if needed
    for (int r = 0; r < rows; ++r) {
        if (row_norm(m.row_span(r)) <= 1e-6) m.at(r, 0) = 0.5f;
    }
    return m;
}

AttentionRecord random_attention(SplitMix64& rng, int stage_layer, int n_tokens, int n_ref,
                                 int n_extra, const IndexSet& evidence) {
    AttentionRecord rec;
    rec.stage_layer = stage_layer;
    const int rows = n_ref + n_extra;
    rec.a = TokenMatrix(rows, n_tokens);
    {
        std::vector<int32_t> refs(n_ref);
        for (int i = 0; i < n_ref; ++i) refs[i] = i;
        rec.reference_rows = IndexSet(std::move(refs));
    }
    rec.visual_cols.resize(n_tokens);
    for (int c = 0; c < n_tokens; ++c) rec.visual_cols[c] = c;

    std::vector<double> logits(n_tokens);
    for (int r = 0; r < rows; ++r) {
        double max_logit = -1e300;
        for (int c = 0; c < n_tokens; ++c) {
            double l = rng.uniform();
            if (r < n_ref && evidence.contains(c)) l += 6.0;   // planted evidence
            logits[c] = l;
            max_logit = std::max(max_logit, l);
        }
        double sum = 0.0;
        for (int c = 0; c < n_tokens; ++c) {
            logits[c] = std::exp(logits[c] - max_logit);
            sum += logits[c];
        }
        float* row = rec.a.row(r);
        for (int c = 0; c < n_tokens; ++c) row[c] = static_cast<float>(logits[c] / sum);
    }
    return rec;
}

}  // namespace

Dump make_synthetic_dump(const SynthSpec& spec) {
    SplitMix64 rng(spec.seed * 0x9e3779b97f4a7c15ull + 0x51a7b3c5d9e1f207ull);

    const int m = spec.grid_h * spec.grid_w;
    Dump dump;
    dump.meta.sample_id = spec.sample_id;
    dump.meta.prompt = prompt_for_category(spec.category);
    dump.meta.category = spec.category;

    // evidence: distinct tokens spread over the final grid
    if (spec.evidence_count > 0) {
        std::vector<int32_t> all(m);
        for (int i = 0; i < m; ++i) all[i] = i;
        for (int i = 0; i < spec.evidence_count; ++i) {
            const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(m - i)));
            std::swap(all[i], all[j]);
        }
        all.resize(spec.evidence_count);
        dump.meta.evidence = IndexSet::from_unsorted(std::move(all));
    }

    dump.stack.layer_ids = spec.layer_ids;
    dump.stack.d_v = spec.d_v;
    for (size_t l = 0; l < spec.layer_ids.size(); ++l) {
        Grid g{spec.grid_h, spec.grid_w};
        if (spec.hierarchical && l == 0) g = Grid{spec.grid_h * 2, spec.grid_w * 2};
        TokenMatrix layer = random_features(rng, g.h * g.w, spec.d_v);
        layer.grid = g;
        dump.stack.layers.push_back(std::move(layer));
    }

    for (int tag : spec.stage_layers) {
        dump.records.push_back(random_attention(rng, tag, m, spec.reference_rows, spec.extra_rows,
                                                dump.meta.evidence));
    }

    if (spec.d_proj > 0) {
        dump.projection.d_in = spec.d_v;
        dump.projection.d_out = spec.d_proj;
        dump.projection.matrix.resize(static_cast<size_t>(spec.d_v) * spec.d_proj);
        const double scale = 1.0 / std::sqrt(static_cast<double>(spec.d_v));
        for (float& x : dump.projection.matrix) {
            x = static_cast<float>(rng.uniform(-scale, scale));
        }
    }
    return dump;
}

}  // namespace vtprune
