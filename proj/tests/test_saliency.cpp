#include <doctest.h>

#include <cmath>

#include "vtprune/rng.hpp"
#include "vtprune/saliency.hpp"

using namespace vtprune;

namespace {

AttentionRecord record_from(std::initializer_list<std::initializer_list<float>> rows,
                            std::initializer_list<int32_t> refs) {
    AttentionRecord rec;
    rec.a = TokenMatrix(static_cast<int>(rows.size()),
                        static_cast<int>(rows.begin()->size()));
    int r = 0;
    for (const auto& row : rows) {
        int c = 0;
        for (float v : row) rec.a.at(r, c++) = v;
        ++r;
    }
    rec.reference_rows = IndexSet::from_unsorted(refs);
    rec.visual_cols.resize(rec.a.cols);
    for (int c = 0; c < rec.a.cols; ++c) rec.visual_cols[c] = c;
    rec.stage_layer = 2;
    return rec;
}

}  // namespace

TEST_CASE("attention_from_qk: equal logits give a uniform row") {
    TokenMatrix q(1, 2);   // zero query
    TokenMatrix k(3, 2);   // three identical keys
    for (int r = 0; r < 3; ++r) {
        k.at(r, 0) = 0.7f;
        k.at(r, 1) = -0.3f;
    }
    const TokenMatrix a = attention_from_qk(q, k);
    for (int c = 0; c < 3; ++c) CHECK(a.at(0, c) == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
}

TEST_CASE("attention_from_qk: dominant logit saturates") {
    TokenMatrix q(1, 1);
    q.at(0, 0) = 50.0f;
    TokenMatrix k(2, 1);
    k.at(0, 0) = 1.0f;
    k.at(1, 0) = -1.0f;
    const TokenMatrix a = attention_from_qk(q, k);
    CHECK(a.at(0, 0) > 0.999999f);
    CHECK(a.at(0, 1) < 1e-6f);
}

TEST_CASE("attention_from_qk: hand-evaluated two-key softmax") {
    // logits (0, ln 2) with d_k = 1 -> (1/3, 2/3)
    TokenMatrix q(1, 1);
    q.at(0, 0) = 1.0f;
    TokenMatrix k(2, 1);
    k.at(0, 0) = 0.0f;
    k.at(1, 0) = static_cast<float>(std::log(2.0));
    const TokenMatrix a = attention_from_qk(q, k);
    CHECK(a.at(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
    CHECK(a.at(0, 1) == doctest::Approx(2.0 / 3.0).epsilon(1e-6));
}

TEST_CASE("attention_from_qk rows are stochastic; dim mismatch rejected") {
    SplitMix64 rng(61);
    TokenMatrix q(4, 3), k(5, 3);
    for (float& x : q.data) x = static_cast<float>(rng.uniform(-2.0, 2.0));
    for (float& x : k.data) x = static_cast<float>(rng.uniform(-2.0, 2.0));
    const TokenMatrix a = attention_from_qk(q, k);
    for (int r = 0; r < a.rows; ++r) {
        double sum = 0.0;
        for (int c = 0; c < a.cols; ++c) sum += a.at(r, c);
        CHECK(std::abs(sum - 1.0) <= 1e-6);
    }
    TokenMatrix bad(2, 4);
    CHECK_THROWS_AS(attention_from_qk(q, bad), Error);
}

TEST_CASE("saliency: uniform attention scores 1/M everywhere") {
    AttentionRecord rec = record_from({{0.25f, 0.25f, 0.25f, 0.25f},
                                       {0.25f, 0.25f, 0.25f, 0.25f}},
                                      {0, 1});
    const SaliencyScores phi = saliency(rec, IndexSet::range(4));
    for (int t = 0; t < 4; ++t) CHECK(phi.at(t) == doctest::Approx(0.25));
}

TEST_CASE("saliency: single one-hot reference row") {
    AttentionRecord rec = record_from({{0.0f, 0.0f, 0.0f, 1.0f}}, {0});
    const SaliencyScores phi = saliency(rec, IndexSet::range(4));
    CHECK(phi.at(3) == doctest::Approx(1.0));
    CHECK(phi.at(0) == doctest::Approx(0.0));
}

TEST_CASE("saliency: mean over two reference rows (brute-force oracle)") {
    AttentionRecord rec = record_from({{0.5f, 0.5f, 0.0f},
                                       {0.0f, 0.5f, 0.5f}},
                                      {0, 1});
    const SaliencyScores phi = saliency(rec, IndexSet::range(3));
    CHECK(phi.at(0) == doctest::Approx(0.25));
    CHECK(phi.at(1) == doctest::Approx(0.5));
    CHECK(phi.at(2) == doctest::Approx(0.25));
}

TEST_CASE("saliency: survivor without a column raises UnknownToken") {
    AttentionRecord rec = record_from({{0.5f, 0.5f}}, {0});
    rec.visual_cols = {10, 11};
    try {
        saliency(rec, IndexSet::from_unsorted({10, 12}));
        FAIL("expected UnknownToken");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::unknown_token);
        CHECK(e.index() == 12);
    }
}

TEST_CASE("saliency mass bound: total received mass never exceeds 1") {
    SplitMix64 rng(67);
    for (int trial = 0; trial < 100; ++trial) {
        const int cols = rng.range(2, 12);
        const int rows = rng.range(1, 5);
        AttentionRecord rec;
        rec.a = TokenMatrix(rows, cols);
        for (int r = 0; r < rows; ++r) {
            double sum = 0.0;
            std::vector<double> vals(cols);
            for (int c = 0; c < cols; ++c) {
                vals[c] = rng.uniform();
                sum += vals[c];
            }
            for (int c = 0; c < cols; ++c) rec.a.at(r, c) = static_cast<float>(vals[c] / sum);
        }
        rec.reference_rows = IndexSet::range(rows);
        rec.visual_cols.resize(cols);
        for (int c = 0; c < cols; ++c) rec.visual_cols[c] = c;
        const SaliencyScores phi = saliency(rec, IndexSet::range(cols));
        double total = 0.0;
        for (double v : phi.phi) total += v;
        CHECK(total <= 1.0 + 1e-6);
        // reference rows attend only to visual columns here, so equality
        CHECK(total == doctest::Approx(1.0).epsilon(1e-5));
    }
}

TEST_CASE("saliency is equivariant under column permutation") {
    SplitMix64 rng(71);
    const int cols = 6;
    AttentionRecord rec;
    rec.a = TokenMatrix(2, cols);
    for (int r = 0; r < 2; ++r) {
        double sum = 0.0;
        std::vector<double> vals(cols);
        for (int c = 0; c < cols; ++c) {
            vals[c] = rng.uniform();
            sum += vals[c];
        }
        for (int c = 0; c < cols; ++c) rec.a.at(r, c) = static_cast<float>(vals[c] / sum);
    }
    rec.reference_rows = IndexSet::range(2);
    rec.visual_cols.resize(cols);
    for (int c = 0; c < cols; ++c) rec.visual_cols[c] = c;
    const SaliencyScores base = saliency(rec, IndexSet::range(cols));

    // permute columns together with the visual map
    const int perm[cols] = {3, 0, 5, 1, 4, 2};
    AttentionRecord shuffled = rec;
    for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < cols; ++c) shuffled.a.at(r, perm[c]) = rec.a.at(r, c);
    }
    for (int c = 0; c < cols; ++c) shuffled.visual_cols[perm[c]] = rec.visual_cols[c];
    const SaliencyScores permuted = saliency(shuffled, IndexSet::range(cols));
    for (int t = 0; t < cols; ++t) CHECK(permuted.at(t) == doctest::Approx(base.at(t)));
}

TEST_CASE("saliency restriction equals full scores restricted (no renormalization)") {
    SplitMix64 rng(73);
    const int cols = 8;
    AttentionRecord rec;
    rec.a = TokenMatrix(3, cols);
    for (int r = 0; r < 3; ++r) {
        double sum = 0.0;
        std::vector<double> vals(cols);
        for (int c = 0; c < cols; ++c) {
            vals[c] = rng.uniform();
            sum += vals[c];
        }
        for (int c = 0; c < cols; ++c) rec.a.at(r, c) = static_cast<float>(vals[c] / sum);
    }
    rec.reference_rows = IndexSet::from_unsorted({0, 2});
    rec.visual_cols.resize(cols);
    for (int c = 0; c < cols; ++c) rec.visual_cols[c] = c;

    const SaliencyScores full = saliency(rec, IndexSet::range(cols));
    const IndexSet survivors = IndexSet::from_unsorted({1, 4, 6});
    const SaliencyScores part = saliency(rec, survivors);
    for (int32_t t : survivors) CHECK(part.at(t) == full.at(t));
}

TEST_CASE("synthetic records built from Q/K pass validation and score") {
    SplitMix64 rng(79);
    TokenMatrix q(3, 4), k(6, 4);
    for (float& x : q.data) x = static_cast<float>(rng.uniform(-1.0, 1.0));
    for (float& x : k.data) x = static_cast<float>(rng.uniform(-1.0, 1.0));
    AttentionRecord rec;
    rec.a = attention_from_qk(q, k);
    rec.reference_rows = IndexSet::from_unsorted({0, 2});
    rec.visual_cols = {0, 1, 2, 3, 4, 5};
    rec.stage_layer = 2;
    CHECK_NOTHROW(validate_attention(rec));
    const SaliencyScores phi = saliency(rec, IndexSet::range(6));
    double total = 0.0;
    for (double v : phi.phi) total += v;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("validate_attention rejects non-stochastic rows and bad metadata") {
    AttentionRecord ok = record_from({{0.5f, 0.5f}}, {0});
    CHECK_NOTHROW(validate_attention(ok));

    AttentionRecord bad_sum = record_from({{0.5f, 0.2f}}, {0});
    CHECK_THROWS_AS(validate_attention(bad_sum), Error);

    AttentionRecord negative = record_from({{1.5f, -0.5f}}, {0});
    CHECK_THROWS_AS(validate_attention(negative), Error);

    AttentionRecord no_refs = record_from({{0.5f, 0.5f}}, {0});
    no_refs.reference_rows = IndexSet();
    CHECK_THROWS_AS(validate_attention(no_refs), Error);

    AttentionRecord dup_cols = record_from({{0.5f, 0.5f}}, {0});
    dup_cols.visual_cols = {3, 3};
    CHECK_THROWS_AS(validate_attention(dup_cols), Error);
}
