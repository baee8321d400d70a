#include <doctest.h>

#include <cmath>

#include "vtprune/fusion.hpp"
#include "vtprune/rng.hpp"

using namespace vtprune;

namespace {

LayerStack stack_of(std::vector<TokenMatrix> layers) {
    LayerStack s;
    s.d_v = layers[0].cols;
    s.layers = std::move(layers);
    for (size_t i = 0; i < s.layers.size(); ++i) s.layer_ids.push_back(static_cast<int>(i) + 1);
    return s;
}

TokenMatrix basis_row_matrix(int which, int dim) {
    TokenMatrix m(1, dim);
    m.at(0, which) = 1.0f;
    return m;
}

}  // namespace

TEST_CASE("softmax_mixture: tiny temperature is uniform") {
    const std::vector<double> w = {1.7, -3.2, 0.4};
    const MixtureWeights a = softmax_mixture(w, 1e-6);
    for (double x : a.alpha) CHECK(x == doctest::Approx(1.0 / 3.0).epsilon(1e-5));
}

TEST_CASE("softmax_mixture: large temperature is one-hot") {
    const std::vector<double> w = {0.1, 0.9, 0.3};
    const MixtureWeights a = softmax_mixture(w, 1e3);
    CHECK(a.alpha[1] > 1.0 - 1e-9);
}

TEST_CASE("softmax_mixture: symmetry") {
    const std::vector<double> w = {0.0, 0.0};
    const MixtureWeights a = softmax_mixture(w, 1.0);
    CHECK(a.alpha[0] == doctest::Approx(0.5));
    CHECK(a.alpha[1] == doctest::Approx(0.5));
}

TEST_CASE("softmax_mixture rejects NaN, +inf, bad tau") {
    const std::vector<double> nan_w = {0.0, std::nan("")};
    const std::vector<double> inf_w = {0.0, std::numeric_limits<double>::infinity()};
    const std::vector<double> ok = {0.0, 1.0};
    CHECK_THROWS_AS(softmax_mixture(nan_w, 1.0), Error);
    CHECK_THROWS_AS(softmax_mixture(inf_w, 1.0), Error);
    CHECK_THROWS_AS(softmax_mixture(ok, 0.0), Error);
    CHECK_THROWS_AS(softmax_mixture(ok, -1.0), Error);
}

TEST_CASE("softmax_mixture: -inf sentinel gets weight exactly 0") {
    const std::vector<double> w = {1.0, -std::numeric_limits<double>::infinity(), 2.0};
    const MixtureWeights a = softmax_mixture(w, 1.0);
    CHECK(a.alpha[1] == 0.0);
    CHECK(a.alpha[0] + a.alpha[2] == doctest::Approx(1.0));
    const std::vector<double> all_inf = {-std::numeric_limits<double>::infinity()};
    CHECK_THROWS_AS(softmax_mixture(all_inf, 1.0), Error);
}

TEST_CASE("softmax output is always on the simplex") {
    SplitMix64 rng(17);
    for (int trial = 0; trial < 300; ++trial) {
        const int l = rng.range(1, 16);
        std::vector<double> w(l);
        for (double& x : w) x = rng.uniform(-20.0, 20.0);
        const double tau = std::exp(rng.uniform(std::log(1e-3), std::log(1e3)));
        const MixtureWeights a = softmax_mixture(w, tau);
        validate_mixture(a);   // non-negative, sums to 1 within 1e-6
    }
}

TEST_CASE("fuse with a one-hot mixture returns that layer bitwise") {
    SplitMix64 rng(23);
    TokenMatrix l0(3, 4), l1(3, 4);
    for (float& x : l0.data) x = static_cast<float>(rng.uniform(-2.0, 2.0));
    for (float& x : l1.data) x = static_cast<float>(rng.uniform(-2.0, 2.0));
    const LayerStack s = stack_of({l0, l1});
    MixtureWeights alpha;
    alpha.alpha = {0.0, 1.0};
    const TokenMatrix fused = fuse(s, alpha);
    CHECK(fused.data == l1.data);
}

TEST_CASE("fuse reproduces the class-0 weighted combination") {
    // layers whose token row is e1 / e2 / e3, weights 0.2 / 0.3 / 0.5
    const LayerStack s =
        stack_of({basis_row_matrix(0, 3), basis_row_matrix(1, 3), basis_row_matrix(2, 3)});
    MixtureWeights alpha;
    alpha.alpha = {0.2, 0.3, 0.5};
    const TokenMatrix fused = fuse(s, alpha);
    CHECK(fused.at(0, 0) == doctest::Approx(0.2));
    CHECK(fused.at(0, 1) == doctest::Approx(0.3));
    CHECK(fused.at(0, 2) == doctest::Approx(0.5));
}

TEST_CASE("fuse of identical layers is that layer for any mixture") {
    SplitMix64 rng(31);
    TokenMatrix layer(4, 5);
    for (float& x : layer.data) x = static_cast<float>(rng.uniform(-1.0, 1.0));
    const LayerStack s = stack_of({layer, layer});
    MixtureWeights alpha;
    alpha.alpha = {0.37, 0.63};
    const TokenMatrix fused = fuse(s, alpha);
    for (size_t i = 0; i < fused.data.size(); ++i) {
        CHECK(fused.data[i] == doctest::Approx(layer.data[i]).epsilon(1e-6));
    }
}

TEST_CASE("fuse errors: mixture length and unaligned layers") {
    const LayerStack s = stack_of({TokenMatrix(2, 3), TokenMatrix(2, 3)});
    MixtureWeights bad_len;
    bad_len.alpha = {1.0};
    CHECK_THROWS_AS(fuse(s, bad_len), Error);

    LayerStack unaligned = stack_of({TokenMatrix(2, 3), TokenMatrix(4, 3)});
    MixtureWeights alpha;
    alpha.alpha = {0.5, 0.5};
    try {
        fuse(unaligned, alpha);
        FAIL("expected UnalignedLayers");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::unaligned_layers);
    }
}

TEST_CASE("hull containment holds on random stacks") {
    SplitMix64 rng(41);
    for (int trial = 0; trial < 100; ++trial) {
        const int l = rng.range(1, 6);
        const int m = rng.range(1, 5);
        const int d = rng.range(2, 8);
        std::vector<TokenMatrix> layers;
        for (int i = 0; i < l; ++i) {
            TokenMatrix layer(m, d);
            for (float& x : layer.data) x = static_cast<float>(rng.uniform(-3.0, 3.0));
            layers.push_back(std::move(layer));
        }
        const LayerStack s = stack_of(std::move(layers));
        std::vector<double> w(l);
        for (double& x : w) x = rng.uniform(-2.0, 2.0);
        const MixtureWeights alpha = softmax_mixture(w, 1.0);
        const TokenMatrix fused = fuse(s, alpha);
        for (int t = 0; t < m; ++t) {
            for (int c = 0; c < d; ++c) {
                double lo = 1e300, hi = -1e300, exact = 0.0;
                for (int i = 0; i < l; ++i) {
                    const double z = s.layers[i].at(t, c);
                    lo = std::min(lo, z);
                    hi = std::max(hi, z);
                    exact += alpha[i] * z;
                }
                CHECK(fused.at(t, c) >= lo - 1e-5);
                CHECK(fused.at(t, c) <= hi + 1e-5);
                CHECK(std::abs(fused.at(t, c) - exact) <= 1e-5);
            }
            double fused_norm = row_norm(fused.row_span(t));
            double max_norm = 0.0;
            for (int i = 0; i < l; ++i) max_norm = std::max(max_norm, row_norm(s.layers[i].row_span(t)));
            CHECK(fused_norm <= max_norm + 1e-5);
        }
    }
}

TEST_CASE("softmax l1-Lipschitz bound on sampled pairs") {
    SplitMix64 rng(43);
    for (int trial = 0; trial < 500; ++trial) {
        const int l = rng.range(2, 12);
        std::vector<double> w(l), w2(l);
        for (double& x : w) x = rng.uniform(-10.0, 10.0);
        for (double& x : w2) x = rng.uniform(-10.0, 10.0);
        const double tau = trial % 3 == 0 ? 0.1 : trial % 3 == 1 ? 1.0 : 4.0;
        const MixtureWeights a = softmax_mixture(w, tau);
        const MixtureWeights b = softmax_mixture(w2, tau);
        double lhs = 0.0, dw = 0.0;
        for (int i = 0; i < l; ++i) {
            lhs += std::abs(a.alpha[i] - b.alpha[i]);
            dw += std::abs(w[i] - w2[i]);
        }
        CHECK(lhs <= 0.5 * tau * dw + 1e-9);
    }
}

TEST_CASE("project: identity sentinel returns input bitwise") {
    SplitMix64 rng(47);
    TokenMatrix m(3, 4);
    for (float& x : m.data) x = static_cast<float>(rng.uniform(-1.0, 1.0));
    const Projection identity;
    const TokenMatrix out = project(m, identity);
    CHECK(out.data == m.data);
}

TEST_CASE("project: explicit identity matrix leaves values unchanged") {
    TokenMatrix m(1, 2);
    m.at(0, 0) = 0.25f;
    m.at(0, 1) = -4.0f;
    Projection p;
    p.d_in = 2;
    p.d_out = 2;
    p.matrix = {1.0f, 0.0f, 0.0f, 1.0f};
    const TokenMatrix out = project(m, p);
    CHECK(out.at(0, 0) == 0.25f);
    CHECK(out.at(0, 1) == -4.0f);
}

TEST_CASE("project: hand-checked matrix product") {
    TokenMatrix m(1, 2);
    m.at(0, 0) = 1.0f;
    m.at(0, 1) = 2.0f;
    Projection p;
    p.d_in = 2;
    p.d_out = 3;
    p.matrix = {1.0f, 0.0f, 1.0f,
                0.0f, 1.0f, 1.0f};
    const TokenMatrix out = project(m, p);
    CHECK(out.at(0, 0) == doctest::Approx(1.0));
    CHECK(out.at(0, 1) == doctest::Approx(2.0));
    CHECK(out.at(0, 2) == doctest::Approx(3.0));
}

TEST_CASE("project rejects dim mismatch") {
    TokenMatrix m(1, 2);
    Projection p;
    p.d_in = 3;
    p.d_out = 2;
    p.matrix.assign(6, 0.0f);
    CHECK_THROWS_AS(project(m, p), Error);
}

TEST_CASE("align_layer: equal target grid is the identity") {
    TokenMatrix m(4, 3);
    m.grid = Grid{2, 2};
    SplitMix64 rng(53);
    for (float& x : m.data) x = static_cast<float>(rng.uniform(-1.0, 1.0));
    const TokenMatrix out = align_layer(m, Grid{2, 2});
    CHECK(out.data == m.data);
}

TEST_CASE("align_layer: 2x2 -> 1x1 averages the window") {
    TokenMatrix m(4, 2);
    m.grid = Grid{2, 2};
    const float vals[4][2] = {{1, 0}, {2, 4}, {3, 8}, {6, 4}};
    for (int r = 0; r < 4; ++r) {
        m.at(r, 0) = vals[r][0];
        m.at(r, 1) = vals[r][1];
    }
    const TokenMatrix out = align_layer(m, Grid{1, 1});
    CHECK(out.rows == 1);
    CHECK(out.at(0, 0) == doctest::Approx(3.0));   // (1+2+3+6)/4
    CHECK(out.at(0, 1) == doctest::Approx(4.0));   // (0+4+8+4)/4
}

TEST_CASE("align_layer: 1x1 -> 2x2 nearest replicates") {
    TokenMatrix m(1, 2);
    m.grid = Grid{1, 1};
    m.at(0, 0) = 5.0f;
    m.at(0, 1) = -1.0f;
    const TokenMatrix out = align_layer(m, Grid{2, 2}, ResampleMode::nearest);
    CHECK(out.rows == 4);
    for (int r = 0; r < 4; ++r) {
        CHECK(out.at(r, 0) == 5.0f);
        CHECK(out.at(r, 1) == -1.0f);
    }
}

TEST_CASE("align_layer requires a grid") {
    TokenMatrix m(4, 2);
    try {
        align_layer(m, Grid{2, 2});
        FAIL("expected MissingGrid");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::missing_grid);
    }
}

TEST_CASE("align round trip on constant fields is the identity") {
    SplitMix64 rng(59);
    for (int trial = 0; trial < 30; ++trial) {
        const int h = rng.range(1, 6);
        const int w = rng.range(1, 6);
        const int d = rng.range(1, 4);
        TokenMatrix m(h * w, d);
        std::vector<float> value(d);
        for (int c = 0; c < d; ++c) value[c] = static_cast<float>(rng.uniform(-2.0, 2.0));
        for (int r = 0; r < h * w; ++r) {
            for (int c = 0; c < d; ++c) m.at(r, c) = value[c];
        }
        m.grid = Grid{h, w};
        const TokenMatrix up = align_layer(m, Grid{h * 2, w * 2});
        const TokenMatrix back = align_layer(up, Grid{h, w});
        for (size_t i = 0; i < m.data.size(); ++i) {
            CHECK(std::abs(back.data[i] - m.data[i]) <= 1e-6);
        }
    }
}

TEST_CASE("align_layer bilinear handles non-integer downsampling") {
    TokenMatrix m(9, 1);
    m.grid = Grid{3, 3};
    for (int r = 0; r < 9; ++r) m.at(r, 0) = 1.0f;   // constant field
    const TokenMatrix out = align_layer(m, Grid{2, 2});
    CHECK(out.rows == 4);
    for (int r = 0; r < 4; ++r) CHECK(out.at(r, 0) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("mixture_for resolves weights and scores modes against a stack") {
    LayerStack s = stack_of({TokenMatrix(2, 3), TokenMatrix(2, 3), TokenMatrix(2, 3)});
    s.layer_ids = {5, 15, 22};

    ClassProfile weights;
    weights.mode = ClassProfile::Mode::weights;
    weights.layer_values = {{5, 0.2}, {22, 0.8}};
    weights.split_ratio = 0.7;
    const MixtureWeights a = mixture_for(weights, s);
    CHECK(a.alpha[0] == doctest::Approx(0.2));
    CHECK(a.alpha[1] == 0.0);   // absent layer gets exactly zero
    CHECK(a.alpha[2] == doctest::Approx(0.8));

    ClassProfile scores;
    scores.mode = ClassProfile::Mode::scores;
    scores.layer_values = {{5, 1.0}, {22, 1.0}};
    scores.tau = 1.0;
    const MixtureWeights b = mixture_for(scores, s);
    CHECK(b.alpha[0] == doctest::Approx(0.5));
    CHECK(b.alpha[1] == 0.0);
    CHECK(b.alpha[2] == doctest::Approx(0.5));

    ClassProfile missing;
    missing.mode = ClassProfile::Mode::weights;
    missing.layer_values = {{99, 1.0}};
    CHECK_THROWS_AS(mixture_for(missing, s), Error);
}

TEST_CASE("shipped profile tables parse and carry the expected defaults") {
    const ProfileTable llava =
        load_profiles_file(std::string(VTPRUNE_SOURCE_DIR) + "/configs/profiles_llava.json");
    CHECK(llava.for_category(0).split_ratio == doctest::Approx(0.8));
    CHECK(llava.for_category(0).layer_values.at(5) == doctest::Approx(0.2));
    CHECK(llava.for_category(0).layer_values.at(15) == doctest::Approx(0.3));
    CHECK(llava.for_category(0).layer_values.at(22) == doctest::Approx(0.5));
    CHECK(llava.for_category(7).split_ratio == doctest::Approx(0.2));
    CHECK(llava.for_category(8).split_ratio == doctest::Approx(0.9));

    const ProfileTable qwen =
        load_profiles_file(std::string(VTPRUNE_SOURCE_DIR) + "/configs/profiles_qwen25vl.json");
    CHECK(qwen.for_category(0).layer_values.at(31) == doctest::Approx(0.5));
    CHECK(qwen.for_category(8).layer_values.at(29) == doctest::Approx(0.2));
    // same split ratios across backbones
    for (int c = 0; c < kNumCategories; ++c) {
        CHECK(llava.for_category(c).split_ratio == qwen.for_category(c).split_ratio);
    }
}

TEST_CASE("load_profiles rejects incomplete and duplicate tables") {
    CHECK_THROWS_AS(load_profiles(R"({"profiles": []})"), Error);
    const char* dup = R"({"profiles": [
        {"category": 0, "mode": "weights", "layers": {"1": 1.0}, "split_ratio": 0.5},
        {"category": 0, "mode": "weights", "layers": {"1": 1.0}, "split_ratio": 0.5}]})";
    CHECK_THROWS_AS(load_profiles(dup), Error);
}

TEST_CASE("profile round-trips through JSON") {
    const ProfileTable llava =
        load_profiles_file(std::string(VTPRUNE_SOURCE_DIR) + "/configs/profiles_llava.json");
    const ProfileTable again = load_profiles(profiles_to_json(llava));
    for (int c = 0; c < kNumCategories; ++c) {
        CHECK(again.for_category(c).split_ratio == llava.for_category(c).split_ratio);
        CHECK(again.for_category(c).layer_values == llava.for_category(c).layer_values);
    }
}
