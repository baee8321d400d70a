#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vtprune/core.hpp"
#include "vtprune/counters.hpp"
#include "vtprune/router.hpp"

namespace vtprune {

// Point on the probability simplex over the stack's layers.
struct MixtureWeights {
    std::vector<double> alpha;   // non-negative, sums to 1 within 1e-6

    size_t size() const { return alpha.size(); }
    double operator[](size_t i) const { return alpha[i]; }
};

// Per-category layer mixture + budget split ratio. Exactly one of the two
// modes is active: "weights" carries already-normalized coefficients,
// "scores" carries raw scores that go through the temperature softmax.
// Layers absent from the map get weight exactly 0.
struct ClassProfile {
    enum class Mode { weights, scores };

    CategoryId category = kDefaultCategory;
    Mode mode = Mode::weights;
    std::map<int, double> layer_values;   // layer_id -> coefficient or raw score
    double tau = 1.0;                     // scores mode only
    double split_ratio = 0.0;             // a_c in [0, 1]
};

struct ProfileTable {
    std::array<ClassProfile, kNumCategories> profiles;   // indexed by category

    const ClassProfile& for_category(CategoryId c) const;
};

// Linear map into decoder space; an empty matrix is the identity sentinel.
struct Projection {
    int d_in = 0;
    int d_out = 0;
    std::vector<float> matrix;   // d_in x d_out row-major, empty => identity

    bool is_identity() const { return matrix.empty(); }
};

// alpha_l = exp(tau*w_l - max) / sum, max-stabilized. Throws
// non_finite_score on NaN/+inf scores; -inf is allowed as the
// absent-layer sentinel as long as at least one score is finite.
MixtureWeights softmax_mixture(std::span<const double> scores, double tau);

void validate_mixture(const MixtureWeights& w);

// Resolve a profile against a stack's layer_ids: weights mode copies the
// coefficients (0 for unlisted layers), scores mode runs the softmax with
// -inf for unlisted layers. Every profile layer must exist in the stack.
MixtureWeights mixture_for(const ClassProfile& profile, const LayerStack& stack);

// Token-wise convex combination across layers. Requires token-aligned
// layers (same M). Double accumulation per output entry.
TokenMatrix fuse(const LayerStack& stack, const MixtureWeights& alpha,
                 OpCounters* counters = nullptr);

// m * p.matrix (or m unchanged for the identity sentinel).
TokenMatrix project(const TokenMatrix& m, const Projection& p);

enum class ResampleMode { bilinear, nearest };

// Spatial resampling of a gridded token matrix onto a target grid.
// Upsampling interpolates (align-corners-false pixel centers; nearest
// selectable), integer-factor downsampling is area-average pooling, and
// non-integer downsampling falls back to bilinear resampling.
TokenMatrix align_layer(const TokenMatrix& m, Grid target,
                        ResampleMode upsample = ResampleMode::bilinear);

// Align every layer to the last layer's grid (the hierarchical case);
// returns the stack untouched when token counts already agree.
LayerStack align_stack(const LayerStack& stack, ResampleMode upsample = ResampleMode::bilinear);

// Profile-table config, mirroring the shipped per-category defaults:
//   {"profiles": [{"category": 0, "mode": "weights",
//                  "layers": {"5": 0.2, "15": 0.3, "22": 0.5},
//                  "split_ratio": 0.8}, ...]}
// Scores mode uses "layers" for raw scores plus an optional "tau" (default 1).
ProfileTable load_profiles(const std::string& json_text);
ProfileTable load_profiles_file(const std::string& path);
std::string profiles_to_json(const ProfileTable& t);

void validate_profile(const ClassProfile& p);

}  // namespace vtprune
