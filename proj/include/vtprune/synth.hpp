#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vtprune/dump_io.hpp"
#include "vtprune/rng.hpp"

namespace vtprune {

struct SynthSpec {
    std::string sample_id = "synth-0000";
    CategoryId category = 0;
    int grid_h = 24;
    int grid_w = 24;
    int d_v = 64;
    int d_proj = 0;                         // 0 => no projection entry
    // union of the shipped LLaVA profile layers, so generated datasets
    // work with the default profile table for every category
    std::vector<int> layer_ids = {3, 5, 12, 14, 15, 17, 18, 19, 20, 22};
    std::vector<int> stage_layers = {2, 6, 15};   // one attention record each
    int reference_rows = 4;
    int extra_rows = 4;
    int evidence_count = 6;                 // tokens with boosted attention
    bool hierarchical = false;              // first layer at double resolution
    std::uint64_t seed = 1;
};

// Synthetic dump with planted evidence: the reference rows concentrate
// attention mass on the evidence tokens, so relevance-first pruning
// provably retains them when the pivot budget allows.
Dump make_synthetic_dump(const SynthSpec& spec);

// A prompt the shipped rule table routes to the given category.
std::string prompt_for_category(CategoryId c);

}  // namespace vtprune
