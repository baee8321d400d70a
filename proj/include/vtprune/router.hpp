#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "vtprune/error.hpp"

namespace vtprune {

// 9-way prompt taxonomy. 8 is the Default fallback.
using CategoryId = int;
inline constexpr CategoryId kDefaultCategory = 8;
inline constexpr int kNumCategories = 9;

const char* category_name(CategoryId c);

struct RouterRule {
    std::string pattern;   // case-insensitive substring, non-empty
    CategoryId category = kDefaultCategory;
    int priority = 0;      // unique across the table; highest wins
};

struct RuleTable {
    std::vector<RouterRule> rules;
    CategoryId fallback = kDefaultCategory;
};

// Lowercase (ASCII) and collapse runs of whitespace to single spaces.
std::string normalize_prompt(std::string_view prompt);

// Highest-priority matching rule's category; fallback when nothing matches
// or the prompt is empty/whitespace. Total and deterministic.
CategoryId route(std::string_view prompt, const RuleTable& rules);

// Parse a rule table from JSON text:
//   {"rules": [{"pattern": "how many", "category": 5, "priority": 90}, ...]}
// Throws parse_error (with the offending array position) or
// duplicate_priority.
RuleTable load_rules(const std::string& json_text);
RuleTable load_rules_file(const std::string& path);

void validate_rules(const RuleTable& t);

}  // namespace vtprune
