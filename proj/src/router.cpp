#include "vtprune/router.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace vtprune {

const char* category_name(CategoryId c) {
    switch (c) {
        case 0: return "object-identification";
        case 1: return "attribute-identification";
        case 2: return "text-symbol-recognition";
        case 3: return "scene-understanding";
        case 4: return "spatial-relations";
        case 5: return "counting";
        case 6: return "action-interaction";
        case 7: return "intention-function";
        case 8: return "default";
    }
    return "invalid";
}

std::string normalize_prompt(std::string_view prompt) {
    std::string out;
    out.reserve(prompt.size());
    bool in_space = true;   // trims leading whitespace
    for (unsigned char ch : prompt) {
        if (std::isspace(ch)) {
            if (!in_space) out.push_back(' ');
            in_space = true;
        } else {
            out.push_back(static_cast<char>(std::tolower(ch)));
            in_space = false;
        }
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

CategoryId route(std::string_view prompt, const RuleTable& rules) {
    std::string text = normalize_prompt(prompt);
    if (text.empty()) return rules.fallback;
    const RouterRule* best = nullptr;
    for (const RouterRule& r : rules.rules) {
        if (best && r.priority <= best->priority) continue;
        if (text.find(r.pattern) != std::string::npos) best = &r;
    }
    return best ? best->category : rules.fallback;
}

void validate_rules(const RuleTable& t) {
    if (t.fallback != kDefaultCategory) {
        throw Error(ErrorKind::parse_error, "fallback category must be 8");
    }
    std::set<int> prios;
    for (size_t i = 0; i < t.rules.size(); ++i) {
        const RouterRule& r = t.rules[i];
        if (r.pattern.empty()) {
            throw Error(ErrorKind::parse_error, "empty pattern", static_cast<long long>(i));
        }
        if (r.category < 0 || r.category >= kNumCategories) {
            throw Error(ErrorKind::parse_error, "category out of range 0..8",
                        static_cast<long long>(i));
        }
        if (!prios.insert(r.priority).second) {
            throw Error(ErrorKind::duplicate_priority,
                        "priority " + std::to_string(r.priority) + " appears twice");
        }
    }
}

RuleTable load_rules(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::parse_error, e.what());
    }
    RuleTable t;
    if (!j.is_object() || !j.contains("rules") || !j["rules"].is_array()) {
        throw Error(ErrorKind::parse_error, "expected object with a \"rules\" array");
    }
    size_t line = 0;
    for (const auto& e : j["rules"]) {
        ++line;
        if (!e.is_object() || !e.contains("pattern") || !e.contains("category") ||
            !e.contains("priority")) {
            throw Error(ErrorKind::parse_error, "rule needs pattern/category/priority",
                        static_cast<long long>(line));
        }
        RouterRule r;
        r.pattern = normalize_prompt(e["pattern"].get<std::string>());
        r.category = e["category"].get<int>();
        r.priority = e["priority"].get<int>();
        t.rules.push_back(std::move(r));
    }
    validate_rules(t);
    return t;
}

RuleTable load_rules_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error(ErrorKind::io_error, "cannot open rule file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return load_rules(ss.str());
}

}  // namespace vtprune
