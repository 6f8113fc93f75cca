#include "prompttree/lm/mock_backend.hpp"

#include "prompttree/error.hpp"
#include "prompttree/util/json_io.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace prompttree::lm {

void validate_query(const TokenProbQuery& query) {
    if (query.candidate_tokens.empty()) {
        throw ConfigError("token-prob query needs at least one candidate token");
    }
    std::set<std::string> seen;
    for (const auto& token : query.candidate_tokens) {
        if (token.empty()) throw ConfigError("empty candidate token");
        if (!seen.insert(token).second) throw ConfigError("duplicate candidate token: " + token);
    }
}

MockBackend::MockBackend(std::vector<MockRule> rules) : rules_(std::move(rules)) {
    if (rules_.empty()) throw ConfigError("mock backend needs at least one rule");
    std::stable_sort(rules_.begin(), rules_.end(),
                     [](const MockRule& a, const MockRule& b) { return a.priority < b.priority; });
    bool has_default = false;
    compiled_.reserve(rules_.size());
    for (const auto& rule : rules_) {
        if (!rule.is_regex && rule.pattern.empty()) has_default = true;
        try {
            compiled_.emplace_back(rule.is_regex ? rule.pattern : std::string(),
                                   std::regex::ECMAScript);
        } catch (const std::regex_error& e) {
            throw ConfigError("invalid mock rule regex '" + rule.pattern + "': " + e.what());
        }
    }
    if (!has_default) {
        throw ConfigError("mock rule file lacks a default rule (empty substring pattern)");
    }
}

std::vector<MockRule> MockBackend::parse_rules(const std::string& path) {
    const auto doc = read_json_file(path);
    if (!doc.is_array()) throw ConfigError(path + ": mock rule file must be a JSON array");
    std::vector<MockRule> rules;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const auto& entry = doc[i];
        const std::string where = path + " rule " + std::to_string(i);
        if (!entry.is_object()) throw ConfigError(where + ": expected an object");
        MockRule rule;
        rule.pattern = entry.value("pattern", std::string());
        const std::string match = entry.value("match", std::string("substring"));
        if (match == "regex") rule.is_regex = true;
        else if (match != "substring") throw ConfigError(where + ": match must be substring or regex");
        rule.priority = entry.value("priority", 0);
        if (entry.contains("token_logits")) {
            for (const auto& [token, logit] : entry["token_logits"].items()) {
                rule.token_logits[token] = logit.get<double>();
            }
        }
        if (entry.contains("completion")) {
            rule.completion = entry["completion"].get<std::string>();
        }
        rules.push_back(std::move(rule));
    }
    return rules;
}

MockBackend MockBackend::from_file(const std::string& path) {
    return MockBackend(parse_rules(path));
}

const MockRule& MockBackend::match(const std::string& prompt_text) const {
    for (std::size_t i = 0; i < rules_.size(); ++i) {
        const auto& rule = rules_[i];
        const bool hit = rule.is_regex ? std::regex_search(prompt_text, compiled_[i])
                                       : prompt_text.find(rule.pattern) != std::string::npos;
        if (hit) return rule;
    }
    throw DataError("no mock rule matched (default rule missing?)");
}

TokenProbResult MockBackend::token_probs(const TokenProbQuery& query) {
    validate_query(query);
    const MockRule& rule = match(query.prompt_text);
    calls_.fetch_add(1);

    std::vector<double> logits;
    logits.reserve(query.candidate_tokens.size());
    for (const auto& token : query.candidate_tokens) {
        auto it = rule.token_logits.find(token);
        logits.push_back(it == rule.token_logits.end() ? 0.0 : it->second);
    }
    const double max_logit = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (double& l : logits) {
        l = std::exp(l - max_logit);
        total += l;
    }
    TokenProbResult result;
    result.tokens = query.candidate_tokens;
    result.backend_id = id();
    result.probs.reserve(logits.size());
    for (double l : logits) result.probs.push_back(l / total);
    return result;
}

std::string MockBackend::complete(const std::string& prompt_text, int /*max_tokens*/) {
    const MockRule& rule = match(prompt_text);
    if (!rule.completion.has_value()) {
        throw CapabilityError("matched mock rule (pattern '" + rule.pattern +
                              "') has no canned completion");
    }
    calls_.fetch_add(1);
    return *rule.completion;
}

}  // namespace prompttree::lm
