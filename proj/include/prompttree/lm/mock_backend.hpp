#pragma once

#include "prompttree/lm/backend.hpp"

#include <atomic>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <vector>

namespace prompttree::lm {

// One pattern-triggered response. Rules are tried in ascending priority
// (file order breaks ties); the first whose pattern matches the prompt text
// wins. Every rule file must contain a default rule: an empty substring
// pattern, which matches any prompt.
struct MockRule {
    std::string pattern;
    bool is_regex = false;
    int priority = 0;
    std::map<std::string, double> token_logits;
    std::optional<std::string> completion;
};

// Deterministic offline backend driven by a rule file. Candidate-token
// probabilities are the softmax of the winning rule's logits restricted to
// the candidates (missing tokens default to logit 0), so shifting all logits
// by a constant leaves the result unchanged.
class MockBackend : public LmBackend {
public:
    explicit MockBackend(std::vector<MockRule> rules);

    static MockBackend from_file(const std::string& path);
    static std::vector<MockRule> parse_rules(const std::string& path);

    TokenProbResult token_probs(const TokenProbQuery& query) override;
    std::string complete(const std::string& prompt_text, int max_tokens) override;
    long call_count() const override { return calls_.load(); }
    std::string id() const override { return "mock"; }

private:
    const MockRule& match(const std::string& prompt_text) const;

    std::vector<MockRule> rules_;           // sorted by priority, stable
    std::vector<std::regex> compiled_;      // parallel to rules_
    std::atomic<long> calls_{0};
};

}  // namespace prompttree::lm
