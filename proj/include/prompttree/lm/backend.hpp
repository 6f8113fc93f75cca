#pragma once

#include <string>
#include <vector>

namespace prompttree::lm {

// Next-token probability request for a fixed candidate list.
struct TokenProbQuery {
    std::string prompt_text;
    std::vector<std::string> candidate_tokens;
};

// Probabilities aligned to the query's candidate tokens. These are marginals
// of the full vocabulary and need not sum to 1.
struct TokenProbResult {
    std::vector<std::string> tokens;
    std::vector<double> probs;
    std::string backend_id;
};

class LmBackend {
public:
    virtual ~LmBackend() = default;

    virtual TokenProbResult token_probs(const TokenProbQuery& query) = 0;

    // Raw completion text, for word-matching verbalization when logits are
    // inaccessible. Throws CapabilityError when unsupported.
    virtual std::string complete(const std::string& prompt_text, int max_tokens) = 0;

    // Monotone count of queries actually answered by this backend. Cache
    // hits in a wrapping layer do not appear here.
    virtual long call_count() const = 0;

    virtual std::string id() const = 0;
};

// Shared precondition checks: candidates non-empty, unique, no empty token.
void validate_query(const TokenProbQuery& query);

}  // namespace prompttree::lm
