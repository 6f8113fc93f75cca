#pragma once

#include "prompttree/lm/backend.hpp"

#include <atomic>
#include <condition_variable>
#include <mutex>
#include <string>

namespace prompttree::lm {

// How candidate-token probabilities are read off the completions endpoint.
//  top_logprobs: one request per query with `logprobs` = top_n; candidates
//    absent from the returned top list get probability 0.
//  echo: one request per candidate with the candidate appended and
//    echo=true; exact marginals, and multi-token candidates are detected
//    and rejected (TokenizationError).
enum class HttpScoring { top_logprobs, echo };

struct HttpBackendConfig {
    std::string base_url;            // e.g. http://127.0.0.1:8080/v1
    std::string model;
    std::string api_key_env = "LM_API_KEY";
    int max_in_flight = 4;
    int retries = 3;                 // total attempts per request
    int backoff_ms = 500;            // doubles after each failed attempt
    HttpScoring scoring = HttpScoring::top_logprobs;
    int top_n = 20;
    int timeout_s = 60;
};

// OpenAI-style completions client. Retries transport failures, 429 and 5xx;
// other statuses fail immediately. call_count() counts scoring queries and
// completions, not transport requests (echo scoring issues one HTTP request
// per candidate but still counts a single call).
class HttpBackend : public LmBackend {
public:
    explicit HttpBackend(HttpBackendConfig config);

    TokenProbResult token_probs(const TokenProbQuery& query) override;
    std::string complete(const std::string& prompt_text, int max_tokens) override;
    long call_count() const override { return calls_.load(); }
    std::string id() const override { return "http:" + config_.model; }

private:
    std::string post_completions(const std::string& body);
    TokenProbResult score_top_logprobs(const TokenProbQuery& query);
    TokenProbResult score_echo(const TokenProbQuery& query);

    HttpBackendConfig config_;
    std::string host_;               // scheme://host:port
    std::string path_prefix_;        // path part of base_url
    std::string auth_header_;        // empty when the env var is unset

    std::atomic<long> calls_{0};

    // Counting semaphore for the in-flight request limit.
    std::mutex slots_mutex_;
    std::condition_variable slots_cv_;
    int free_slots_;
};

}  // namespace prompttree::lm
