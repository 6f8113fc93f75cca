#include "prompttree/lm/http_backend.hpp"

#include "prompttree/error.hpp"

#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

namespace prompttree::lm {

using nlohmann::json;

namespace {

struct SlotGuard {
    std::mutex& mutex;
    std::condition_variable& cv;
    int& free_slots;

    SlotGuard(std::mutex& m, std::condition_variable& c, int& slots)
        : mutex(m), cv(c), free_slots(slots) {
        std::unique_lock lock(mutex);
        cv.wait(lock, [&] { return free_slots > 0; });
        --free_slots;
    }
    ~SlotGuard() {
        {
            std::unique_lock lock(mutex);
            ++free_slots;
        }
        cv.notify_one();
    }
};

bool retryable_status(int status) {
    return status == 429 || status >= 500;
}

const json& choice0(const json& response, const std::string& what) {
    if (!response.contains("choices") || !response["choices"].is_array() ||
        response["choices"].empty()) {
        throw BackendError("completions response lacks choices (" + what + ")");
    }
    return response["choices"][0];
}

}  // namespace

HttpBackend::HttpBackend(HttpBackendConfig config)
    : config_(std::move(config)), free_slots_(config_.max_in_flight) {
    if (config_.base_url.empty()) throw ConfigError("http backend needs a base_url");
    if (config_.max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
    if (config_.retries < 1) throw ConfigError("retries must be >= 1");

    // Split scheme://host[:port][/prefix] into the client target and path prefix.
    const auto scheme_end = config_.base_url.find("://");
    if (scheme_end == std::string::npos) {
        throw ConfigError("base_url must include a scheme: " + config_.base_url);
    }
    const auto path_start = config_.base_url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        host_ = config_.base_url;
    } else {
        host_ = config_.base_url.substr(0, path_start);
        path_prefix_ = config_.base_url.substr(path_start);
        while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
    }

    if (!config_.api_key_env.empty()) {
        if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
            auth_header_ = std::string("Bearer ") + key;
        }
    }
}

std::string HttpBackend::post_completions(const std::string& body) {
    SlotGuard guard(slots_mutex_, slots_cv_, free_slots_);
    const std::string path = path_prefix_ + "/completions";

    int last_status = 0;
    std::string last_error = "transport failure";
    for (int attempt = 0; attempt < config_.retries; ++attempt) {
        if (attempt > 0) {
            const auto delay = std::chrono::milliseconds(config_.backoff_ms << (attempt - 1));
            std::this_thread::sleep_for(delay);
        }
        // One client per request: httplib clients are not safe to share
        // across threads and the limit is enforced by the slot guard anyway.
        httplib::Client client(host_);
        client.set_connection_timeout(config_.timeout_s);
        client.set_read_timeout(config_.timeout_s);
        httplib::Headers headers;
        if (!auth_header_.empty()) headers.emplace("Authorization", auth_header_);

        auto res = client.Post(path, headers, body, "application/json");
        if (!res) {
            last_status = 0;
            last_error = "transport failure: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 200 && res->status < 300) return res->body;
        last_status = res->status;
        last_error = "HTTP " + std::to_string(res->status) + " from " + host_ + path;
        if (!retryable_status(res->status)) break;
    }
    throw BackendError(last_error + " (after " + std::to_string(config_.retries) + " attempts)",
                       last_status);
}

TokenProbResult HttpBackend::score_top_logprobs(const TokenProbQuery& query) {
    json body;
    body["model"] = config_.model;
    body["prompt"] = query.prompt_text;
    body["max_tokens"] = 1;
    body["temperature"] = 0;
    body["logprobs"] = config_.top_n;

    const json response = json::parse(post_completions(body.dump()), nullptr, false);
    if (response.is_discarded()) throw BackendError("completions response is not valid JSON");
    const json& choice = choice0(response, "top_logprobs scoring");
    if (!choice.contains("logprobs") || !choice["logprobs"].contains("top_logprobs") ||
        !choice["logprobs"]["top_logprobs"].is_array() ||
        choice["logprobs"]["top_logprobs"].empty()) {
        throw BackendError("completions response lacks top_logprobs; does the server support logprobs?");
    }
    const json& top = choice["logprobs"]["top_logprobs"][0];

    TokenProbResult result;
    result.tokens = query.candidate_tokens;
    result.backend_id = id();
    for (const auto& token : query.candidate_tokens) {
        double prob = 0.0;
        if (top.contains(token)) {
            prob = std::exp(top[token].get<double>());
        } else if (top.contains(" " + token)) {
            prob = std::exp(top[" " + token].get<double>());
        }
        result.probs.push_back(prob);
    }
    return result;
}

TokenProbResult HttpBackend::score_echo(const TokenProbQuery& query) {
    TokenProbResult result;
    result.tokens = query.candidate_tokens;
    result.backend_id = id();
    for (const auto& token : query.candidate_tokens) {
        json body;
        body["model"] = config_.model;
        body["prompt"] = query.prompt_text + token;
        body["max_tokens"] = 0;
        body["temperature"] = 0;
        body["logprobs"] = 1;
        body["echo"] = true;

        const json response = json::parse(post_completions(body.dump()), nullptr, false);
        if (response.is_discarded()) throw BackendError("completions response is not valid JSON");
        const json& choice = choice0(response, "echo scoring");
        if (!choice.contains("logprobs") || !choice["logprobs"].contains("tokens") ||
            !choice["logprobs"].contains("token_logprobs")) {
            throw BackendError("echo response lacks logprobs.tokens/token_logprobs");
        }
        const json& tokens = choice["logprobs"]["tokens"];
        const json& logprobs = choice["logprobs"]["token_logprobs"];
        if (!tokens.is_array() || tokens.empty() || logprobs.size() != tokens.size()) {
            throw BackendError("echo response has malformed logprobs arrays");
        }
        if (!tokens.back().is_string() || tokens.back().get<std::string>() != token) {
            throw TokenizationError("candidate '" + token +
                                        "' is not a single continuation token for the remote tokenizer",
                                    token);
        }
        if (logprobs.back().is_null()) {
            throw TokenizationError("no continuation logprob for candidate '" + token + "'", token);
        }
        result.probs.push_back(std::exp(logprobs.back().get<double>()));
    }
    return result;
}

TokenProbResult HttpBackend::token_probs(const TokenProbQuery& query) {
    validate_query(query);
    TokenProbResult result = config_.scoring == HttpScoring::echo ? score_echo(query)
                                                                  : score_top_logprobs(query);
    calls_.fetch_add(1);
    return result;
}

std::string HttpBackend::complete(const std::string& prompt_text, int max_tokens) {
    json body;
    body["model"] = config_.model;
    body["prompt"] = prompt_text;
    body["max_tokens"] = max_tokens;
    body["temperature"] = 0;

    const json response = json::parse(post_completions(body.dump()), nullptr, false);
    if (response.is_discarded()) throw BackendError("completions response is not valid JSON");
    const json& choice = choice0(response, "completion");
    if (!choice.contains("text") || !choice["text"].is_string()) {
        throw BackendError("completions response lacks choice text");
    }
    calls_.fetch_add(1);
    return choice["text"].get<std::string>();
}

}  // namespace prompttree::lm
