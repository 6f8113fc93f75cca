#include "prompttree/error.hpp"
#include "prompttree/lm/http_backend.hpp"

#include <doctest.h>
#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

using namespace prompttree;
using namespace prompttree::lm;
using nlohmann::json;

namespace {

// Minimal completions endpoint: scores from a canned token->logprob map and
// echoes prompts token-by-token by whitespace splitting.
class FakeServer {
public:
    FakeServer() {
        server_.Post("/v1/completions", [this](const httplib::Request& req, httplib::Response& res) {
            requests_.fetch_add(1);
            const int now = concurrent_.fetch_add(1) + 1;
            int seen = max_concurrent_.load();
            while (now > seen && !max_concurrent_.compare_exchange_weak(seen, now)) {}
            if (delay_ms_ > 0) {
                std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms_));
            }
            concurrent_.fetch_sub(1);
            last_auth_ = req.get_header_value("Authorization");
            if (fail_first_ > 0) {
                --fail_first_;
                res.status = 500;
                return;
            }
            const json body = json::parse(req.body);
            const std::string prompt = body.at("prompt").get<std::string>();
            json response;
            if (body.value("echo", false)) {
                // Whitespace tokenizer: the last space-separated piece is the
                // final "token". A trailing marker "[[split]]" simulates a
                // candidate the tokenizer breaks apart.
                json tokens = json::array();
                json logprobs = json::array();
                std::string piece;
                std::vector<std::string> pieces;
                for (char c : prompt) {
                    if (c == ' ') {
                        if (!piece.empty()) pieces.push_back(piece);
                        piece.clear();
                    } else {
                        piece += c;
                    }
                }
                if (!piece.empty()) pieces.push_back(piece);
                for (std::size_t i = 0; i < pieces.size(); ++i) {
                    std::string token = pieces[i];
                    if (i + 1 == pieces.size() && token.size() > 4 &&
                        token.rfind("Xx") == token.size() - 2) {
                        // split the final token into two sub-tokens
                        tokens.push_back(token.substr(0, token.size() - 2));
                        logprobs.push_back(-0.5);
                        token = token.substr(token.size() - 2);
                    }
                    tokens.push_back(token);
                    if (i == 0 && tokens.size() == 1) {
                        logprobs.push_back(nullptr);
                    } else {
                        logprobs.push_back(logprob_for(token));
                    }
                }
                response["choices"] = json::array(
                    {{{"logprobs", {{"tokens", tokens}, {"token_logprobs", logprobs}}}}});
            } else if (body.value("logprobs", 0) > 0) {
                json top;
                for (const auto& [token, lp] : top_logprobs_.items()) top[token] = lp;
                response["choices"] =
                    json::array({{{"text", completion_text_},
                                  {"logprobs", {{"top_logprobs", json::array({top})}}}}});
            } else {
                response["choices"] = json::array({{{"text", completion_text_}}});
            }
            res.set_content(response.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~FakeServer() {
        server_.stop();
        thread_.join();
    }

    HttpBackendConfig config() const {
        HttpBackendConfig cfg;
        cfg.base_url = "http://127.0.0.1:" + std::to_string(port_) + "/v1";
        cfg.model = "fake-model";
        cfg.retries = 3;
        cfg.backoff_ms = 1;
        return cfg;
    }

    double logprob_for(const std::string& token) const {
        if (top_logprobs_.contains(token)) return top_logprobs_[token].get<double>();
        return -9.0;
    }

    json top_logprobs_ = {{" Yes", -0.2}, {" No", -1.7}, {"Yes", -0.3}, {"the", -2.0}};
    std::string completion_text_ = " Positive\n";
    std::atomic<int> requests_{0};
    std::atomic<int> concurrent_{0};
    std::atomic<int> max_concurrent_{0};
    int delay_ms_ = 0;
    int fail_first_ = 0;
    std::string last_auth_;

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
};

}  // namespace

TEST_CASE("http backend reads top_logprobs and falls back to the space-prefixed token") {
    FakeServer server;
    HttpBackend backend(server.config());
    const auto result = backend.token_probs({"a prompt", {"Yes", "No"}});
    // "Yes" is present directly; "No" only as " No".
    CHECK(result.probs[0] == doctest::Approx(std::exp(-0.3)).epsilon(1e-9));
    CHECK(result.probs[1] == doctest::Approx(std::exp(-1.7)).epsilon(1e-9));
    CHECK(backend.call_count() == 1);

    const auto miss = backend.token_probs({"a prompt", {"Zebra", "Yes"}});
    CHECK(miss.probs[0] == 0.0);  // absent from the top list
    CHECK(miss.probs[1] > 0.0);
}

TEST_CASE("http backend echo scoring returns exact continuation logprobs") {
    FakeServer server;
    auto cfg = server.config();
    cfg.scoring = HttpScoring::echo;
    HttpBackend backend(cfg);
    const auto result = backend.token_probs({"the movie was ", {"Yes", "No"}});
    CHECK(result.probs[0] == doctest::Approx(std::exp(-0.3)).epsilon(1e-9));
    CHECK(result.probs[1] == doctest::Approx(std::exp(server.logprob_for("No"))).epsilon(1e-9));
    // Two candidates cost two transport requests but one scoring call.
    CHECK(backend.call_count() == 1);
    CHECK(server.requests_.load() == 2);
}

TEST_CASE("http backend flags candidates the tokenizer splits") {
    FakeServer server;
    auto cfg = server.config();
    cfg.scoring = HttpScoring::echo;
    HttpBackend backend(cfg);
    try {
        backend.token_probs({"prompt ", {"WeirdyXx"}});
        FAIL("expected TokenizationError");
    } catch (const TokenizationError& e) {
        CHECK(e.token() == "WeirdyXx");
    }
}

TEST_CASE("http backend retries 5xx and then succeeds") {
    FakeServer server;
    server.fail_first_ = 2;
    HttpBackend backend(server.config());
    const auto result = backend.token_probs({"p", {"Yes"}});
    CHECK(result.probs[0] > 0.0);
    CHECK(server.requests_.load() == 3);
}

TEST_CASE("http backend surfaces the status after exhausting retries") {
    FakeServer server;
    server.fail_first_ = 99;
    HttpBackend backend(server.config());
    try {
        backend.token_probs({"p", {"Yes"}});
        FAIL("expected BackendError");
    } catch (const BackendError& e) {
        CHECK(e.status() == 500);
    }
    CHECK(server.requests_.load() == 3);  // 3 attempts
    CHECK(backend.call_count() == 0);     // failed queries are not counted
}

TEST_CASE("http backend sends the bearer token from the environment") {
    FakeServer server;
    auto cfg = server.config();
    cfg.api_key_env = "PROMPTTREE_TEST_KEY";
    setenv("PROMPTTREE_TEST_KEY", "sk-123", 1);
    HttpBackend backend(cfg);
    backend.token_probs({"p", {"Yes"}});
    CHECK(server.last_auth_ == "Bearer sk-123");
    unsetenv("PROMPTTREE_TEST_KEY");
}

TEST_CASE("http backend returns completion text") {
    FakeServer server;
    HttpBackend backend(server.config());
    CHECK(backend.complete("describe:", 8) == " Positive\n");
    CHECK(backend.call_count() == 1);
}

TEST_CASE("http backend honors the in-flight request limit") {
    FakeServer server;
    server.delay_ms_ = 15;
    auto cfg = server.config();
    cfg.max_in_flight = 2;
    HttpBackend backend(cfg);
    std::vector<std::thread> pool;
    for (int t = 0; t < 8; ++t) {
        pool.emplace_back([&backend, t] {
            backend.token_probs({"prompt " + std::to_string(t), {"Yes"}});
        });
    }
    for (auto& t : pool) t.join();
    CHECK(server.max_concurrent_.load() <= 2);
    CHECK(backend.call_count() == 8);
}
