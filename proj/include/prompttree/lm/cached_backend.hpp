#pragma once

#include "prompttree/lm/backend.hpp"

#include <condition_variable>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>

namespace prompttree::lm {

// Cache-through wrapper. Repeated queries return the stored result without
// touching the inner backend, so call_count() (forwarded to the inner
// backend) counts exactly the cache misses. Concurrent misses on the same
// key are coalesced into one inner call; distinct keys never block each
// other beyond map bookkeeping.
class CachedBackend : public LmBackend {
public:
    explicit CachedBackend(std::shared_ptr<LmBackend> inner) : inner_(std::move(inner)) {}

    TokenProbResult token_probs(const TokenProbQuery& query) override;
    std::string complete(const std::string& prompt_text, int max_tokens) override;
    long call_count() const override { return inner_->call_count(); }
    std::string id() const override { return inner_->id(); }

private:
    struct Slot {
        bool ready = false;
        bool failed = false;
        TokenProbResult probs;
        std::string completion;
    };

    template <class Fetch, class Extract>
    auto lookup(const std::string& key, Fetch fetch, Extract extract)
        -> decltype(extract(std::declval<Slot&>()));

    std::shared_ptr<LmBackend> inner_;
    std::mutex mutex_;
    std::condition_variable ready_cv_;
    std::unordered_map<std::string, std::shared_ptr<Slot>> slots_;
};

}  // namespace prompttree::lm
