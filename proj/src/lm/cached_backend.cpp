#include "prompttree/lm/cached_backend.hpp"

namespace prompttree::lm {

namespace {

std::string probs_key(const TokenProbQuery& query) {
    std::string key = "P\x1f";
    key += query.prompt_text;
    for (const auto& token : query.candidate_tokens) {
        key += '\x1f';
        key += token;
    }
    return key;
}

std::string completion_key(const std::string& prompt_text, int max_tokens) {
    return "C\x1f" + std::to_string(max_tokens) + "\x1f" + prompt_text;
}

}  // namespace

template <class Fetch, class Extract>
auto CachedBackend::lookup(const std::string& key, Fetch fetch, Extract extract)
    -> decltype(extract(std::declval<Slot&>())) {
    for (;;) {
        std::shared_ptr<Slot> slot;
        bool leader = false;
        {
            std::unique_lock lock(mutex_);
            auto it = slots_.find(key);
            if (it == slots_.end()) {
                slot = std::make_shared<Slot>();
                slots_.emplace(key, slot);
                leader = true;
            } else {
                slot = it->second;
                // Same-key miss in flight: wait until the leader publishes.
                ready_cv_.wait(lock, [&] { return slot->ready || slot->failed; });
                if (slot->failed) continue;  // leader failed; retry as leader
            }
        }
        if (!leader) return extract(*slot);

        try {
            fetch(*slot);
        } catch (...) {
            {
                std::unique_lock lock(mutex_);
                slot->failed = true;
                slots_.erase(key);
            }
            ready_cv_.notify_all();
            throw;
        }
        {
            std::unique_lock lock(mutex_);
            slot->ready = true;
        }
        ready_cv_.notify_all();
        return extract(*slot);
    }
}

TokenProbResult CachedBackend::token_probs(const TokenProbQuery& query) {
    return lookup(
        probs_key(query), [&](Slot& slot) { slot.probs = inner_->token_probs(query); },
        [](Slot& slot) { return slot.probs; });
}

std::string CachedBackend::complete(const std::string& prompt_text, int max_tokens) {
    return lookup(
        completion_key(prompt_text, max_tokens),
        [&](Slot& slot) { slot.completion = inner_->complete(prompt_text, max_tokens); },
        [](Slot& slot) { return slot.completion; });
}

}  // namespace prompttree::lm
