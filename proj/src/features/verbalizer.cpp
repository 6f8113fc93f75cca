#include "prompttree/features/verbalizer.hpp"

#include "prompttree/error.hpp"

#include <algorithm>
#include <cctype>

namespace prompttree::features {

namespace {

std::string lower(const std::string& text) {
    std::string out = text;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

int argmax_first(std::span<const double> values) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(values.size()); ++i) {
        if (values[static_cast<std::size_t>(i)] > values[static_cast<std::size_t>(best)]) best = i;
    }
    return best;
}

}  // namespace

int verbalize_bit(const Verbalizer& verbalizer, const lm::TokenProbResult& result) {
    if (result.tokens != verbalizer.tokens) {
        throw DataError("token-prob result is not aligned to verbalizer '" + verbalizer.id + "'");
    }
    if (result.probs.size() != verbalizer.tokens.size()) {
        throw DataError("probability vector length mismatch for verbalizer '" + verbalizer.id + "'");
    }
    return argmax_first(result.probs) == verbalizer.positive_index ? 1 : 0;
}

std::optional<int> match_token_index(const Verbalizer& verbalizer, const std::string& completion) {
    const std::string haystack = lower(completion);
    std::size_t best_pos = std::string::npos;
    int best_token = -1;
    for (int i = 0; i < static_cast<int>(verbalizer.tokens.size()); ++i) {
        const std::size_t pos = haystack.find(lower(verbalizer.tokens[static_cast<std::size_t>(i)]));
        if (pos != std::string::npos && pos < best_pos) {
            best_pos = pos;
            best_token = i;
        }
    }
    if (best_token < 0) return std::nullopt;
    return best_token;
}

std::optional<int> verbalize_by_matching(const Verbalizer& verbalizer,
                                         const std::string& completion) {
    const auto matched = match_token_index(verbalizer, completion);
    if (!matched.has_value()) return std::nullopt;
    return *matched == verbalizer.positive_index ? 1 : 0;
}

int cell_bit_from_probs(std::span<const double> probs, int positive_index) {
    bool any = false;
    for (double p : probs) {
        if (p != 0.0) {
            any = true;
            break;
        }
    }
    if (!any) return 0;  // abstain marker
    return argmax_first(probs) == positive_index ? 1 : 0;
}

VerbalizerRegistry VerbalizerRegistry::with_defaults(const core::LabelSpace& labels,
                                                     const VerbalizerOptions& options) {
    const auto prep = [&](std::vector<std::string> tokens) {
        if (options.prepend_space) {
            for (auto& t : tokens) t = " " + t;
        }
        return tokens;
    };
    VerbalizerRegistry registry;
    registry.add({"yes_no", VerbalizerKind::yes_no, prep({"Yes", "No"}), 0});
    registry.add({"class_names", VerbalizerKind::class_names, prep(labels.names()),
                  labels.k() - 1});
    return registry;
}

void VerbalizerRegistry::add(Verbalizer verbalizer) {
    if (verbalizer.tokens.empty()) {
        throw ConfigError("verbalizer '" + verbalizer.id + "' has no tokens");
    }
    if (verbalizer.positive_index < 0 ||
        verbalizer.positive_index >= static_cast<int>(verbalizer.tokens.size())) {
        throw ConfigError("verbalizer '" + verbalizer.id + "' positive index out of range");
    }
    for (std::size_t i = 0; i < verbalizer.tokens.size(); ++i) {
        for (std::size_t j = i + 1; j < verbalizer.tokens.size(); ++j) {
            if (verbalizer.tokens[i] == verbalizer.tokens[j]) {
                throw ConfigError("verbalizer '" + verbalizer.id + "' has duplicate token '" +
                                  verbalizer.tokens[i] + "'");
            }
        }
    }
    entries_[verbalizer.id] = std::move(verbalizer);
}

const Verbalizer& VerbalizerRegistry::resolve(const std::string& id) const {
    auto it = entries_.find(id);
    if (it == entries_.end()) throw ConfigError("unknown verbalizer: " + id);
    return it->second;
}

}  // namespace prompttree::features
