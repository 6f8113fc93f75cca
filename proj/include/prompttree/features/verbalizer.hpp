#pragma once

#include "prompttree/core/dataset.hpp"
#include "prompttree/lm/backend.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace prompttree::features {

enum class VerbalizerKind { yes_no, class_names, token_map };

// Maps LM output (token probabilities or completion text) to a binary
// decision: 1 iff the winning token is the positive one.
struct Verbalizer {
    std::string id;
    VerbalizerKind kind = VerbalizerKind::yes_no;
    std::vector<std::string> tokens;
    int positive_index = 0;
};

// bit = 1 iff the argmax probability index equals positive_index; ties go to
// the lower index. The result's token list must match the verbalizer's.
int verbalize_bit(const Verbalizer& verbalizer, const lm::TokenProbResult& result);

// Case-insensitive first-occurrence match of any verbalizer token in the
// completion. Returns the bit, or nullopt (abstain) when no token occurs;
// callers map abstain to bit 0 and tally it.
std::optional<int> verbalize_by_matching(const Verbalizer& verbalizer,
                                         const std::string& completion);

// Index of the earliest-occurring verbalizer token (position ties go to the
// lower token index), or nullopt when none occurs.
std::optional<int> match_token_index(const Verbalizer& verbalizer, const std::string& completion);

// Decodes a stored feature cell. An all-zero vector is the abstain marker
// and decodes to 0; anything else follows the argmax rule above.
int cell_bit_from_probs(std::span<const double> probs, int positive_index);

struct VerbalizerOptions {
    bool prepend_space = false;   // " Yes"/" No" style tokens for real tokenizers
};

class VerbalizerRegistry {
public:
    // Builds the standard entries: "yes_no" (Yes/No, positive Yes) and
    // "class_names" (the label space's names, positive = last class).
    static VerbalizerRegistry with_defaults(const core::LabelSpace& labels,
                                            const VerbalizerOptions& options = {});

    void add(Verbalizer verbalizer);
    bool contains(const std::string& id) const { return entries_.count(id) > 0; }
    const Verbalizer& resolve(const std::string& id) const;

private:
    std::map<std::string, Verbalizer> entries_;
};

}  // namespace prompttree::features
