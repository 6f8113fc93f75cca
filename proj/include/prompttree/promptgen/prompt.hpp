#pragma once

#include "prompttree/core/dataset.hpp"
#include "prompttree/features/verbalizer.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace prompttree::promptgen {

enum class PromptKind { fewshot, instruction };

// A renderable prompt plus its verbalizer binding. The id is a content hash
// over kind, template, demonstrations and verbalizer, so identical prompts
// get identical ids across runs and duplicates are detectable.
struct PromptSpec {
    std::string id;
    PromptKind kind = PromptKind::instruction;
    std::string template_text;
    // (text, label-name) pairs; empty for instruction prompts.
    std::vector<std::pair<std::string, std::string>> demonstrations;
    std::string verbalizer_id;
};

std::string compute_prompt_id(PromptKind kind, const std::string& template_text,
                              const std::vector<std::pair<std::string, std::string>>& demonstrations,
                              const std::string& verbalizer_id);

// Default demonstration block; `{input}` takes the example text, `{output}`
// the label name. The query block is the template cut at `{output}`.
inline constexpr const char* kDefaultFewshotTemplate = "Input: {input}\nOutput: {output}";

// Builds n_prompts few-shot prompts by sampling demonstrations from the
// training data: shots_per_class per class, drawn without replacement within
// a prompt and independently across prompts, interleaved class round-robin
// in label-space order. Deterministic for a fixed seed.
std::vector<PromptSpec> sample_fewshot_prompts(const core::Dataset& train, int n_prompts,
                                               int shots_per_class, std::uint64_t seed,
                                               const std::string& template_text = kDefaultFewshotTemplate,
                                               const std::string& verbalizer_id = "yes_no");

struct InstructionLoadResult {
    std::vector<PromptSpec> prompts;
    std::vector<std::string> warnings;  // e.g. deduplicated duplicate templates
};

// Loads a JSON array of {template, verbalizer?, positive_token?, token_map?}
// entries. Templates must contain `{input}`. Entries with a token_map
// register a custom verbalizer in the registry; entries without a verbalizer
// field bind default_verbalizer_id. File order is preserved; duplicate
// contents collapse onto one id with a warning.
InstructionLoadResult load_instruction_prompts(const std::string& path,
                                               features::VerbalizerRegistry& registry,
                                               const std::string& default_verbalizer_id = "yes_no");

// Renders the prompt against an input text. Few-shot prompts emit one block
// per demonstration followed by the query block, which ends at the answer
// slot so the next token is the verbalized answer. Instruction prompts
// substitute `{input}`.
std::string render(const PromptSpec& prompt, const std::string& input_text);

inline std::string render(const PromptSpec& prompt, const core::Example& example) {
    return render(prompt, example.text);
}

// First line of the template, clipped; used in DOT exports and fit logs.
std::string prompt_excerpt(const PromptSpec& prompt, std::size_t max_chars = 48);

}  // namespace prompttree::promptgen
