#include "prompttree/promptgen/prompt.hpp"

#include "prompttree/error.hpp"
#include "prompttree/util/hash.hpp"
#include "prompttree/util/json_io.hpp"
#include "prompttree/util/rng.hpp"

#include <algorithm>
#include <set>

namespace prompttree::promptgen {

namespace {

std::string replace_all(std::string text, const std::string& needle, const std::string& value) {
    std::size_t pos = 0;
    while ((pos = text.find(needle, pos)) != std::string::npos) {
        text.replace(pos, needle.size(), value);
        pos += value.size();
    }
    return text;
}

// The demonstration template cut at {output}, trailing spaces stripped, so
// the rendered prompt ends right after the answer marker ("Output:").
std::string query_block(const std::string& template_text, const std::string& input_text) {
    const std::size_t cut = template_text.find("{output}");
    std::string head = cut == std::string::npos ? template_text : template_text.substr(0, cut);
    while (!head.empty() && (head.back() == ' ' || head.back() == '\t')) head.pop_back();
    return replace_all(head, "{input}", input_text);
}

}  // namespace

std::string compute_prompt_id(PromptKind kind, const std::string& template_text,
                              const std::vector<std::pair<std::string, std::string>>& demonstrations,
                              const std::string& verbalizer_id) {
    std::string blob = kind == PromptKind::fewshot ? "fewshot" : "instruction";
    blob += '\x1f';
    blob += template_text;
    for (const auto& [text, label] : demonstrations) {
        blob += '\x1f';
        blob += text;
        blob += '\x1e';
        blob += label;
    }
    blob += '\x1f';
    blob += verbalizer_id;
    return content_id(blob);
}

std::vector<PromptSpec> sample_fewshot_prompts(const core::Dataset& train, int n_prompts,
                                               int shots_per_class, std::uint64_t seed,
                                               const std::string& template_text,
                                               const std::string& verbalizer_id) {
    if (n_prompts < 1) throw ConfigError("n_prompts must be >= 1");
    if (shots_per_class < 1) throw ConfigError("shots_per_class must be >= 1");
    if (template_text.find("{input}") == std::string::npos) {
        throw ConfigError("few-shot template missing {input}");
    }
    if (template_text.find("{output}") == std::string::npos) {
        throw ConfigError("few-shot template missing {output}; the rendered prompt must end at the answer slot");
    }

    const int k = train.labels.k();
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < train.examples.size(); ++i) {
        by_class[static_cast<std::size_t>(train.examples[i].label)].push_back(i);
    }
    for (int c = 0; c < k; ++c) {
        if (static_cast<int>(by_class[static_cast<std::size_t>(c)].size()) < shots_per_class) {
            throw ConfigError("class '" + train.labels.name(c) + "' has only " +
                              std::to_string(by_class[static_cast<std::size_t>(c)].size()) +
                              " examples, need " + std::to_string(shots_per_class));
        }
    }

    std::vector<PromptSpec> prompts;
    prompts.reserve(static_cast<std::size_t>(n_prompts));
    for (int p = 0; p < n_prompts; ++p) {
        Rng rng = Rng::fork(seed, static_cast<std::uint64_t>(p));
        // Per class: a without-replacement draw of shots_per_class examples.
        std::vector<std::vector<std::size_t>> picks(static_cast<std::size_t>(k));
        for (int c = 0; c < k; ++c) {
            auto pool = by_class[static_cast<std::size_t>(c)];
            rng.shuffle(pool);
            picks[static_cast<std::size_t>(c)].assign(pool.begin(),
                                                      pool.begin() + shots_per_class);
        }
        PromptSpec spec;
        spec.kind = PromptKind::fewshot;
        spec.template_text = template_text;
        spec.verbalizer_id = verbalizer_id;
        // Interleave classes round-robin by shot index: c0,c1,...,c0,c1,...
        for (int s = 0; s < shots_per_class; ++s) {
            for (int c = 0; c < k; ++c) {
                const auto& ex =
                    train.examples[picks[static_cast<std::size_t>(c)][static_cast<std::size_t>(s)]];
                spec.demonstrations.emplace_back(ex.text, train.labels.name(ex.label));
            }
        }
        spec.id = compute_prompt_id(spec.kind, spec.template_text, spec.demonstrations,
                                    spec.verbalizer_id);
        prompts.push_back(std::move(spec));
    }
    return prompts;
}

InstructionLoadResult load_instruction_prompts(const std::string& path,
                                               features::VerbalizerRegistry& registry,
                                               const std::string& default_verbalizer_id) {
    const auto doc = read_ordered_json_file(path);
    if (!doc.is_array()) throw ConfigError(path + ": instruction prompt file must be a JSON array");

    InstructionLoadResult result;
    std::set<std::string> seen_ids;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const auto& entry = doc[i];
        const std::string where = path + " entry " + std::to_string(i);
        if (!entry.is_object() || !entry.contains("template") || !entry["template"].is_string()) {
            throw ConfigError(where + ": expected an object with a string 'template'");
        }
        PromptSpec spec;
        spec.kind = PromptKind::instruction;
        spec.template_text = entry["template"].get<std::string>();
        if (spec.template_text.find("{input}") == std::string::npos) {
            throw ConfigError(where + ": template missing {input}");
        }

        std::string verbalizer_id = default_verbalizer_id;
        if (entry.contains("verbalizer")) {
            verbalizer_id = entry["verbalizer"].get<std::string>();
        }
        if (verbalizer_id == "token_map" || entry.contains("token_map")) {
            if (!entry.contains("token_map") || !entry["token_map"].is_object() ||
                entry["token_map"].empty()) {
                throw ConfigError(where + ": token_map verbalizer needs a token_map object");
            }
            features::Verbalizer v;
            v.kind = features::VerbalizerKind::token_map;
            v.positive_index = -1;
            for (const auto& [token, bit] : entry["token_map"].items()) {
                if (!bit.is_number_integer() || (bit.get<int>() != 0 && bit.get<int>() != 1)) {
                    throw ConfigError(where + ": token_map values must be 0 or 1");
                }
                if (bit.get<int>() == 1) {
                    if (v.positive_index >= 0) {
                        throw ConfigError(where + ": token_map must have exactly one positive token");
                    }
                    v.positive_index = static_cast<int>(v.tokens.size());
                }
                v.tokens.push_back(token);
            }
            if (v.positive_index < 0) {
                throw ConfigError(where + ": token_map must have exactly one positive token");
            }
            std::string blob;
            for (std::size_t t = 0; t < v.tokens.size(); ++t) {
                blob += v.tokens[t];
                blob += '\x1f';
            }
            blob += std::to_string(v.positive_index);
            v.id = "token_map:" + content_id(blob);
            verbalizer_id = v.id;
            if (!registry.contains(v.id)) registry.add(std::move(v));
        } else if (!registry.contains(verbalizer_id)) {
            throw ConfigError(where + ": unknown verbalizer '" + verbalizer_id + "'");
        }
        if (entry.contains("positive_token")) {
            // Rebind the positive side of a registered verbalizer for this
            // prompt, producing a prompt-local variant.
            const auto base = registry.resolve(verbalizer_id);
            const std::string positive = entry["positive_token"].get<std::string>();
            features::Verbalizer v = base;
            bool found = false;
            for (std::size_t t = 0; t < v.tokens.size(); ++t) {
                if (v.tokens[t] == positive) {
                    v.positive_index = static_cast<int>(t);
                    found = true;
                    break;
                }
            }
            if (!found) {
                throw ConfigError(where + ": positive_token '" + positive +
                                  "' is not a token of verbalizer '" + verbalizer_id + "'");
            }
            v.id = verbalizer_id + ":pos=" + positive;
            verbalizer_id = v.id;
            if (!registry.contains(v.id)) registry.add(std::move(v));
        }
        spec.verbalizer_id = verbalizer_id;
        spec.id = compute_prompt_id(spec.kind, spec.template_text, spec.demonstrations,
                                    spec.verbalizer_id);
        if (!seen_ids.insert(spec.id).second) {
            result.warnings.push_back(where + ": duplicate of an earlier entry (id " + spec.id +
                                      "), skipped");
            continue;
        }
        result.prompts.push_back(std::move(spec));
    }
    return result;
}

std::string render(const PromptSpec& prompt, const std::string& input_text) {
    if (prompt.kind == PromptKind::instruction) {
        return replace_all(prompt.template_text, "{input}", input_text);
    }
    std::string out;
    for (const auto& [text, label] : prompt.demonstrations) {
        std::string block = replace_all(prompt.template_text, "{input}", text);
        block = replace_all(block, "{output}", label);
        out += block;
        out += "\n\n";
    }
    out += query_block(prompt.template_text, input_text);
    return out;
}

std::string prompt_excerpt(const PromptSpec& prompt, std::size_t max_chars) {
    std::string source = prompt.kind == PromptKind::instruction
                             ? prompt.template_text
                             : (prompt.demonstrations.empty()
                                    ? prompt.template_text
                                    : "few-shot: " + prompt.demonstrations.front().first);
    const std::size_t newline = source.find('\n');
    if (newline != std::string::npos) source = source.substr(0, newline);
    if (source.size() > max_chars) source = source.substr(0, max_chars - 3) + "...";
    return source;
}

}  // namespace prompttree::promptgen
