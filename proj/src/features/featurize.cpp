#include "prompttree/features/featurize.hpp"

#include "prompttree/error.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

namespace prompttree::features {

namespace {

struct Task {
    std::size_t prompt_index;
    std::size_t example_index;
};

void fill_cell(const promptgen::PromptSpec& prompt, const core::Example& example,
               const Verbalizer& verbalizer, lm::LmBackend& backend,
               core::FeatureMatrix& matrix, const FeaturizeOptions& options,
               std::atomic<long>& abstains) {
    const std::string rendered = promptgen::render(prompt, example);
    CellValue value = compute_cell(rendered, verbalizer, backend, options);
    if (value.abstained) abstains.fetch_add(1);
    matrix.put(prompt.id, example.id, std::move(value.probs), value.bit);
}

}  // namespace

CellValue compute_cell(const std::string& rendered, const Verbalizer& verbalizer,
                       lm::LmBackend& backend, const FeaturizeOptions& options) {
    CellValue value;
    if (options.use_completion_matching) {
        const std::string completion = backend.complete(rendered, options.max_completion_tokens);
        const auto matched = match_token_index(verbalizer, completion);
        // One-hot on the matched token; the all-zero vector is the abstain
        // marker and always decodes back to bit 0.
        value.probs.assign(verbalizer.tokens.size(), 0.0);
        if (matched.has_value()) {
            value.probs[static_cast<std::size_t>(*matched)] = 1.0;
            value.bit = *matched == verbalizer.positive_index ? 1 : 0;
        } else {
            value.abstained = true;
            value.bit = 0;
        }
        return value;
    }
    lm::TokenProbQuery query{rendered, verbalizer.tokens};
    const auto result = backend.token_probs(query);
    value.bit = static_cast<std::uint8_t>(verbalize_bit(verbalizer, result));
    value.probs = result.probs;
    return value;
}

FeaturizeStats featurize(std::span<const promptgen::PromptSpec> prompts,
                         const core::Dataset& dataset, lm::LmBackend& backend,
                         const VerbalizerRegistry& registry, core::FeatureMatrix& matrix,
                         const FeaturizeOptions& options) {
    FeaturizeStats stats;
    for (const auto& prompt : prompts) {
        const Verbalizer& v = registry.resolve(prompt.verbalizer_id);
        matrix.register_prompt({prompt.id, v.tokens, v.positive_index, v.id,
                                promptgen::prompt_excerpt(prompt)});
    }

    std::vector<Task> tasks;
    for (std::size_t p = 0; p < prompts.size(); ++p) {
        for (std::size_t e = 0; e < dataset.examples.size(); ++e) {
            if (matrix.has(prompts[p].id, dataset.examples[e].id)) {
                stats.cells_skipped++;
            } else {
                tasks.push_back({p, e});
            }
        }
    }
    if (tasks.empty()) return stats;

    std::atomic<long> abstains{0};
    std::atomic<std::size_t> cursor{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;

    auto worker = [&] {
        for (;;) {
            {
                std::lock_guard lock(error_mutex);
                if (first_error) return;
            }
            const std::size_t i = cursor.fetch_add(1);
            if (i >= tasks.size()) return;
            const auto& task = tasks[i];
            const auto& prompt = prompts[task.prompt_index];
            const auto& example = dataset.examples[task.example_index];
            try {
                fill_cell(prompt, example, registry.resolve(prompt.verbalizer_id), backend,
                          matrix, options, abstains);
            } catch (Error& e) {
                e.add_context("featurize prompt " + prompt.id + " example " +
                              std::to_string(example.id));
                std::lock_guard lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };

    const int n_threads = std::max(1, options.parallelism);
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(n_threads));
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    stats.cells_written = static_cast<long>(tasks.size());
    stats.abstains = abstains.load();
    return stats;
}

}  // namespace prompttree::features
