#pragma once

#include "prompttree/core/dataset.hpp"
#include "prompttree/core/feature_matrix.hpp"
#include "prompttree/features/verbalizer.hpp"
#include "prompttree/lm/backend.hpp"
#include "prompttree/promptgen/prompt.hpp"

#include <span>

namespace prompttree::features {

struct FeaturizeOptions {
    // Word-matching mode for backends without logits: the completion is
    // matched against verbalizer tokens; the stored probability vector is
    // one-hot for the matched token, all-zero on abstain.
    bool use_completion_matching = false;
    int max_completion_tokens = 8;
    int parallelism = 1;  // worker threads over (prompt, example) cells
};

struct FeaturizeStats {
    long cells_written = 0;
    long cells_skipped = 0;  // already present in the matrix
    long abstains = 0;       // word-matching abstains written as bit 0
};

// Fills one cell per (prompt, example), skipping cells the matrix already
// holds, so an interrupted run resumes where it stopped. Backend errors
// propagate with the offending (prompt, example) attached.
FeaturizeStats featurize(std::span<const promptgen::PromptSpec> prompts,
                         const core::Dataset& dataset, lm::LmBackend& backend,
                         const VerbalizerRegistry& registry, core::FeatureMatrix& matrix,
                         const FeaturizeOptions& options = {});

struct CellValue {
    std::vector<double> probs;
    std::uint8_t bit = 0;
    bool abstained = false;
};

// One cell for an already-rendered prompt; shared by batch featurization and
// lazy evaluation.
CellValue compute_cell(const std::string& rendered, const Verbalizer& verbalizer,
                       lm::LmBackend& backend, const FeaturizeOptions& options);

}  // namespace prompttree::features
