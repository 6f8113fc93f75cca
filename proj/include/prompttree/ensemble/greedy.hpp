#pragma once

#include "prompttree/ensemble/stump.hpp"
#include "prompttree/features/feature_table.hpp"

#include <json.hpp>
#include <span>
#include <string>
#include <vector>

namespace prompttree::ensemble {

struct GreedyMember {
    int feature = 0;
    StumpMap map;             // refit on the full training data
    double cv_accuracy = 0.0;
};

struct EnsemblePrediction {
    int class_index = 0;
    long calls_used = 0;
};

// Prompt stumps ranked by k-fold cross-validation accuracy; prediction is a
// plurality vote over the members (ties to the lower class index). Every
// member is evaluated at inference, so the call cost equals the number of
// distinct member prompts.
struct GreedyEnsemble {
    std::vector<GreedyMember> members;  // descending cv accuracy
    int n_classes = 0;
    std::vector<std::string> warnings;

    int predict_row(const features::FeatureTable& table, std::size_t row) const;
    EnsemblePrediction predict(features::BitProvider& provider) const;
    std::vector<int> used_features() const;
};

// Scores each feature by k-fold CV accuracy of its stump (fold f holds out
// rows with index % folds == f; the map is refit on the remaining rows),
// keeps the top `budget`, and refits the kept maps on everything. A budget
// larger than the pool keeps the whole pool and records a warning.
GreedyEnsemble fit_greedy(const features::FeatureTable& table, std::span<const int> labels,
                          int n_classes, int budget, int folds);

nlohmann::json greedy_to_json(const GreedyEnsemble& model);
GreedyEnsemble greedy_from_json(const nlohmann::json& j);

}  // namespace prompttree::ensemble
