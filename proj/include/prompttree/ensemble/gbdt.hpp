#pragma once

#include "prompttree/ensemble/greedy.hpp"
#include "prompttree/features/feature_table.hpp"

#include <json.hpp>
#include <span>
#include <vector>

namespace prompttree::ensemble {

// Regression tree over binary features; split quality is squared-error
// reduction, leaf values are Newton steps on the multinomial deviance.
struct RegTreeNode {
    int feature = -1;  // -1 marks a leaf
    int left = -1;
    int right = -1;
    double value = 0.0;
};

struct RegressionTree {
    std::vector<RegTreeNode> nodes;

    double value_for_row(const features::FeatureTable& table, std::size_t row) const;
    double value_for_provider(features::BitProvider& provider) const;
    void collect_features(std::vector<int>& out) const;
};

struct GbdtStage {
    std::vector<RegressionTree> trees;  // one per class
};

struct GbdtFitLog {
    double initial_log_loss = 0.0;
    std::vector<double> stage_log_loss;  // training log-loss after each accepted stage
    bool stopped_for_budget = false;
};

// Multinomial gradient boosting over prompt features. Class scores start at
// the prior log-probabilities; each stage adds one regression tree per class
// fit to softmax residuals. A stage whose features would push the distinct
// feature count over call_budget is discarded whole and fitting stops.
struct GbdtModel {
    int n_classes = 0;
    double learning_rate = 0.1;
    std::vector<double> priors;  // log prior per class
    std::vector<GbdtStage> stages;
    std::vector<int> distinct_features;  // ascending; size <= call_budget
    GbdtFitLog fit_log;

    std::vector<double> scores_for_row(const features::FeatureTable& table, std::size_t row) const;
    int predict_row(const features::FeatureTable& table, std::size_t row) const;
    EnsemblePrediction predict(features::BitProvider& provider) const;
    std::vector<int> used_features() const { return distinct_features; }
};

GbdtModel fit_gbdt(const features::FeatureTable& table, std::span<const int> labels,
                   int n_classes, int stages, double learning_rate, int tree_depth,
                   int call_budget);

// Mean negative log-likelihood of the labels under softmax(scores).
double multinomial_log_loss(std::span<const std::vector<double>> scores,
                            std::span<const int> labels);

nlohmann::json gbdt_to_json(const GbdtModel& model);
GbdtModel gbdt_from_json(const nlohmann::json& j);

}  // namespace prompttree::ensemble
