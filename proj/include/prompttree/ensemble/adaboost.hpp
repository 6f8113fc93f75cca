#pragma once

#include "prompttree/ensemble/greedy.hpp"
#include "prompttree/ensemble/stump.hpp"
#include "prompttree/features/feature_table.hpp"

#include <json.hpp>
#include <span>
#include <vector>

namespace prompttree::ensemble {

struct BoostStump {
    int feature = 0;
    StumpMap map;
    double alpha = 0.0;
    double weighted_error = 0.0;
};

struct BoostRoundInfo {
    int feature = 0;
    double weighted_error = 0.0;
    double alpha = 0.0;
    double weight_sum = 0.0;  // after normalization; 1 up to rounding
};

struct BoostEnsemble {
    std::vector<BoostStump> stumps;
    int n_classes = 0;
    std::vector<BoostRoundInfo> rounds;  // fit diagnostics, one per accepted round
    bool stopped_early = false;

    int predict_row(const features::FeatureTable& table, std::size_t row) const;
    EnsemblePrediction predict(features::BitProvider& provider) const;
    std::vector<int> used_features() const;
};

inline constexpr double kPerfectStumpAlpha = 35.0;

// Multiclass AdaBoost (SAMME). Each round picks the stump with the lowest
// weighted error; alpha = ln((1-e)/e) + ln(K-1). Fitting halts before adding
// a stump whose error reaches the random-guess bound 1 - 1/K (alpha <= 0),
// and halts after accepting a perfect stump with alpha capped at 35.
BoostEnsemble fit_adaboost(const features::FeatureTable& table, std::span<const int> labels,
                           int n_classes, int rounds);

nlohmann::json boost_to_json(const BoostEnsemble& model);
BoostEnsemble boost_from_json(const nlohmann::json& j);

}  // namespace prompttree::ensemble
