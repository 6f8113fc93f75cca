#include "prompttree/ensemble/adaboost.hpp"

#include "prompttree/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace prompttree::ensemble {

using nlohmann::json;

namespace {

int argmax_score(std::span<const double> scores) {
    int best = 0;
    for (int c = 1; c < static_cast<int>(scores.size()); ++c) {
        if (scores[static_cast<std::size_t>(c)] > scores[static_cast<std::size_t>(best)]) best = c;
    }
    return best;
}

}  // namespace

int BoostEnsemble::predict_row(const features::FeatureTable& table, std::size_t row) const {
    std::vector<double> scores(static_cast<std::size_t>(n_classes), 0.0);
    for (const auto& stump : stumps) {
        const auto bit = table.columns[static_cast<std::size_t>(stump.feature)].bits[row];
        scores[static_cast<std::size_t>(stump.map.vote[bit])] += stump.alpha;
    }
    return argmax_score(scores);
}

EnsemblePrediction BoostEnsemble::predict(features::BitProvider& provider) const {
    const long before = provider.distinct_calls();
    std::vector<double> scores(static_cast<std::size_t>(n_classes), 0.0);
    for (const auto& stump : stumps) {
        const auto bit = provider.bit(stump.feature);
        scores[static_cast<std::size_t>(stump.map.vote[bit])] += stump.alpha;
    }
    EnsemblePrediction out;
    out.class_index = argmax_score(scores);
    out.calls_used = provider.distinct_calls() - before;
    return out;
}

std::vector<int> BoostEnsemble::used_features() const {
    std::vector<int> out;
    for (const auto& stump : stumps) out.push_back(stump.feature);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

BoostEnsemble fit_adaboost(const features::FeatureTable& table, std::span<const int> labels,
                           int n_classes, int rounds) {
    if (rounds < 1) throw ConfigError("boosting rounds must be >= 1");
    const std::size_t n = labels.size();
    if (n == 0) throw DataError("fit_adaboost needs at least one sample");
    if (table.columns.empty()) throw DataError("fit_adaboost needs at least one feature");

    BoostEnsemble model;
    model.n_classes = n_classes;

    std::vector<double> weights(n, 1.0 / static_cast<double>(n));
    std::vector<int> all_rows(n);
    std::iota(all_rows.begin(), all_rows.end(), 0);
    const double random_error = 1.0 - 1.0 / static_cast<double>(n_classes);

    for (int round = 0; round < rounds; ++round) {
        int best_feature = -1;
        StumpMap best_map;
        double best_error = 2.0;
        for (int f = 0; f < static_cast<int>(table.columns.size()); ++f) {
            const auto& bits = table.columns[static_cast<std::size_t>(f)].bits;
            const StumpMap map = fit_stump_map(bits, labels, weights, all_rows, n_classes);
            const double error = stump_weighted_error(map, bits, labels, weights, all_rows);
            if (error < best_error) {
                best_error = error;
                best_feature = f;
                best_map = map;
            }
        }

        if (best_error >= random_error - 1e-12) {
            // The best stump is no better than chance; its alpha would be <= 0.
            model.stopped_early = true;
            break;
        }

        BoostStump stump;
        stump.feature = best_feature;
        stump.map = best_map;
        stump.weighted_error = best_error;
        if (best_error <= 0.0) {
            stump.alpha = kPerfectStumpAlpha;
            model.stumps.push_back(stump);
            model.rounds.push_back({best_feature, best_error, stump.alpha, 1.0});
            model.stopped_early = true;
            break;
        }
        stump.alpha = std::log((1.0 - best_error) / best_error) +
                      std::log(static_cast<double>(n_classes) - 1.0);
        model.stumps.push_back(stump);

        const auto& bits = table.columns[static_cast<std::size_t>(best_feature)].bits;
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (best_map.vote[bits[i]] != labels[i]) {
                weights[i] *= std::exp(stump.alpha);
            }
            sum += weights[i];
        }
        for (double& w : weights) w /= sum;
        double check = 0.0;
        for (double w : weights) check += w;
        model.rounds.push_back({best_feature, best_error, stump.alpha, check});
    }
    return model;
}

json boost_to_json(const BoostEnsemble& model) {
    json stumps = json::array();
    for (const auto& stump : model.stumps) {
        json s;
        s["feature"] = stump.feature;
        s["vote0"] = stump.map.vote[0];
        s["vote1"] = stump.map.vote[1];
        s["alpha"] = stump.alpha;
        s["weighted_error"] = stump.weighted_error;
        stumps.push_back(std::move(s));
    }
    json j;
    j["n_classes"] = model.n_classes;
    j["stumps"] = std::move(stumps);
    j["stopped_early"] = model.stopped_early;
    return j;
}

BoostEnsemble boost_from_json(const json& j) {
    BoostEnsemble model;
    model.n_classes = j.at("n_classes").get<int>();
    model.stopped_early = j.value("stopped_early", false);
    for (const auto& s : j.at("stumps")) {
        BoostStump stump;
        stump.feature = s.at("feature").get<int>();
        stump.map.vote[0] = s.at("vote0").get<int>();
        stump.map.vote[1] = s.at("vote1").get<int>();
        stump.alpha = s.at("alpha").get<double>();
        stump.weighted_error = s.at("weighted_error").get<double>();
        model.stumps.push_back(stump);
    }
    return model;
}

}  // namespace prompttree::ensemble
