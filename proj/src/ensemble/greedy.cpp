#include "prompttree/ensemble/greedy.hpp"

#include "prompttree/error.hpp"

#include <algorithm>
#include <numeric>

namespace prompttree::ensemble {

using nlohmann::json;

int GreedyEnsemble::predict_row(const features::FeatureTable& table, std::size_t row) const {
    std::vector<int> votes(static_cast<std::size_t>(n_classes), 0);
    for (const auto& member : members) {
        const auto bit = table.columns[static_cast<std::size_t>(member.feature)].bits[row];
        votes[static_cast<std::size_t>(member.map.vote[bit])]++;
    }
    return static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
}

EnsemblePrediction GreedyEnsemble::predict(features::BitProvider& provider) const {
    const long before = provider.distinct_calls();
    std::vector<int> votes(static_cast<std::size_t>(n_classes), 0);
    for (const auto& member : members) {
        const auto bit = provider.bit(member.feature);
        votes[static_cast<std::size_t>(member.map.vote[bit])]++;
    }
    EnsemblePrediction out;
    out.class_index = static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
    out.calls_used = provider.distinct_calls() - before;
    return out;
}

std::vector<int> GreedyEnsemble::used_features() const {
    std::vector<int> out;
    for (const auto& member : members) out.push_back(member.feature);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

GreedyEnsemble fit_greedy(const features::FeatureTable& table, std::span<const int> labels,
                          int n_classes, int budget, int folds) {
    if (budget < 1) throw ConfigError("greedy budget must be >= 1");
    if (folds < 2) throw ConfigError("cross-validation needs folds >= 2");
    const std::size_t n = labels.size();
    if (n == 0) throw DataError("fit_greedy needs at least one sample");

    const std::vector<double> unit_weights(n, 1.0);
    std::vector<int> all_rows(n);
    std::iota(all_rows.begin(), all_rows.end(), 0);

    // Round-robin fold assignment by row index.
    std::vector<std::vector<int>> fold_rows(static_cast<std::size_t>(folds));
    for (std::size_t i = 0; i < n; ++i) {
        fold_rows[i % static_cast<std::size_t>(folds)].push_back(static_cast<int>(i));
    }

    struct Scored {
        int feature;
        double accuracy;
    };
    std::vector<Scored> scored;
    scored.reserve(table.columns.size());
    for (int f = 0; f < static_cast<int>(table.columns.size()); ++f) {
        const auto& bits = table.columns[static_cast<std::size_t>(f)].bits;
        long correct = 0;
        for (int fold = 0; fold < folds; ++fold) {
            const auto& held_out = fold_rows[static_cast<std::size_t>(fold)];
            if (held_out.empty()) continue;
            std::vector<int> train_rows;
            train_rows.reserve(n - held_out.size());
            for (int other = 0; other < folds; ++other) {
                if (other == fold) continue;
                const auto& rows = fold_rows[static_cast<std::size_t>(other)];
                train_rows.insert(train_rows.end(), rows.begin(), rows.end());
            }
            if (train_rows.empty()) continue;
            const StumpMap map = fit_stump_map(bits, labels, unit_weights, train_rows, n_classes);
            for (int r : held_out) {
                if (map.vote[bits[static_cast<std::size_t>(r)]] == labels[static_cast<std::size_t>(r)]) {
                    ++correct;
                }
            }
        }
        scored.push_back({f, static_cast<double>(correct) / static_cast<double>(n)});
    }
    // Descending accuracy, ties to the lower feature index.
    std::stable_sort(scored.begin(), scored.end(),
                     [](const Scored& a, const Scored& b) { return a.accuracy > b.accuracy; });

    GreedyEnsemble model;
    model.n_classes = n_classes;
    std::size_t keep = static_cast<std::size_t>(budget);
    if (keep > scored.size()) {
        model.warnings.push_back("budget " + std::to_string(budget) + " exceeds feature pool of " +
                                 std::to_string(scored.size()) + "; using all features");
        keep = scored.size();
    }
    for (std::size_t i = 0; i < keep; ++i) {
        GreedyMember member;
        member.feature = scored[i].feature;
        member.cv_accuracy = scored[i].accuracy;
        member.map = fit_stump_map(table.columns[static_cast<std::size_t>(member.feature)].bits,
                                   labels, unit_weights, all_rows, n_classes);
        model.members.push_back(member);
    }
    return model;
}

json greedy_to_json(const GreedyEnsemble& model) {
    json members = json::array();
    for (const auto& member : model.members) {
        json m;
        m["feature"] = member.feature;
        m["vote0"] = member.map.vote[0];
        m["vote1"] = member.map.vote[1];
        m["cv_accuracy"] = member.cv_accuracy;
        members.push_back(std::move(m));
    }
    json j;
    j["n_classes"] = model.n_classes;
    j["members"] = std::move(members);
    return j;
}

GreedyEnsemble greedy_from_json(const json& j) {
    GreedyEnsemble model;
    model.n_classes = j.at("n_classes").get<int>();
    for (const auto& m : j.at("members")) {
        GreedyMember member;
        member.feature = m.at("feature").get<int>();
        member.map.vote[0] = m.at("vote0").get<int>();
        member.map.vote[1] = m.at("vote1").get<int>();
        member.cv_accuracy = m.at("cv_accuracy").get<double>();
        model.members.push_back(member);
    }
    return model;
}

}  // namespace prompttree::ensemble
