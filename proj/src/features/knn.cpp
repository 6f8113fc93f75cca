#include "prompttree/features/knn.hpp"

#include "prompttree/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace prompttree::features {

namespace {

std::vector<double> smooth(std::span<const double> v, double epsilon) {
    std::vector<double> out(v.begin(), v.end());
    double total = 0.0;
    for (double& x : out) {
        if (x < 0.0) throw DataError("negative component in distribution");
        x += epsilon;
        total += x;
    }
    for (double& x : out) x /= total;
    return out;
}

}  // namespace

double kl_divergence(std::span<const double> p, std::span<const double> q, double epsilon) {
    if (p.size() != q.size()) {
        throw DataError("KL divergence needs equal-length vectors, got " +
                        std::to_string(p.size()) + " and " + std::to_string(q.size()));
    }
    if (p.empty()) throw DataError("KL divergence of empty vectors");
    const auto ps = smooth(p, epsilon);
    const auto qs = smooth(q, epsilon);
    double sum = 0.0;
    for (std::size_t i = 0; i < ps.size(); ++i) {
        sum += ps[i] * std::log(ps[i] / qs[i]);
    }
    return std::max(0.0, sum);
}

int knn_predict(const KnnAnchorSet& anchors,
                const std::vector<std::vector<double>>& example_vectors, int k) {
    if (anchors.anchors.empty()) throw DataError("empty anchor set");
    if (k < 1) throw ConfigError("k must be >= 1");
    if (example_vectors.size() != anchors.prompt_ids.size()) {
        throw DataError("example has " + std::to_string(example_vectors.size()) +
                        " prompt vectors, anchor set expects " +
                        std::to_string(anchors.prompt_ids.size()));
    }

    std::vector<std::pair<double, int>> ranked;  // (distance, anchor index)
    ranked.reserve(anchors.anchors.size());
    for (int a = 0; a < static_cast<int>(anchors.anchors.size()); ++a) {
        const auto& anchor = anchors.anchors[static_cast<std::size_t>(a)];
        if (anchor.vectors.size() != anchors.prompt_ids.size()) {
            throw DataError("anchor " + std::to_string(a) + " is missing prompt vectors");
        }
        double dist = 0.0;
        for (std::size_t p = 0; p < example_vectors.size(); ++p) {
            dist += kl_divergence(example_vectors[p], anchor.vectors[p]);
        }
        ranked.emplace_back(dist, a);
    }
    std::stable_sort(ranked.begin(), ranked.end());

    const int take = std::min<int>(k, static_cast<int>(ranked.size()));
    if (take == 1) return anchors.anchors[static_cast<std::size_t>(ranked[0].second)].label;

    std::map<int, int> votes;
    for (int i = 0; i < take; ++i) {
        votes[anchors.anchors[static_cast<std::size_t>(ranked[static_cast<std::size_t>(i)].second)]
                  .label]++;
    }
    int best_label = -1;
    int best_votes = -1;
    for (const auto& [label, count] : votes) {
        if (count > best_votes) {  // map iterates labels ascending: ties keep the lower class
            best_votes = count;
            best_label = label;
        }
    }
    return best_label;
}

std::vector<std::vector<std::uint8_t>> binarize_predictions(const std::vector<int>& predictions,
                                                            int k_classes) {
    std::vector<std::vector<std::uint8_t>> columns(
        static_cast<std::size_t>(k_classes),
        std::vector<std::uint8_t>(predictions.size(), 0));
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const int c = predictions[i];
        if (c < 0 || c >= k_classes) {
            throw DataError("prediction " + std::to_string(c) + " outside [0," +
                            std::to_string(k_classes) + ")");
        }
        columns[static_cast<std::size_t>(c)][i] = 1;
    }
    return columns;
}

}  // namespace prompttree::features
