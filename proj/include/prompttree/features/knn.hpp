#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace prompttree::features {

inline constexpr double kKlEpsilon = 1e-9;

// KL divergence D(p || q) in nats. Both vectors are smoothed (+epsilon on
// every component, then renormalized) before the sum, so zeros from
// word-matching backends are safe and the result is finite.
double kl_divergence(std::span<const double> p, std::span<const double> q,
                     double epsilon = kKlEpsilon);

struct KnnAnchor {
    int example_id = 0;
    int label = 0;
    std::vector<std::vector<double>> vectors;  // one distribution per prompt
};

// Labeled examples with their per-prompt LM output distributions. Distance
// from a query example is the sum over prompts of D(example || anchor).
struct KnnAnchorSet {
    std::vector<std::string> prompt_ids;
    std::vector<KnnAnchor> anchors;
};

// Label of the nearest anchor (k = 1) or the majority label among the k
// nearest. Ties: equal distances resolve to the lower anchor index, vote
// ties to the lower class index.
int knn_predict(const KnnAnchorSet& anchors,
                const std::vector<std::vector<double>>& example_vectors, int k = 1);

// One-vs-rest binarization: column c holds 1 where the prediction equals c.
// Every row of the resulting K columns sums to exactly 1.
std::vector<std::vector<std::uint8_t>> binarize_predictions(const std::vector<int>& predictions,
                                                            int k_classes);

}  // namespace prompttree::features
