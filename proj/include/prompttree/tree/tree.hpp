#pragma once

#include "prompttree/features/feature_table.hpp"

#include <functional>
#include <json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace prompttree::tree {

struct TreeConfig {
    int max_leaf_nodes = 1 << 20;
    int max_depth = 64;
    int min_samples_split = 2;
    // Zero-decrease splits are allowed by default: parity tasks (XOR) need a
    // zero-gain root split before the informative second level, and
    // best-first ordering already expands such nodes last under a budget.
    double min_impurity_decrease = 0.0;

    void validate() const;
};

// Node storage by index; the root is node 0. Internal nodes route bit 0 to
// `left` and bit 1 to `right`. Leaves carry the majority class (argmax of
// the histogram, ties to the lower class).
struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    int left = -1;
    int right = -1;
    int leaf_class = -1;
    int depth = 0;
    double decrease = 0.0;  // impurity decrease of the split, 0 for leaves
    std::vector<long> histogram;

    bool is_leaf() const { return feature < 0; }
};

struct DecisionTree {
    std::vector<TreeNode> nodes;
    int n_classes = 0;

    int leaf_count() const;
    int depth() const;
    int internal_count() const;
    std::vector<int> used_features() const;  // distinct, ascending
};

// Gini impurity 1 - sum((n_c/n)^2). All-zero counts are an error.
double gini(std::span<const long> counts);

struct SplitChoice {
    int feature = -1;
    double child_impurity = 0.0;  // (nL*gini(L) + nR*gini(R)) / n
    double decrease = 0.0;        // parent impurity minus child_impurity
    long n_left = 0;
    long n_right = 0;
};

// Minimizes the sample-weighted child impurity over all features that
// produce two non-empty children; ties go to the lower feature index.
// Returns nullopt when no feature reaches min_impurity_decrease.
std::optional<SplitChoice> best_split(const features::FeatureTable& table,
                                      std::span<const int> labels, std::span<const int> rows,
                                      int n_classes, const TreeConfig& config);

// Convenience overload over every row.
std::optional<SplitChoice> best_split(const features::FeatureTable& table,
                                      std::span<const int> labels, int n_classes,
                                      const TreeConfig& config);

// Greedy top-down induction with best-first node expansion: the pending node
// with the largest sample-weighted impurity decrease is split next, so a
// leaf budget cuts the least useful splits. Deterministic for fixed inputs.
DecisionTree build_tree(const features::FeatureTable& table, std::span<const int> labels,
                        int n_classes, const TreeConfig& config);

struct TreePrediction {
    int class_index = 0;
    long calls_used = 0;  // distinct prompts the provider had to evaluate
};

// Root-to-leaf traversal; only features on the path are evaluated, each at
// most once. A warmed provider reports zero additional calls. Provider
// failures propagate with the node path attached.
TreePrediction predict(const DecisionTree& tree, features::BitProvider& provider);

// Labels internal nodes with the feature's excerpt and verbalizer, leaves
// with the class name and histogram; edges carry No (bit 0) and Yes (bit 1).
struct DotNodeInfo {
    std::string excerpt;
    std::string verbalizer_id;
};
std::string export_dot(const DecisionTree& tree, std::span<const DotNodeInfo> feature_info,
                       std::span<const std::string> class_names);

// Extension point for node-level candidate reranking: stable sort of
// candidates by descending caller-supplied score.
template <class T>
std::vector<T> rerank_candidates(std::span<const T> candidates,
                                 const std::function<double(const T&)>& scorer) {
    std::vector<std::pair<double, std::size_t>> order;
    order.reserve(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        order.emplace_back(scorer(candidates[i]), i);
    }
    std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
        return a.first > b.first;
    });
    std::vector<T> out;
    out.reserve(candidates.size());
    for (const auto& [score, i] : order) out.push_back(candidates[i]);
    return out;
}

// Default reranking score: the impurity decrease the candidate's feature
// column achieves on the node's data subset.
std::function<double(const int&)> make_impurity_scorer(const features::FeatureTable& table,
                                                       std::vector<int> labels,
                                                       std::vector<int> rows, int n_classes);

nlohmann::json tree_to_json(const DecisionTree& tree);
DecisionTree tree_from_json(const nlohmann::json& j);

}  // namespace prompttree::tree
