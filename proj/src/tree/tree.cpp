#include "prompttree/tree/tree.hpp"

#include "prompttree/error.hpp"

#include <algorithm>
#include <numeric>
#include <queue>

namespace prompttree::tree {

using nlohmann::json;

void TreeConfig::validate() const {
    if (max_leaf_nodes < 1) throw ConfigError("max_leaf_nodes must be >= 1");
    if (max_depth < 1) throw ConfigError("max_depth must be >= 1");
    if (min_samples_split < 2) throw ConfigError("min_samples_split must be >= 2");
    if (min_impurity_decrease < 0.0) throw ConfigError("min_impurity_decrease must be >= 0");
}

int DecisionTree::leaf_count() const {
    int count = 0;
    for (const auto& node : nodes) count += node.is_leaf() ? 1 : 0;
    return count;
}

int DecisionTree::depth() const {
    int depth = 0;
    for (const auto& node : nodes) depth = std::max(depth, node.depth);
    return depth;
}

int DecisionTree::internal_count() const {
    return static_cast<int>(nodes.size()) - leaf_count();
}

std::vector<int> DecisionTree::used_features() const {
    std::vector<int> out;
    for (const auto& node : nodes) {
        if (!node.is_leaf()) out.push_back(node.feature);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

double gini(std::span<const long> counts) {
    long total = 0;
    for (long c : counts) {
        if (c < 0) throw DataError("negative class count");
        total += c;
    }
    if (total == 0) throw DataError("gini of an empty node");
    double sum_sq = 0.0;
    for (long c : counts) {
        const double p = static_cast<double>(c) / static_cast<double>(total);
        sum_sq += p * p;
    }
    return 1.0 - sum_sq;
}

namespace {

int majority_class(std::span<const long> histogram) {
    int best = 0;
    for (int c = 1; c < static_cast<int>(histogram.size()); ++c) {
        if (histogram[static_cast<std::size_t>(c)] > histogram[static_cast<std::size_t>(best)]) {
            best = c;
        }
    }
    return best;
}

std::vector<long> histogram_of(std::span<const int> labels, std::span<const int> rows,
                               int n_classes) {
    std::vector<long> hist(static_cast<std::size_t>(n_classes), 0);
    for (int r : rows) hist[static_cast<std::size_t>(labels[static_cast<std::size_t>(r)])]++;
    return hist;
}

}  // namespace

std::optional<SplitChoice> best_split(const features::FeatureTable& table,
                                      std::span<const int> labels, std::span<const int> rows,
                                      int n_classes, const TreeConfig& config) {
    const long n = static_cast<long>(rows.size());
    if (n < config.min_samples_split) return std::nullopt;
    const auto parent_hist = histogram_of(labels, rows, n_classes);
    const double parent_impurity = gini(parent_hist);

    std::optional<SplitChoice> best;
    std::vector<long> left(static_cast<std::size_t>(n_classes), 0);
    for (int f = 0; f < static_cast<int>(table.columns.size()); ++f) {
        const auto& bits = table.columns[static_cast<std::size_t>(f)].bits;
        std::fill(left.begin(), left.end(), 0);
        long n_left = 0;
        for (int r : rows) {
            if (bits[static_cast<std::size_t>(r)] == 0) {
                left[static_cast<std::size_t>(labels[static_cast<std::size_t>(r)])]++;
                ++n_left;
            }
        }
        const long n_right = n - n_left;
        if (n_left == 0 || n_right == 0) continue;

        double left_sq = 0.0, right_sq = 0.0;
        for (int c = 0; c < n_classes; ++c) {
            const double l = static_cast<double>(left[static_cast<std::size_t>(c)]);
            const double r = static_cast<double>(parent_hist[static_cast<std::size_t>(c)]) - l;
            left_sq += l * l;
            right_sq += r * r;
        }
        const double gini_left = 1.0 - left_sq / (static_cast<double>(n_left) * n_left);
        const double gini_right = 1.0 - right_sq / (static_cast<double>(n_right) * n_right);
        const double child = (n_left * gini_left + n_right * gini_right) / static_cast<double>(n);
        if (!best.has_value() || child < best->child_impurity) {
            best = SplitChoice{f, child, parent_impurity - child, n_left, n_right};
        }
    }
    if (!best.has_value()) return std::nullopt;
    if (best->decrease < config.min_impurity_decrease) return std::nullopt;
    return best;
}

std::optional<SplitChoice> best_split(const features::FeatureTable& table,
                                      std::span<const int> labels, int n_classes,
                                      const TreeConfig& config) {
    std::vector<int> rows(labels.size());
    std::iota(rows.begin(), rows.end(), 0);
    return best_split(table, labels, rows, n_classes, config);
}

namespace {

struct PendingNode {
    int node_index;
    std::vector<int> rows;
    SplitChoice split;
    double priority;  // sample-weighted impurity decrease
};

struct PendingOrder {
    // Max-heap on priority; older nodes win ties for determinism.
    bool operator()(const PendingNode& a, const PendingNode& b) const {
        if (a.priority != b.priority) return a.priority < b.priority;
        return a.node_index > b.node_index;
    }
};

}  // namespace

DecisionTree build_tree(const features::FeatureTable& table, std::span<const int> labels,
                        int n_classes, const TreeConfig& config) {
    config.validate();
    if (labels.empty()) throw DataError("build_tree needs at least one sample");
    const double n_total = static_cast<double>(labels.size());

    DecisionTree tree;
    tree.n_classes = n_classes;

    auto make_leaf = [&](const std::vector<int>& rows, int depth) {
        TreeNode node;
        node.depth = depth;
        node.histogram = histogram_of(labels, rows, n_classes);
        node.leaf_class = majority_class(node.histogram);
        tree.nodes.push_back(std::move(node));
        return static_cast<int>(tree.nodes.size()) - 1;
    };

    std::priority_queue<PendingNode, std::vector<PendingNode>, PendingOrder> pending;

    auto consider = [&](int node_index, std::vector<int> rows) {
        const auto& node = tree.nodes[static_cast<std::size_t>(node_index)];
        if (node.depth >= config.max_depth) return;
        if (static_cast<int>(rows.size()) < config.min_samples_split) return;
        bool pure = false;
        for (long c : node.histogram) {
            if (c == static_cast<long>(rows.size())) pure = true;
        }
        if (pure) return;
        auto split = best_split(table, labels, rows, n_classes, config);
        if (!split.has_value()) return;
        const double priority = (static_cast<double>(rows.size()) / n_total) * split->decrease;
        pending.push({node_index, std::move(rows), *split, priority});
    };

    std::vector<int> all_rows(labels.size());
    std::iota(all_rows.begin(), all_rows.end(), 0);
    make_leaf(all_rows, 0);
    consider(0, std::move(all_rows));

    int leaves = 1;
    while (!pending.empty() && leaves < config.max_leaf_nodes) {
        PendingNode item = pending.top();
        pending.pop();

        std::vector<int> left_rows, right_rows;
        const auto& bits = table.columns[static_cast<std::size_t>(item.split.feature)].bits;
        for (int r : item.rows) {
            (bits[static_cast<std::size_t>(r)] == 0 ? left_rows : right_rows).push_back(r);
        }

        const int child_depth = tree.nodes[static_cast<std::size_t>(item.node_index)].depth + 1;
        const int left_index = make_leaf(left_rows, child_depth);
        const int right_index = make_leaf(right_rows, child_depth);
        TreeNode& node = tree.nodes[static_cast<std::size_t>(item.node_index)];
        node.feature = item.split.feature;
        node.left = left_index;
        node.right = right_index;
        node.leaf_class = -1;
        node.decrease = item.split.decrease;
        ++leaves;

        consider(left_index, std::move(left_rows));
        consider(right_index, std::move(right_rows));
    }
    return tree;
}

TreePrediction predict(const DecisionTree& tree, features::BitProvider& provider) {
    if (tree.nodes.empty()) throw DataError("empty tree");
    const long calls_before = provider.distinct_calls();
    int index = 0;
    std::string path = "0";
    while (!tree.nodes[static_cast<std::size_t>(index)].is_leaf()) {
        const auto& node = tree.nodes[static_cast<std::size_t>(index)];
        std::uint8_t bit;
        try {
            bit = provider.bit(node.feature);
        } catch (Error& e) {
            e.add_context("tree path " + path + " (feature " + std::to_string(node.feature) + ")");
            throw;
        }
        index = bit == 0 ? node.left : node.right;
        path += bit == 0 ? "->L" : "->R";
    }
    TreePrediction out;
    out.class_index = tree.nodes[static_cast<std::size_t>(index)].leaf_class;
    out.calls_used = provider.distinct_calls() - calls_before;
    return out;
}

namespace {

std::string dot_escape(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    for (char c : text) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\r': break;
            default: out += c;
        }
    }
    return out;
}

std::string histogram_string(const std::vector<long>& histogram) {
    std::string out = "[";
    for (std::size_t i = 0; i < histogram.size(); ++i) {
        if (i > 0) out += ", ";
        out += std::to_string(histogram[i]);
    }
    out += "]";
    return out;
}

}  // namespace

std::string export_dot(const DecisionTree& tree, std::span<const DotNodeInfo> feature_info,
                       std::span<const std::string> class_names) {
    std::string out = "digraph prompt_tree {\n";
    out += "  node [shape=box, fontname=\"Helvetica\"];\n";
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
        const auto& node = tree.nodes[i];
        if (node.is_leaf()) {
            const std::string name = node.leaf_class >= 0 &&
                                             node.leaf_class < static_cast<int>(class_names.size())
                                         ? class_names[static_cast<std::size_t>(node.leaf_class)]
                                         : std::to_string(node.leaf_class);
            out += "  n" + std::to_string(i) + " [label=\"" + dot_escape(name) + "\\n" +
                   dot_escape(histogram_string(node.histogram)) + "\", style=filled, fillcolor=lightgrey];\n";
        } else {
            const auto& info = feature_info[static_cast<std::size_t>(node.feature)];
            out += "  n" + std::to_string(i) + " [label=\"" + dot_escape(info.excerpt) + "\\n[" +
                   dot_escape(info.verbalizer_id) + "]\"];\n";
        }
    }
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
        const auto& node = tree.nodes[i];
        if (node.is_leaf()) continue;
        out += "  n" + std::to_string(i) + " -> n" + std::to_string(node.left) +
               " [label=\"No\"];\n";
        out += "  n" + std::to_string(i) + " -> n" + std::to_string(node.right) +
               " [label=\"Yes\"];\n";
    }
    out += "}\n";
    return out;
}

std::function<double(const int&)> make_impurity_scorer(const features::FeatureTable& table,
                                                       std::vector<int> labels,
                                                       std::vector<int> rows, int n_classes) {
    auto shared_labels = std::make_shared<std::vector<int>>(std::move(labels));
    auto shared_rows = std::make_shared<std::vector<int>>(std::move(rows));
    return [&table, shared_labels, shared_rows, n_classes](const int& feature) {
        const auto& bits = table.columns.at(static_cast<std::size_t>(feature)).bits;
        std::vector<long> left(static_cast<std::size_t>(n_classes), 0);
        std::vector<long> parent(static_cast<std::size_t>(n_classes), 0);
        long n_left = 0;
        for (int r : *shared_rows) {
            const auto label = static_cast<std::size_t>((*shared_labels)[static_cast<std::size_t>(r)]);
            parent[label]++;
            if (bits[static_cast<std::size_t>(r)] == 0) {
                left[label]++;
                ++n_left;
            }
        }
        const long n = static_cast<long>(shared_rows->size());
        const long n_right = n - n_left;
        if (n_left == 0 || n_right == 0) return 0.0;
        std::vector<long> right(static_cast<std::size_t>(n_classes), 0);
        for (int c = 0; c < n_classes; ++c) {
            right[static_cast<std::size_t>(c)] =
                parent[static_cast<std::size_t>(c)] - left[static_cast<std::size_t>(c)];
        }
        const double child = (static_cast<double>(n_left) * gini(left) +
                              static_cast<double>(n_right) * gini(right)) /
                             static_cast<double>(n);
        return gini(parent) - child;
    };
}

json tree_to_json(const DecisionTree& tree) {
    json nodes = json::array();
    for (const auto& node : tree.nodes) {
        json n;
        n["feature"] = node.feature;
        n["left"] = node.left;
        n["right"] = node.right;
        n["class"] = node.leaf_class;
        n["depth"] = node.depth;
        n["decrease"] = node.decrease;
        n["histogram"] = node.histogram;
        nodes.push_back(std::move(n));
    }
    json j;
    j["n_classes"] = tree.n_classes;
    j["nodes"] = std::move(nodes);
    return j;
}

DecisionTree tree_from_json(const json& j) {
    DecisionTree tree;
    tree.n_classes = j.at("n_classes").get<int>();
    for (const auto& n : j.at("nodes")) {
        TreeNode node;
        node.feature = n.at("feature").get<int>();
        node.left = n.at("left").get<int>();
        node.right = n.at("right").get<int>();
        node.leaf_class = n.at("class").get<int>();
        node.depth = n.at("depth").get<int>();
        node.decrease = n.value("decrease", 0.0);
        node.histogram = n.at("histogram").get<std::vector<long>>();
        tree.nodes.push_back(std::move(node));
    }
    return tree;
}

}  // namespace prompttree::tree
