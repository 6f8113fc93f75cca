#include "prompttree/ensemble/gbdt.hpp"

#include "prompttree/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace prompttree::ensemble {

using nlohmann::json;

namespace {

constexpr double kTinyGain = 1e-12;
constexpr double kTinyDenominator = 1e-12;

struct RegTreeBuilder {
    const features::FeatureTable& table;
    std::span<const double> residuals;
    std::span<const double> probs;  // p_c per row, for the Newton denominator
    int max_depth;
    double newton_scale;            // (K-1)/K
    RegressionTree tree;

    double leaf_value(const std::vector<int>& rows) const {
        double numerator = 0.0;
        double denominator = 0.0;
        for (int r : rows) {
            const auto rs = static_cast<std::size_t>(r);
            numerator += residuals[rs];
            denominator += probs[rs] * (1.0 - probs[rs]);
        }
        if (std::abs(denominator) < kTinyDenominator) return 0.0;
        return newton_scale * numerator / denominator;
    }

    int build(const std::vector<int>& rows, int depth) {
        double sum = 0.0;
        double min_residual = residuals[static_cast<std::size_t>(rows.front())];
        double max_residual = min_residual;
        for (int r : rows) {
            const double v = residuals[static_cast<std::size_t>(r)];
            sum += v;
            min_residual = std::min(min_residual, v);
            max_residual = std::max(max_residual, v);
        }

        // Zero-gain splits are allowed on non-uniform nodes (a parity
        // pattern has zero first-level gain but informative children);
        // uniform-residual nodes always become leaves.
        int best_feature = -1;
        double best_gain = -1.0;
        double parent_score = sum * sum / static_cast<double>(rows.size());
        if (depth < max_depth && rows.size() >= 2 && max_residual - min_residual > kTinyGain) {
            for (int f = 0; f < static_cast<int>(table.columns.size()); ++f) {
                const auto& bits = table.columns[static_cast<std::size_t>(f)].bits;
                double left_sum = 0.0;
                long left_n = 0;
                for (int r : rows) {
                    if (bits[static_cast<std::size_t>(r)] == 0) {
                        left_sum += residuals[static_cast<std::size_t>(r)];
                        ++left_n;
                    }
                }
                const long right_n = static_cast<long>(rows.size()) - left_n;
                if (left_n == 0 || right_n == 0) continue;
                const double right_sum = sum - left_sum;
                const double gain = left_sum * left_sum / static_cast<double>(left_n) +
                                    right_sum * right_sum / static_cast<double>(right_n) -
                                    parent_score;
                if (gain > best_gain) {
                    best_gain = gain;
                    best_feature = f;
                }
            }
        }

        const int index = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        if (best_feature < 0) {
            tree.nodes[static_cast<std::size_t>(index)].value = leaf_value(rows);
            return index;
        }
        std::vector<int> left_rows, right_rows;
        const auto& bits = table.columns[static_cast<std::size_t>(best_feature)].bits;
        for (int r : rows) {
            (bits[static_cast<std::size_t>(r)] == 0 ? left_rows : right_rows).push_back(r);
        }
        const int left = build(left_rows, depth + 1);
        const int right = build(right_rows, depth + 1);
        auto& node = tree.nodes[static_cast<std::size_t>(index)];
        node.feature = best_feature;
        node.left = left;
        node.right = right;
        return index;
    }
};

void softmax_row(std::span<const double> scores, std::vector<double>& out) {
    out.resize(scores.size());
    const double max_score = *std::max_element(scores.begin(), scores.end());
    double total = 0.0;
    for (std::size_t c = 0; c < scores.size(); ++c) {
        out[c] = std::exp(scores[c] - max_score);
        total += out[c];
    }
    for (double& p : out) p /= total;
}

}  // namespace

double RegressionTree::value_for_row(const features::FeatureTable& table, std::size_t row) const {
    int index = 0;
    while (nodes[static_cast<std::size_t>(index)].feature >= 0) {
        const auto& node = nodes[static_cast<std::size_t>(index)];
        const auto bit = table.columns[static_cast<std::size_t>(node.feature)].bits[row];
        index = bit == 0 ? node.left : node.right;
    }
    return nodes[static_cast<std::size_t>(index)].value;
}

double RegressionTree::value_for_provider(features::BitProvider& provider) const {
    int index = 0;
    while (nodes[static_cast<std::size_t>(index)].feature >= 0) {
        const auto& node = nodes[static_cast<std::size_t>(index)];
        const auto bit = provider.bit(node.feature);
        index = bit == 0 ? node.left : node.right;
    }
    return nodes[static_cast<std::size_t>(index)].value;
}

void RegressionTree::collect_features(std::vector<int>& out) const {
    for (const auto& node : nodes) {
        if (node.feature >= 0) out.push_back(node.feature);
    }
}

std::vector<double> GbdtModel::scores_for_row(const features::FeatureTable& table,
                                              std::size_t row) const {
    std::vector<double> scores = priors;
    for (const auto& stage : stages) {
        for (int c = 0; c < n_classes; ++c) {
            scores[static_cast<std::size_t>(c)] +=
                learning_rate * stage.trees[static_cast<std::size_t>(c)].value_for_row(table, row);
        }
    }
    return scores;
}

int GbdtModel::predict_row(const features::FeatureTable& table, std::size_t row) const {
    const auto scores = scores_for_row(table, row);
    return static_cast<int>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

EnsemblePrediction GbdtModel::predict(features::BitProvider& provider) const {
    const long before = provider.distinct_calls();
    std::vector<double> scores = priors;
    for (const auto& stage : stages) {
        for (int c = 0; c < n_classes; ++c) {
            scores[static_cast<std::size_t>(c)] +=
                learning_rate * stage.trees[static_cast<std::size_t>(c)].value_for_provider(provider);
        }
    }
    EnsemblePrediction out;
    out.class_index = static_cast<int>(std::max_element(scores.begin(), scores.end()) - scores.begin());
    out.calls_used = provider.distinct_calls() - before;
    return out;
}

double multinomial_log_loss(std::span<const std::vector<double>> scores,
                            std::span<const int> labels) {
    double total = 0.0;
    std::vector<double> probs;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        softmax_row(scores[i], probs);
        const double p = std::max(probs[static_cast<std::size_t>(labels[i])], 1e-300);
        total -= std::log(p);
    }
    return total / static_cast<double>(labels.size());
}

GbdtModel fit_gbdt(const features::FeatureTable& table, std::span<const int> labels,
                   int n_classes, int stages, double learning_rate, int tree_depth,
                   int call_budget) {
    if (stages < 1) throw ConfigError("gbdt stages must be >= 1");
    if (learning_rate < 0.0) throw ConfigError("learning rate must be >= 0");
    if (tree_depth < 1) throw ConfigError("gbdt tree depth must be >= 1");
    if (call_budget < 1) throw ConfigError("call budget must be >= 1");
    const std::size_t n = labels.size();
    if (n == 0) throw DataError("fit_gbdt needs at least one sample");

    GbdtModel model;
    model.n_classes = n_classes;
    model.learning_rate = learning_rate;

    std::vector<long> counts(static_cast<std::size_t>(n_classes), 0);
    for (int y : labels) counts[static_cast<std::size_t>(y)]++;
    model.priors.resize(static_cast<std::size_t>(n_classes));
    for (int c = 0; c < n_classes; ++c) {
        const double p = std::max(
            static_cast<double>(counts[static_cast<std::size_t>(c)]) / static_cast<double>(n),
            1e-12);
        model.priors[static_cast<std::size_t>(c)] = std::log(p);
    }

    // Per-example class scores, updated stage by stage.
    std::vector<std::vector<double>> scores(n, model.priors);
    model.fit_log.initial_log_loss = multinomial_log_loss(scores, labels);

    std::vector<int> all_rows(n);
    std::iota(all_rows.begin(), all_rows.end(), 0);
    std::set<int> distinct(model.distinct_features.begin(), model.distinct_features.end());
    const double newton_scale =
        (static_cast<double>(n_classes) - 1.0) / static_cast<double>(n_classes);

    std::vector<double> probs_c(n);
    std::vector<double> residuals_c(n);
    std::vector<double> softmax_buf;
    for (int s = 0; s < stages; ++s) {
        GbdtStage stage;
        stage.trees.reserve(static_cast<std::size_t>(n_classes));
        std::vector<std::vector<double>> stage_probs(static_cast<std::size_t>(n_classes));
        for (int c = 0; c < n_classes; ++c) {
            stage_probs[static_cast<std::size_t>(c)].resize(n);
        }
        for (std::size_t i = 0; i < n; ++i) {
            softmax_row(scores[i], softmax_buf);
            for (int c = 0; c < n_classes; ++c) {
                stage_probs[static_cast<std::size_t>(c)][i] = softmax_buf[static_cast<std::size_t>(c)];
            }
        }
        for (int c = 0; c < n_classes; ++c) {
            for (std::size_t i = 0; i < n; ++i) {
                probs_c[i] = stage_probs[static_cast<std::size_t>(c)][i];
                residuals_c[i] = (labels[i] == c ? 1.0 : 0.0) - probs_c[i];
            }
            RegTreeBuilder builder{table, residuals_c, probs_c, tree_depth, newton_scale, {}};
            builder.build(all_rows, 0);
            stage.trees.push_back(std::move(builder.tree));
        }

        // Budget check: the whole stage is accepted or dropped.
        std::set<int> candidate = distinct;
        for (const auto& t : stage.trees) {
            std::vector<int> used;
            t.collect_features(used);
            candidate.insert(used.begin(), used.end());
        }
        if (static_cast<int>(candidate.size()) > call_budget) {
            model.fit_log.stopped_for_budget = true;
            break;
        }
        distinct = std::move(candidate);

        for (std::size_t i = 0; i < n; ++i) {
            for (int c = 0; c < n_classes; ++c) {
                scores[i][static_cast<std::size_t>(c)] +=
                    learning_rate *
                    stage.trees[static_cast<std::size_t>(c)].value_for_row(table, i);
            }
        }
        model.stages.push_back(std::move(stage));
        model.fit_log.stage_log_loss.push_back(multinomial_log_loss(scores, labels));
    }
    model.distinct_features.assign(distinct.begin(), distinct.end());
    return model;
}

json gbdt_to_json(const GbdtModel& model) {
    json stages = json::array();
    for (const auto& stage : model.stages) {
        json trees = json::array();
        for (const auto& tree : stage.trees) {
            json nodes = json::array();
            for (const auto& node : tree.nodes) {
                json nj;
                nj["feature"] = node.feature;
                nj["left"] = node.left;
                nj["right"] = node.right;
                nj["value"] = node.value;
                nodes.push_back(std::move(nj));
            }
            trees.push_back(std::move(nodes));
        }
        stages.push_back(std::move(trees));
    }
    json j;
    j["n_classes"] = model.n_classes;
    j["learning_rate"] = model.learning_rate;
    j["priors"] = model.priors;
    j["stages"] = std::move(stages);
    j["distinct_features"] = model.distinct_features;
    json log;
    log["initial_log_loss"] = model.fit_log.initial_log_loss;
    log["stage_log_loss"] = model.fit_log.stage_log_loss;
    log["stopped_for_budget"] = model.fit_log.stopped_for_budget;
    j["fit_log"] = std::move(log);
    return j;
}

GbdtModel gbdt_from_json(const json& j) {
    GbdtModel model;
    model.n_classes = j.at("n_classes").get<int>();
    model.learning_rate = j.at("learning_rate").get<double>();
    model.priors = j.at("priors").get<std::vector<double>>();
    model.distinct_features = j.at("distinct_features").get<std::vector<int>>();
    for (const auto& stage_json : j.at("stages")) {
        GbdtStage stage;
        for (const auto& tree_json : stage_json) {
            RegressionTree tree;
            for (const auto& nj : tree_json) {
                RegTreeNode node;
                node.feature = nj.at("feature").get<int>();
                node.left = nj.at("left").get<int>();
                node.right = nj.at("right").get<int>();
                node.value = nj.at("value").get<double>();
                tree.nodes.push_back(node);
            }
            stage.trees.push_back(std::move(tree));
        }
        model.stages.push_back(std::move(stage));
    }
    if (j.contains("fit_log")) {
        const auto& log = j["fit_log"];
        model.fit_log.initial_log_loss = log.value("initial_log_loss", 0.0);
        model.fit_log.stage_log_loss =
            log.value("stage_log_loss", std::vector<double>{});
        model.fit_log.stopped_for_budget = log.value("stopped_for_budget", false);
    }
    return model;
}

}  // namespace prompttree::ensemble
