#pragma once

#include "prompttree/core/dataset.hpp"
#include "prompttree/core/feature_matrix.hpp"
#include "prompttree/features/knn.hpp"
#include "prompttree/promptgen/prompt.hpp"

#include <json.hpp>

#include <memory>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace prompttree::features {

// One binary split feature over a fixed example order. A plain feature is
// backed by a single prompt; a kNN feature is backed by a prompt group plus
// an anchor set, and costs the whole group to evaluate.
struct FeatureColumn {
    std::string name;
    std::vector<std::string> prompt_ids;
    std::string excerpt;
    std::string verbalizer_id;

    bool is_knn = false;
    int knn_class = -1;  // the one-vs-rest class this column tests
    int knn_k = 1;
    std::shared_ptr<const KnnAnchorSet> anchors;  // shared by the group's columns

    std::vector<std::uint8_t> bits;
};

struct FeatureTable {
    std::vector<FeatureColumn> columns;
    std::size_t n_rows = 0;

    std::size_t size() const { return columns.size(); }
};

// One column per prompt, bits read from the matrix. Missing cells raise a
// DataError listing the uncovered (prompt, example) pairs.
FeatureTable build_prompt_table(const core::FeatureMatrix& matrix,
                                std::span<const promptgen::PromptSpec> prompts,
                                const core::Dataset& dataset);

struct KnnTableOptions {
    int prompts_per_group = 4;
    int k = 1;
    int max_anchors = 0;  // 0 = use the whole training subset
};

// Splits the prompt list into consecutive groups of prompts_per_group, forms
// one anchor set per group from the training examples' stored probability
// vectors, and emits K one-vs-rest columns per group, evaluated on `target`.
FeatureTable build_knn_table(const core::FeatureMatrix& matrix,
                             std::span<const promptgen::PromptSpec> prompts,
                             const core::Dataset& train, const core::Dataset& target,
                             const KnnTableOptions& options);

// Per-example lazy bit source for inference. distinct_calls() is the number
// of distinct prompts touched so far: the exact LM-call cost of the bits
// served, with prompts shared between features (kNN groups, repeated tree
// features) counted once.
class BitProvider {
public:
    virtual ~BitProvider() = default;
    virtual std::uint8_t bit(int feature) = 0;
    virtual long distinct_calls() const = 0;
};

class TableBitProvider : public BitProvider {
public:
    TableBitProvider(const FeatureTable& table, std::size_t row)
        : table_(&table), row_(row) {}

    std::uint8_t bit(int feature) override;
    long distinct_calls() const override { return static_cast<long>(touched_.size()); }

private:
    const FeatureTable* table_;
    std::size_t row_;
    std::set<std::string> touched_;
};

nlohmann::json anchor_set_to_json(const KnnAnchorSet& anchors);
KnnAnchorSet anchor_set_from_json(const nlohmann::json& j);

}  // namespace prompttree::features
