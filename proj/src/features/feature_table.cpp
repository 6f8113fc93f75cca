#include "prompttree/features/feature_table.hpp"

#include "prompttree/error.hpp"

#include <algorithm>

namespace prompttree::features {

using nlohmann::json;

namespace {

// Collects cells for (prompts x dataset); missing pairs become one error.
std::vector<std::vector<core::FeatureCell>> gather_cells(
    const core::FeatureMatrix& matrix, std::span<const promptgen::PromptSpec> prompts,
    const core::Dataset& dataset) {
    std::vector<std::vector<core::FeatureCell>> cells(prompts.size());
    std::vector<std::string> missing;
    for (std::size_t p = 0; p < prompts.size(); ++p) {
        cells[p].reserve(dataset.examples.size());
        for (const auto& ex : dataset.examples) {
            auto cell = matrix.get(prompts[p].id, ex.id);
            if (!cell.has_value()) {
                if (missing.size() < 20) {
                    missing.push_back("(" + prompts[p].id + ", " + std::to_string(ex.id) + ")");
                }
                continue;
            }
            cells[p].push_back(std::move(*cell));
        }
    }
    if (!missing.empty()) {
        std::string list;
        for (const auto& m : missing) {
            if (!list.empty()) list += ", ";
            list += m;
        }
        throw DataError("feature matrix does not cover all (prompt, example) cells; missing " +
                        list + (missing.size() == 20 ? ", ..." : ""));
    }
    return cells;
}

}  // namespace

FeatureTable build_prompt_table(const core::FeatureMatrix& matrix,
                                std::span<const promptgen::PromptSpec> prompts,
                                const core::Dataset& dataset) {
    const auto cells = gather_cells(matrix, prompts, dataset);
    FeatureTable table;
    table.n_rows = dataset.examples.size();
    table.columns.reserve(prompts.size());
    for (std::size_t p = 0; p < prompts.size(); ++p) {
        FeatureColumn col;
        col.name = "prompt:" + prompts[p].id;
        col.prompt_ids = {prompts[p].id};
        col.excerpt = promptgen::prompt_excerpt(prompts[p]);
        col.verbalizer_id = prompts[p].verbalizer_id;
        col.bits.reserve(table.n_rows);
        for (const auto& cell : cells[p]) col.bits.push_back(cell.bit);
        table.columns.push_back(std::move(col));
    }
    return table;
}

FeatureTable build_knn_table(const core::FeatureMatrix& matrix,
                             std::span<const promptgen::PromptSpec> prompts,
                             const core::Dataset& train, const core::Dataset& target,
                             const KnnTableOptions& options) {
    if (options.prompts_per_group < 1) throw ConfigError("prompts_per_group must be >= 1");
    const std::size_t group_size = static_cast<std::size_t>(options.prompts_per_group);
    const std::size_t n_groups = prompts.size() / group_size;
    if (n_groups == 0) {
        throw ConfigError("need at least " + std::to_string(group_size) +
                          " prompts for one kNN group, got " + std::to_string(prompts.size()));
    }
    const int k_classes = train.labels.k();

    FeatureTable table;
    table.n_rows = target.examples.size();
    for (std::size_t g = 0; g < n_groups; ++g) {
        const auto group = prompts.subspan(g * group_size, group_size);
        const auto train_cells = gather_cells(matrix, group, train);
        const auto target_cells = gather_cells(matrix, group, target);

        auto anchors = std::make_shared<KnnAnchorSet>();
        for (const auto& p : group) anchors->prompt_ids.push_back(p.id);
        std::size_t n_anchor = train.examples.size();
        if (options.max_anchors > 0) {
            n_anchor = std::min<std::size_t>(n_anchor,
                                             static_cast<std::size_t>(options.max_anchors));
        }
        for (std::size_t i = 0; i < n_anchor; ++i) {
            KnnAnchor anchor;
            anchor.example_id = train.examples[i].id;
            anchor.label = train.examples[i].label;
            for (std::size_t p = 0; p < group.size(); ++p) {
                anchor.vectors.push_back(train_cells[p][i].probs);
            }
            anchors->anchors.push_back(std::move(anchor));
        }

        std::vector<int> predictions;
        predictions.reserve(target.examples.size());
        for (std::size_t i = 0; i < target.examples.size(); ++i) {
            std::vector<std::vector<double>> vectors;
            for (std::size_t p = 0; p < group.size(); ++p) {
                vectors.push_back(target_cells[p][i].probs);
            }
            predictions.push_back(knn_predict(*anchors, vectors, options.k));
        }
        const auto columns = binarize_predictions(predictions, k_classes);

        for (int c = 0; c < k_classes; ++c) {
            FeatureColumn col;
            col.name = "knn:g" + std::to_string(g) + ":" + train.labels.name(c);
            col.prompt_ids = anchors->prompt_ids;
            col.excerpt = "kNN group " + std::to_string(g) + " -> " + train.labels.name(c);
            col.verbalizer_id = group.front().verbalizer_id;
            col.is_knn = true;
            col.knn_class = c;
            col.knn_k = options.k;
            col.anchors = anchors;
            col.bits = columns[static_cast<std::size_t>(c)];
            table.columns.push_back(std::move(col));
        }
    }
    return table;
}

std::uint8_t TableBitProvider::bit(int feature) {
    const auto& col = table_->columns.at(static_cast<std::size_t>(feature));
    touched_.insert(col.prompt_ids.begin(), col.prompt_ids.end());
    return col.bits.at(row_);
}

json anchor_set_to_json(const KnnAnchorSet& anchors) {
    json j;
    j["prompt_ids"] = anchors.prompt_ids;
    json list = json::array();
    for (const auto& anchor : anchors.anchors) {
        json a;
        a["example_id"] = anchor.example_id;
        a["label"] = anchor.label;
        a["vectors"] = anchor.vectors;
        list.push_back(std::move(a));
    }
    j["anchors"] = std::move(list);
    return j;
}

KnnAnchorSet anchor_set_from_json(const json& j) {
    KnnAnchorSet set;
    set.prompt_ids = j.at("prompt_ids").get<std::vector<std::string>>();
    for (const auto& a : j.at("anchors")) {
        KnnAnchor anchor;
        anchor.example_id = a.at("example_id").get<int>();
        anchor.label = a.at("label").get<int>();
        anchor.vectors = a.at("vectors").get<std::vector<std::vector<double>>>();
        set.anchors.push_back(std::move(anchor));
    }
    return set;
}

}  // namespace prompttree::features
