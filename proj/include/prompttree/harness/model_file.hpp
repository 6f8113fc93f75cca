#pragma once

#include "prompttree/core/dataset.hpp"
#include "prompttree/ensemble/adaboost.hpp"
#include "prompttree/ensemble/gbdt.hpp"
#include "prompttree/ensemble/greedy.hpp"
#include "prompttree/features/feature_table.hpp"
#include "prompttree/tree/tree.hpp"

#include <json.hpp>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace prompttree::harness {

// A prompt together with the verbalizer binding it was featurized under, so
// a loaded model can re-issue its own LM queries.
struct PromptBinding {
    promptgen::PromptSpec spec;
    std::vector<std::string> tokens;
    int positive_index = 0;
};

// One split feature as referenced by model node/member indices. Plain
// features carry one prompt id; kNN features carry the group's prompt ids
// plus the anchor set.
struct ModelFeature {
    std::string name;
    std::vector<std::string> prompt_ids;
    std::string excerpt;
    std::string verbalizer_id;
    bool is_knn = false;
    int knn_class = -1;
    int knn_k = 1;
    std::shared_ptr<const features::KnnAnchorSet> anchors;
};

// Self-contained serialized model: strategy payload, the compacted feature
// list it references, the prompts behind those features, label space and
// config fingerprints, and the fit log.
struct ModelFile {
    std::string strategy;  // tree | greedy | boost | gbdt | knn-tree
    core::LabelSpace labels;
    std::string config_fingerprint;
    nlohmann::json fit_config;
    nlohmann::json fit_log;

    std::vector<ModelFeature> features;
    std::map<std::string, PromptBinding> prompts;

    std::optional<tree::DecisionTree> tree_model;
    std::optional<ensemble::GreedyEnsemble> greedy_model;
    std::optional<ensemble::BoostEnsemble> boost_model;
    std::optional<ensemble::GbdtModel> gbdt_model;

    std::string summary() const { return strategy + ":" + config_fingerprint; }

    // Routes to the strategy payload; calls_used is the provider's distinct
    // prompt-call delta.
    ensemble::EnsemblePrediction predict(features::BitProvider& provider) const;

    std::string to_dot() const;  // tree strategies only

    nlohmann::json to_json() const;
    static ModelFile from_json(const nlohmann::json& j);
    void save(const std::string& path) const;
    static ModelFile load(const std::string& path);
};

// Compacts the feature table onto the features the fitted model actually
// references (remapping indices) and packages everything into a ModelFile.
ModelFile make_model_file(const std::string& strategy, const features::FeatureTable& table,
                          const std::map<std::string, PromptBinding>& bindings,
                          const core::LabelSpace& labels, const std::string& config_fp,
                          nlohmann::json fit_config, nlohmann::json fit_log,
                          std::optional<tree::DecisionTree> tree_model,
                          std::optional<ensemble::GreedyEnsemble> greedy_model,
                          std::optional<ensemble::BoostEnsemble> boost_model,
                          std::optional<ensemble::GbdtModel> gbdt_model);

}  // namespace prompttree::harness
