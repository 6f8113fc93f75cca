#include "prompttree/harness/model_file.hpp"

#include "prompttree/error.hpp"
#include "prompttree/util/json_io.hpp"

#include <algorithm>
#include <filesystem>
#include <map>

namespace prompttree::harness {

using nlohmann::json;

namespace {

json prompt_binding_to_json(const PromptBinding& binding) {
    json j;
    j["kind"] = binding.spec.kind == promptgen::PromptKind::fewshot ? "fewshot" : "instruction";
    j["template"] = binding.spec.template_text;
    json demos = json::array();
    for (const auto& [text, label] : binding.spec.demonstrations) {
        demos.push_back({{"text", text}, {"label", label}});
    }
    j["demonstrations"] = std::move(demos);
    j["verbalizer"] = binding.spec.verbalizer_id;
    j["tokens"] = binding.tokens;
    j["positive_index"] = binding.positive_index;
    return j;
}

PromptBinding prompt_binding_from_json(const std::string& id, const json& j) {
    PromptBinding binding;
    binding.spec.id = id;
    binding.spec.kind = j.at("kind").get<std::string>() == "fewshot"
                            ? promptgen::PromptKind::fewshot
                            : promptgen::PromptKind::instruction;
    binding.spec.template_text = j.at("template").get<std::string>();
    for (const auto& d : j.at("demonstrations")) {
        binding.spec.demonstrations.emplace_back(d.at("text").get<std::string>(),
                                                 d.at("label").get<std::string>());
    }
    binding.spec.verbalizer_id = j.at("verbalizer").get<std::string>();
    binding.tokens = j.at("tokens").get<std::vector<std::string>>();
    binding.positive_index = j.at("positive_index").get<int>();
    return binding;
}

json feature_to_json(const ModelFeature& feature) {
    json j;
    j["name"] = feature.name;
    j["prompt_ids"] = feature.prompt_ids;
    j["excerpt"] = feature.excerpt;
    j["verbalizer"] = feature.verbalizer_id;
    if (feature.is_knn) {
        j["knn"] = {{"class", feature.knn_class},
                    {"k", feature.knn_k},
                    {"anchors", features::anchor_set_to_json(*feature.anchors)}};
    }
    return j;
}

ModelFeature feature_from_json(const json& j) {
    ModelFeature feature;
    feature.name = j.at("name").get<std::string>();
    feature.prompt_ids = j.at("prompt_ids").get<std::vector<std::string>>();
    feature.excerpt = j.value("excerpt", "");
    feature.verbalizer_id = j.value("verbalizer", "");
    if (j.contains("knn")) {
        feature.is_knn = true;
        feature.knn_class = j["knn"].at("class").get<int>();
        feature.knn_k = j["knn"].at("k").get<int>();
        auto anchors = std::make_shared<features::KnnAnchorSet>(
            features::anchor_set_from_json(j["knn"].at("anchors")));
        feature.anchors = std::move(anchors);
    }
    return feature;
}

std::vector<int> used_feature_indices(const ModelFile& model) {
    if (model.tree_model) return model.tree_model->used_features();
    if (model.greedy_model) return model.greedy_model->used_features();
    if (model.boost_model) return model.boost_model->used_features();
    if (model.gbdt_model) return model.gbdt_model->used_features();
    return {};
}

}  // namespace

ensemble::EnsemblePrediction ModelFile::predict(features::BitProvider& provider) const {
    if (tree_model) {
        const auto p = tree::predict(*tree_model, provider);
        return {p.class_index, p.calls_used};
    }
    if (greedy_model) return greedy_model->predict(provider);
    if (boost_model) return boost_model->predict(provider);
    if (gbdt_model) return gbdt_model->predict(provider);
    throw DataError("model file has no strategy payload");
}

std::string ModelFile::to_dot() const {
    if (!tree_model) {
        throw ConfigError("export-dot supports tree models only; this model is '" + strategy + "'");
    }
    std::vector<tree::DotNodeInfo> info;
    info.reserve(features.size());
    for (const auto& f : features) info.push_back({f.excerpt, f.verbalizer_id});
    return tree::export_dot(*tree_model, info, labels.names());
}

json ModelFile::to_json() const {
    json j;
    j["format"] = "prompttree-model-v1";
    j["strategy"] = strategy;
    j["label_space"] = labels.names();
    j["label_fingerprint"] = labels.fingerprint();
    j["config_fingerprint"] = config_fingerprint;
    j["fit_config"] = fit_config;
    j["fit_log"] = fit_log;
    json feats = json::array();
    for (const auto& f : features) feats.push_back(feature_to_json(f));
    j["features"] = std::move(feats);
    json prompts_json = json::object();
    for (const auto& [id, binding] : prompts) prompts_json[id] = prompt_binding_to_json(binding);
    j["prompts"] = std::move(prompts_json);
    if (tree_model) j["tree"] = tree::tree_to_json(*tree_model);
    if (greedy_model) j["greedy"] = ensemble::greedy_to_json(*greedy_model);
    if (boost_model) j["boost"] = ensemble::boost_to_json(*boost_model);
    if (gbdt_model) j["gbdt"] = ensemble::gbdt_to_json(*gbdt_model);
    return j;
}

ModelFile ModelFile::from_json(const json& j) {
    if (j.value("format", "") != "prompttree-model-v1") {
        throw DataError("not a prompttree model file (missing format marker)");
    }
    ModelFile model;
    model.strategy = j.at("strategy").get<std::string>();
    model.labels = core::LabelSpace(j.at("label_space").get<std::vector<std::string>>());
    if (j.contains("label_fingerprint") &&
        j["label_fingerprint"].get<std::string>() != model.labels.fingerprint()) {
        throw DataError("model label fingerprint does not match its label space");
    }
    model.config_fingerprint = j.value("config_fingerprint", "");
    model.fit_config = j.value("fit_config", json::object());
    model.fit_log = j.value("fit_log", json::object());
    for (const auto& f : j.at("features")) model.features.push_back(feature_from_json(f));
    if (j.contains("prompts")) {
        for (const auto& [id, pj] : j["prompts"].items()) {
            model.prompts.emplace(id, prompt_binding_from_json(id, pj));
        }
    }
    if (j.contains("tree")) model.tree_model = tree::tree_from_json(j["tree"]);
    if (j.contains("greedy")) model.greedy_model = ensemble::greedy_from_json(j["greedy"]);
    if (j.contains("boost")) model.boost_model = ensemble::boost_from_json(j["boost"]);
    if (j.contains("gbdt")) model.gbdt_model = ensemble::gbdt_from_json(j["gbdt"]);
    return model;
}

void ModelFile::save(const std::string& path) const {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    write_text_file(path, canonical_dump(to_json()));
}

ModelFile ModelFile::load(const std::string& path) {
    return from_json(read_json_file(path));
}

ModelFile make_model_file(const std::string& strategy, const features::FeatureTable& table,
                          const std::map<std::string, PromptBinding>& bindings,
                          const core::LabelSpace& labels, const std::string& config_fp,
                          json fit_config, json fit_log,
                          std::optional<tree::DecisionTree> tree_model,
                          std::optional<ensemble::GreedyEnsemble> greedy_model,
                          std::optional<ensemble::BoostEnsemble> boost_model,
                          std::optional<ensemble::GbdtModel> gbdt_model) {
    ModelFile model;
    model.strategy = strategy;
    model.labels = labels;
    model.config_fingerprint = config_fp;
    model.fit_config = std::move(fit_config);
    model.fit_log = std::move(fit_log);
    model.tree_model = std::move(tree_model);
    model.greedy_model = std::move(greedy_model);
    model.boost_model = std::move(boost_model);
    model.gbdt_model = std::move(gbdt_model);

    const std::vector<int> used = used_feature_indices(model);
    std::map<int, int> remap;
    for (int old_index : used) {
        remap[old_index] = static_cast<int>(model.features.size());
        const auto& col = table.columns.at(static_cast<std::size_t>(old_index));
        ModelFeature feature;
        feature.name = col.name;
        feature.prompt_ids = col.prompt_ids;
        feature.excerpt = col.excerpt;
        feature.verbalizer_id = col.verbalizer_id;
        feature.is_knn = col.is_knn;
        feature.knn_class = col.knn_class;
        feature.knn_k = col.knn_k;
        feature.anchors = col.anchors;
        model.features.push_back(std::move(feature));
        for (const auto& pid : col.prompt_ids) {
            if (model.prompts.count(pid)) continue;
            auto it = bindings.find(pid);
            if (it == bindings.end()) throw DataError("no prompt binding for prompt id " + pid);
            model.prompts.emplace(pid, it->second);
        }
    }
    auto remapped = [&](int old_index) {
        auto it = remap.find(old_index);
        if (it == remap.end()) throw DataError("feature index missing from remap");
        return it->second;
    };
    if (model.tree_model) {
        for (auto& node : model.tree_model->nodes) {
            if (!node.is_leaf()) node.feature = remapped(node.feature);
        }
    }
    if (model.greedy_model) {
        for (auto& member : model.greedy_model->members) member.feature = remapped(member.feature);
    }
    if (model.boost_model) {
        for (auto& stump : model.boost_model->stumps) stump.feature = remapped(stump.feature);
    }
    if (model.gbdt_model) {
        for (auto& stage : model.gbdt_model->stages) {
            for (auto& rtree : stage.trees) {
                for (auto& node : rtree.nodes) {
                    if (node.feature >= 0) node.feature = remapped(node.feature);
                }
            }
        }
        for (auto& f : model.gbdt_model->distinct_features) f = remapped(f);
        std::sort(model.gbdt_model->distinct_features.begin(),
                  model.gbdt_model->distinct_features.end());
    }
    return model;
}

}  // namespace prompttree::harness
