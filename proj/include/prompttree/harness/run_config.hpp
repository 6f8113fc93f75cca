#pragma once

#include "prompttree/core/dataset.hpp"
#include "prompttree/lm/http_backend.hpp"

#include <cstdint>
#include <json.hpp>
#include <string>
#include <vector>

namespace prompttree::harness {

enum class Method { tree, greedy, boost, gbdt, knn_tree };
enum class PromptSource { fewshot, instructions };
enum class BackendKind { mock, http };

std::string to_string(Method method);
Method method_from_string(const std::string& text);
std::string to_string(PromptSource source);
PromptSource prompt_source_from_string(const std::string& text);

// One run configuration: a structured file plus CLI overrides. The seed is
// mandatory; every referenced file must exist when the config is validated.
struct RunConfig {
    // data
    std::string train_path;
    std::string test_path;
    core::DatasetFormat format = core::DatasetFormat::jsonl;
    std::vector<std::string> label_names;  // empty = infer lexicographically
    double train_fraction = 1.0;
    long test_limit = 0;  // 0 = whole test set

    // backend
    BackendKind backend = BackendKind::mock;
    std::string mock_rules_path;
    lm::HttpBackendConfig http;
    std::string model_name = "mock-lm";
    bool cache_wrapper = true;

    // prompt pool
    PromptSource prompt_source = PromptSource::fewshot;
    std::string instructions_path;
    int n_prompts = 16;
    int shots_per_class = 1;
    std::string fewshot_template;  // empty = built-in default

    // verbalizer
    std::string verbalizer = "yes_no";
    bool verbalizer_prepend_space = false;

    // method and fit knobs. budget is the method's primary resource knob:
    // tree depth for tree/knn-tree, member count for greedy, rounds for
    // boost, distinct-feature (LM call) budget for gbdt. 0 = method default.
    Method method = Method::tree;
    int budget = 0;
    int stages = 100;
    double learning_rate = 0.1;
    int gbdt_tree_depth = 3;
    int folds = 3;
    int min_samples_split = 2;
    double min_impurity_decrease = 0.0;

    // kNN features
    int knn_prompts_per_group = 4;
    int knn_k = 1;
    int knn_max_anchors = 0;

    // featurization
    std::string featurize_splits = "all";  // train | test | all
    int parallelism = 4;
    bool completion_matching = false;
    int max_completion_tokens = 8;

    // run layout
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string run_dir = "runs/run";
    std::string cache_dir;  // empty = <run_dir>/cache
    bool cache_only = false;

    // ablation axes (empty = axis not varied)
    std::vector<std::string> ablate_verbalizers;
    std::vector<std::string> ablate_prompt_sources;
    std::vector<double> ablate_train_fractions;

    int effective_budget() const;
    std::string effective_cache_dir() const;
};

RunConfig load_run_config(const std::string& path);
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json run_config_to_json(const RunConfig& config);

// Checks value ranges and that referenced files exist. Throws ConfigError.
void validate_run_config(const RunConfig& config);

// Stable hash of the canonical config JSON; stamped into models and reports
// so result matrices are self-describing.
std::string config_fingerprint(const RunConfig& config);

}  // namespace prompttree::harness
