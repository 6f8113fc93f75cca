#include "prompttree/harness/run_config.hpp"

#include "prompttree/error.hpp"
#include "prompttree/util/hash.hpp"
#include "prompttree/util/json_io.hpp"

#include <filesystem>

namespace prompttree::harness {

using nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(Method method) {
    switch (method) {
        case Method::tree: return "tree";
        case Method::greedy: return "greedy";
        case Method::boost: return "boost";
        case Method::gbdt: return "gbdt";
        case Method::knn_tree: return "knn-tree";
    }
    return "tree";
}

Method method_from_string(const std::string& text) {
    if (text == "tree") return Method::tree;
    if (text == "greedy") return Method::greedy;
    if (text == "boost") return Method::boost;
    if (text == "gbdt") return Method::gbdt;
    if (text == "knn-tree") return Method::knn_tree;
    throw ConfigError("unknown method: " + text);
}

std::string to_string(PromptSource source) {
    return source == PromptSource::fewshot ? "fewshot" : "instructions";
}

PromptSource prompt_source_from_string(const std::string& text) {
    if (text == "fewshot") return PromptSource::fewshot;
    if (text == "instructions") return PromptSource::instructions;
    throw ConfigError("unknown prompt source: " + text);
}

int RunConfig::effective_budget() const {
    if (budget > 0) return budget;
    switch (method) {
        case Method::tree:
        case Method::knn_tree: return 4;
        case Method::greedy:
        case Method::boost:
        case Method::gbdt: return 40;
    }
    return 4;
}

std::string RunConfig::effective_cache_dir() const {
    if (!cache_dir.empty()) return cache_dir;
    return (fs::path(run_dir) / "cache").string();
}

RunConfig load_run_config(const std::string& path) {
    return run_config_from_json(read_json_file(path));
}

RunConfig run_config_from_json(const json& j) {
    RunConfig cfg;
    if (j.contains("seed")) {
        cfg.seed = j["seed"].get<std::uint64_t>();
        cfg.seed_set = true;
    }
    if (j.contains("data")) {
        const auto& d = j["data"];
        cfg.train_path = d.value("train", "");
        cfg.test_path = d.value("test", "");
        const std::string format = d.value("format", "jsonl");
        if (format == "jsonl") cfg.format = core::DatasetFormat::jsonl;
        else if (format == "csv") cfg.format = core::DatasetFormat::csv;
        else throw ConfigError("data.format must be jsonl or csv");
        cfg.label_names = d.value("labels", std::vector<std::string>{});
        cfg.train_fraction = d.value("train_fraction", 1.0);
        cfg.test_limit = d.value("test_limit", 0L);
    }
    if (j.contains("backend")) {
        const auto& b = j["backend"];
        const std::string kind = b.value("kind", "mock");
        if (kind == "mock") cfg.backend = BackendKind::mock;
        else if (kind == "http") cfg.backend = BackendKind::http;
        else throw ConfigError("backend.kind must be mock or http");
        cfg.mock_rules_path = b.value("rules", "");
        cfg.model_name = b.value("model", cfg.backend == BackendKind::mock ? "mock-lm" : "");
        cfg.cache_wrapper = b.value("cache", true);
        cfg.http.base_url = b.value("base_url", "");
        cfg.http.model = cfg.model_name;
        cfg.http.api_key_env = b.value("api_key_env", "LM_API_KEY");
        cfg.http.max_in_flight = b.value("max_in_flight", 4);
        cfg.http.retries = b.value("retries", 3);
        cfg.http.backoff_ms = b.value("backoff_ms", 500);
        cfg.http.top_n = b.value("top_n", 20);
        cfg.http.timeout_s = b.value("timeout_s", 60);
        const std::string scoring = b.value("scoring", "top_logprobs");
        if (scoring == "top_logprobs") cfg.http.scoring = lm::HttpScoring::top_logprobs;
        else if (scoring == "echo") cfg.http.scoring = lm::HttpScoring::echo;
        else throw ConfigError("backend.scoring must be top_logprobs or echo");
    }
    if (j.contains("prompts")) {
        const auto& p = j["prompts"];
        cfg.prompt_source = prompt_source_from_string(p.value("source", "fewshot"));
        cfg.instructions_path = p.value("instructions", "");
        cfg.n_prompts = p.value("n_prompts", 16);
        cfg.shots_per_class = p.value("shots_per_class", 1);
        cfg.fewshot_template = p.value("template", "");
    }
    if (j.contains("verbalizer")) {
        const auto& v = j["verbalizer"];
        cfg.verbalizer = v.value("id", "yes_no");
        cfg.verbalizer_prepend_space = v.value("prepend_space", false);
    }
    if (j.contains("method")) cfg.method = method_from_string(j["method"].get<std::string>());
    if (j.contains("fit")) {
        const auto& f = j["fit"];
        cfg.budget = f.value("budget", 0);
        cfg.stages = f.value("stages", 100);
        cfg.learning_rate = f.value("learning_rate", 0.1);
        cfg.gbdt_tree_depth = f.value("tree_depth", 3);
        cfg.folds = f.value("folds", 3);
        cfg.min_samples_split = f.value("min_samples_split", 2);
        cfg.min_impurity_decrease = f.value("min_impurity_decrease", 0.0);
    }
    if (j.contains("knn")) {
        const auto& k = j["knn"];
        cfg.knn_prompts_per_group = k.value("prompts_per_group", 4);
        cfg.knn_k = k.value("k", 1);
        cfg.knn_max_anchors = k.value("max_anchors", 0);
    }
    if (j.contains("featurize")) {
        const auto& f = j["featurize"];
        cfg.featurize_splits = f.value("splits", "all");
        cfg.parallelism = f.value("parallelism", 4);
        cfg.completion_matching = f.value("completion_matching", false);
        cfg.max_completion_tokens = f.value("max_completion_tokens", 8);
    }
    cfg.run_dir = j.value("run_dir", "runs/run");
    cfg.cache_dir = j.value("cache_dir", "");
    cfg.cache_only = j.value("cache_only", false);
    if (j.contains("ablate")) {
        const auto& a = j["ablate"];
        cfg.ablate_verbalizers = a.value("verbalizer", std::vector<std::string>{});
        cfg.ablate_prompt_sources = a.value("prompt_source", std::vector<std::string>{});
        cfg.ablate_train_fractions = a.value("train_fraction", std::vector<double>{});
    }
    return cfg;
}

json run_config_to_json(const RunConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["data"] = {{"train", cfg.train_path},
                 {"test", cfg.test_path},
                 {"format", cfg.format == core::DatasetFormat::jsonl ? "jsonl" : "csv"},
                 {"labels", cfg.label_names},
                 {"train_fraction", cfg.train_fraction},
                 {"test_limit", cfg.test_limit}};
    j["backend"] = {{"kind", cfg.backend == BackendKind::mock ? "mock" : "http"},
                    {"rules", cfg.mock_rules_path},
                    {"model", cfg.model_name},
                    {"cache", cfg.cache_wrapper},
                    {"base_url", cfg.http.base_url},
                    {"api_key_env", cfg.http.api_key_env},
                    {"max_in_flight", cfg.http.max_in_flight},
                    {"retries", cfg.http.retries},
                    {"backoff_ms", cfg.http.backoff_ms},
                    {"scoring", cfg.http.scoring == lm::HttpScoring::echo ? "echo" : "top_logprobs"},
                    {"top_n", cfg.http.top_n},
                    {"timeout_s", cfg.http.timeout_s}};
    j["prompts"] = {{"source", to_string(cfg.prompt_source)},
                    {"instructions", cfg.instructions_path},
                    {"n_prompts", cfg.n_prompts},
                    {"shots_per_class", cfg.shots_per_class},
                    {"template", cfg.fewshot_template}};
    j["verbalizer"] = {{"id", cfg.verbalizer}, {"prepend_space", cfg.verbalizer_prepend_space}};
    j["method"] = to_string(cfg.method);
    j["fit"] = {{"budget", cfg.budget},
                {"stages", cfg.stages},
                {"learning_rate", cfg.learning_rate},
                {"tree_depth", cfg.gbdt_tree_depth},
                {"folds", cfg.folds},
                {"min_samples_split", cfg.min_samples_split},
                {"min_impurity_decrease", cfg.min_impurity_decrease}};
    j["knn"] = {{"prompts_per_group", cfg.knn_prompts_per_group},
                {"k", cfg.knn_k},
                {"max_anchors", cfg.knn_max_anchors}};
    j["featurize"] = {{"splits", cfg.featurize_splits},
                      {"parallelism", cfg.parallelism},
                      {"completion_matching", cfg.completion_matching},
                      {"max_completion_tokens", cfg.max_completion_tokens}};
    j["run_dir"] = cfg.run_dir;
    j["cache_dir"] = cfg.cache_dir;
    j["cache_only"] = cfg.cache_only;
    j["ablate"] = {{"verbalizer", cfg.ablate_verbalizers},
                   {"prompt_source", cfg.ablate_prompt_sources},
                   {"train_fraction", cfg.ablate_train_fractions}};
    return j;
}

void validate_run_config(const RunConfig& cfg) {
    if (!cfg.seed_set) throw ConfigError("seed is mandatory; set it in the config or via --seed");
    if (cfg.train_path.empty()) throw ConfigError("data.train is required");
    if (!fs::exists(cfg.train_path)) throw ConfigError("train file not found: " + cfg.train_path);
    if (!cfg.test_path.empty() && !fs::exists(cfg.test_path)) {
        throw ConfigError("test file not found: " + cfg.test_path);
    }
    if (cfg.train_fraction <= 0.0 || cfg.train_fraction > 1.0) {
        throw ConfigError("train_fraction must lie in (0,1]");
    }
    if (cfg.backend == BackendKind::mock) {
        if (cfg.mock_rules_path.empty()) throw ConfigError("backend.rules is required for the mock backend");
        if (!fs::exists(cfg.mock_rules_path)) {
            throw ConfigError("mock rule file not found: " + cfg.mock_rules_path);
        }
    } else {
        if (cfg.http.base_url.empty()) throw ConfigError("backend.base_url is required for the http backend");
        if (cfg.model_name.empty()) throw ConfigError("backend.model is required for the http backend");
    }
    if (cfg.prompt_source == PromptSource::instructions) {
        if (cfg.instructions_path.empty()) {
            throw ConfigError("prompts.instructions is required when prompts.source = instructions");
        }
        if (!fs::exists(cfg.instructions_path)) {
            throw ConfigError("instruction prompt file not found: " + cfg.instructions_path);
        }
    }
    if (cfg.n_prompts < 1) throw ConfigError("prompts.n_prompts must be >= 1");
    if (cfg.shots_per_class < 1) throw ConfigError("prompts.shots_per_class must be >= 1");
    if (cfg.parallelism < 1) throw ConfigError("featurize.parallelism must be >= 1");
    if (cfg.featurize_splits != "train" && cfg.featurize_splits != "test" &&
        cfg.featurize_splits != "all") {
        throw ConfigError("featurize.splits must be train, test or all");
    }
    for (const auto& v : cfg.ablate_prompt_sources) prompt_source_from_string(v);
    for (double f : cfg.ablate_train_fractions) {
        if (f <= 0.0 || f > 1.0) throw ConfigError("ablate.train_fraction values must lie in (0,1]");
    }
}

std::string config_fingerprint(const RunConfig& config) {
    // Output locations and the cache-only switch do not change results, so
    // they stay out of the fingerprint: the same experiment hashed from a
    // different run directory is still the same experiment.
    json j = run_config_to_json(config);
    j.erase("run_dir");
    j.erase("cache_dir");
    j.erase("cache_only");
    return content_id(canonical_dump(j));
}

}  // namespace prompttree::harness
