#include "prompttree/error.hpp"
#include "prompttree/harness/commands.hpp"
#include "prompttree/harness/report.hpp"
#include "prompttree/harness/run_config.hpp"
#include "prompttree/util/json_io.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

namespace {

using namespace prompttree;
using harness::RunConfig;

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> method;
    std::optional<int> budget;
    std::optional<int> stages;
    std::optional<double> learning_rate;
    std::optional<int> tree_depth;
    std::optional<int> n_prompts;
    std::optional<int> shots;
    std::optional<std::string> prompt_source;
    std::optional<std::string> verbalizer;
    std::optional<double> train_fraction;
    std::optional<long> test_limit;
    std::optional<std::string> run_dir;
    std::optional<std::string> cache_dir;
    std::optional<std::string> instructions;
    std::optional<std::string> mock_rules;
    std::optional<int> parallelism;
    bool cache_only = false;
};

void add_override_flags(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--seed", o.seed, "Run seed (mandatory unless set in the config)");
    cmd->add_option("--method", o.method, "tree | greedy | boost | gbdt | knn-tree");
    cmd->add_option("--budget", o.budget,
                    "Method budget: tree depth, members, rounds or LM-call ceiling");
    cmd->add_option("--stages", o.stages, "GBDT boosting stages");
    cmd->add_option("--lr", o.learning_rate, "GBDT learning rate");
    cmd->add_option("--tree-depth", o.tree_depth, "GBDT per-tree depth");
    cmd->add_option("--n-prompts", o.n_prompts, "Few-shot prompt pool size");
    cmd->add_option("--shots", o.shots, "Demonstrations per class per prompt");
    cmd->add_option("--prompt-source", o.prompt_source, "fewshot | instructions");
    cmd->add_option("--verbalizer", o.verbalizer, "Verbalizer id (yes_no, class_names, ...)");
    cmd->add_option("--train-fraction", o.train_fraction, "Fraction of training data used");
    cmd->add_option("--test-limit", o.test_limit, "Evaluate at most N test examples");
    cmd->add_option("--run-dir", o.run_dir, "Output directory for this run");
    cmd->add_option("--cache-dir", o.cache_dir, "Feature cache root");
    cmd->add_option("--instructions", o.instructions, "Instruction prompt file");
    cmd->add_option("--mock-rules", o.mock_rules, "Mock backend rule file");
    cmd->add_option("--parallelism", o.parallelism, "Featurization worker threads");
    cmd->add_flag("--cache-only", o.cache_only, "Fail instead of issuing backend calls");
}

RunConfig make_config(const std::string& config_path, const Overrides& o) {
    RunConfig cfg = config_path.empty() ? RunConfig{} : harness::load_run_config(config_path);
    if (o.seed) {
        cfg.seed = *o.seed;
        cfg.seed_set = true;
    }
    if (o.method) cfg.method = harness::method_from_string(*o.method);
    if (o.budget) cfg.budget = *o.budget;
    if (o.stages) cfg.stages = *o.stages;
    if (o.learning_rate) cfg.learning_rate = *o.learning_rate;
    if (o.tree_depth) cfg.gbdt_tree_depth = *o.tree_depth;
    if (o.n_prompts) cfg.n_prompts = *o.n_prompts;
    if (o.shots) cfg.shots_per_class = *o.shots;
    if (o.prompt_source) cfg.prompt_source = harness::prompt_source_from_string(*o.prompt_source);
    if (o.verbalizer) cfg.verbalizer = *o.verbalizer;
    if (o.train_fraction) cfg.train_fraction = *o.train_fraction;
    if (o.test_limit) cfg.test_limit = *o.test_limit;
    if (o.run_dir) cfg.run_dir = *o.run_dir;
    if (o.cache_dir) cfg.cache_dir = *o.cache_dir;
    if (o.instructions) cfg.instructions_path = *o.instructions;
    if (o.mock_rules) cfg.mock_rules_path = *o.mock_rules;
    if (o.parallelism) cfg.parallelism = *o.parallelism;
    if (o.cache_only) cfg.cache_only = true;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"prompttree: decision trees over prompt-LM split features"};
    app.require_subcommand(1);

    std::string config_path;
    Overrides o;

    auto* featurize = app.add_subcommand("featurize", "Fill the feature cache for the run");
    featurize->add_option("--config", config_path, "Run config file (JSON)");
    add_override_flags(featurize, o);

    auto* train = app.add_subcommand("train", "Fit a model over the cached features");
    train->add_option("--config", config_path, "Run config file (JSON)");
    add_override_flags(train, o);

    std::string model_path;
    auto* eval = app.add_subcommand("eval", "Evaluate a model on the test split");
    eval->add_option("--config", config_path, "Run config file (JSON)");
    eval->add_option("--model", model_path, "Model file (default <run_dir>/model.json)");
    add_override_flags(eval, o);

    auto* ablate = app.add_subcommand("ablate", "Run the configured ablation matrix");
    ablate->add_option("--config", config_path, "Run config file (JSON)");
    add_override_flags(ablate, o);

    std::string dot_output;
    auto* export_dot = app.add_subcommand("export-dot", "Write a trained tree as Graphviz DOT");
    export_dot->add_option("--model", model_path, "Model file")->required();
    export_dot->add_option("-o,--output", dot_output, "Output path (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (featurize->parsed()) {
            const RunConfig cfg = make_config(config_path, o);
            const auto outcome = harness::cmd_featurize(cfg);
            std::cout << "feature cache: " << outcome.matrix_dir << "\n"
                      << "cells written: " << outcome.cells_written
                      << " (skipped " << outcome.cells_skipped << " cached)\n"
                      << "backend calls: " << outcome.backend_calls << "\n";
            if (outcome.abstains > 0) std::cout << "abstains:      " << outcome.abstains << "\n";
        } else if (train->parsed()) {
            const RunConfig cfg = make_config(config_path, o);
            const auto outcome = harness::cmd_train(cfg);
            std::cout << "model: " << outcome.model_path << "\n"
                      << "strategy: " << outcome.strategy << "\n"
                      << "features used: " << outcome.features_used << "\n"
                      << "fit log: " << outcome.fit_log.dump(2) << "\n";
        } else if (eval->parsed()) {
            const RunConfig cfg = make_config(config_path, o);
            const std::string path =
                model_path.empty() ? cfg.run_dir + "/model.json" : model_path;
            const auto outcome = harness::cmd_eval(cfg, path);
            std::cout << harness::render_report_text(outcome.report_json);
            std::cout << "report: " << outcome.report_json_path << "\n";
        } else if (ablate->parsed()) {
            const RunConfig cfg = make_config(config_path, o);
            const auto outcome = harness::cmd_ablate(cfg);
            std::cout << read_text_file(outcome.matrix_text_path);
            std::cout << "cells: " << outcome.cells_total << " (" << outcome.cells_failed
                      << " failed)\n"
                      << "matrix: " << outcome.matrix_json_path << "\n";
            if (outcome.cells_failed > 0) return 2;
        } else if (export_dot->parsed()) {
            const std::string dot = harness::cmd_export_dot(model_path);
            if (dot_output.empty()) {
                std::cout << dot;
            } else {
                write_text_file(dot_output, dot);
                std::cout << "wrote " << dot_output << "\n";
            }
        }
    } catch (const CacheMissError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
