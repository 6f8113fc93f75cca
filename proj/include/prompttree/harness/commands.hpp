#pragma once

#include "prompttree/harness/model_file.hpp"
#include "prompttree/harness/report.hpp"
#include "prompttree/harness/run_config.hpp"

#include <json.hpp>
#include <string>

namespace prompttree::harness {

struct FeaturizeOutcome {
    long backend_calls = 0;  // call_count delta actually spent by this run
    long cells_written = 0;
    long cells_skipped = 0;
    long abstains = 0;
    std::string matrix_dir;
};

// Builds the prompt pool, opens (or resumes) the feature cache and fills the
// missing cells for the configured splits.
FeaturizeOutcome cmd_featurize(const RunConfig& config);

struct TrainOutcome {
    std::string model_path;
    std::string strategy;
    int features_used = 0;
    nlohmann::json fit_log;
};

// Fits the configured method over the cached feature matrix and writes
// <run_dir>/model.json. Identical configs produce byte-identical files.
TrainOutcome cmd_train(const RunConfig& config);

struct EvalOutcome {
    EvalReport report;
    nlohmann::json report_json;
    std::string report_json_path;
    std::string report_text_path;
};

// Evaluates a model file on the test split, writing report.json and the
// derived report.txt into the run directory. With cache_only set, any
// feature cell absent from the cache raises CacheMissError instead of
// touching the backend.
EvalOutcome cmd_eval(const RunConfig& config, const std::string& model_path);

struct AblateOutcome {
    nlohmann::json matrix;
    std::string matrix_json_path;
    std::string matrix_text_path;
    int cells_total = 0;
    int cells_failed = 0;
};

// Cartesian product over the configured ablation axes (verbalizer, prompt
// source, train fraction). Each cell runs featurize + train + eval; cell
// failures are recorded in the matrix and the sweep continues.
AblateOutcome cmd_ablate(const RunConfig& config);

// DOT text for a trained tree model.
std::string cmd_export_dot(const std::string& model_path);

}  // namespace prompttree::harness
