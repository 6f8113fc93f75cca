#pragma once

#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

namespace prompttree::harness {

// Evaluation summary for one model on one test split. accuracy is exactly
// correct/n_test; mean_lm_calls is the mean over test examples of the
// distinct prompt evaluations their predictions required.
struct EvalReport {
    double accuracy = 0.0;
    double mean_lm_calls = 0.0;
    long n_test = 0;
    long n_correct = 0;
    long max_calls = 0;
    long abstain_count = 0;
    std::string model_summary;  // strategy + config fingerprint
    std::string config_fingerprint;
    std::vector<std::optional<double>> per_class_accuracy;  // nullopt when unrepresented
    std::vector<long> per_class_count;
    std::vector<std::string> warnings;
};

nlohmann::json report_to_json(const EvalReport& report,
                              const std::vector<std::string>& class_names);
EvalReport report_from_json(const nlohmann::json& j);

// The human-readable table. Rendered from the JSON document alone, so the
// two report forms cannot drift apart.
std::string render_report_text(const nlohmann::json& report_json);

}  // namespace prompttree::harness
