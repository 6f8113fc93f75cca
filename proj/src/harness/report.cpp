#include "prompttree/harness/report.hpp"

#include "prompttree/error.hpp"

#include <iomanip>
#include <sstream>

namespace prompttree::harness {

using nlohmann::json;

json report_to_json(const EvalReport& report, const std::vector<std::string>& class_names) {
    json j;
    j["accuracy"] = report.accuracy;
    j["mean_lm_calls"] = report.mean_lm_calls;
    j["n_test"] = report.n_test;
    j["n_correct"] = report.n_correct;
    j["max_calls"] = report.max_calls;
    j["abstain_count"] = report.abstain_count;
    j["model_summary"] = report.model_summary;
    j["config_fingerprint"] = report.config_fingerprint;
    json per_class = json::array();
    for (std::size_t c = 0; c < report.per_class_accuracy.size(); ++c) {
        json entry;
        entry["class"] = c < class_names.size() ? class_names[c] : std::to_string(c);
        entry["count"] = c < report.per_class_count.size() ? report.per_class_count[c] : 0;
        if (report.per_class_accuracy[c].has_value()) {
            entry["accuracy"] = *report.per_class_accuracy[c];
        } else {
            entry["accuracy"] = nullptr;
        }
        per_class.push_back(std::move(entry));
    }
    j["per_class"] = std::move(per_class);
    j["warnings"] = report.warnings;
    return j;
}

EvalReport report_from_json(const json& j) {
    EvalReport report;
    report.accuracy = j.at("accuracy").get<double>();
    report.mean_lm_calls = j.at("mean_lm_calls").get<double>();
    report.n_test = j.at("n_test").get<long>();
    report.n_correct = j.at("n_correct").get<long>();
    report.max_calls = j.at("max_calls").get<long>();
    report.abstain_count = j.at("abstain_count").get<long>();
    report.model_summary = j.at("model_summary").get<std::string>();
    report.config_fingerprint = j.at("config_fingerprint").get<std::string>();
    for (const auto& entry : j.at("per_class")) {
        report.per_class_count.push_back(entry.at("count").get<long>());
        if (entry.at("accuracy").is_null()) {
            report.per_class_accuracy.push_back(std::nullopt);
        } else {
            report.per_class_accuracy.push_back(entry.at("accuracy").get<double>());
        }
    }
    report.warnings = j.value("warnings", std::vector<std::string>{});
    return report;
}

std::string render_report_text(const json& j) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(4);
    out << "model           " << j.at("model_summary").get<std::string>() << "\n";
    out << "config          " << j.at("config_fingerprint").get<std::string>() << "\n";
    out << "test examples   " << j.at("n_test").get<long>() << "\n";
    out << "accuracy        " << j.at("accuracy").get<double>() << "  (" << j.at("n_correct").get<long>()
        << "/" << j.at("n_test").get<long>() << ")\n";
    out << "mean LM calls   " << j.at("mean_lm_calls").get<double>() << "  (max "
        << j.at("max_calls").get<long>() << ")\n";
    out << "abstains        " << j.at("abstain_count").get<long>() << "\n";
    out << "per-class accuracy:\n";
    for (const auto& entry : j.at("per_class")) {
        out << "  " << std::setw(16) << std::left << entry.at("class").get<std::string>()
            << std::right;
        if (entry.at("accuracy").is_null()) {
            out << "   n/a";
        } else {
            out << std::setw(8) << entry.at("accuracy").get<double>();
        }
        out << "  (n=" << entry.at("count").get<long>() << ")\n";
    }
    const auto warnings = j.value("warnings", std::vector<std::string>{});
    if (!warnings.empty()) {
        out << "warnings:\n";
        for (const auto& w : warnings) out << "  - " << w << "\n";
    }
    return out.str();
}

}  // namespace prompttree::harness
