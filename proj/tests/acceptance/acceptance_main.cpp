// Acceptance suite: one check per release criterion, one PASS/FAIL line
// each, exit code 1 if anything fails. Runs entirely offline against the
// mock backend.

#include "prompttree/ensemble/adaboost.hpp"
#include "prompttree/ensemble/gbdt.hpp"
#include "prompttree/ensemble/greedy.hpp"
#include "prompttree/features/knn.hpp"
#include "prompttree/harness/commands.hpp"
#include "prompttree/tree/tree.hpp"
#include "prompttree/util/json_io.hpp"

#include "../helpers/oracles.hpp"
#include "../helpers/suites.hpp"
#include "../helpers/temp_dir.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace prompttree;
using Clock = std::chrono::steady_clock;

namespace {

struct CheckFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool condition, const std::string& message) {
    if (!condition) throw CheckFailure(message);
}

void require_close(double actual, double expected, double tolerance, const std::string& what) {
    if (std::abs(actual - expected) > tolerance) {
        std::ostringstream msg;
        msg << what << ": expected " << expected << " +/- " << tolerance << ", got " << actual;
        throw CheckFailure(msg.str());
    }
}

double elapsed_ms(Clock::time_point start) {
    return std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(Clock::now() -
                                                                                 start)
        .count();
}

// 1. best_split vs the exhaustive oracle, 100/100 exact, under one second.
void criterion_split_oracle() {
    const auto start = Clock::now();
    std::uint64_t state = 0xdeadbeefcafe1234ULL;
    for (int trial = 0; trial < 100; ++trial) {
        const auto inst = testutil::random_instance(state, 20, 8, 2);
        const auto table = testutil::make_table(inst.columns);
        const tree::TreeConfig config;
        const auto mine = tree::best_split(table, inst.labels, 2, config);
        const auto oracle = testutil::oracle_best_split(inst.columns, inst.labels, 2,
                                                        config.min_impurity_decrease);
        require(mine.has_value() == oracle.has_value(),
                "trial " + std::to_string(trial) + ": split presence mismatch");
        if (mine.has_value()) {
            require(mine->feature == oracle->feature,
                    "trial " + std::to_string(trial) + ": feature index mismatch");
            require_close(mine->child_impurity, oracle->child_impurity, 1e-12,
                          "trial " + std::to_string(trial) + " child impurity");
        }
    }
    require(elapsed_ms(start) < 1000.0, "oracle comparison exceeded 1 s");
}

// 2. Planted-feature end-to-end through featurize -> train -> eval.
void criterion_planted_end_to_end() {
    const auto start = Clock::now();
    testutil::TempDir dir("prompttree-acc");
    const auto suite = testutil::write_planted_suite(dir.str(), 200, 100, 2, 7);
    auto cfg = testutil::planted_config(suite, dir.str("run"), 7);

    const auto featurized = harness::cmd_featurize(cfg);
    require(featurized.backend_calls == 3 * 300,
            "expected 900 backend calls, got " + std::to_string(featurized.backend_calls));
    const auto trained = harness::cmd_train(cfg);
    const auto evaluated = harness::cmd_eval(cfg, trained.model_path);

    require_close(evaluated.report.accuracy, 1.0, 0.0, "planted accuracy");
    require_close(evaluated.report.mean_lm_calls, 1.0, 0.0, "planted mean LM calls");
    const auto model = harness::ModelFile::load(trained.model_path);
    require(model.tree_model.has_value(), "planted model is not a tree");
    require(model.tree_model->internal_count() == 1,
            "expected 1 internal node, got " +
                std::to_string(model.tree_model->internal_count()));
    // mock backend only: every cell carries the offline backend's identity
    require(model.prompts.size() == 1, "tree should reference exactly the planted prompt");
    require(elapsed_ms(start) < 5000.0, "planted pipeline exceeded 5 s");
}

// 3. Depth-2 tree separates XOR at 2 calls; stump ensembles stay <= 0.75.
void criterion_xor_separation() {
    const auto suite = testutil::xor_suite();
    const auto tree_model = tree::build_tree(suite.table, suite.labels, 2, {});
    for (std::size_t row = 0; row < 4; ++row) {
        features::TableBitProvider provider(suite.table, row);
        const auto p = tree::predict(tree_model, provider);
        require(p.class_index == suite.labels[row], "tree mispredicted an XOR pattern");
        require(p.calls_used == 2, "tree used != 2 calls on XOR");
    }
    require(testutil::oracle_xor_stump_bound() == 0.75, "stump-bound oracle is not 0.75");
    for (int budget = 1; budget <= 16; ++budget) {
        const auto boosted = ensemble::fit_adaboost(suite.table, suite.labels, 2, budget);
        long correct = 0;
        for (std::size_t row = 0; row < 4; ++row) {
            if (boosted.predict_row(suite.table, row) == suite.labels[row]) ++correct;
        }
        require(correct <= 3, "adaboost beat 0.75 on XOR");

        const auto greedy = ensemble::fit_greedy(suite.table, suite.labels, 2, budget, 2);
        correct = 0;
        for (std::size_t row = 0; row < 4; ++row) {
            if (greedy.predict_row(suite.table, row) == suite.labels[row]) ++correct;
        }
        require(correct <= 3, "greedy beat 0.75 on XOR");
    }
}

// 4. Pinned unit math for gini and KL.
void criterion_unit_math() {
    require_close(tree::gini(std::vector<long>{4, 4}), 0.5, 1e-12, "gini([4,4])");
    require_close(tree::gini(std::vector<long>{2, 1, 1}), 0.625, 1e-12, "gini([2,1,1])");
    require_close(features::kl_divergence(std::vector<double>{1.0, 0.0},
                                          std::vector<double>{0.5, 0.5}),
                  std::log(2.0), 1e-6, "kl([1,0],[0.5,0.5])");
    require_close(features::kl_divergence(std::vector<double>{0.5, 0.5},
                                          std::vector<double>{0.9, 0.1}),
                  0.5108256237659907, 1e-6, "kl([0.5,0.5],[0.9,0.1])");
}

// 5. kNN prediction vs brute force, 50/50; binarized columns partition rows.
void criterion_knn() {
    std::mt19937_64 gen(31337);
    std::uniform_real_distribution<double> unit(0.01, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const int n_anchors = 1 + static_cast<int>(gen() % 8);
        const int n_prompts = 1 + static_cast<int>(gen() % 4);
        features::KnnAnchorSet set;
        std::vector<std::vector<std::vector<double>>> raw_vectors;
        std::vector<int> raw_labels;
        for (int p = 0; p < n_prompts; ++p) set.prompt_ids.push_back("p" + std::to_string(p));
        for (int a = 0; a < n_anchors; ++a) {
            features::KnnAnchor anchor;
            anchor.example_id = a;
            anchor.label = static_cast<int>(gen() % 4);
            for (int p = 0; p < n_prompts; ++p) anchor.vectors.push_back({unit(gen), unit(gen)});
            raw_vectors.push_back(anchor.vectors);
            raw_labels.push_back(anchor.label);
            set.anchors.push_back(std::move(anchor));
        }
        std::vector<std::vector<double>> x;
        for (int p = 0; p < n_prompts; ++p) x.push_back({unit(gen), unit(gen)});
        require(features::knn_predict(set, x) ==
                    testutil::oracle_knn_label(raw_vectors, raw_labels, x),
                "kNN disagreed with the oracle on trial " + std::to_string(trial));
    }

    std::vector<int> predictions;
    for (int i = 0; i < 40; ++i) predictions.push_back(static_cast<int>(gen() % 5));
    const auto columns = features::binarize_predictions(predictions, 5);
    for (std::size_t row = 0; row < predictions.size(); ++row) {
        int sum = 0;
        for (const auto& col : columns) sum += col[row];
        require(sum == 1, "binarized row does not sum to 1");
    }
}

// 6. Call accounting: the unbalanced-tree mean and the GBDT feature budget.
void criterion_call_accounting() {
    // A three-marker task whose learned tree is unbalanced by construction:
    // no "redwood" settles the label at depth 1; otherwise the label is the
    // parity of "quartz" and "falcon", forcing two more levels.
    testutil::TempDir dir("prompttree-acc6");
    const auto marker_text = [](int a, int b, int c, int i) {
        std::string text = "case " + std::to_string(i);
        if (a) text += " redwood";
        if (b) text += " quartz";
        if (c) text += " falcon";
        return text + " end";
    };
    const auto marker_label = [](int a, int b, int c) {
        return (a == 1 && (b ^ c) == 1) ? "yes" : "no";
    };
    {
        std::string train_out, test_out;
        int i = 0;
        for (int repeat = 0; repeat < 2; ++repeat) {
            for (int a = 0; a < 2; ++a) {
                for (int b = 0; b < 2; ++b) {
                    for (int c = 0; c < 2; ++c) {
                        nlohmann::json rec;
                        rec["text"] = marker_text(a, b, c, i++);
                        rec["label"] = marker_label(a, b, c);
                        train_out += rec.dump();
                        train_out += '\n';
                    }
                }
            }
        }
        // Test: four examples at depth 1 (no redwood), four at depth 3.
        for (int b = 0; b < 2; ++b) {
            for (int c = 0; c < 2; ++c) {
                for (int a = 0; a < 2; ++a) {
                    nlohmann::json rec;
                    rec["text"] = marker_text(a, b, c, i++);
                    rec["label"] = marker_label(a, b, c);
                    test_out += rec.dump();
                    test_out += '\n';
                }
            }
        }
        write_text_file(dir.str("train.jsonl"), train_out);
        write_text_file(dir.str("test.jsonl"), test_out);

        nlohmann::json instructions = nlohmann::json::array();
        nlohmann::json rules = nlohmann::json::array();
        int priority = 0;
        for (const std::string word : {"redwood", "quartz", "falcon"}) {
            instructions.push_back({{"template", "Does the text mention " + word + "? {input}"},
                                    {"verbalizer", "yes_no"}});
            rules.push_back({{"pattern", word + "\\?.*" + word},
                             {"match", "regex"},
                             {"priority", priority++},
                             {"token_logits", {{"Yes", 4.0}, {"No", 0.0}}}});
            rules.push_back({{"pattern", word + "?"},
                             {"match", "substring"},
                             {"priority", priority++},
                             {"token_logits", {{"Yes", 0.0}, {"No", 4.0}}}});
        }
        rules.push_back({{"pattern", ""}, {"priority", 100}, {"token_logits", {{"Yes", 0.0}}}});
        write_text_file(dir.str("instructions.json"), canonical_dump(instructions));
        write_text_file(dir.str("rules.json"), canonical_dump(rules));
    }
    testutil::PlantedSuite files;
    files.train_path = dir.str("train.jsonl");
    files.test_path = dir.str("test.jsonl");
    files.rules_path = dir.str("rules.json");
    files.instructions_path = dir.str("instructions.json");
    auto cfg = testutil::planted_config(files, dir.str("run"), 1);
    harness::cmd_featurize(cfg);
    const auto trained = harness::cmd_train(cfg);
    const auto model = harness::ModelFile::load(trained.model_path);
    require(model.tree_model.has_value() && model.tree_model->depth() == 3,
            "marker tree is not depth 3");
    const auto evaluated = harness::cmd_eval(cfg, trained.model_path);
    require_close(evaluated.report.accuracy, 1.0, 0.0, "marker accuracy");
    require_close(evaluated.report.mean_lm_calls, 2.0, 0.0,
                  "mean LM calls of the unbalanced tree");
    require(evaluated.report.max_calls == 3, "expected max 3 calls per example");

    // GBDT never exceeds its distinct-feature budget.
    std::uint64_t state = 555;
    for (int trial = 0; trial < 3; ++trial) {
        auto inst = testutil::random_instance(state, 40, 60, 2);
        const auto table = testutil::make_table(inst.columns);
        const auto boosted = ensemble::fit_gbdt(table, inst.labels, 2, 100, 0.1, 3, 40);
        require(static_cast<int>(boosted.distinct_features.size()) <= 40,
                "gbdt exceeded its 40-feature budget");
    }
    const auto xs = testutil::xor_suite();
    const auto xor_boosted = ensemble::fit_gbdt(xs.table, xs.labels, 2, 100, 0.1, 3, 40);
    require(static_cast<int>(xor_boosted.distinct_features.size()) <= 40,
            "gbdt exceeded its budget on XOR");
}

// 7. GBDT on the planted suite: monotone training loss, perfect within 10
// stages at the default configuration (lr=0.1, depth 3).
void criterion_gbdt_behavior() {
    std::vector<std::uint8_t> bits;
    std::vector<int> labels;
    for (int i = 0; i < 60; ++i) {
        bits.push_back(static_cast<std::uint8_t>(i % 2));
        labels.push_back(i % 2);
    }
    const auto table = testutil::make_table({bits});
    const auto model = ensemble::fit_gbdt(table, labels, 2, 10, 0.1, 3, 40);
    double previous = model.fit_log.initial_log_loss;
    for (double loss : model.fit_log.stage_log_loss) {
        require(loss <= previous + 1e-9, "training log-loss increased across stages");
        previous = loss;
    }
    long correct = 0;
    for (std::size_t row = 0; row < labels.size(); ++row) {
        if (model.predict_row(table, row) == labels[row]) ++correct;
    }
    require(correct == static_cast<long>(labels.size()),
            "gbdt did not reach training accuracy 1.0 within 10 stages");
}

// 8. Determinism and lossless round-trips.
void criterion_determinism_roundtrip() {
    testutil::TempDir dir("prompttree-acc8");
    const auto suite = testutil::write_planted_suite(dir.str(), 40, 20, 2, 77);

    for (const auto method : {harness::Method::tree, harness::Method::gbdt}) {
        std::vector<std::string> model_bytes, report_bytes;
        for (int run = 0; run < 2; ++run) {
            auto cfg = testutil::planted_config(
                suite, dir.str("run-" + harness::to_string(method) + "-" + std::to_string(run)),
                77);
            cfg.method = method;
            harness::cmd_featurize(cfg);
            const auto trained = harness::cmd_train(cfg);
            const auto evaluated = harness::cmd_eval(cfg, trained.model_path);
            model_bytes.push_back(read_text_file(trained.model_path));
            report_bytes.push_back(read_text_file(evaluated.report_json_path));
        }
        require(model_bytes[0] == model_bytes[1],
                harness::to_string(method) + " model files differ across reruns");
        require(report_bytes[0] == report_bytes[1],
                harness::to_string(method) + " reports differ across reruns");
    }

    // Dataset round-trip.
    const auto ds = core::load_dataset(suite.train_path, core::DatasetFormat::jsonl);
    core::write_dataset_jsonl(ds, dir.str("copy.jsonl"));
    const auto back =
        core::load_dataset(dir.str("copy.jsonl"), core::DatasetFormat::jsonl, ds.labels);
    require(back.examples.size() == ds.examples.size(), "dataset round-trip changed size");
    for (std::size_t i = 0; i < ds.examples.size(); ++i) {
        require(back.examples[i].id == ds.examples[i].id &&
                    back.examples[i].text == ds.examples[i].text &&
                    back.examples[i].label == ds.examples[i].label,
                "dataset round-trip changed example " + std::to_string(i));
    }

    // Model round-trip.
    auto cfg = testutil::planted_config(suite, dir.str("run-rt"), 77);
    harness::cmd_featurize(cfg);
    const auto trained = harness::cmd_train(cfg);
    const auto model = harness::ModelFile::load(trained.model_path);
    require(canonical_dump(model.to_json()) == read_text_file(trained.model_path),
            "model JSON round-trip is not lossless");

    // Feature matrix round-trip: reopening replays identical cells.
    const auto fm_a = core::FeatureMatrix::open_dir(dir.str("fm"), {"mock", "m", "t"});
    fm_a->register_prompt({"p", {"Yes", "No"}, 0, "yes_no", ""});
    fm_a->put("p", 0, {0.123456789012345, 0.876543210987655}, 0);
    fm_a->put("p", 1, {0.0, 0.0}, 0);
    const auto fm_b = core::FeatureMatrix::open_dir(dir.str("fm"), {"mock", "m", "t2"});
    require(fm_b->cell_count() == 2, "feature matrix lost cells on reopen");
    require(fm_b->get("p", 0)->probs == std::vector<double>{0.123456789012345, 0.876543210987655},
            "feature matrix probabilities did not round-trip exactly");
}

// 9. AdaBoost contract: weights stay distributions; chance stumps halt.
void criterion_adaboost_contract() {
    const auto table = testutil::make_table({{0, 0, 0, 1, 1, 1, 1, 0},
                                             {0, 1, 0, 1, 0, 1, 1, 1},
                                             {0, 0, 1, 1, 1, 0, 1, 1}});
    const std::vector<int> labels = {0, 0, 0, 0, 1, 1, 1, 1};
    const auto model = ensemble::fit_adaboost(table, labels, 2, 30);
    require(!model.rounds.empty(), "boosting accepted no rounds");
    for (const auto& round : model.rounds) {
        require(std::abs(round.weight_sum - 1.0) <= 1e-9,
                "weight vector is not a distribution after a round");
    }

    const auto xs = testutil::xor_suite();
    const auto chance = ensemble::fit_adaboost(xs.table, xs.labels, 2, 10);
    require(chance.stumps.empty(), "a zero-alpha stump was added");
    require(chance.stopped_early, "fitting did not halt at the chance bound");
}

struct Criterion {
    int number;
    std::string name;
    std::function<void()> run;
};

}  // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {1, "split oracle agreement (100 random instances, < 1 s)", criterion_split_oracle},
        {2, "planted-feature end-to-end (accuracy 1.0, 1.0 LM calls, 1 split, < 5 s)",
         criterion_planted_end_to_end},
        {3, "tree-vs-stump separation on XOR (1.0 at 2 calls vs <= 0.75)",
         criterion_xor_separation},
        {4, "unit math: gini and KL pinned values", criterion_unit_math},
        {5, "kNN features match brute force; binarization partitions rows", criterion_knn},
        {6, "call accounting: unbalanced tree mean 2.0, GBDT budget <= 40",
         criterion_call_accounting},
        {7, "GBDT monotone training loss and perfect planted fit", criterion_gbdt_behavior},
        {8, "determinism and lossless round-trips", criterion_determinism_roundtrip},
        {9, "AdaBoost weight distribution and chance-stump halt", criterion_adaboost_contract},
    };

    int failures = 0;
    for (const auto& criterion : criteria) {
        try {
            criterion.run();
            std::printf("[PASS] criterion %d: %s\n", criterion.number, criterion.name.c_str());
        } catch (const std::exception& e) {
            std::printf("[FAIL] criterion %d: %s\n       %s\n", criterion.number,
                        criterion.name.c_str(), e.what());
            ++failures;
        }
    }
    if (failures > 0) {
        std::printf("%d criterion(s) failed\n", failures);
        return 1;
    }
    std::printf("all %zu criteria passed\n", criteria.size());
    return 0;
}
