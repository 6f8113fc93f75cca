#include "prompttree/harness/commands.hpp"

#include "prompttree/error.hpp"
#include "prompttree/features/featurize.hpp"
#include "prompttree/lm/cached_backend.hpp"
#include "prompttree/lm/mock_backend.hpp"
#include "prompttree/util/hash.hpp"
#include "prompttree/util/json_io.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <set>
#include <sstream>

namespace prompttree::harness {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kTestIdOffset = 1 << 20;

std::string now_iso8601() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Everything a command needs: datasets, prompt pool, backend and the cache.
struct RunContext {
    core::Dataset train;  // after the train_fraction split
    core::Dataset test;
    bool has_test = false;
    features::VerbalizerRegistry registry;
    std::vector<promptgen::PromptSpec> prompts;
    std::map<std::string, PromptBinding> bindings;
    std::shared_ptr<lm::LmBackend> backend;
    std::unique_ptr<core::FeatureMatrix> matrix;
    std::string matrix_dir;
    std::vector<std::string> warnings;
};

std::shared_ptr<lm::LmBackend> build_backend(const RunConfig& cfg) {
    std::shared_ptr<lm::LmBackend> backend;
    if (cfg.backend == BackendKind::mock) {
        backend = std::make_shared<lm::MockBackend>(
            lm::MockBackend::parse_rules(cfg.mock_rules_path));
    } else {
        lm::HttpBackendConfig http = cfg.http;
        http.model = cfg.model_name;
        backend = std::make_shared<lm::HttpBackend>(http);
    }
    if (cfg.cache_wrapper) backend = std::make_shared<lm::CachedBackend>(backend);
    return backend;
}

RunContext build_context(const RunConfig& cfg) {
    validate_run_config(cfg);
    RunContext ctx;

    std::optional<core::LabelSpace> explicit_labels;
    if (!cfg.label_names.empty()) explicit_labels = core::LabelSpace(cfg.label_names);
    core::Dataset train_full =
        core::load_dataset(cfg.train_path, cfg.format, explicit_labels, core::SplitTag::train);

    if (cfg.train_fraction < 1.0) {
        auto split = core::split_dataset(train_full, cfg.train_fraction, cfg.seed);
        ctx.train = std::move(split.first);
        ctx.warnings = std::move(split.warnings);
    } else {
        ctx.train = std::move(train_full);
    }

    if (!cfg.test_path.empty()) {
        ctx.test = core::load_dataset(cfg.test_path, cfg.format, ctx.train.labels,
                                      core::SplitTag::test);
        if (cfg.test_limit > 0 &&
            static_cast<long>(ctx.test.examples.size()) > cfg.test_limit) {
            ctx.test.examples.resize(static_cast<std::size_t>(cfg.test_limit));
        }
        // Cell keys must be unique across the run's splits, not just within
        // one file, so test ids live in their own range.
        for (auto& example : ctx.test.examples) example.id += kTestIdOffset;
        ctx.has_test = true;
    }

    ctx.registry = features::VerbalizerRegistry::with_defaults(
        ctx.train.labels, {cfg.verbalizer_prepend_space});
    if (!ctx.registry.contains(cfg.verbalizer)) {
        throw ConfigError("unknown verbalizer '" + cfg.verbalizer + "'");
    }

    if (cfg.prompt_source == PromptSource::fewshot) {
        const std::string tmpl = cfg.fewshot_template.empty() ? promptgen::kDefaultFewshotTemplate
                                                              : cfg.fewshot_template;
        ctx.prompts = promptgen::sample_fewshot_prompts(ctx.train, cfg.n_prompts,
                                                        cfg.shots_per_class, cfg.seed, tmpl,
                                                        cfg.verbalizer);
    } else {
        auto loaded = promptgen::load_instruction_prompts(cfg.instructions_path, ctx.registry,
                                                          cfg.verbalizer);
        ctx.prompts = std::move(loaded.prompts);
        for (auto& w : loaded.warnings) ctx.warnings.push_back(std::move(w));
        if (ctx.prompts.empty()) {
            throw ConfigError(cfg.instructions_path + ": no instruction prompts");
        }
    }

    for (const auto& prompt : ctx.prompts) {
        const auto& v = ctx.registry.resolve(prompt.verbalizer_id);
        ctx.bindings[prompt.id] = PromptBinding{prompt, v.tokens, v.positive_index};
    }

    ctx.backend = build_backend(cfg);

    // The cache directory is keyed by backend, model, prompt pool and
    // featurization mode, so ablation cells with the same pool share it.
    std::string key = ctx.backend->id();
    key += '\x1f';
    key += cfg.model_name;
    key += '\x1f';
    key += cfg.completion_matching ? "match" : "probs";
    std::vector<std::string> ids;
    ids.reserve(ctx.prompts.size());
    for (const auto& p : ctx.prompts) ids.push_back(p.id);
    std::sort(ids.begin(), ids.end());
    for (const auto& id : ids) {
        key += '\x1f';
        key += id;
    }
    ctx.matrix_dir =
        (fs::path(cfg.effective_cache_dir()) / ("fm-" + content_id(key))).string();
    ctx.matrix = core::FeatureMatrix::open_dir(
        ctx.matrix_dir, {ctx.backend->id(), cfg.model_name, now_iso8601()});
    return ctx;
}

features::FeaturizeOptions featurize_options(const RunConfig& cfg) {
    features::FeaturizeOptions options;
    options.use_completion_matching = cfg.completion_matching;
    options.max_completion_tokens = cfg.max_completion_tokens;
    options.parallelism = cfg.parallelism;
    return options;
}

json fit_config_json(const RunConfig& cfg) {
    json j;
    j["method"] = to_string(cfg.method);
    j["budget"] = cfg.effective_budget();
    j["seed"] = cfg.seed;
    j["verbalizer"] = cfg.verbalizer;
    j["prompt_source"] = to_string(cfg.prompt_source);
    j["n_prompts"] = cfg.n_prompts;
    j["shots_per_class"] = cfg.shots_per_class;
    j["train_fraction"] = cfg.train_fraction;
    if (cfg.method == Method::gbdt) {
        j["stages"] = cfg.stages;
        j["learning_rate"] = cfg.learning_rate;
        j["tree_depth"] = cfg.gbdt_tree_depth;
    }
    if (cfg.method == Method::greedy) j["folds"] = cfg.folds;
    if (cfg.method == Method::knn_tree) {
        j["knn_prompts_per_group"] = cfg.knn_prompts_per_group;
        j["knn_k"] = cfg.knn_k;
        j["knn_max_anchors"] = cfg.knn_max_anchors;
    }
    return j;
}

tree::TreeConfig tree_config_for(const RunConfig& cfg) {
    tree::TreeConfig tc;
    const int depth_budget = cfg.effective_budget();
    tc.max_depth = depth_budget;
    tc.max_leaf_nodes = depth_budget >= 20 ? (1 << 20) : (1 << depth_budget);
    tc.min_samples_split = cfg.min_samples_split;
    tc.min_impurity_decrease = cfg.min_impurity_decrease;
    return tc;
}

// Lazy per-example feature source backed by the cache, optionally computing
// missing cells through the backend. Tracks distinct prompts touched (the LM
// call cost) and abstain cells served.
class ModelBitProvider : public features::BitProvider {
public:
    ModelBitProvider(const ModelFile& model, core::FeatureMatrix& matrix,
                     const core::Example& example, lm::LmBackend* backend,
                     const features::FeaturizeOptions& options)
        : model_(&model), matrix_(&matrix), example_(&example), backend_(backend),
          options_(options) {}

    std::uint8_t bit(int feature) override {
        auto memo = bits_.find(feature);
        if (memo != bits_.end()) return memo->second;
        const auto& f = model_->features.at(static_cast<std::size_t>(feature));
        std::uint8_t value;
        if (!f.is_knn) {
            value = cell_for(f.prompt_ids.front()).bit;
        } else {
            const int predicted = knn_prediction(f);
            value = predicted == f.knn_class ? 1 : 0;
        }
        bits_[feature] = value;
        return value;
    }

    long distinct_calls() const override { return static_cast<long>(touched_.size()); }
    long abstains() const { return abstains_; }

private:
    int knn_prediction(const ModelFeature& f) {
        auto memo = knn_memo_.find(f.anchors.get());
        if (memo != knn_memo_.end()) return memo->second;
        std::vector<std::vector<double>> vectors;
        vectors.reserve(f.anchors->prompt_ids.size());
        for (const auto& pid : f.anchors->prompt_ids) vectors.push_back(cell_for(pid).probs);
        const int predicted = features::knn_predict(*f.anchors, vectors, f.knn_k);
        knn_memo_[f.anchors.get()] = predicted;
        return predicted;
    }

    core::FeatureCell cell_for(const std::string& prompt_id) {
        touched_.insert(prompt_id);
        auto cell = matrix_->get(prompt_id, example_->id);
        if (!cell.has_value()) {
            if (backend_ == nullptr) {
                throw CacheMissError("feature cell not cached: prompt " + prompt_id +
                                     " example " + std::to_string(example_->id) +
                                     " (cache-only mode)");
            }
            auto binding_it = model_->prompts.find(prompt_id);
            if (binding_it == model_->prompts.end()) {
                throw DataError("model carries no prompt binding for " + prompt_id);
            }
            const PromptBinding& binding = binding_it->second;
            matrix_->register_prompt({prompt_id, binding.tokens, binding.positive_index,
                                      binding.spec.verbalizer_id,
                                      promptgen::prompt_excerpt(binding.spec)});
            features::Verbalizer v{binding.spec.verbalizer_id, features::VerbalizerKind::token_map,
                                   binding.tokens, binding.positive_index};
            const auto value = features::compute_cell(
                promptgen::render(binding.spec, *example_), v, *backend_, options_);
            matrix_->put(prompt_id, example_->id, value.probs, value.bit);
            cell = matrix_->get(prompt_id, example_->id);
        }
        bool all_zero = true;
        for (double p : cell->probs) {
            if (p != 0.0) {
                all_zero = false;
                break;
            }
        }
        if (all_zero && abstained_.insert(prompt_id).second) ++abstains_;
        return *cell;
    }

    const ModelFile* model_;
    core::FeatureMatrix* matrix_;
    const core::Example* example_;
    lm::LmBackend* backend_;
    features::FeaturizeOptions options_;

    std::map<int, std::uint8_t> bits_;
    std::map<const features::KnnAnchorSet*, int> knn_memo_;
    std::set<std::string> touched_;
    std::set<std::string> abstained_;
    long abstains_ = 0;
};

}  // namespace

FeaturizeOutcome cmd_featurize(const RunConfig& cfg) {
    RunContext ctx = build_context(cfg);
    const long calls_before = ctx.backend->call_count();

    FeaturizeOutcome outcome;
    const auto options = featurize_options(cfg);
    const bool do_train = cfg.featurize_splits == "train" || cfg.featurize_splits == "all";
    const bool do_test = cfg.featurize_splits == "test" || cfg.featurize_splits == "all";
    if (cfg.featurize_splits == "test" && !ctx.has_test) {
        throw ConfigError("featurize.splits = test but no test file is configured");
    }
    if (do_train) {
        const auto stats = features::featurize(ctx.prompts, ctx.train, *ctx.backend,
                                               ctx.registry, *ctx.matrix, options);
        outcome.cells_written += stats.cells_written;
        outcome.cells_skipped += stats.cells_skipped;
        outcome.abstains += stats.abstains;
    }
    if (do_test && ctx.has_test) {
        const auto stats = features::featurize(ctx.prompts, ctx.test, *ctx.backend,
                                               ctx.registry, *ctx.matrix, options);
        outcome.cells_written += stats.cells_written;
        outcome.cells_skipped += stats.cells_skipped;
        outcome.abstains += stats.abstains;
    }
    outcome.backend_calls = ctx.backend->call_count() - calls_before;
    outcome.matrix_dir = ctx.matrix_dir;
    return outcome;
}

TrainOutcome cmd_train(const RunConfig& cfg) {
    RunContext ctx = build_context(cfg);
    const auto labels = ctx.train.label_vector();
    const int k = ctx.train.labels.k();
    const std::string config_fp = config_fingerprint(cfg);

    features::FeatureTable table;
    if (cfg.method == Method::knn_tree) {
        features::KnnTableOptions knn_options;
        knn_options.prompts_per_group = cfg.knn_prompts_per_group;
        knn_options.k = cfg.knn_k;
        knn_options.max_anchors = cfg.knn_max_anchors;
        table = features::build_knn_table(*ctx.matrix, ctx.prompts, ctx.train, ctx.train,
                                          knn_options);
        // The anchor sets live next to the cache they were computed from.
        json anchors = json::array();
        std::set<const features::KnnAnchorSet*> seen;
        for (const auto& col : table.columns) {
            if (col.anchors && seen.insert(col.anchors.get()).second) {
                anchors.push_back(features::anchor_set_to_json(*col.anchors));
            }
        }
        write_text_file((fs::path(ctx.matrix_dir) / ("anchors-" + config_fp + ".json")).string(),
                        canonical_dump(anchors));
    } else {
        table = features::build_prompt_table(*ctx.matrix, ctx.prompts, ctx.train);
    }

    std::optional<tree::DecisionTree> tree_model;
    std::optional<ensemble::GreedyEnsemble> greedy_model;
    std::optional<ensemble::BoostEnsemble> boost_model;
    std::optional<ensemble::GbdtModel> gbdt_model;
    json fit_log;

    switch (cfg.method) {
        case Method::tree:
        case Method::knn_tree: {
            const auto tc = tree_config_for(cfg);
            auto model = tree::build_tree(table, labels, k, tc);
            json splits = json::array();
            for (const auto& node : model.nodes) {
                if (node.is_leaf()) continue;
                splits.push_back({{"feature", table.columns[static_cast<std::size_t>(node.feature)].name},
                                  {"depth", node.depth},
                                  {"impurity_decrease", node.decrease}});
            }
            fit_log["splits"] = std::move(splits);
            fit_log["depth"] = model.depth();
            fit_log["leaves"] = model.leaf_count();
            tree_model = std::move(model);
            break;
        }
        case Method::greedy: {
            auto model = ensemble::fit_greedy(table, labels, k, cfg.effective_budget(), cfg.folds);
            json members = json::array();
            for (const auto& m : model.members) {
                members.push_back({{"feature", table.columns[static_cast<std::size_t>(m.feature)].name},
                                   {"cv_accuracy", m.cv_accuracy}});
            }
            fit_log["members"] = std::move(members);
            for (const auto& w : model.warnings) ctx.warnings.push_back(w);
            greedy_model = std::move(model);
            break;
        }
        case Method::boost: {
            auto model = ensemble::fit_adaboost(table, labels, k, cfg.effective_budget());
            json rounds = json::array();
            for (const auto& r : model.rounds) {
                rounds.push_back({{"feature", table.columns[static_cast<std::size_t>(r.feature)].name},
                                  {"weighted_error", r.weighted_error},
                                  {"alpha", r.alpha}});
            }
            fit_log["rounds"] = std::move(rounds);
            fit_log["stopped_early"] = model.stopped_early;
            boost_model = std::move(model);
            break;
        }
        case Method::gbdt: {
            auto model = ensemble::fit_gbdt(table, labels, k, cfg.stages, cfg.learning_rate,
                                            cfg.gbdt_tree_depth, cfg.effective_budget());
            fit_log["initial_log_loss"] = model.fit_log.initial_log_loss;
            fit_log["stage_log_loss"] = model.fit_log.stage_log_loss;
            fit_log["stopped_for_budget"] = model.fit_log.stopped_for_budget;
            fit_log["stages_accepted"] = model.stages.size();
            fit_log["distinct_features_used"] = model.distinct_features.size();
            gbdt_model = std::move(model);
            break;
        }
    }
    fit_log["warnings"] = ctx.warnings;

    ModelFile model = make_model_file(to_string(cfg.method), table, ctx.bindings,
                                      ctx.train.labels, config_fp, fit_config_json(cfg),
                                      fit_log, std::move(tree_model), std::move(greedy_model),
                                      std::move(boost_model), std::move(gbdt_model));

    TrainOutcome outcome;
    outcome.model_path = (fs::path(cfg.run_dir) / "model.json").string();
    outcome.strategy = model.strategy;
    outcome.features_used = static_cast<int>(model.features.size());
    outcome.fit_log = model.fit_log;
    model.save(outcome.model_path);
    return outcome;
}

EvalOutcome cmd_eval(const RunConfig& cfg, const std::string& model_path) {
    RunContext ctx = build_context(cfg);
    if (!ctx.has_test) throw ConfigError("eval needs data.test");
    ModelFile model = ModelFile::load(model_path);
    if (model.labels.fingerprint() != ctx.test.labels.fingerprint()) {
        throw DataError("model was trained on a different label space than the test data");
    }

    lm::LmBackend* live_backend = cfg.cache_only ? nullptr : ctx.backend.get();
    const auto options = featurize_options(cfg);
    const int k = ctx.test.labels.k();

    EvalReport report;
    report.n_test = static_cast<long>(ctx.test.examples.size());
    report.model_summary = model.summary();
    report.config_fingerprint = config_fingerprint(cfg);
    report.per_class_count.assign(static_cast<std::size_t>(k), 0);
    std::vector<long> per_class_correct(static_cast<std::size_t>(k), 0);

    long total_calls = 0;
    for (const auto& example : ctx.test.examples) {
        ModelBitProvider provider(model, *ctx.matrix, example, live_backend, options);
        const auto prediction = model.predict(provider);
        total_calls += prediction.calls_used;
        report.max_calls = std::max(report.max_calls, prediction.calls_used);
        report.abstain_count += provider.abstains();
        report.per_class_count[static_cast<std::size_t>(example.label)]++;
        if (prediction.class_index == example.label) {
            report.n_correct++;
            per_class_correct[static_cast<std::size_t>(example.label)]++;
        }
    }
    report.accuracy = static_cast<double>(report.n_correct) / static_cast<double>(report.n_test);
    report.mean_lm_calls = static_cast<double>(total_calls) / static_cast<double>(report.n_test);
    for (int c = 0; c < k; ++c) {
        const auto cs = static_cast<std::size_t>(c);
        if (report.per_class_count[cs] == 0) {
            report.per_class_accuracy.push_back(std::nullopt);
        } else {
            report.per_class_accuracy.push_back(static_cast<double>(per_class_correct[cs]) /
                                                static_cast<double>(report.per_class_count[cs]));
        }
    }
    report.warnings = ctx.warnings;

    EvalOutcome outcome;
    outcome.report = report;
    outcome.report_json = report_to_json(report, ctx.test.labels.names());
    fs::create_directories(cfg.run_dir);
    outcome.report_json_path = (fs::path(cfg.run_dir) / "report.json").string();
    outcome.report_text_path = (fs::path(cfg.run_dir) / "report.txt").string();
    write_text_file(outcome.report_json_path, canonical_dump(outcome.report_json));
    // The text table is rendered from the JSON document, never recomputed.
    const json parsed = read_json_file(outcome.report_json_path);
    write_text_file(outcome.report_text_path, render_report_text(parsed));
    return outcome;
}

AblateOutcome cmd_ablate(const RunConfig& cfg) {
    validate_run_config(cfg);
    const auto verbalizers = cfg.ablate_verbalizers.empty()
                                 ? std::vector<std::string>{cfg.verbalizer}
                                 : cfg.ablate_verbalizers;
    const auto sources = cfg.ablate_prompt_sources.empty()
                             ? std::vector<std::string>{to_string(cfg.prompt_source)}
                             : cfg.ablate_prompt_sources;
    const auto fractions = cfg.ablate_train_fractions.empty()
                               ? std::vector<double>{cfg.train_fraction}
                               : cfg.ablate_train_fractions;

    AblateOutcome outcome;
    json cells = json::array();
    int index = 0;
    for (const auto& verbalizer : verbalizers) {
        for (const auto& source : sources) {
            for (double fraction : fractions) {
                RunConfig cell_cfg = cfg;
                cell_cfg.verbalizer = verbalizer;
                cell_cfg.prompt_source = prompt_source_from_string(source);
                cell_cfg.train_fraction = fraction;
                cell_cfg.run_dir =
                    (fs::path(cfg.run_dir) / "ablate" / ("cell-" + std::to_string(index))).string();
                // One shared cache root: cells whose prompt pools coincide
                // reuse each other's feature cells.
                cell_cfg.cache_dir = cfg.effective_cache_dir();
                cell_cfg.ablate_verbalizers.clear();
                cell_cfg.ablate_prompt_sources.clear();
                cell_cfg.ablate_train_fractions.clear();

                json cell;
                cell["verbalizer"] = verbalizer;
                cell["prompt_source"] = source;
                cell["train_fraction"] = fraction;
                cell["run_dir"] = cell_cfg.run_dir;
                try {
                    cmd_featurize(cell_cfg);
                    const auto trained = cmd_train(cell_cfg);
                    const auto evaluated = cmd_eval(cell_cfg, trained.model_path);
                    cell["report"] = evaluated.report_json;
                } catch (const Error& e) {
                    cell["error"] = std::string(e.what());
                    outcome.cells_failed++;
                }
                cells.push_back(std::move(cell));
                ++index;
            }
        }
    }
    outcome.cells_total = index;
    outcome.matrix["axes"] = {{"verbalizer", verbalizers},
                              {"prompt_source", sources},
                              {"train_fraction", fractions}};
    outcome.matrix["cells"] = std::move(cells);

    fs::create_directories(cfg.run_dir);
    outcome.matrix_json_path = (fs::path(cfg.run_dir) / "ablate.json").string();
    outcome.matrix_text_path = (fs::path(cfg.run_dir) / "ablate.txt").string();
    write_text_file(outcome.matrix_json_path, canonical_dump(outcome.matrix));

    std::ostringstream text;
    for (const auto& cell : outcome.matrix["cells"]) {
        text << "verbalizer=" << cell["verbalizer"].get<std::string>()
             << " prompt_source=" << cell["prompt_source"].get<std::string>()
             << " train_fraction=" << cell["train_fraction"].get<double>() << ": ";
        if (cell.contains("error")) {
            text << "ERROR " << cell["error"].get<std::string>() << "\n";
        } else {
            text << "accuracy=" << cell["report"]["accuracy"].get<double>()
                 << " mean_lm_calls=" << cell["report"]["mean_lm_calls"].get<double>() << "\n";
        }
    }
    write_text_file(outcome.matrix_text_path, text.str());
    return outcome;
}

std::string cmd_export_dot(const std::string& model_path) {
    return ModelFile::load(model_path).to_dot();
}

}  // namespace prompttree::harness
