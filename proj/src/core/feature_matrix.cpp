#include "prompttree/core/feature_matrix.hpp"

#include "prompttree/error.hpp"
#include "prompttree/util/json_io.hpp"

#include <json.hpp>

#include <filesystem>

namespace prompttree::core {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kMetaFile = "meta.json";
constexpr const char* kRecordsFile = "records.jsonl";

json prompt_to_json(const PromptMeta& p) {
    json j;
    j["id"] = p.prompt_id;
    j["tokens"] = p.tokens;
    j["positive_index"] = p.positive_index;
    j["verbalizer"] = p.verbalizer_id;
    j["excerpt"] = p.excerpt;
    return j;
}

PromptMeta prompt_from_json(const json& j) {
    PromptMeta p;
    p.prompt_id = j.at("id").get<std::string>();
    p.tokens = j.at("tokens").get<std::vector<std::string>>();
    p.positive_index = j.at("positive_index").get<int>();
    p.verbalizer_id = j.at("verbalizer").get<std::string>();
    p.excerpt = j.value("excerpt", "");
    return p;
}

}  // namespace

std::unique_ptr<FeatureMatrix> FeatureMatrix::open_dir(const std::string& dir,
                                                       const MatrixProvenance& provenance) {
    auto fm = std::make_unique<FeatureMatrix>(provenance);
    fm->dir_ = dir;
    fs::create_directories(dir);
    const fs::path meta_path = fs::path(dir) / kMetaFile;
    const fs::path records_path = fs::path(dir) / kRecordsFile;

    if (fs::exists(meta_path)) {
        const json meta = read_json_file(meta_path.string());
        fm->provenance_.backend_id = meta.value("backend_id", provenance.backend_id);
        fm->provenance_.model = meta.value("model", provenance.model);
        fm->provenance_.created_at = meta.value("created_at", provenance.created_at);
        for (const auto& pj : meta.at("prompts")) {
            PromptMeta p = prompt_from_json(pj);
            fm->prompt_index_[p.prompt_id] = fm->prompts_.size();
            fm->prompts_.push_back(std::move(p));
        }
    } else {
        fm->write_meta_locked();
    }

    if (fs::exists(records_path)) {
        std::ifstream in(records_path, std::ios::binary);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            json rec;
            try {
                rec = json::parse(line);
            } catch (const json::parse_error&) {
                // A torn final line from an interrupted run is dropped; the
                // cell will simply be recomputed.
                continue;
            }
            FeatureCell cell;
            cell.probs = rec.at("probs").get<std::vector<double>>();
            cell.bit = static_cast<std::uint8_t>(rec.at("bit").get<int>());
            const auto key = std::make_pair(rec.at("p").get<std::string>(), rec.at("e").get<int>());
            auto it = fm->cells_.find(key);
            if (it != fm->cells_.end()) {
                if (it->second.probs != cell.probs || it->second.bit != cell.bit) {
                    throw DataError(records_path.string() + " line " + std::to_string(line_no) +
                                    ": conflicting duplicate record for prompt " + key.first +
                                    " example " + std::to_string(key.second));
                }
                continue;
            }
            fm->cells_.emplace(key, std::move(cell));
        }
    }

    fm->sink_ = std::make_unique<std::ofstream>(records_path, std::ios::binary | std::ios::app);
    if (!*fm->sink_) throw ConfigError("cannot open for append: " + records_path.string());
    return fm;
}

void FeatureMatrix::register_prompt(const PromptMeta& meta) {
    std::unique_lock lock(mutex_);
    auto it = prompt_index_.find(meta.prompt_id);
    if (it != prompt_index_.end()) {
        const PromptMeta& existing = prompts_[it->second];
        if (existing.tokens != meta.tokens || existing.positive_index != meta.positive_index) {
            throw DataError("prompt " + meta.prompt_id +
                            " re-registered with a different verbalizer binding");
        }
        return;
    }
    prompt_index_[meta.prompt_id] = prompts_.size();
    prompts_.push_back(meta);
    if (!dir_.empty()) write_meta_locked();
}

const PromptMeta& FeatureMatrix::prompt_meta(const std::string& prompt_id) const {
    std::shared_lock lock(mutex_);
    auto it = prompt_index_.find(prompt_id);
    if (it == prompt_index_.end()) throw DataError("unknown prompt id: " + prompt_id);
    return prompts_[it->second];
}

std::vector<std::string> FeatureMatrix::prompt_ids() const {
    std::shared_lock lock(mutex_);
    std::vector<std::string> ids;
    ids.reserve(prompts_.size());
    for (const auto& p : prompts_) ids.push_back(p.prompt_id);
    return ids;
}

bool FeatureMatrix::has(const std::string& prompt_id, int example_id) const {
    std::shared_lock lock(mutex_);
    return cells_.count({prompt_id, example_id}) > 0;
}

std::optional<FeatureCell> FeatureMatrix::get(const std::string& prompt_id, int example_id) const {
    std::shared_lock lock(mutex_);
    auto it = cells_.find({prompt_id, example_id});
    if (it == cells_.end()) return std::nullopt;
    return it->second;
}

void FeatureMatrix::put(const std::string& prompt_id, int example_id, std::vector<double> probs,
                        std::uint8_t bit) {
    std::unique_lock lock(mutex_);
    const auto key = std::make_pair(prompt_id, example_id);
    auto it = cells_.find(key);
    if (it != cells_.end()) {
        if (it->second.probs == probs && it->second.bit == bit) return;  // idempotent rewrite
        throw DataError("feature cell already written with a different value: prompt " +
                        prompt_id + " example " + std::to_string(example_id));
    }
    FeatureCell cell{std::move(probs), bit};
    append_record_locked(prompt_id, example_id, cell);
    cells_.emplace(key, std::move(cell));
}

std::size_t FeatureMatrix::cell_count() const {
    std::shared_lock lock(mutex_);
    return cells_.size();
}

void FeatureMatrix::write_meta_locked() const {
    if (dir_.empty()) return;
    json meta;
    meta["format"] = "prompttree-feature-matrix-v1";
    meta["backend_id"] = provenance_.backend_id;
    meta["model"] = provenance_.model;
    meta["created_at"] = provenance_.created_at;
    json prompts = json::array();
    for (const auto& p : prompts_) prompts.push_back(prompt_to_json(p));
    meta["prompts"] = std::move(prompts);
    write_text_file((fs::path(dir_) / kMetaFile).string(), canonical_dump(meta));
}

void FeatureMatrix::append_record_locked(const std::string& prompt_id, int example_id,
                                         const FeatureCell& cell) {
    if (!sink_) return;
    json rec;
    rec["p"] = prompt_id;
    rec["e"] = example_id;
    rec["probs"] = cell.probs;
    rec["bit"] = static_cast<int>(cell.bit);
    *sink_ << rec.dump() << '\n';
    sink_->flush();
}

}  // namespace prompttree::core
