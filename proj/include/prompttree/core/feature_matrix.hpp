#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

namespace prompttree::core {

// One stored (prompt, example) outcome: the raw probabilities over the
// prompt's verbalizer tokens plus the derived bit. An all-zero probability
// vector is the abstain marker from completion matching and always decodes
// to bit 0.
struct FeatureCell {
    std::vector<double> probs;
    std::uint8_t bit = 0;
};

struct PromptMeta {
    std::string prompt_id;
    std::vector<std::string> tokens;   // verbalizer tokens the probs align to
    int positive_index = 0;
    std::string verbalizer_id;
    std::string excerpt;               // short template excerpt for rendering
};

struct MatrixProvenance {
    std::string backend_id;
    std::string model;
    std::string created_at;
};

// Cache of per-(prompt, example) LM outcomes shared by every learner.
//
// Cells are write-once: a second put with the same value is a no-op, a
// conflicting value is rejected. Distinct cells may be written concurrently;
// the internal lock is the single-writer-per-cell contract.
//
// When attached to a directory the matrix persists as meta.json plus an
// append-only records.jsonl, flushed per record so interrupted runs resume.
class FeatureMatrix {
public:
    FeatureMatrix() = default;
    explicit FeatureMatrix(MatrixProvenance provenance) : provenance_(std::move(provenance)) {}

    FeatureMatrix(const FeatureMatrix&) = delete;
    FeatureMatrix& operator=(const FeatureMatrix&) = delete;

    // Creates the directory (meta.json + empty records file) or replays an
    // existing one; either way the returned matrix appends to it.
    static std::unique_ptr<FeatureMatrix> open_dir(const std::string& dir,
                                                   const MatrixProvenance& provenance);

    void register_prompt(const PromptMeta& meta);
    const PromptMeta& prompt_meta(const std::string& prompt_id) const;
    std::vector<std::string> prompt_ids() const;

    bool has(const std::string& prompt_id, int example_id) const;
    std::optional<FeatureCell> get(const std::string& prompt_id, int example_id) const;
    void put(const std::string& prompt_id, int example_id, std::vector<double> probs,
             std::uint8_t bit);

    std::size_t cell_count() const;
    const MatrixProvenance& provenance() const { return provenance_; }

private:
    void write_meta_locked() const;
    void append_record_locked(const std::string& prompt_id, int example_id,
                              const FeatureCell& cell);

    MatrixProvenance provenance_;
    std::string dir_;
    std::vector<PromptMeta> prompts_;                       // registration order
    std::map<std::string, std::size_t> prompt_index_;
    std::map<std::pair<std::string, int>, FeatureCell> cells_;
    mutable std::shared_mutex mutex_;
    std::unique_ptr<std::ofstream> sink_;
};

}  // namespace prompttree::core
