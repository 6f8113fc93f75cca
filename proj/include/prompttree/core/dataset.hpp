#pragma once

#include <optional>
#include <string>
#include <vector>

namespace prompttree::core {

// Fixed, ordered class-name list. The class index of a label is its position
// here; the order is set once at load time and never changes afterwards.
class LabelSpace {
public:
    LabelSpace() = default;
    explicit LabelSpace(std::vector<std::string> names);

    int k() const { return static_cast<int>(names_.size()); }
    const std::vector<std::string>& names() const { return names_; }
    const std::string& name(int index) const { return names_.at(static_cast<std::size_t>(index)); }
    std::optional<int> index_of(const std::string& name) const;

    // Stable content hash, embedded in model files so a model cannot be
    // evaluated against a dataset with a different class order.
    std::string fingerprint() const;

    bool operator==(const LabelSpace&) const = default;

private:
    std::vector<std::string> names_;
};

struct Example {
    int id = 0;
    std::string text;
    int label = 0;
};

enum class SplitTag { train, validation, test };

std::string to_string(SplitTag tag);

struct Dataset {
    std::vector<Example> examples;
    LabelSpace labels;
    SplitTag tag = SplitTag::train;

    std::size_t size() const { return examples.size(); }
    std::vector<int> label_vector() const;
    std::vector<long> class_counts() const;
};

enum class DatasetFormat { jsonl, csv };

// Loads `text`/`label` records from JSONL (one object per line) or CSV with
// header `text,label`. Texts are whitespace-trimmed; ids are assigned in
// file order starting at 0. Without an explicit label space the class order
// is the lexicographic order of the distinct label strings.
Dataset load_dataset(const std::string& path, DatasetFormat format,
                     std::optional<LabelSpace> label_space = std::nullopt,
                     SplitTag tag = SplitTag::train);

// Writes the JSONL form; loading it back with the same label space restores
// identical ids, texts and label indices.
void write_dataset_jsonl(const Dataset& dataset, const std::string& path);

struct SplitResult {
    Dataset first;
    Dataset second;
    // E.g. "class 'pos' has no examples in the first part". Recorded in run
    // reports rather than raised.
    std::vector<std::string> warnings;
};

// Deterministic stratified partition: the first part receives
// floor(fraction * n) examples, apportioned over classes by largest
// remainder, membership drawn per class from a seed-derived stream. The two
// parts are disjoint and their union is the input.
SplitResult split_dataset(const Dataset& dataset, double fraction, std::uint64_t seed);

}  // namespace prompttree::core
