#include "prompttree/core/dataset.hpp"

#include "prompttree/error.hpp"
#include "prompttree/util/hash.hpp"
#include "prompttree/util/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace prompttree::core {

namespace {

std::string trim(const std::string& text) {
    const char* ws = " \t\r\n\f\v";
    const std::size_t begin = text.find_first_not_of(ws);
    if (begin == std::string::npos) return "";
    const std::size_t end = text.find_last_not_of(ws);
    return text.substr(begin, end - begin + 1);
}

struct RawRecord {
    std::string text;
    std::string label;
};

std::vector<RawRecord> parse_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open dataset: " + path);
    std::vector<RawRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw DataError(path + " line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
        }
        if (!obj.is_object() || !obj.contains("text") || !obj.contains("label") ||
            !obj["text"].is_string() || !obj["label"].is_string()) {
            throw DataError(path + " line " + std::to_string(line_no) +
                            ": expected an object with string fields 'text' and 'label'");
        }
        records.push_back({obj["text"].get<std::string>(), obj["label"].get<std::string>()});
    }
    return records;
}

// Minimal RFC-4180 row split: quoted fields, doubled quotes as escapes.
// Embedded newlines inside quotes are not supported.
std::vector<std::string> split_csv_row(const std::string& line, const std::string& where) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(field);
            field.clear();
        } else {
            field += c;
        }
    }
    if (quoted) throw DataError(where + ": unterminated quote in CSV row");
    fields.push_back(field);
    return fields;
}

std::vector<RawRecord> parse_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open dataset: " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": empty file");
    // Tolerate a BOM and a trailing \r from CRLF files.
    if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_csv_row(line, path + " header");
    if (header.size() < 2 || header[0] != "text" || header[1] != "label") {
        throw DataError(path + ": expected CSV header 'text,label'");
    }
    std::vector<RawRecord> records;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::string where = path + " line " + std::to_string(line_no);
        auto fields = split_csv_row(line, where);
        if (fields.size() < 2) throw DataError(where + ": expected 2 fields");
        records.push_back({fields[0], fields[1]});
    }
    return records;
}

}  // namespace

LabelSpace::LabelSpace(std::vector<std::string> names) : names_(std::move(names)) {
    if (names_.size() < 2) {
        throw DataError("label space needs at least 2 classes, got " + std::to_string(names_.size()));
    }
    std::set<std::string> seen;
    for (const auto& name : names_) {
        if (name.empty()) throw DataError("label space contains an empty class name");
        if (!seen.insert(name).second) throw DataError("duplicate class name: " + name);
    }
}

std::optional<int> LabelSpace::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names_.size(); ++i) {
        if (names_[i] == name) return static_cast<int>(i);
    }
    return std::nullopt;
}

std::string LabelSpace::fingerprint() const {
    std::string joined;
    for (const auto& name : names_) {
        joined += name;
        joined += '\x1f';
    }
    return content_id(joined);
}

std::string to_string(SplitTag tag) {
    switch (tag) {
        case SplitTag::train: return "train";
        case SplitTag::validation: return "validation";
        case SplitTag::test: return "test";
    }
    return "train";
}

std::vector<int> Dataset::label_vector() const {
    std::vector<int> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) out.push_back(ex.label);
    return out;
}

std::vector<long> Dataset::class_counts() const {
    std::vector<long> counts(static_cast<std::size_t>(labels.k()), 0);
    for (const auto& ex : examples) counts[static_cast<std::size_t>(ex.label)]++;
    return counts;
}

Dataset load_dataset(const std::string& path, DatasetFormat format,
                     std::optional<LabelSpace> label_space, SplitTag tag) {
    const auto raw = format == DatasetFormat::jsonl ? parse_jsonl(path) : parse_csv(path);
    if (raw.empty()) throw DataError(path + ": empty dataset");

    LabelSpace space;
    if (label_space.has_value()) {
        space = *label_space;
    } else {
        std::set<std::string> distinct;
        for (const auto& rec : raw) distinct.insert(rec.label);
        if (distinct.size() < 2) {
            throw DataError(path + ": only one distinct label; pass an explicit label space");
        }
        space = LabelSpace(std::vector<std::string>(distinct.begin(), distinct.end()));
    }

    Dataset ds;
    ds.labels = space;
    ds.tag = tag;
    ds.examples.reserve(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const std::string text = trim(raw[i].text);
        if (text.empty()) {
            throw DataError(path + " record " + std::to_string(i) + ": empty text");
        }
        const auto label = space.index_of(raw[i].label);
        if (!label.has_value()) {
            throw DataError(path + " record " + std::to_string(i) + ": unknown label '" +
                            raw[i].label + "'");
        }
        ds.examples.push_back({static_cast<int>(i), text, *label});
    }
    return ds;
}

void write_dataset_jsonl(const Dataset& dataset, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write dataset: " + path);
    for (const auto& ex : dataset.examples) {
        nlohmann::json obj;
        obj["text"] = ex.text;
        obj["label"] = dataset.labels.name(ex.label);
        out << obj.dump() << '\n';
    }
}

SplitResult split_dataset(const Dataset& dataset, double fraction, std::uint64_t seed) {
    const auto n = static_cast<double>(dataset.size());
    if (fraction <= 0.0 || fraction >= 1.0) {
        throw ConfigError("split fraction must lie in (0,1)");
    }
    if (fraction * n < 1.0) {
        throw ConfigError("split fraction " + std::to_string(fraction) + " leaves the first part empty");
    }
    const int k = dataset.labels.k();
    long target = static_cast<long>(std::floor(fraction * n));
    target = std::max<long>(1, std::min<long>(target, static_cast<long>(dataset.size()) - 1));

    // Example positions grouped by class, in dataset order.
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
        by_class[static_cast<std::size_t>(dataset.examples[i].label)].push_back(i);
    }

    // Largest-remainder apportioning keeps per-class proportions while the
    // total matches the floor rule exactly.
    std::vector<long> quota(static_cast<std::size_t>(k), 0);
    std::vector<double> remainder(static_cast<std::size_t>(k), 0.0);
    long assigned = 0;
    for (int c = 0; c < k; ++c) {
        const double share = fraction * static_cast<double>(by_class[static_cast<std::size_t>(c)].size());
        quota[static_cast<std::size_t>(c)] = static_cast<long>(std::floor(share));
        remainder[static_cast<std::size_t>(c)] = share - std::floor(share);
        assigned += quota[static_cast<std::size_t>(c)];
    }
    while (assigned < target) {
        int best = -1;
        for (int c = 0; c < k; ++c) {
            const auto cs = static_cast<std::size_t>(c);
            if (quota[cs] >= static_cast<long>(by_class[cs].size())) continue;
            if (best < 0 || remainder[cs] > remainder[static_cast<std::size_t>(best)]) best = c;
        }
        if (best < 0) break;
        quota[static_cast<std::size_t>(best)]++;
        remainder[static_cast<std::size_t>(best)] = -1.0;
        ++assigned;
    }
    while (assigned > target) {
        int best = -1;
        for (int c = 0; c < k; ++c) {
            const auto cs = static_cast<std::size_t>(c);
            if (quota[cs] == 0) continue;
            if (best < 0 || remainder[cs] < remainder[static_cast<std::size_t>(best)]) best = c;
        }
        if (best < 0) break;
        quota[static_cast<std::size_t>(best)]--;
        remainder[static_cast<std::size_t>(best)] = 2.0;
        --assigned;
    }

    SplitResult result;
    result.first.labels = dataset.labels;
    result.first.tag = dataset.tag;
    result.second.labels = dataset.labels;
    result.second.tag = dataset.tag;

    std::vector<bool> in_first(dataset.size(), false);
    for (int c = 0; c < k; ++c) {
        const auto cs = static_cast<std::size_t>(c);
        auto positions = by_class[cs];
        Rng rng = Rng::fork(seed, static_cast<std::uint64_t>(c));
        rng.shuffle(positions);
        for (long i = 0; i < quota[cs]; ++i) {
            in_first[positions[static_cast<std::size_t>(i)]] = true;
        }
        if (!positions.empty() && quota[cs] == 0) {
            result.warnings.push_back("class '" + dataset.labels.name(c) +
                                      "' has no examples in the first split part");
        }
    }
    for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
        (in_first[i] ? result.first : result.second).examples.push_back(dataset.examples[i]);
    }
    return result;
}

}  // namespace prompttree::core
