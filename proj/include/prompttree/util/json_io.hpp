#pragma once

#include <json.hpp>

#include <string>

namespace prompttree {

nlohmann::json read_json_file(const std::string& path);
nlohmann::ordered_json read_ordered_json_file(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// Canonical dump used wherever bytes must be reproducible: sorted object
// keys (nlohmann default), two-space indent, trailing newline.
std::string canonical_dump(const nlohmann::json& value);

}  // namespace prompttree
