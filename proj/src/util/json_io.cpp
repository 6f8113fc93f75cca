#include "prompttree/util/json_io.hpp"

#include "prompttree/error.hpp"

#include <fstream>
#include <sstream>

namespace prompttree {

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open file: " + path);
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

nlohmann::json read_json_file(const std::string& path) {
    const std::string text = slurp(path);
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError("invalid JSON in " + path + ": " + e.what());
    }
}

nlohmann::ordered_json read_ordered_json_file(const std::string& path) {
    const std::string text = slurp(path);
    try {
        return nlohmann::ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError("invalid JSON in " + path + ": " + e.what());
    }
}

std::string read_text_file(const std::string& path) {
    return slurp(path);
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw ConfigError("cannot write file: " + path);
    }
    out << content;
    if (!out) {
        throw ConfigError("short write: " + path);
    }
}

std::string canonical_dump(const nlohmann::json& value) {
    return value.dump(2) + "\n";
}

}  // namespace prompttree
