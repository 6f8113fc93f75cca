#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace prompttree {

// FNV-1a, fixed across platforms so content ids are stable between runs.
inline std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= static_cast<std::uint64_t>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string to_hex16(std::uint64_t value) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[value & 0xf];
        value >>= 4;
    }
    return out;
}

inline std::string content_id(std::string_view data) {
    return to_hex16(fnv1a64(data));
}

}  // namespace prompttree
