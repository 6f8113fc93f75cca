#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace prompttree::ensemble {

// Depth-1 classifier over a single binary feature: a class vote per bit
// value. Maps are refit from data rather than fixed to the verbalizer's
// polarity, so a prompt whose Yes answer correlates with the negative class
// is still usable.
struct StumpMap {
    std::array<int, 2> vote{0, 0};
};

// Weighted per-bit majority. An empty bit group falls back to the overall
// weighted majority; all ties resolve to the lower class index.
StumpMap fit_stump_map(std::span<const std::uint8_t> bits, std::span<const int> labels,
                       std::span<const double> weights, std::span<const int> rows, int n_classes);

double stump_weighted_error(const StumpMap& map, std::span<const std::uint8_t> bits,
                            std::span<const int> labels, std::span<const double> weights,
                            std::span<const int> rows);

}  // namespace prompttree::ensemble
