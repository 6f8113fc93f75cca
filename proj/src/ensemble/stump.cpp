#include "prompttree/ensemble/stump.hpp"

namespace prompttree::ensemble {

StumpMap fit_stump_map(std::span<const std::uint8_t> bits, std::span<const int> labels,
                       std::span<const double> weights, std::span<const int> rows, int n_classes) {
    std::vector<double> mass0(static_cast<std::size_t>(n_classes), 0.0);
    std::vector<double> mass1(static_cast<std::size_t>(n_classes), 0.0);
    std::vector<double> total(static_cast<std::size_t>(n_classes), 0.0);
    for (int r : rows) {
        const auto rs = static_cast<std::size_t>(r);
        const auto c = static_cast<std::size_t>(labels[rs]);
        const double w = weights[rs];
        total[c] += w;
        (bits[rs] == 0 ? mass0 : mass1)[c] += w;
    }
    auto argmax = [](const std::vector<double>& mass) {
        int best = 0;
        for (int c = 1; c < static_cast<int>(mass.size()); ++c) {
            if (mass[static_cast<std::size_t>(c)] > mass[static_cast<std::size_t>(best)]) best = c;
        }
        return best;
    };
    auto group_vote = [&](const std::vector<double>& mass) {
        double sum = 0.0;
        for (double m : mass) sum += m;
        return sum > 0.0 ? argmax(mass) : argmax(total);
    };
    StumpMap map;
    map.vote[0] = group_vote(mass0);
    map.vote[1] = group_vote(mass1);
    return map;
}

double stump_weighted_error(const StumpMap& map, std::span<const std::uint8_t> bits,
                            std::span<const int> labels, std::span<const double> weights,
                            std::span<const int> rows) {
    double error = 0.0;
    for (int r : rows) {
        const auto rs = static_cast<std::size_t>(r);
        if (map.vote[bits[rs]] != labels[rs]) error += weights[rs];
    }
    return error;
}

}  // namespace prompttree::ensemble
