#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace prompttree {

// Deterministic RNG helpers. std::mt19937_64 output is pinned by the
// standard, but std::shuffle and the distribution classes are not, so
// bounded draws and shuffles are hand-rolled to keep sampled prompts and
// dataset splits identical across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // Derives an independent stream, e.g. one per prompt or per class.
    static Rng fork(std::uint64_t seed, std::uint64_t salt) {
        std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return Rng(x ^ (x >> 31));
    }

    std::uint64_t next() { return gen_(); }

    // Unbiased draw in [0, n) by rejection.
    std::uint64_t below(std::uint64_t n) {
        if (n <= 1) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % n;
    }

    // Fisher-Yates.
    template <class T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace prompttree
