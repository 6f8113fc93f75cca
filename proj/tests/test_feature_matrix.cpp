#include "prompttree/core/feature_matrix.hpp"
#include "prompttree/error.hpp"
#include "prompttree/features/verbalizer.hpp"

#include "helpers/temp_dir.hpp"

#include <doctest.h>

#include <thread>

using namespace prompttree;
using namespace prompttree::core;

TEST_CASE("feature cells are write-once") {
    FeatureMatrix fm({"mock", "m", "t0"});
    fm.put("p1", 0, {0.9, 0.1}, 1);
    CHECK(fm.has("p1", 0));
    CHECK_FALSE(fm.has("p1", 1));
    CHECK_FALSE(fm.get("p1", 1).has_value());  // unwritten is distinguishable from bit 0

    CHECK_NOTHROW(fm.put("p1", 0, {0.9, 0.1}, 1));  // identical rewrite is a no-op
    CHECK_THROWS_AS(fm.put("p1", 0, {0.8, 0.2}, 1), DataError);
    CHECK_THROWS_AS(fm.put("p1", 0, {0.9, 0.1}, 0), DataError);
    CHECK(fm.cell_count() == 1);
}

TEST_CASE("stored bits decode from the stored probability vector") {
    FeatureMatrix fm({"mock", "m", "t0"});
    fm.put("p", 0, {0.9, 0.1}, 1);
    fm.put("p", 1, {0.2, 0.7}, 0);
    fm.put("p", 2, {0.0, 0.0}, 0);  // abstain marker
    for (int e = 0; e < 3; ++e) {
        const auto cell = fm.get("p", e);
        REQUIRE(cell.has_value());
        CHECK(features::cell_bit_from_probs(cell->probs, 0) == cell->bit);
    }
}

TEST_CASE("matrix persists and replays through its directory") {
    testutil::TempDir dir;
    {
        auto fm = FeatureMatrix::open_dir(dir.str("fm"), {"mock", "model-x", "2024-01-01T00:00:00Z"});
        fm->register_prompt({"p1", {"Yes", "No"}, 0, "yes_no", "a question"});
        fm->put("p1", 0, {0.25, 0.75}, 0);
        fm->put("p1", 1, {0.75, 0.25}, 1);
    }
    auto fm = FeatureMatrix::open_dir(dir.str("fm"), {"mock", "model-x", "later"});
    CHECK(fm->provenance().model == "model-x");
    CHECK(fm->provenance().created_at == "2024-01-01T00:00:00Z");  // original meta wins
    CHECK(fm->cell_count() == 2);
    const auto cell = fm->get("p1", 0);
    REQUIRE(cell.has_value());
    CHECK(cell->probs == std::vector<double>{0.25, 0.75});
    CHECK(cell->bit == 0);
    CHECK(fm->prompt_meta("p1").tokens == std::vector<std::string>{"Yes", "No"});

    fm->put("p1", 2, {0.5, 0.5}, 1);  // append still works after reopen
    auto again = FeatureMatrix::open_dir(dir.str("fm"), {"mock", "model-x", "later"});
    CHECK(again->cell_count() == 3);
}

TEST_CASE("concurrent writers to distinct cells all land") {
    FeatureMatrix fm({"mock", "m", "t0"});
    constexpr int kThreads = 8;
    constexpr int kPerThread = 50;
    std::vector<std::thread> pool;
    for (int t = 0; t < kThreads; ++t) {
        pool.emplace_back([&fm, t] {
            for (int i = 0; i < kPerThread; ++i) {
                fm.put("p", t * kPerThread + i, {1.0, 0.0}, 1);
            }
        });
    }
    for (auto& t : pool) t.join();
    CHECK(fm.cell_count() == kThreads * kPerThread);
}

TEST_CASE("prompt re-registration must keep the same binding") {
    FeatureMatrix fm({"mock", "m", "t0"});
    fm.register_prompt({"p1", {"Yes", "No"}, 0, "yes_no", ""});
    CHECK_NOTHROW(fm.register_prompt({"p1", {"Yes", "No"}, 0, "yes_no", ""}));
    CHECK_THROWS_AS(fm.register_prompt({"p1", {"Yes", "No"}, 1, "yes_no", ""}), DataError);
    CHECK_THROWS_AS(fm.register_prompt({"p1", {"A", "B"}, 0, "yes_no", ""}), DataError);
}
