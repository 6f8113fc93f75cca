#include "prompttree/error.hpp"
#include "prompttree/tree/tree.hpp"
#include "prompttree/util/json_io.hpp"

#include "helpers/oracles.hpp"
#include "helpers/suites.hpp"

#include <doctest.h>

#include <cctype>
#include <set>
#include <chrono>

using namespace prompttree;
using namespace prompttree::tree;
using testutil::make_table;

namespace {

// Minimal DOT validator for the digraph subset the exporter emits:
//   digraph ID { node [a=b, ...]; n0 [..]; n0 -> n1 [..]; }
struct DotChecker {
    std::vector<std::string> tokens;
    std::size_t pos = 0;
    int node_statements = 0;
    int edge_statements = 0;

    static std::vector<std::string> tokenize(const std::string& text) {
        std::vector<std::string> out;
        std::size_t i = 0;
        while (i < text.size()) {
            const char c = text[i];
            if (std::isspace(static_cast<unsigned char>(c))) {
                ++i;
            } else if (c == '"') {
                std::string s = "\"";
                ++i;
                while (i < text.size() && text[i] != '"') {
                    if (text[i] == '\\' && i + 1 < text.size()) {
                        s += text[i];
                        s += text[i + 1];
                        i += 2;
                    } else {
                        s += text[i++];
                    }
                }
                if (i >= text.size()) throw std::runtime_error("unterminated string");
                s += '"';
                ++i;
                out.push_back(std::move(s));
            } else if (std::isalnum(static_cast<unsigned char>(c)) || c == '_') {
                std::string s;
                while (i < text.size() && (std::isalnum(static_cast<unsigned char>(text[i])) ||
                                           text[i] == '_')) {
                    s += text[i++];
                }
                out.push_back(std::move(s));
            } else if (c == '-' && i + 1 < text.size() && text[i + 1] == '>') {
                out.push_back("->");
                i += 2;
            } else if (c == '{' || c == '}' || c == '[' || c == ']' || c == ';' || c == ',' ||
                       c == '=') {
                out.push_back(std::string(1, c));
                ++i;
            } else {
                throw std::runtime_error(std::string("unexpected character: ") + c);
            }
        }
        return out;
    }

    const std::string& peek() const {
        static const std::string kEnd = "<eof>";
        return pos < tokens.size() ? tokens[pos] : kEnd;
    }
    std::string take() {
        if (pos >= tokens.size()) throw std::runtime_error("unexpected end");
        return tokens[pos++];
    }
    void expect(const std::string& token) {
        if (take() != token) throw std::runtime_error("expected " + token);
    }
    static bool is_identifier(const std::string& token) {
        if (token.empty() || token == "->" || token == "{" || token == "}") return false;
        if (token.front() == '"') return true;  // quoted string counts as an id
        for (char c : token) {
            if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
        }
        return true;
    }

    void attr_list() {
        expect("[");
        for (;;) {
            const std::string name = take();
            if (!is_identifier(name)) throw std::runtime_error("bad attribute name");
            expect("=");
            const std::string value = take();
            if (!is_identifier(value)) throw std::runtime_error("bad attribute value");
            if (peek() == ",") {
                take();
                continue;
            }
            break;
        }
        expect("]");
    }

    void parse(const std::string& text) {
        tokens = tokenize(text);
        expect("digraph");
        if (peek() != "{") {
            if (!is_identifier(take())) throw std::runtime_error("bad graph name");
        }
        expect("{");
        while (peek() != "}") {
            const std::string head = take();
            if (!is_identifier(head)) throw std::runtime_error("bad statement head");
            if (peek() == "->") {
                take();
                const std::string target = take();
                if (!is_identifier(target)) throw std::runtime_error("bad edge target");
                if (peek() == "[") attr_list();
                ++edge_statements;
            } else {
                if (peek() == "[") attr_list();
                if (head != "node" && head != "edge" && head != "graph") ++node_statements;
            }
            expect(";");
        }
        expect("}");
        if (pos != tokens.size()) throw std::runtime_error("trailing tokens");
    }
};

}  // namespace

TEST_CASE("gini matches hand-computed values") {
    CHECK(gini(std::vector<long>{8, 0}) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(gini(std::vector<long>{4, 4}) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(gini(std::vector<long>{2, 1, 1}) == doctest::Approx(0.625).epsilon(1e-12));
    CHECK_THROWS_AS(gini(std::vector<long>{0, 0}), DataError);
}

TEST_CASE("best_split picks the pure split and honors tie rules") {
    const auto table = make_table({{0, 0, 1, 1}, {0, 1, 0, 1}});
    const std::vector<int> labels = {0, 0, 1, 1};
    const auto choice = best_split(table, labels, 2, {});
    REQUIRE(choice.has_value());
    CHECK(choice->feature == 0);
    CHECK(choice->child_impurity == doctest::Approx(0.0).epsilon(1e-15));

    // all-constant features: no valid split
    const auto constant = make_table({{1, 1, 1, 1}});
    CHECK_FALSE(best_split(constant, labels, 2, {}).has_value());

    // two identical perfect features: the lower index wins
    const auto twin = make_table({{0, 0, 1, 1}, {0, 0, 1, 1}});
    const auto twin_choice = best_split(twin, labels, 2, {});
    REQUIRE(twin_choice.has_value());
    CHECK(twin_choice->feature == 0);
}

TEST_CASE("best_split agrees with the exhaustive oracle on random instances") {
    std::uint64_t state = 0x9e3779b97f4a7c15ULL;
    const auto start = std::chrono::steady_clock::now();
    int agreements = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto inst = testutil::random_instance(state, 20, 8, 2);
        const auto table = make_table(inst.columns);
        const TreeConfig config;
        const auto mine = best_split(table, inst.labels, 2, config);
        const auto oracle = testutil::oracle_best_split(inst.columns, inst.labels, 2,
                                                        config.min_impurity_decrease);
        REQUIRE(mine.has_value() == oracle.has_value());
        if (mine.has_value()) {
            CHECK(mine->feature == oracle->feature);
            CHECK(mine->child_impurity == doctest::Approx(oracle->child_impurity).epsilon(1e-12));
        }
        ++agreements;
    }
    CHECK(agreements == 100);
    const auto elapsed = std::chrono::steady_clock::now() - start;
    CHECK(std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count() < 1000);
}

TEST_CASE("build_tree solves XOR with a depth-2 tree") {
    const auto suite = testutil::xor_suite();
    // No single stump separates XOR: the best split still leaves impure children.
    const auto stump_split = best_split(suite.table, suite.labels, 2, {});
    if (stump_split.has_value()) {
        CHECK(stump_split->child_impurity > 0.0);
    }
    // ...but the depth-2 tree classifies all four patterns.
    const auto tree = build_tree(suite.table, suite.labels, 2, {});
    CHECK(tree.depth() == 2);
    CHECK(tree.leaf_count() == 4);
    for (std::size_t row = 0; row < 4; ++row) {
        features::TableBitProvider provider(suite.table, row);
        const auto prediction = predict(tree, provider);
        CHECK(prediction.class_index == suite.labels[row]);
        CHECK(prediction.calls_used == 2);
    }
}

TEST_CASE("build_tree respects leaf budgets and purity stops") {
    const auto suite = testutil::xor_suite();
    TreeConfig config;
    config.max_leaf_nodes = 1;
    const auto stump = build_tree(suite.table, suite.labels, 2, config);
    CHECK(stump.nodes.size() == 1);
    CHECK(stump.nodes[0].is_leaf());
    CHECK(stump.nodes[0].leaf_class == 0);  // tie -> lowest class

    const auto pure = make_table({{0, 1, 0, 1}});
    const auto leaf = build_tree(pure, std::vector<int>{1, 1, 1, 1}, 2, {});
    CHECK(leaf.nodes.size() == 1);
    CHECK(leaf.nodes[0].leaf_class == 1);
}

TEST_CASE("unrestricted trees reach accuracy 1.0 on non-contradictory data") {
    std::uint64_t state = 123;
    for (int trial = 0; trial < 20; ++trial) {
        auto inst = testutil::random_instance(state, 16, 6, 2);
        // Relabel by a deterministic function of the feature row so that no
        // two identical rows disagree.
        for (std::size_t i = 0; i < inst.labels.size(); ++i) {
            int key = 0;
            for (std::size_t f = 0; f < inst.columns.size(); ++f) {
                key = key * 2 + inst.columns[f][i];
            }
            inst.labels[i] = key % 2;
        }
        const auto table = make_table(inst.columns);
        const auto tree = build_tree(table, inst.labels, 2, {});
        for (std::size_t row = 0; row < inst.labels.size(); ++row) {
            features::TableBitProvider provider(table, row);
            CHECK(predict(tree, provider).class_index == inst.labels[row]);
        }
        // every root-to-leaf path evaluates distinct features
        CHECK(tree.depth() <= static_cast<int>(inst.columns.size()));
        std::vector<std::pair<int, std::set<int>>> stack = {{0, {}}};
        while (!stack.empty()) {
            auto [index, seen] = stack.back();
            stack.pop_back();
            const auto& node = tree.nodes[static_cast<std::size_t>(index)];
            if (node.is_leaf()) continue;
            CHECK(seen.insert(node.feature).second);  // no repeat along the path
            stack.emplace_back(node.left, seen);
            stack.emplace_back(node.right, seen);
        }
    }
}

TEST_CASE("predict evaluates only path features and a warm provider costs zero") {
    // Unbalanced tree: feature 0 routes half to an immediate leaf, feature 1
    // then feature 2 resolve the other half.
    const auto table = make_table({{0, 0, 0, 0, 1, 1, 1, 1},
                                   {0, 0, 1, 1, 0, 0, 1, 1},
                                   {0, 1, 0, 1, 0, 1, 0, 1}});
    const std::vector<int> labels = {0, 0, 0, 0, 0, 1, 1, 1};
    const auto tree = build_tree(table, labels, 2, {});
    CHECK(tree.depth() == 3);

    features::TableBitProvider left(table, 0);  // routed to the shallow side
    const auto shallow = predict(tree, left);
    CHECK(shallow.class_index == 0);
    CHECK(shallow.calls_used == 1);

    features::TableBitProvider right(table, 5);
    const auto deep = predict(tree, right);
    CHECK(deep.class_index == 1);
    CHECK(deep.calls_used == 3);

    const auto warmed = predict(tree, right);  // same provider again
    CHECK(warmed.class_index == 1);
    CHECK(warmed.calls_used == 0);
}

TEST_CASE("trees serialize deterministically and round-trip") {
    const auto suite = testutil::xor_suite();
    const auto a = build_tree(suite.table, suite.labels, 2, {});
    const auto b = build_tree(suite.table, suite.labels, 2, {});
    CHECK(canonical_dump(tree_to_json(a)) == canonical_dump(tree_to_json(b)));

    const auto back = tree_from_json(tree_to_json(a));
    CHECK(canonical_dump(tree_to_json(back)) == canonical_dump(tree_to_json(a)));
}

TEST_CASE("export_dot emits valid DOT with the expected shape") {
    const auto suite = testutil::xor_suite();
    const auto tree = build_tree(suite.table, suite.labels, 2, {});
    std::vector<DotNodeInfo> info = {{"asks about feature \"zero\"", "yes_no"},
                                     {"asks about feature one", "yes_no"}};
    const std::vector<std::string> classes = {"neg", "pos"};
    const std::string dot = export_dot(tree, info, classes);

    DotChecker checker;
    CHECK_NOTHROW(checker.parse(dot));
    CHECK(checker.node_statements == 7);  // 3 internal + 4 leaves
    CHECK(checker.edge_statements == 6);

    DecisionTree single;
    single.n_classes = 2;
    TreeNode leaf;
    leaf.leaf_class = 1;
    leaf.histogram = {0, 3};
    single.nodes.push_back(leaf);
    DotChecker single_checker;
    const std::string single_dot = export_dot(single, {}, classes);
    CHECK_NOTHROW(single_checker.parse(single_dot));
    CHECK(single_checker.node_statements == 1);
    CHECK(single_checker.edge_statements == 0);
}

TEST_CASE("rerank_candidates sorts by score with stable ties") {
    const auto suite = testutil::xor_suite();
    // candidates are feature indices; give feature 1 a winning score
    const std::vector<int> candidates = {0, 1};
    auto ranked = rerank_candidates<int>(candidates, [](const int& f) { return f == 1 ? 2.0 : 1.0; });
    CHECK(ranked == std::vector<int>{1, 0});

    // equal scores preserve input order
    auto stable = rerank_candidates<int>(candidates, [](const int&) { return 0.5; });
    CHECK(stable == std::vector<int>{0, 1});

    CHECK(rerank_candidates<int>(std::vector<int>{}, [](const int&) { return 1.0; }).empty());

    // default scorer ranks a perfect feature first
    const auto perfect = make_table({{0, 1, 0, 1}, {0, 0, 1, 1}});
    const std::vector<int> labels = {0, 0, 1, 1};
    auto scorer = make_impurity_scorer(perfect, labels, {0, 1, 2, 3}, 2);
    auto by_impurity = rerank_candidates<int>(candidates, scorer);
    CHECK(by_impurity.front() == 1);
}
