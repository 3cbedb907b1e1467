#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include <rpf/exact.hpp>

#include "support/oracles.hpp"

using namespace rpf;

TEST_CASE("a data point is its own nearest neighbor") {
    std::mt19937_64 gen(1);
    DataMatrix data = testsupport::random_matrix(gen, 40, 6);
    for (std::uint32_t i : {0u, 7u, 39u}) {
        const auto res = exhaustive_knn(data, data.row(i), 3);
        REQUIRE(res.indices[0] == i);
        REQUIRE(res.distances[0] == 0.0);
        REQUIRE(res.candidates_examined == 40);
        REQUIRE(res.fallback_level == Fallback::none);
    }
}

TEST_CASE("hand-computed neighbors on a line") {
    DataMatrix data(3, 1, {0.0f, 1.0f, 3.0f});
    const std::vector<float> q{0.9f};
    const auto res = exhaustive_knn(data, q, 2);
    REQUIRE(res.indices == std::vector<std::uint32_t>{1, 0});
    REQUIRE(res.distances[0] == Catch::Approx(0.1).margin(1e-6));
    REQUIRE(res.distances[1] == Catch::Approx(0.9).margin(1e-6));
    REQUIRE(std::is_sorted(res.distances.begin(), res.distances.end()));
}

TEST_CASE("equidistant points resolve to the lower index") {
    DataMatrix data(2, 1, {-1.0f, 1.0f});
    const std::vector<float> q{0.0f};
    REQUIRE(exhaustive_knn(data, q, 1).indices == std::vector<std::uint32_t>{0});
    REQUIRE(exhaustive_knn(data, q, 2).indices == std::vector<std::uint32_t>{0, 1});

    DataMatrix dup(4, 2, {1.0f, 1.0f, 5.0f, 5.0f, 1.0f, 1.0f, 1.0f, 1.0f});
    const std::vector<float> q2{0.0f, 0.0f};
    REQUIRE(exhaustive_knn(dup, q2, 3).indices == std::vector<std::uint32_t>{0, 2, 3});
}

TEST_CASE("exclusion drops exactly the named point") {
    std::mt19937_64 gen(2);
    DataMatrix data = testsupport::random_matrix(gen, 30, 4);
    const auto res = exhaustive_knn(data, data.row(11), 5, 11u);
    REQUIRE(std::find(res.indices.begin(), res.indices.end(), 11u) == res.indices.end());
    REQUIRE(res.candidates_examined == 29);
    REQUIRE(testsupport::same_result(res, testsupport::oracle_knn(data, data.row(11), 5, 11u)));
}

TEST_CASE("exhaustive search validates k and the query dimension") {
    std::mt19937_64 gen(3);
    DataMatrix data = testsupport::random_matrix(gen, 10, 3);
    const auto q = testsupport::random_point(gen, 3);
    REQUIRE_THROWS_AS(exhaustive_knn(data, q, 0), ArgumentError);
    REQUIRE_THROWS_AS(exhaustive_knn(data, q, 11), ArgumentError);
    REQUIRE_NOTHROW(exhaustive_knn(data, q, 10));
    REQUIRE_THROWS_AS(exhaustive_knn(data, q, 10, 4u), ArgumentError);
    REQUIRE_NOTHROW(exhaustive_knn(data, q, 9, 4u));
    const std::vector<float> wrong(2, 0.0f);
    REQUIRE_THROWS_AS(exhaustive_knn(data, wrong, 1), ArgumentError);
}

TEST_CASE("exhaustive search matches an independent sort-based selection") {
    std::mt19937_64 gen(4);
    for (int round = 0; round < 50; ++round) {
        const std::size_t n = 5 + gen() % 200;
        const std::size_t d = 1 + gen() % 16;
        DataMatrix data = testsupport::random_matrix(gen, n, d);
        const auto q = testsupport::random_point(gen, d);
        const std::size_t k = 1 + gen() % n;
        REQUIRE(testsupport::same_result(exhaustive_knn(data, q, k),
                                         testsupport::oracle_knn(data, q, k)));
    }
}

TEST_CASE("small datasets build a single leaf ball tree") {
    std::mt19937_64 gen(5);
    DataMatrix data = testsupport::random_matrix(gen, 12, 5);
    BallTree tree = build_ball_tree(data, 40, 7);
    REQUIRE(tree.nodes().size() == 1);
    const auto& root = tree.nodes()[0];
    REQUIRE(root.is_leaf());
    REQUIRE(root.points.size() == 12);

    double max_dist = 0.0;
    for (std::uint32_t p : root.points)
        max_dist = std::max(max_dist, std::sqrt(testsupport::squared_dist_ref(
                                          data.row(p), root.center)));
    REQUIRE(root.radius >= max_dist);
    REQUIRE(root.radius <= max_dist + 1e-5);
}

TEST_CASE("ball tree nodes satisfy containment, partition, and size bounds") {
    std::mt19937_64 gen(6);
    for (int round = 0; round < 6; ++round) {
        const std::size_t n = 50 + gen() % 400;
        const std::size_t d = 2 + gen() % 12;
        const std::size_t cap = 1 + gen() % 25;
        DataMatrix data = testsupport::random_matrix(gen, n, d);
        BallTree tree = build_ball_tree(data, cap, gen());

        // recover the point set of every node by walking down
        const auto& nodes = tree.nodes();
        std::vector<std::vector<std::uint32_t>> members(nodes.size());
        for (std::size_t id = nodes.size(); id-- > 0;) {
            if (nodes[id].is_leaf()) {
                members[id] = nodes[id].points;
                REQUIRE(nodes[id].points.size() <= cap);
            } else {
                const auto& l = members[static_cast<std::size_t>(nodes[id].left)];
                const auto& r = members[static_cast<std::size_t>(nodes[id].right)];
                members[id].insert(members[id].end(), l.begin(), l.end());
                members[id].insert(members[id].end(), r.begin(), r.end());
            }
            for (std::uint32_t p : members[id])
                REQUIRE(std::sqrt(testsupport::squared_dist_ref(data.row(p), nodes[id].center)) <=
                        nodes[id].radius + 1e-5);
        }
        std::sort(members[0].begin(), members[0].end());
        REQUIRE(members[0].size() == n);
        for (std::size_t i = 0; i < n; ++i) REQUIRE(members[0][i] == i);
    }
}

TEST_CASE("well separated clusters split apart at the root") {
    // 6 points near 0 and 6 near 100 on a line
    std::vector<float> values;
    for (int i = 0; i < 6; ++i) values.push_back(static_cast<float>(i) * 0.1f);
    for (int i = 0; i < 6; ++i) values.push_back(100.0f + static_cast<float>(i) * 0.1f);
    DataMatrix data(12, 1, std::move(values));
    BallTree tree = build_ball_tree(data, 6, 3);
    const auto& root = tree.nodes()[0];
    REQUIRE_FALSE(root.is_leaf());

    auto collect = [&](std::int32_t id) {
        std::set<std::uint32_t> out;
        std::vector<std::int32_t> stack{id};
        while (!stack.empty()) {
            const auto& node = tree.nodes()[static_cast<std::size_t>(stack.back())];
            stack.pop_back();
            if (node.is_leaf())
                out.insert(node.points.begin(), node.points.end());
            else {
                stack.push_back(node.left);
                stack.push_back(node.right);
            }
        }
        return out;
    };
    const std::set<std::uint32_t> low{0, 1, 2, 3, 4, 5};
    const std::set<std::uint32_t> high{6, 7, 8, 9, 10, 11};
    const auto left = collect(root.left);
    const auto right = collect(root.right);
    REQUIRE(((left == low && right == high) || (left == high && right == low)));
}

TEST_CASE("identical points collapse to one leaf of radius zero") {
    DataMatrix data(9, 4, std::vector<float>(36, 3.25f));
    BallTree tree = build_ball_tree(data, 2, 11);
    REQUIRE(tree.nodes().size() == 1);
    REQUIRE(tree.nodes()[0].points.size() == 9);
    REQUIRE(tree.nodes()[0].radius <= 1e-9);
}

TEST_CASE("ball tree build is deterministic in its seed") {
    std::mt19937_64 gen(8);
    DataMatrix data = testsupport::random_matrix(gen, 200, 6);
    BallTree a = build_ball_tree(data, 10, 42);
    BallTree b = build_ball_tree(data, 10, 42);
    REQUIRE(a.nodes().size() == b.nodes().size());
    for (std::size_t i = 0; i < a.nodes().size(); ++i) {
        REQUIRE(a.nodes()[i].center == b.nodes()[i].center);
        REQUIRE(a.nodes()[i].radius == b.nodes()[i].radius);
        REQUIRE(a.nodes()[i].points == b.nodes()[i].points);
    }
}

TEST_CASE("ball tree answers equal exhaustive answers element for element") {
    std::mt19937_64 gen(9);
    for (int round = 0; round < 60; ++round) {
        const std::size_t n = 10 + gen() % 490;
        const std::size_t d = 1 + gen() % 32;
        DataMatrix data = testsupport::random_matrix(gen, n, d);
        BallTree tree = build_ball_tree(data, 1 + gen() % 40, gen());
        for (std::size_t k : {std::size_t{1}, std::size_t{5}, std::size_t{10}}) {
            if (k > n) continue;
            const auto q = testsupport::random_point(gen, d);
            const auto got = ball_tree_knn(tree, q, k);
            REQUIRE(testsupport::same_result(got, exhaustive_knn(data, q, k)));
            REQUIRE(got.candidates_examined <= n);
        }
    }
}

TEST_CASE("k equal to n returns every point sorted") {
    std::mt19937_64 gen(10);
    DataMatrix data = testsupport::random_matrix(gen, 25, 3);
    BallTree tree = build_ball_tree(data, 4, 1);
    const auto q = testsupport::random_point(gen, 3);
    const auto res = ball_tree_knn(tree, q, 25);
    REQUIRE(res.indices.size() == 25);
    REQUIRE(std::is_sorted(res.distances.begin(), res.distances.end()));
    std::set<std::uint32_t> seen(res.indices.begin(), res.indices.end());
    REQUIRE(seen.size() == 25);
}

TEST_CASE("pruning skips the far cluster") {
    std::vector<float> values;
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<float> noise(-0.5f, 0.5f);
    for (int i = 0; i < 100; ++i) values.push_back(noise(gen));
    for (int i = 0; i < 100; ++i) values.push_back(1000.0f + noise(gen));
    DataMatrix data(200, 1, std::move(values));
    BallTree tree = build_ball_tree(data, 10, 5);
    const std::vector<float> q{0.0f};
    const auto res = ball_tree_knn(tree, q, 5);
    REQUIRE(res.candidates_examined < 200);
    REQUIRE(testsupport::same_result(res, exhaustive_knn(data, q, 5)));
}

TEST_CASE("ball tree search validates its arguments") {
    std::mt19937_64 gen(12);
    DataMatrix data = testsupport::random_matrix(gen, 15, 4);
    BallTree tree = build_ball_tree(data, 5, 0);
    const auto q = testsupport::random_point(gen, 4);
    REQUIRE_THROWS_AS(ball_tree_knn(tree, q, 0), ArgumentError);
    REQUIRE_THROWS_AS(ball_tree_knn(tree, q, 16), ArgumentError);
    const std::vector<float> wrong(3, 0.0f);
    REQUIRE_THROWS_AS(ball_tree_knn(tree, wrong, 2), ArgumentError);
    REQUIRE_THROWS_AS(build_ball_tree(data, 0, 0), ArgumentError);
}
