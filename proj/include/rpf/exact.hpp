#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "common.hpp"
#include "dataset.hpp"
#include "random.hpp"
#include "result.hpp"

namespace rpf {

namespace detail {

inline double squared_distance(std::span<const float> a, std::span<const float> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += diff * diff;
    }
    return acc;
}

// Bounded max-heap of the k best (squared distance, index) pairs. The pair
// ordering is lexicographic, so distance ties resolve to the lower index.
class KBest {
public:
    explicit KBest(std::size_t k) : k_(k) { heap_.reserve(k); }

    void offer(double dist_sq, std::uint32_t index) {
        const std::pair<double, std::uint32_t> entry{dist_sq, index};
        if (heap_.size() < k_) {
            heap_.push_back(entry);
            std::push_heap(heap_.begin(), heap_.end());
        } else if (entry < heap_.front()) {
            std::pop_heap(heap_.begin(), heap_.end());
            heap_.back() = entry;
            std::push_heap(heap_.begin(), heap_.end());
        }
    }

    bool full() const { return heap_.size() == k_; }

    // Largest (dist_sq, index) currently kept; infinite while not full.
    std::pair<double, std::uint32_t> worst() const {
        if (!full()) return {std::numeric_limits<double>::infinity(), 0};
        return heap_.front();
    }

    // Drains the heap into a QueryResult sorted ascending.
    QueryResult finish() && {
        std::sort_heap(heap_.begin(), heap_.end());
        QueryResult result;
        result.indices.reserve(heap_.size());
        result.distances.reserve(heap_.size());
        for (const auto& [dist_sq, index] : heap_) {
            result.indices.push_back(index);
            result.distances.push_back(std::sqrt(dist_sq));
        }
        return result;
    }

private:
    std::size_t k_;
    std::vector<std::pair<double, std::uint32_t>> heap_;
};

}  // namespace detail

// Full linear scan; the exact baseline and the oracle everything else is
// checked against.
inline QueryResult exhaustive_knn(const DataMatrix& data, std::span<const float> q, std::size_t k,
                                  std::optional<std::uint32_t> exclude = std::nullopt) {
    const std::size_t n = data.rows();
    const std::size_t available = n - (exclude ? 1 : 0);
    if (k < 1 || k > available)
        throw ArgumentError("exhaustive_knn: k must be in [1, " + std::to_string(available) + "]");
    if (q.size() != data.dims())
        throw ArgumentError("exhaustive_knn: query dimension mismatch");

    detail::KBest best(k);
    for (std::size_t i = 0; i < n; ++i) {
        if (exclude && *exclude == i) continue;
        best.offer(detail::squared_distance(q, data.row(i)), static_cast<std::uint32_t>(i));
    }
    QueryResult result = std::move(best).finish();
    result.candidates_examined = available;
    result.fallback_level = Fallback::none;
    return result;
}

// ---------------------------------------------------------------------------
// Ball tree: every node encloses its points in a hypersphere; queries prune
// subtrees with the triangle inequality. Results are exact and identical to
// exhaustive_knn, including the tie rule.

class BallTree {
public:
    struct Node {
        std::vector<float> center;  // centroid of the node's points
        double radius = 0.0;
        std::int32_t left = -1;
        std::int32_t right = -1;
        std::vector<std::uint32_t> points;  // leaves only

        bool is_leaf() const { return left < 0; }
    };

    BallTree(const DataMatrix& data, std::vector<Node> nodes, std::size_t leaf_capacity)
        : data_(&data), nodes_(std::move(nodes)), leaf_capacity_(leaf_capacity) {}

    const DataMatrix& data() const { return *data_; }
    const std::vector<Node>& nodes() const { return nodes_; }
    std::size_t leaf_capacity() const { return leaf_capacity_; }

private:
    const DataMatrix* data_;
    std::vector<Node> nodes_;
    std::size_t leaf_capacity_;
};

namespace detail {

// Upward nudge covering the f64 rounding of centroid distances, so the
// stored radius never undercuts a member's true distance and pruning stays
// conservative.
constexpr double kRadiusSlack = 1e-9;

inline std::vector<float> centroid_of(const DataMatrix& data,
                                      std::span<const std::uint32_t> points) {
    std::vector<double> acc(data.dims(), 0.0);
    for (std::uint32_t p : points) {
        const auto row = data.row(p);
        for (std::size_t j = 0; j < row.size(); ++j) acc[j] += row[j];
    }
    std::vector<float> center(data.dims());
    for (std::size_t j = 0; j < center.size(); ++j)
        center[j] = static_cast<float>(acc[j] / static_cast<double>(points.size()));
    return center;
}

inline std::uint32_t farthest_from(const DataMatrix& data, std::span<const std::uint32_t> points,
                                   std::span<const float> origin) {
    std::uint32_t best = points.front();
    double best_dist = -1.0;
    for (std::uint32_t p : points) {  // ascending order, strict > keeps the lowest index on ties
        const double dist = squared_distance(data.row(p), origin);
        if (dist > best_dist) {
            best_dist = dist;
            best = p;
        }
    }
    return best;
}

}  // namespace detail

// Recursive construction: pivots by the farthest-point heuristic, points
// assigned to the nearer pivot (ties to the first), recursion stops at
// leaf_capacity or when a split would leave one side empty.
inline BallTree build_ball_tree(const DataMatrix& data, std::size_t leaf_capacity = 40,
                                std::uint64_t seed = 0) {
    if (leaf_capacity < 1) throw ArgumentError("build_ball_tree: leaf_capacity must be >= 1");

    RngStream rng(seed, 0);
    std::vector<BallTree::Node> nodes;

    auto make_node = [&](std::span<const std::uint32_t> points) {
        BallTree::Node node;
        node.center = detail::centroid_of(data, points);
        double max_sq = 0.0;
        for (std::uint32_t p : points)
            max_sq = std::max(max_sq, detail::squared_distance(data.row(p), node.center));
        node.radius = std::sqrt(max_sq) * (1.0 + detail::kRadiusSlack);
        return node;
    };

    // Explicit recursion; returns the node id.
    auto build = [&](auto&& self, std::vector<std::uint32_t> points) -> std::int32_t {
        const auto id = static_cast<std::int32_t>(nodes.size());
        nodes.push_back(make_node(points));

        if (points.size() <= leaf_capacity) {
            nodes[id].points = std::move(points);
            return id;
        }

        const std::uint32_t anchor = points[rng.next_below(points.size())];
        const std::uint32_t pivot1 = detail::farthest_from(data, points, data.row(anchor));
        const std::uint32_t pivot2 = detail::farthest_from(data, points, data.row(pivot1));

        std::vector<std::uint32_t> left_pts, right_pts;
        for (std::uint32_t p : points) {
            const double d1 = detail::squared_distance(data.row(p), data.row(pivot1));
            const double d2 = detail::squared_distance(data.row(p), data.row(pivot2));
            (d1 <= d2 ? left_pts : right_pts).push_back(p);
        }
        if (left_pts.empty() || right_pts.empty()) {  // all points identical
            nodes[id].points = std::move(points);
            return id;
        }

        const std::int32_t left = self(self, std::move(left_pts));
        const std::int32_t right = self(self, std::move(right_pts));
        nodes[id].left = left;
        nodes[id].right = right;
        return id;
    };

    std::vector<std::uint32_t> all(data.rows());
    std::iota(all.begin(), all.end(), 0u);
    build(build, std::move(all));
    return BallTree(data, std::move(nodes), leaf_capacity);
}

// Branch-and-bound search: a subtree is pruned iff
// dist(q, center) - radius > current kth distance (strictly); children are
// visited nearer-first.
inline QueryResult ball_tree_knn(const BallTree& tree, std::span<const float> q, std::size_t k) {
    const DataMatrix& data = tree.data();
    if (k < 1 || k > data.rows())
        throw ArgumentError("ball_tree_knn: k must be in [1, " + std::to_string(data.rows()) +
                            "]");
    if (q.size() != data.dims()) throw ArgumentError("ball_tree_knn: query dimension mismatch");

    const auto& nodes = tree.nodes();
    detail::KBest best(k);
    std::size_t examined = 0;

    auto visit = [&](auto&& self, std::int32_t id) -> void {
        const auto& node = nodes[static_cast<std::size_t>(id)];
        const double center_dist = std::sqrt(detail::squared_distance(q, node.center));
        if (best.full()) {
            const double kth = std::sqrt(best.worst().first);
            if (center_dist - node.radius > kth) return;
        }
        if (node.is_leaf()) {
            for (std::uint32_t p : node.points) {
                best.offer(detail::squared_distance(q, data.row(p)),
                           static_cast<std::uint32_t>(p));
                ++examined;
            }
            return;
        }
        const auto& lc = nodes[static_cast<std::size_t>(node.left)];
        const auto& rc = nodes[static_cast<std::size_t>(node.right)];
        const double ld = detail::squared_distance(q, lc.center);
        const double rd = detail::squared_distance(q, rc.center);
        if (ld <= rd) {
            self(self, node.left);
            self(self, node.right);
        } else {
            self(self, node.right);
            self(self, node.left);
        }
    };
    visit(visit, 0);

    QueryResult result = std::move(best).finish();
    result.candidates_examined = examined;
    result.fallback_level = Fallback::none;
    return result;
}

}  // namespace rpf
