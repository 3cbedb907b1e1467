#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "common.hpp"
#include "dataset.hpp"
#include "projection.hpp"
#include "random.hpp"

namespace rpf {

// One depth-l sparse random-projection tree with median splits. Built
// level-wise: a single random direction is shared by every node of a level,
// so a query costs l sparse projections and truncating traversal at depth
// s < l is exactly a depth-s tree built from the same directions.
//
// Stored as flat arrays in heap order: node 0 is the root, children of node i
// are 2i+1 and 2i+2.
struct RPTree {
    std::size_t depth = 0;          // l
    std::size_t dim = 0;            // d of the indexed data
    std::size_t indexed_count = 0;  // n
    std::vector<SparseVector> level_vectors;              // one per level
    std::vector<double> split_thresholds;                 // 2^l - 1, heap order
    std::vector<std::vector<std::uint32_t>> leaf_buckets;  // 2^l, each sorted ascending

    std::size_t leaf_count() const { return leaf_buckets.size(); }
};

inline std::size_t max_tree_depth(std::size_t n) {
    return static_cast<std::size_t>(std::bit_width(n)) - 1;  // floor(log2 n), n >= 1
}

// Median-split build. Points of a node are ordered by projection value (ties
// by point index ascending); the first ceil(m/2) go left; the stored
// threshold is the midpoint of the boundary gap. Deterministic in rng, which
// is consumed strictly level by level.
inline RPTree build_tree(const DataMatrix& data, std::size_t depth, double sparsity_a,
                         RngStream& rng) {
    const std::size_t n = data.rows();
    if (depth >= 64 || (std::size_t{1} << depth) > n)
        throw ArgumentError("build_tree: depth " + std::to_string(depth) + " too large for " +
                            std::to_string(n) + " points; maximum admissible depth is " +
                            std::to_string(max_tree_depth(n)));

    RPTree tree;
    tree.depth = depth;
    tree.dim = data.dims();
    tree.indexed_count = n;
    tree.level_vectors.reserve(depth);
    tree.split_thresholds.resize((std::size_t{1} << depth) - 1);

    // Points of each node occupy a contiguous segment of `order`.
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    std::vector<std::size_t> bounds{0, n};  // segment offsets for the current level

    std::vector<std::pair<double, std::uint32_t>> keyed;
    for (std::size_t level = 0; level < depth; ++level) {
        SparseVector direction = sample_sparse_vector(data.dims(), sparsity_a, rng);
        std::vector<std::size_t> next_bounds;
        next_bounds.reserve(bounds.size() * 2 - 1);

        for (std::size_t node = 0; node + 1 < bounds.size(); ++node) {
            const std::size_t lo = bounds[node], hi = bounds[node + 1];
            const std::size_t m = hi - lo;
            keyed.clear();
            keyed.reserve(m);
            for (std::size_t i = lo; i < hi; ++i)
                keyed.emplace_back(project(data.row(order[i]), direction), order[i]);
            std::sort(keyed.begin(), keyed.end());

            const std::size_t left = (m + 1) / 2;
            tree.split_thresholds[(std::size_t{1} << level) - 1 + node] =
                0.5 * (keyed[left - 1].first + keyed[left].first);
            for (std::size_t i = 0; i < m; ++i) order[lo + i] = keyed[i].second;

            next_bounds.push_back(lo);
            next_bounds.push_back(lo + left);
        }
        next_bounds.push_back(n);
        bounds = std::move(next_bounds);
        tree.level_vectors.push_back(std::move(direction));
    }

    tree.leaf_buckets.resize(std::size_t{1} << depth);
    for (std::size_t leaf = 0; leaf + 1 < bounds.size(); ++leaf) {
        auto& bucket = tree.leaf_buckets[leaf];
        bucket.assign(order.begin() + static_cast<std::ptrdiff_t>(bounds[leaf]),
                      order.begin() + static_cast<std::ptrdiff_t>(bounds[leaf + 1]));
        std::sort(bucket.begin(), bucket.end());
    }
    return tree;
}

// Routes q through the first stop_depth levels ("< threshold goes left") and
// returns every indexed point below the reached node, leaf by leaf.
inline std::vector<std::uint32_t> query_leaf(const RPTree& tree, std::span<const float> q,
                                             std::size_t stop_depth) {
    if (q.size() != tree.dim)
        throw ArgumentError("query_leaf: query has " + std::to_string(q.size()) +
                            " dims, tree expects " + std::to_string(tree.dim));
    if (stop_depth > tree.depth)
        throw ArgumentError("query_leaf: stop depth " + std::to_string(stop_depth) +
                            " exceeds tree depth " + std::to_string(tree.depth));

    std::size_t node = 0;  // offset within its level
    for (std::size_t level = 0; level < stop_depth; ++level) {
        const double value = project(q, tree.level_vectors[level]);
        const double threshold = tree.split_thresholds[(std::size_t{1} << level) - 1 + node];
        node = 2 * node + (value < threshold ? 0 : 1);
    }

    const std::size_t span = std::size_t{1} << (tree.depth - stop_depth);
    std::vector<std::uint32_t> out;
    for (std::size_t leaf = node * span; leaf < (node + 1) * span; ++leaf)
        out.insert(out.end(), tree.leaf_buckets[leaf].begin(), tree.leaf_buckets[leaf].end());
    return out;
}

}  // namespace rpf
