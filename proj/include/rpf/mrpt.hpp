#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "common.hpp"
#include "dataset.hpp"
#include "exact.hpp"
#include "io_detail.hpp"
#include "parallel.hpp"
#include "projection.hpp"
#include "random.hpp"
#include "result.hpp"
#include "rptree.hpp"

namespace rpf {

// Forest of T random-projection trees over one DataMatrix. Tree t is built
// from RngStream(seed, t), so the forest is identical for any build
// parallelism. depth_in_use <= built depth enables truncated traversal; the
// level-shared directions make truncation exact.
//
// The index references the matrix it was built over; the caller keeps it
// alive.
struct MRPTIndex {
    std::vector<RPTree> trees;
    const DataMatrix* data = nullptr;
    std::size_t depth_in_use = 0;
    std::size_t default_vote_threshold = 1;
    std::uint64_t seed = 0;

    std::size_t tree_count() const { return trees.size(); }
    std::size_t built_depth() const { return trees.empty() ? 0 : trees.front().depth; }
};

inline MRPTIndex build_index(const DataMatrix& data, std::size_t tree_count, std::size_t depth,
                             double sparsity_a, std::uint64_t seed, unsigned threads = 1) {
    if (tree_count < 1) throw ArgumentError("build_index: need at least one tree");
    if (depth >= 64 || (std::size_t{1} << depth) > data.rows())
        throw ArgumentError("build_index: depth " + std::to_string(depth) + " too large for " +
                            std::to_string(data.rows()) +
                            " points; maximum admissible depth is " +
                            std::to_string(max_tree_depth(data.rows())));

    MRPTIndex index;
    index.trees.resize(tree_count);
    index.data = &data;
    index.depth_in_use = depth;
    index.seed = seed;
    parallel_for(0, tree_count, threads, [&](std::size_t t) {
        RngStream rng(seed, t);
        index.trees[t] = build_tree(data, depth, sparsity_a, rng);
    });
    return index;
}

// Untuned defaults: T = 32 and leaves of roughly max(4k, 100) points.
inline std::size_t default_tree_count() { return 32; }

inline std::size_t default_depth(std::size_t n, std::size_t k) {
    const double target_leaf = static_cast<double>(std::max<std::size_t>(4 * k, 100));
    const double raw = std::floor(std::log2(static_cast<double>(n) / target_leaf));
    const auto depth = raw < 1.0 ? std::size_t{1} : static_cast<std::size_t>(raw);
    return std::min(depth, max_tree_depth(n));
}

// Points appearing in at least `votes` of the per-tree leaf lists, ascending.
inline std::vector<std::uint32_t> vote_filter(
    const std::vector<std::vector<std::uint32_t>>& leaf_lists, std::size_t votes) {
    std::vector<std::uint32_t> merged;
    std::size_t total = 0;
    for (const auto& list : leaf_lists) total += list.size();
    merged.reserve(total);
    for (const auto& list : leaf_lists) merged.insert(merged.end(), list.begin(), list.end());
    std::sort(merged.begin(), merged.end());

    std::vector<std::uint32_t> out;
    for (std::size_t i = 0; i < merged.size();) {
        std::size_t j = i;
        while (j < merged.size() && merged[j] == merged[i]) ++j;
        if (j - i >= votes) out.push_back(merged[i]);
        i = j;
    }
    return out;
}

// Candidate set of q: leaf lists from all T trees at depth l_use, filtered by
// the vote threshold.
inline std::vector<std::uint32_t> candidates(const MRPTIndex& index, std::span<const float> q,
                                             std::size_t votes, std::size_t l_use) {
    if (votes < 1 || votes > index.tree_count())
        throw ArgumentError("candidates: vote threshold must be in [1, " +
                            std::to_string(index.tree_count()) + "]");
    if (l_use > index.built_depth())
        throw ArgumentError("candidates: depth " + std::to_string(l_use) +
                            " exceeds built depth " + std::to_string(index.built_depth()));

    std::vector<std::vector<std::uint32_t>> lists;
    lists.reserve(index.tree_count());
    for (const auto& tree : index.trees) lists.push_back(query_leaf(tree, q, l_use));
    return vote_filter(lists, votes);
}

// Approximate kNN: vote-filtered candidates, exact re-ranking. If fewer than
// k candidates survive, the vote threshold is relaxed step by step, then the
// union of all leaves is taken, then a full scan; the ladder is recorded in
// fallback_level so every query returns exactly k neighbors.
inline QueryResult approx_knn(const MRPTIndex& index, std::span<const float> q, std::size_t k,
                              std::size_t votes) {
    const DataMatrix& data = *index.data;
    const std::size_t n = data.rows();
    if (k < 1 || k > n)
        throw ArgumentError("approx_knn: k must be in [1, " + std::to_string(n) + "]");
    if (q.size() != data.dims()) throw ArgumentError("approx_knn: query dimension mismatch");
    if (votes < 1 || votes > index.tree_count())
        throw ArgumentError("approx_knn: vote threshold must be in [1, " +
                            std::to_string(index.tree_count()) + "]");

    std::vector<std::vector<std::uint32_t>> lists;
    lists.reserve(index.tree_count());
    for (const auto& tree : index.trees) lists.push_back(query_leaf(tree, q, index.depth_in_use));

    Fallback fallback = Fallback::none;
    std::vector<std::uint32_t> cand = vote_filter(lists, votes);
    if (cand.size() < k && votes > 1) {
        std::size_t v = votes;
        while (v > 1 && cand.size() < k) {
            --v;
            cand = vote_filter(lists, v);
        }
        fallback = v > 1 ? Fallback::vote_relaxed : Fallback::union_all;
    }
    if (cand.size() < k) {
        cand.resize(n);
        std::iota(cand.begin(), cand.end(), 0u);
        fallback = Fallback::exhaustive;
    }

    detail::KBest best(k);
    for (std::uint32_t p : cand) best.offer(detail::squared_distance(q, data.row(p)), p);
    QueryResult result = std::move(best).finish();
    result.candidates_examined = cand.size();
    result.fallback_level = fallback;
    return result;
}

inline QueryResult approx_knn(const MRPTIndex& index, std::span<const float> q, std::size_t k) {
    return approx_knn(index, q, k, index.default_vote_threshold);
}

// ---------------------------------------------------------------------------
// Recall-targeted auto-tuning

struct AutoTuneConfig {
    double target_recall = 0.85;
    std::size_t k = 5;
    std::size_t max_trees = 32;         // T_max
    std::size_t max_depth = 0;          // l_max; 0 derives one from n
    std::size_t validation_queries = 100;
    double sparsity_a = 0.0;            // 0 derives 1/sqrt(d)
    std::uint64_t seed = 0;
    unsigned threads = 1;
};

struct GridPoint {
    std::size_t trees = 0, depth = 0, votes = 0;
    double recall = 0.0;
    double cost = 0.0;  // expected exact-distance work + projection work per query
};

struct AutoTuneResult {
    std::size_t chosen_trees = 0, chosen_depth = 0, chosen_votes = 0;
    double estimated_recall = 0.0;
    double estimated_cost = 0.0;
    bool exhaustive_mode = false;  // target recall 1.0: every query scans all points
    bool infeasible = false;       // no grid point met the target; chosen = best recall
    std::vector<GridPoint> grid_report;
};

namespace detail {

constexpr std::uint64_t kValidationStream = std::uint64_t{1} << 40;

inline std::size_t default_max_depth(std::size_t n) {
    const double raw = std::floor(std::log2(static_cast<double>(n) / 16.0));
    const auto depth = raw < 1.0 ? std::size_t{1} : static_cast<std::size_t>(raw);
    return std::min(depth, max_tree_depth(n));
}

}  // namespace detail

// Evaluates every (T, l, v) combination from a single maximal forest:
// T-subsets are tree prefixes and depths are truncated traversals, both exact
// under the level-shared directions. Validation queries are indexed points
// with the self-match excluded on both the ground-truth and the vote side.
// Returns the forest reconfigured to the chosen triple.
inline std::pair<MRPTIndex, AutoTuneResult> autotune(const DataMatrix& data,
                                                     const AutoTuneConfig& config) {
    const std::size_t n = data.rows();
    const std::size_t d = data.dims();
    if (!(config.target_recall > 0.0) || config.target_recall > 1.0)
        throw ArgumentError("autotune: target recall must be in (0, 1]");
    if (config.k < 1 || config.k + 1 > n)
        throw ArgumentError("autotune: k must be in [1, n-1]");
    if (config.max_trees < 1) throw ArgumentError("autotune: need at least one tree");
    if (config.validation_queries < 1 || config.validation_queries > n)
        throw ArgumentError("autotune: validation query count must be in [1, n]");

    const double sparsity =
        config.sparsity_a > 0.0 ? config.sparsity_a : default_sparsity(d);

    if (config.target_recall == 1.0) {
        // Single-leaf configuration: every candidate set is the whole corpus.
        MRPTIndex index = build_index(data, 1, 0, sparsity, config.seed, config.threads);
        AutoTuneResult result;
        result.chosen_trees = 1;
        result.chosen_depth = 0;
        result.chosen_votes = 1;
        result.estimated_recall = 1.0;
        result.estimated_cost = static_cast<double>(n) * static_cast<double>(d);
        result.exhaustive_mode = true;
        result.grid_report.push_back({1, 0, 1, 1.0, result.estimated_cost});
        return {std::move(index), std::move(result)};
    }

    const std::size_t l_max =
        config.max_depth > 0 ? config.max_depth : detail::default_max_depth(n);
    if (l_max < 1 || l_max >= 64 || (std::size_t{1} << l_max) > n)
        throw ArgumentError("autotune: max depth " + std::to_string(l_max) +
                            " too large for " + std::to_string(n) +
                            " points; maximum admissible depth is " +
                            std::to_string(max_tree_depth(n)));
    const std::size_t t_max = config.max_trees;
    const std::size_t k = config.k;
    const std::size_t m = config.validation_queries;

    MRPTIndex index = build_index(data, t_max, l_max, sparsity, config.seed, config.threads);
    const std::size_t nnz = index.trees.front().depth > 0
                                ? index.trees.front().level_vectors.front().nnz()
                                : 1;

    // Validation queries: m indexed points sampled without replacement.
    std::vector<std::uint32_t> queries(n);
    std::iota(queries.begin(), queries.end(), 0u);
    {
        RngStream rng(config.seed, detail::kValidationStream);
        for (std::size_t j = 0; j < m; ++j)
            std::swap(queries[j], queries[j + rng.next_below(n - j)]);
        queries.resize(m);
    }

    // Ground truth and per-tree traversal paths, per query (parallel; each
    // slot written once, so results are schedule-independent).
    std::vector<std::vector<std::uint32_t>> truth(m);
    // paths[q][t][l-1] = node offset reached in tree t after l levels.
    std::vector<std::vector<std::vector<std::uint32_t>>> paths(m);
    parallel_for(0, m, config.threads, [&](std::size_t qi) {
        const auto q = data.row(queries[qi]);
        truth[qi] = exhaustive_knn(data, q, k, queries[qi]).indices;
        std::sort(truth[qi].begin(), truth[qi].end());
        paths[qi].resize(t_max);
        for (std::size_t t = 0; t < t_max; ++t) {
            const RPTree& tree = index.trees[t];
            auto& path = paths[qi][t];
            path.resize(l_max);
            std::size_t node = 0;
            for (std::size_t level = 0; level < l_max; ++level) {
                const double value = project(q, tree.level_vectors[level]);
                const double threshold =
                    tree.split_thresholds[(std::size_t{1} << level) - 1 + node];
                node = 2 * node + (value < threshold ? 0 : 1);
                path[level] = static_cast<std::uint32_t>(node);
            }
        }
    });

    // Accumulate mean recall and mean candidate-set size for every (T, l, v).
    // Serial over queries in sampling order, so sums are bit-identical for
    // any thread count.
    const std::size_t pairs = t_max * (t_max + 1) / 2;  // (T, v<=T) combinations
    auto cell = [&](std::size_t t, std::size_t l, std::size_t v) {
        return (l - 1) * pairs + t * (t - 1) / 2 + (v - 1);
    };
    std::vector<double> recall_sum(l_max * pairs, 0.0);
    std::vector<double> csize_sum(l_max * pairs, 0.0);

    std::vector<std::uint32_t> counts(n, 0);
    std::vector<std::uint32_t> touched;
    std::vector<std::uint32_t> hist(t_max + 2, 0);
    touched.reserve(n);

    for (std::size_t qi = 0; qi < m; ++qi) {
        const std::uint32_t self = queries[qi];
        const auto& true_nbrs = truth[qi];
        for (std::size_t l = 1; l <= l_max; ++l) {
            for (std::uint32_t p : touched) counts[p] = 0;
            touched.clear();
            std::fill(hist.begin(), hist.end(), 0u);
            const std::size_t leaf_span = std::size_t{1} << (l_max - l);

            for (std::size_t t = 0; t < t_max; ++t) {
                const RPTree& tree = index.trees[t];
                const std::size_t node = paths[qi][t][l - 1];
                for (std::size_t leaf = node * leaf_span; leaf < (node + 1) * leaf_span; ++leaf) {
                    for (std::uint32_t p : tree.leaf_buckets[leaf]) {
                        if (p == self) continue;
                        const std::uint32_t c = counts[p];
                        if (c == 0)
                            touched.push_back(p);
                        else
                            --hist[c];
                        counts[p] = c + 1;
                        ++hist[c + 1];
                    }
                }

                const std::size_t trees_used = t + 1;
                // Candidate-set sizes for all v at once via suffix sums.
                std::size_t suffix = 0;
                std::vector<std::size_t> csize(trees_used + 1, 0);
                for (std::size_t c = trees_used; c >= 1; --c) {
                    suffix += hist[c];
                    csize[c] = suffix;
                }
                for (std::size_t v = 1; v <= trees_used; ++v) {
                    std::size_t hits = 0;
                    for (std::uint32_t nb : true_nbrs)
                        if (counts[nb] >= v) ++hits;
                    const std::size_t idx = cell(trees_used, l, v);
                    recall_sum[idx] += static_cast<double>(hits) / static_cast<double>(k);
                    csize_sum[idx] += static_cast<double>(csize[v]);
                }
            }
        }
    }

    // Grid report and selection, in (T, l, v) order; first minimal-cost
    // feasible triple wins, so ties resolve deterministically.
    AutoTuneResult result;
    result.grid_report.reserve(l_max * pairs);
    const GridPoint* best_feasible = nullptr;
    const GridPoint* best_overall = nullptr;
    for (std::size_t t = 1; t <= t_max; ++t) {
        for (std::size_t l = 1; l <= l_max; ++l) {
            for (std::size_t v = 1; v <= t; ++v) {
                const std::size_t idx = cell(t, l, v);
                GridPoint point;
                point.trees = t;
                point.depth = l;
                point.votes = v;
                point.recall = recall_sum[idx] / static_cast<double>(m);
                point.cost = (csize_sum[idx] / static_cast<double>(m)) * static_cast<double>(d) +
                             static_cast<double>(t * l * nnz);
                result.grid_report.push_back(point);
            }
        }
    }
    for (const GridPoint& point : result.grid_report) {
        if (point.recall >= config.target_recall &&
            (!best_feasible || point.cost < best_feasible->cost))
            best_feasible = &point;
        if (!best_overall || point.recall > best_overall->recall ||
            (point.recall == best_overall->recall && point.cost < best_overall->cost))
            best_overall = &point;
    }

    const GridPoint* chosen = best_feasible;
    if (!chosen) {
        result.infeasible = true;
        chosen = best_overall;
    }
    result.chosen_trees = chosen->trees;
    result.chosen_depth = chosen->depth;
    result.chosen_votes = chosen->votes;
    result.estimated_recall = chosen->recall;
    result.estimated_cost = chosen->cost;

    index.trees.resize(result.chosen_trees);
    index.depth_in_use = result.chosen_depth;
    index.default_vote_threshold = result.chosen_votes;
    return {std::move(index), std::move(result)};
}

// ---------------------------------------------------------------------------
// ANNI index serialization. Little-endian layout:
//   magic "ANNI", version u32 = 1, seed u64, T u64, l u64, d u64, n u64,
//   checksum u64, then per tree: l sparse vectors (nnz u64, indices u64[],
//   weights f64[]), 2^l - 1 f64 thresholds, 2^l buckets (count u64 + u64
//   indices).
// The checksum is FNV-1a over the data matrix payload bytes chained with the
// tree payload bytes, so both a swapped data file and a tampered index file
// are rejected at load.
//
// The index is saved as currently configured: the active trees at
// depth_in_use, with buckets below the cut merged. Truncation is exact, so
// the reloaded index answers queries identically.

inline void save_index(const MRPTIndex& index, const std::filesystem::path& path) {
    if (index.trees.empty() || index.data == nullptr)
        throw ArgumentError("save_index: empty index");
    if (index.depth_in_use > index.built_depth())
        throw ArgumentError("save_index: active depth exceeds built depth");
    const DataMatrix& data = *index.data;
    const std::size_t l = index.depth_in_use;

    std::ostringstream payload(std::ios::binary);
    for (const RPTree& tree : index.trees) {
        for (std::size_t level = 0; level < l; ++level) {
            const SparseVector& v = tree.level_vectors[level];
            detail::write_u64(payload, v.nnz());
            for (std::uint32_t i : v.indices) detail::write_u64(payload, i);
            for (double w : v.weights) detail::write_f64(payload, w);
        }
        for (std::size_t i = 0; i + 1 < (std::size_t{1} << l); ++i)
            detail::write_f64(payload, tree.split_thresholds[i]);
        const std::size_t merge_span = std::size_t{1} << (tree.depth - l);
        for (std::size_t j = 0; j < (std::size_t{1} << l); ++j) {
            std::vector<std::uint32_t> bucket;
            for (std::size_t leaf = j * merge_span; leaf < (j + 1) * merge_span; ++leaf)
                bucket.insert(bucket.end(), tree.leaf_buckets[leaf].begin(),
                              tree.leaf_buckets[leaf].end());
            std::sort(bucket.begin(), bucket.end());
            detail::write_u64(payload, bucket.size());
            for (std::uint32_t p : bucket) detail::write_u64(payload, p);
        }
    }

    const std::string bytes = payload.str();
    std::uint64_t checksum = detail::fnv1a_f32(data.values());
    checksum = detail::fnv1a(
        {reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()}, checksum);

    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    detail::write_bytes(os, "ANNI", 4);
    detail::write_u32(os, 1);
    detail::write_u64(os, index.seed);
    detail::write_u64(os, index.tree_count());
    detail::write_u64(os, l);
    detail::write_u64(os, data.dims());
    detail::write_u64(os, data.rows());
    detail::write_u64(os, checksum);
    detail::write_bytes(os, bytes.data(), bytes.size());
    os.flush();
    if (!os) throw IoError("write failed: " + path.string());
}

inline MRPTIndex load_index(const std::filesystem::path& path, const DataMatrix& data) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path.string());

    char magic[4];
    detail::read_bytes(is, magic, 4, "ANNI magic");
    if (std::string_view(magic, 4) != "ANNI")
        throw FormatError("bad magic in " + path.string() + ": expected ANNI");
    const std::uint32_t version = detail::read_u32(is, "ANNI version");
    if (version != 1)
        throw FormatError("unsupported ANNI version " + std::to_string(version) + " in " +
                          path.string());
    const std::uint64_t seed = detail::read_u64(is, "ANNI seed");
    const std::uint64_t tree_count = detail::read_u64(is, "ANNI tree count");
    const std::uint64_t depth = detail::read_u64(is, "ANNI depth");
    const std::uint64_t d = detail::read_u64(is, "ANNI dimension");
    const std::uint64_t n = detail::read_u64(is, "ANNI point count");
    const std::uint64_t checksum = detail::read_u64(is, "ANNI checksum");

    if (tree_count < 1 || depth >= 64)
        throw FormatError("implausible ANNI header in " + path.string());
    if (n != data.rows() || d != data.dims())
        throw IntegrityError("index " + path.string() + " was built over a " +
                             std::to_string(n) + "x" + std::to_string(d) +
                             " matrix, supplied data is " + std::to_string(data.rows()) + "x" +
                             std::to_string(data.dims()));

    std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    std::uint64_t actual = detail::fnv1a_f32(data.values());
    actual = detail::fnv1a(
        {reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()}, actual);
    if (actual != checksum)
        throw IntegrityError("checksum mismatch for " + path.string() +
                             ": index does not match the supplied data file");

    std::istringstream payload(bytes, std::ios::binary);
    MRPTIndex index;
    index.data = &data;
    index.seed = seed;
    index.depth_in_use = depth;
    index.default_vote_threshold = 1;
    index.trees.resize(tree_count);
    for (auto& tree : index.trees) {
        tree.depth = depth;
        tree.dim = d;
        tree.indexed_count = n;
        tree.level_vectors.resize(depth);
        for (auto& vec : tree.level_vectors) {
            const std::uint64_t nnz = detail::read_u64(payload, "sparse vector size");
            if (nnz < 1 || nnz > d) throw FormatError("invalid sparse vector in " + path.string());
            vec.dim = d;
            vec.indices.resize(nnz);
            vec.weights.resize(nnz);
            for (auto& i : vec.indices) {
                const std::uint64_t raw = detail::read_u64(payload, "sparse vector index");
                if (raw >= d) throw FormatError("sparse index out of range in " + path.string());
                i = static_cast<std::uint32_t>(raw);
            }
            if (!std::is_sorted(vec.indices.begin(), vec.indices.end()) ||
                std::adjacent_find(vec.indices.begin(), vec.indices.end()) != vec.indices.end())
                throw FormatError("sparse indices not strictly increasing in " + path.string());
            for (auto& w : vec.weights) w = detail::read_f64(payload, "sparse vector weight");
        }
        tree.split_thresholds.resize((std::size_t{1} << depth) - 1);
        for (auto& t : tree.split_thresholds) t = detail::read_f64(payload, "threshold");
        tree.leaf_buckets.resize(std::size_t{1} << depth);
        std::size_t total = 0;
        for (auto& bucket : tree.leaf_buckets) {
            const std::uint64_t count = detail::read_u64(payload, "bucket size");
            if (count > n) throw FormatError("oversized bucket in " + path.string());
            bucket.resize(count);
            for (auto& p : bucket) {
                const std::uint64_t raw = detail::read_u64(payload, "bucket entry");
                if (raw >= n) throw FormatError("bucket entry out of range in " + path.string());
                p = static_cast<std::uint32_t>(raw);
            }
            total += count;
        }
        if (total != n)
            throw FormatError("tree buckets in " + path.string() + " cover " +
                              std::to_string(total) + " points, expected " + std::to_string(n));
    }
    return index;
}

}  // namespace rpf
