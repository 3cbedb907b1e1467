#pragma once

#include <chrono>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "common.hpp"
#include "dataset.hpp"
#include "exact.hpp"
#include "mrpt.hpp"
#include "parallel.hpp"
#include "result.hpp"

namespace rpf {

// Common interface over the exact and approximate neighbor searchers so the
// classifier and the evaluation code do not care which one answers. knn() is
// const and safe to call from several threads at once.
class Searcher {
  public:
    virtual ~Searcher() = default;
    virtual QueryResult knn(std::span<const float> q, std::size_t k) const = 0;
    virtual std::string name() const = 0;
    virtual std::string config_summary() const = 0;
};

class ExhaustiveSearcher final : public Searcher {
  public:
    explicit ExhaustiveSearcher(const DataMatrix& data) : data_(&data) {}

    QueryResult knn(std::span<const float> q, std::size_t k) const override {
        return exhaustive_knn(*data_, q, k);
    }
    std::string name() const override { return "exhaustive"; }
    std::string config_summary() const override { return "full scan"; }

  private:
    const DataMatrix* data_;
};

class BallTreeSearcher final : public Searcher {
  public:
    explicit BallTreeSearcher(const DataMatrix& data, std::size_t leaf_capacity = 40,
                              std::uint64_t seed = 0)
        : tree_(build_ball_tree(data, leaf_capacity, seed)) {}

    QueryResult knn(std::span<const float> q, std::size_t k) const override {
        return ball_tree_knn(tree_, q, k);
    }
    std::string name() const override { return "ball_tree"; }
    std::string config_summary() const override {
        return "leaf_capacity=" + std::to_string(tree_.leaf_capacity());
    }

    const BallTree& tree() const { return tree_; }

  private:
    BallTree tree_;
};

class MrptSearcher final : public Searcher {
  public:
    explicit MrptSearcher(MRPTIndex index) : index_(std::move(index)) {}

    QueryResult knn(std::span<const float> q, std::size_t k) const override {
        return approx_knn(index_, q, k);
    }
    std::string name() const override { return "mrpt"; }
    std::string config_summary() const override {
        return "T=" + std::to_string(index_.tree_count()) +
               " l=" + std::to_string(index_.depth_in_use) +
               " v=" + std::to_string(index_.default_vote_threshold);
    }

    const MRPTIndex& index() const { return index_; }

  private:
    MRPTIndex index_;
};

// Majority vote over the k nearest training points. votes[c] is the number
// of neighbors with class c. A tied vote goes to the tied class whose voters
// sit closest in total; a still-tied vote goes to the lowest class id.
// tie_broken records that the vote alone was not decisive.
struct Prediction {
    std::uint32_t class_id = 0;
    std::vector<std::size_t> votes;
    bool tie_broken = false;
};

inline Prediction knn_classify(const QueryResult& result, const LabelVector& labels,
                               std::size_t k) {
    if (result.indices.size() != k)
        throw ArgumentError("knn_classify: expected " + std::to_string(k) + " neighbors, got " +
                            std::to_string(result.indices.size()));
    const std::size_t class_count = labels.class_names.size();

    Prediction pred;
    pred.votes.assign(class_count, 0);
    std::vector<double> distance_sum(class_count, 0.0);
    for (std::size_t i = 0; i < result.indices.size(); ++i) {
        if (result.indices[i] >= labels.ids.size())
            throw ArgumentError("knn_classify: label vector does not cover the training points");
        const std::uint32_t c = labels.ids[result.indices[i]];
        ++pred.votes[c];
        distance_sum[c] += result.distances[i];
    }

    std::size_t top = 0;
    for (std::size_t c = 0; c < class_count; ++c) top = std::max(top, pred.votes[c]);

    std::uint32_t winner = 0;
    double winner_sum = std::numeric_limits<double>::infinity();
    std::size_t contenders = 0;
    for (std::size_t c = 0; c < class_count; ++c) {
        if (pred.votes[c] != top) continue;
        ++contenders;
        if (distance_sum[c] < winner_sum) {
            winner = static_cast<std::uint32_t>(c);
            winner_sum = distance_sum[c];
        }
    }
    pred.class_id = winner;
    pred.tie_broken = contenders > 1;
    return pred;
}

inline Prediction classify(const Searcher& searcher, const LabelVector& labels,
                           std::span<const float> q, std::size_t k) {
    return knn_classify(searcher.knn(q, k), labels, k);
}

// Batch prediction over `count` queries stored flat, row-major, with wall
// time per query and for the whole batch. An empty batch yields empty lists.
struct BatchResult {
    std::vector<Prediction> predictions;
    std::vector<double> query_seconds;
    double total_seconds = 0;
};

inline BatchResult predict_batch(const Searcher& searcher, const LabelVector& labels,
                                 std::span<const float> queries, std::size_t dim, std::size_t k,
                                 unsigned threads = 1) {
    if (dim < 1) throw ArgumentError("predict_batch: dimension must be >= 1");
    if (queries.size() % dim != 0)
        throw ArgumentError("predict_batch: flat query buffer is not a multiple of the dimension");
    const std::size_t count = queries.size() / dim;

    BatchResult batch;
    batch.predictions.resize(count);
    batch.query_seconds.resize(count);
    const auto start = std::chrono::steady_clock::now();
    parallel_for(0, count, threads, [&](std::size_t i) {
        const auto begin = std::chrono::steady_clock::now();
        batch.predictions[i] = classify(searcher, labels, queries.subspan(i * dim, dim), k);
        batch.query_seconds[i] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - begin).count();
    });
    batch.total_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return batch;
}

inline BatchResult predict_batch(const Searcher& searcher, const LabelVector& labels,
                                 const DataMatrix& queries, std::size_t k,
                                 unsigned threads = 1) {
    return predict_batch(searcher, labels, queries.values(), queries.dims(), k, threads);
}

}  // namespace rpf
