#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "common.hpp"
#include "random.hpp"

namespace rpf {

// A sparse random direction: nnz coordinates with standard-normal weights.
struct SparseVector {
    std::size_t dim = 0;
    std::vector<std::uint32_t> indices;  // strictly increasing, all < dim
    std::vector<double> weights;         // same length as indices

    std::size_t nnz() const { return indices.size(); }
};

// Default sparsity: nnz ~ sqrt(d), the usual sparse random-projection choice.
inline double default_sparsity(std::size_t d) { return 1.0 / std::sqrt(static_cast<double>(d)); }

// Samples nnz = max(1, round(a*d)) distinct coordinates uniformly without
// replacement, with i.i.d. standard-normal weights. Deterministic in rng.
inline SparseVector sample_sparse_vector(std::size_t d, double sparsity_a, RngStream& rng) {
    if (d < 1) throw ArgumentError("sample_sparse_vector: d must be >= 1");
    if (!(sparsity_a > 0.0) || sparsity_a > 1.0)
        throw ArgumentError("sample_sparse_vector: sparsity must be in (0, 1]");

    const auto rounded = std::llround(sparsity_a * static_cast<double>(d));
    const std::size_t nnz = std::min<std::size_t>(d, std::max<long long>(1, rounded));

    SparseVector v;
    v.dim = d;
    // Partial Fisher-Yates: first nnz entries become the sample.
    std::vector<std::uint32_t> pool(d);
    std::iota(pool.begin(), pool.end(), 0u);
    for (std::size_t j = 0; j < nnz; ++j)
        std::swap(pool[j], pool[j + rng.next_below(d - j)]);
    v.indices.assign(pool.begin(), pool.begin() + nnz);
    std::sort(v.indices.begin(), v.indices.end());

    v.weights.reserve(nnz);
    for (std::size_t j = 0; j < nnz; ++j) v.weights.push_back(rng.next_normal());
    return v;
}

// Dot product of a point with the sparse direction, accumulated in 64-bit in
// index order.
inline double project(std::span<const float> point, const SparseVector& v) {
    if (point.size() != v.dim)
        throw ArgumentError("project: point has " + std::to_string(point.size()) +
                            " dims, direction expects " + std::to_string(v.dim));
    double acc = 0.0;
    for (std::size_t j = 0; j < v.indices.size(); ++j)
        acc += v.weights[j] * static_cast<double>(point[v.indices[j]]);
    return acc;
}

}  // namespace rpf
