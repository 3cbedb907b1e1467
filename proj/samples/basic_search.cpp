// Minimal walkthrough: make a dataset, tune an index to a recall target,
// answer a few queries, and compare against the exact answer.

#include <cstdio>

#include <rpf/rpf.hpp>

int main() {
    using namespace rpf;

    SyntheticData synth = generate_synthetic(2000, 50, 5, 0.4, 123);
    const DataMatrix& data = synth.matrix;

    AutoTuneConfig config;
    config.target_recall = 0.9;
    config.k = 5;
    config.seed = 123;
    config.threads = hardware_threads();
    auto [index, tune] = autotune(data, config);
    std::printf("tuned: T=%zu l=%zu v=%zu, estimated recall %.3f\n", tune.chosen_trees,
                tune.chosen_depth, tune.chosen_votes, tune.estimated_recall);

    for (std::size_t q = 0; q < 3; ++q) {
        QueryResult approx = approx_knn(index, data.row(q), 5);
        QueryResult exact = exhaustive_knn(data, data.row(q), 5);
        std::printf("query %zu: recall@5 %.1f, %zu candidates, nearest index %u at %.4f\n", q,
                    recall_at_k(approx, exact), approx.candidates_examined, approx.indices[0],
                    approx.distances[0]);
    }
    return 0;
}
