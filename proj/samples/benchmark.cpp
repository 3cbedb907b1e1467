// Cross-validated comparison of the three searchers on one synthetic set.

#include <cstdio>
#include <memory>

#include <rpf/rpf.hpp>

int main() {
    using namespace rpf;

    SyntheticData synth = generate_synthetic(1500, 40, 4, 1.0, 7);
    const unsigned threads = hardware_threads();

    const Method methods[] = {
        {"exhaustive", "full scan",
         [](const DataMatrix& train, std::uint64_t) {
             return std::make_unique<ExhaustiveSearcher>(train);
         }},
        {"ball_tree", "leaf_capacity=40",
         [](const DataMatrix& train, std::uint64_t seed) {
             return std::make_unique<BallTreeSearcher>(train, 40, seed);
         }},
        {"mrpt", "tuned target_recall=0.85",
         [threads](const DataMatrix& train, std::uint64_t seed) {
             AutoTuneConfig config;
             config.target_recall = 0.85;
             config.k = 5;
             config.seed = seed;
             config.threads = threads;
             auto [index, tune] = autotune(train, config);
             return std::make_unique<MrptSearcher>(std::move(index));
         }},
    };

    std::printf("%-12s %-10s %-10s %-10s %-10s\n", "method", "accuracy", "f1", "build_s",
                "query_s");
    for (const Method& method : methods) {
        CrossValidationResult cv =
            cross_validate(synth.matrix, synth.labels, method, 5, 2, 5, 42, threads);
        double build = 0, query = 0;
        for (const auto& rec : cv.records) {
            build += rec.build_seconds;
            query += rec.query_seconds;
        }
        std::printf("%-12s %-10.4f %-10.4f %-10.3f %-10.3f\n", cv.method.c_str(),
                    cv.mean.accuracy, cv.mean.f1, build, query);
    }
    return 0;
}
