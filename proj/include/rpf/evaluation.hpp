#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "classifier.hpp"
#include "common.hpp"
#include "dataset.hpp"
#include "exact.hpp"
#include "mrpt.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "result.hpp"

namespace rpf {

// ---------------------------------------------------------------------------
// Confusion matrix and derived measures

class ConfusionMatrix {
  public:
    explicit ConfusionMatrix(std::size_t class_count)
        : class_count_(class_count), counts_(class_count * class_count, 0) {
        if (class_count < 1) throw ArgumentError("ConfusionMatrix: need at least one class");
    }

    void add(std::uint32_t actual, std::uint32_t predicted) {
        if (actual >= class_count_ || predicted >= class_count_)
            throw ArgumentError("ConfusionMatrix: class id out of range");
        ++counts_[actual * class_count_ + predicted];
    }

    std::uint64_t at(std::size_t actual, std::size_t predicted) const {
        return counts_[actual * class_count_ + predicted];
    }
    std::size_t class_count() const { return class_count_; }

    std::uint64_t total() const {
        std::uint64_t t = 0;
        for (auto c : counts_) t += c;
        return t;
    }
    std::uint64_t trace() const {
        std::uint64_t t = 0;
        for (std::size_t c = 0; c < class_count_; ++c) t += at(c, c);
        return t;
    }

  private:
    std::size_t class_count_;
    std::vector<std::uint64_t> counts_;
};

inline ConfusionMatrix confusion(std::span<const std::uint32_t> y_true,
                                 std::span<const std::uint32_t> y_pred,
                                 std::size_t class_count) {
    if (y_true.size() != y_pred.size())
        throw ArgumentError("confusion: label vectors have different lengths");
    ConfusionMatrix cm(class_count);
    for (std::size_t i = 0; i < y_true.size(); ++i) cm.add(y_true[i], y_pred[i]);
    return cm;
}

// Macro averages with a per-class breakdown. sensitivity and recall share a
// formula and are computed as two fields deliberately; accuracy is the
// overall trace / total, not an average.
struct MetricsReport {
    double accuracy = 0, sensitivity = 0, specificity = 0, precision = 0, recall = 0, f1 = 0;

    struct PerClass {
        double sensitivity = 0, specificity = 0, precision = 0, recall = 0, f1 = 0;
    };
    std::vector<PerClass> per_class;
};

namespace detail {

inline double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace detail

inline MetricsReport metrics(const ConfusionMatrix& cm) {
    const std::uint64_t total = cm.total();
    if (total == 0) throw ArgumentError("metrics: empty confusion matrix");
    const std::size_t C = cm.class_count();

    MetricsReport report;
    report.per_class.resize(C);
    for (std::size_t c = 0; c < C; ++c) {
        double tp = static_cast<double>(cm.at(c, c));
        double row = 0, col = 0;
        for (std::size_t j = 0; j < C; ++j) {
            row += static_cast<double>(cm.at(c, j));
            col += static_cast<double>(cm.at(j, c));
        }
        const double fn = row - tp;
        const double fp = col - tp;
        const double tn = static_cast<double>(total) - tp - fn - fp;

        auto& pc = report.per_class[c];
        pc.sensitivity = detail::ratio(tp, tp + fn);
        pc.specificity = detail::ratio(tn, tn + fp);
        pc.precision = detail::ratio(tp, tp + fp);
        pc.f1 = detail::ratio(2.0 * pc.precision * pc.sensitivity, pc.precision + pc.sensitivity);
    }
    // recall kept as its own pass so the sensitivity = recall invariant is a
    // statement about two computations, not one value copied.
    for (std::size_t c = 0; c < C; ++c) {
        double tp = static_cast<double>(cm.at(c, c));
        double row = 0;
        for (std::size_t j = 0; j < C; ++j) row += static_cast<double>(cm.at(c, j));
        report.per_class[c].recall = detail::ratio(tp, row);
    }

    for (const auto& pc : report.per_class) {
        report.sensitivity += pc.sensitivity;
        report.specificity += pc.specificity;
        report.precision += pc.precision;
        report.recall += pc.recall;
        report.f1 += pc.f1;
    }
    const double n_classes = static_cast<double>(C);
    report.sensitivity /= n_classes;
    report.specificity /= n_classes;
    report.precision /= n_classes;
    report.recall /= n_classes;
    report.f1 /= n_classes;
    report.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
    return report;
}

// Fraction of the true k nearest neighbors the approximate result recovered.
inline double recall_at_k(const QueryResult& approx, const QueryResult& exact) {
    if (approx.indices.size() != exact.indices.size())
        throw ArgumentError("recall_at_k: results hold different numbers of neighbors");
    std::vector<std::uint32_t> a = approx.indices;
    std::vector<std::uint32_t> b = exact.indices;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::vector<std::uint32_t> shared;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(shared));
    return static_cast<double>(shared.size()) / static_cast<double>(exact.indices.size());
}

// ---------------------------------------------------------------------------
// Cross-validated benchmarking

// A method is a named searcher recipe; the factory gets the training matrix
// of the fold plus a per-fold seed and returns a ready searcher. Its wall
// time is the fold's build time.
struct Method {
    std::string name;
    std::string config_summary;
    std::function<std::unique_ptr<Searcher>(const DataMatrix& train, std::uint64_t fold_seed)>
        factory;
};

struct BenchmarkRecord {
    std::size_t repetition = 0;
    std::size_t fold = 0;
    MetricsReport metrics;
    double build_seconds = 0;
    double query_seconds = 0;
    std::vector<std::string> warnings;
};

struct MetricsSummary {
    double accuracy = 0, sensitivity = 0, specificity = 0, precision = 0, recall = 0, f1 = 0;
};

struct CrossValidationResult {
    std::string method;
    std::string config;
    std::uint64_t seed = 0;
    std::size_t folds = 0;
    std::size_t repetitions = 0;
    std::size_t k = 0;
    std::vector<BenchmarkRecord> records;  // repetition-major, fold-minor
    MetricsSummary mean;
    MetricsSummary stddev;  // population standard deviation over fold x repetition cells
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

inline std::uint64_t fold_seed(std::uint64_t seed, std::size_t repetition, std::size_t fold) {
    return RngStream(seed, (static_cast<std::uint64_t>(repetition) << 32) |
                               static_cast<std::uint64_t>(fold))
        .next_u64();
}

}  // namespace detail

// Per repetition r: a stratified fold plan seeded with seed + r; per fold a
// fresh searcher built on the training rows only, test rows predicted and
// scored against the full class set. Queries fan out across threads; cells
// run in order, so records and summaries are identical for any thread count.
inline CrossValidationResult cross_validate(const DataMatrix& data, const LabelVector& labels,
                                            const Method& method, std::size_t folds,
                                            std::size_t repetitions, std::size_t k,
                                            std::uint64_t seed, unsigned threads = 1) {
    if (repetitions < 1) throw ArgumentError("cross_validate: need at least one repetition");
    if (k < 1) throw ArgumentError("cross_validate: k must be >= 1");
    if (!method.factory) throw ArgumentError("cross_validate: method has no factory");
    labels.validate();
    if (labels.ids.size() != data.rows())
        throw ArgumentError("cross_validate: label count does not match matrix rows");
    const std::size_t C = labels.class_names.size();

    CrossValidationResult result;
    result.method = method.name;
    result.config = method.config_summary;
    result.seed = seed;
    result.folds = folds;
    result.repetitions = repetitions;
    result.k = k;

    for (std::size_t r = 0; r < repetitions; ++r) {
        const FoldPlan plan = stratified_kfold(labels, folds, seed + r);
        for (std::size_t f = 0; f < plan.folds.size(); ++f) {
            const auto& fold = plan.folds[f];
            if (fold.train.size() < k)
                throw ArgumentError("cross_validate: k=" + std::to_string(k) +
                                    " exceeds a training fold of " +
                                    std::to_string(fold.train.size()) + " rows");

            BenchmarkRecord record;
            record.repetition = r;
            record.fold = f;

            const DataMatrix train = data.select(fold.train);
            const LabelVector train_labels = labels.select(fold.train);
            {
                std::vector<std::size_t> present(C, 0);
                for (std::uint32_t id : train_labels.ids) ++present[id];
                for (std::size_t c = 0; c < C; ++c)
                    if (present[c] == 0)
                        record.warnings.push_back("class " + labels.class_names[c] +
                                                 " absent from training fold " +
                                                 std::to_string(f));
            }

            auto start = std::chrono::steady_clock::now();
            const std::unique_ptr<Searcher> searcher =
                method.factory(train, detail::fold_seed(seed, r, f));
            record.build_seconds = detail::seconds_since(start);

            const DataMatrix test = data.select(fold.test);
            const BatchResult batch = predict_batch(*searcher, train_labels, test, k, threads);
            record.query_seconds = batch.total_seconds;

            ConfusionMatrix cm(C);
            for (std::size_t i = 0; i < fold.test.size(); ++i)
                cm.add(labels.ids[fold.test[i]], batch.predictions[i].class_id);
            record.metrics = metrics(cm);
            result.records.push_back(std::move(record));
        }
    }

    const double cells = static_cast<double>(result.records.size());
    auto summarize = [&](auto pick) {
        double mean = 0;
        for (const auto& rec : result.records) mean += pick(rec.metrics);
        mean /= cells;
        double var = 0;
        for (const auto& rec : result.records) {
            const double dev = pick(rec.metrics) - mean;
            var += dev * dev;
        }
        return std::pair<double, double>(mean, std::sqrt(var / cells));
    };
    auto [ma, sa] = summarize([](const MetricsReport& m) { return m.accuracy; });
    auto [ms, ss] = summarize([](const MetricsReport& m) { return m.sensitivity; });
    auto [mp, sp] = summarize([](const MetricsReport& m) { return m.specificity; });
    auto [mq, sq] = summarize([](const MetricsReport& m) { return m.precision; });
    auto [mr, sr] = summarize([](const MetricsReport& m) { return m.recall; });
    auto [mf, sf] = summarize([](const MetricsReport& m) { return m.f1; });
    result.mean = {ma, ms, mp, mq, mr, mf};
    result.stddev = {sa, ss, sp, sq, sr, sf};
    return result;
}

// ---------------------------------------------------------------------------
// Recall-rate sweep

struct SweepRow {
    double target_recall = 0;
    double measured_recall = 0;  // mean recall@k of tuned index vs exhaustive, test queries
    double accuracy = 0;         // pooled confusion over all folds
    double mean_query_seconds = 0;
    std::size_t chosen_trees = 0, chosen_depth = 0, chosen_votes = 0;  // first fold's choice
    bool infeasible = false;       // true if any fold's tune missed the target
    bool exhaustive_mode = false;
};

// One cross-validation pass per target: tune on the training rows, answer the
// fold's test queries, score recall against an exhaustive scan of the same
// training rows. Ground-truth computation is not timed.
inline std::vector<SweepRow> recall_sweep(const DataMatrix& data, const LabelVector& labels,
                                          std::span<const double> targets, std::size_t k,
                                          std::size_t folds, std::uint64_t seed,
                                          unsigned threads = 1) {
    if (targets.empty()) throw ArgumentError("recall_sweep: no targets given");
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (!(targets[i] > 0.0) || targets[i] > 1.0)
            throw ArgumentError("recall_sweep: targets must lie in (0, 1]");
        if (i > 0 && targets[i] < targets[i - 1])
            throw ArgumentError("recall_sweep: targets must be sorted ascending");
    }
    labels.validate();
    if (labels.ids.size() != data.rows())
        throw ArgumentError("recall_sweep: label count does not match matrix rows");
    const std::size_t C = labels.class_names.size();

    const FoldPlan plan = stratified_kfold(labels, folds, seed);

    std::vector<SweepRow> rows;
    rows.reserve(targets.size());
    for (std::size_t ti = 0; ti < targets.size(); ++ti) {
        SweepRow row;
        row.target_recall = targets[ti];

        double recall_sum = 0;
        double query_seconds = 0;
        std::size_t query_count = 0;
        ConfusionMatrix cm(C);

        for (std::size_t f = 0; f < plan.folds.size(); ++f) {
            const auto& fold = plan.folds[f];
            const DataMatrix train = data.select(fold.train);
            const LabelVector train_labels = labels.select(fold.train);

            AutoTuneConfig config;
            config.target_recall = targets[ti];
            config.k = k;
            config.validation_queries = std::min<std::size_t>(100, train.rows());
            config.seed = detail::fold_seed(seed, 0, f);
            config.threads = threads;
            auto [index, tune] = autotune(train, config);
            if (f == 0) {
                row.chosen_trees = tune.chosen_trees;
                row.chosen_depth = tune.chosen_depth;
                row.chosen_votes = tune.chosen_votes;
            }
            row.infeasible = row.infeasible || tune.infeasible;
            row.exhaustive_mode = row.exhaustive_mode || tune.exhaustive_mode;

            const DataMatrix test = data.select(fold.test);
            std::vector<QueryResult> approx(test.rows());
            const auto start = std::chrono::steady_clock::now();
            parallel_for(0, test.rows(), threads, [&](std::size_t i) {
                approx[i] = approx_knn(index, test.row(i), k);
            });
            query_seconds += detail::seconds_since(start);
            query_count += test.rows();

            std::vector<QueryResult> exact(test.rows());
            parallel_for(0, test.rows(), threads, [&](std::size_t i) {
                exact[i] = exhaustive_knn(train, test.row(i), k);
            });

            for (std::size_t i = 0; i < test.rows(); ++i) {
                recall_sum += recall_at_k(approx[i], exact[i]);
                // score the timed approximate answers, not a fresh search
                const Prediction pred = knn_classify(approx[i], train_labels, k);
                cm.add(labels.ids[fold.test[i]], pred.class_id);
            }
        }

        row.measured_recall = recall_sum / static_cast<double>(query_count);
        row.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(cm.total());
        row.mean_query_seconds = query_seconds / static_cast<double>(query_count);
        rows.push_back(row);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Serialization of benchmark results (JSON schema and flat CSV)

inline nlohmann::ordered_json to_json(const MetricsSummary& s) {
    return {{"accuracy", s.accuracy},       {"sensitivity", s.sensitivity},
            {"specificity", s.specificity}, {"precision", s.precision},
            {"recall", s.recall},           {"f1", s.f1}};
}

inline nlohmann::ordered_json to_json(const MetricsReport& m) {
    return {{"accuracy", m.accuracy},       {"sensitivity", m.sensitivity},
            {"specificity", m.specificity}, {"precision", m.precision},
            {"recall", m.recall},           {"f1", m.f1}};
}

inline nlohmann::ordered_json to_json(const CrossValidationResult& result) {
    nlohmann::ordered_json records = nlohmann::ordered_json::array();
    for (const auto& rec : result.records) {
        nlohmann::ordered_json item{{"repetition", rec.repetition},
                                    {"fold", rec.fold},
                                    {"metrics", to_json(rec.metrics)},
                                    {"build_seconds", rec.build_seconds},
                                    {"query_seconds", rec.query_seconds}};
        if (!rec.warnings.empty()) item["warnings"] = rec.warnings;
        records.push_back(std::move(item));
    }
    return {{"method", result.method},
            {"config", result.config},
            {"seed", result.seed},
            {"records", std::move(records)},
            {"summary",
             nlohmann::ordered_json{{"mean", to_json(result.mean)},
                                    {"std", to_json(result.stddev)}}}};
}

inline std::string to_csv(const CrossValidationResult& result) {
    std::string out =
        "method,config,seed,repetition,fold,accuracy,sensitivity,specificity,precision,recall,"
        "f1,build_seconds,query_seconds,warnings\n";
    auto num = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    for (const auto& rec : result.records) {
        std::string warn;
        for (std::size_t i = 0; i < rec.warnings.size(); ++i) {
            if (i) warn += "; ";
            warn += rec.warnings[i];
        }
        out += result.method + ",\"" + result.config + "\"," + std::to_string(result.seed) + "," +
               std::to_string(rec.repetition) + "," + std::to_string(rec.fold) + "," +
               num(rec.metrics.accuracy) + "," + num(rec.metrics.sensitivity) + "," +
               num(rec.metrics.specificity) + "," + num(rec.metrics.precision) + "," +
               num(rec.metrics.recall) + "," + num(rec.metrics.f1) + "," +
               num(rec.build_seconds) + "," + num(rec.query_seconds) + ",\"" + warn + "\"\n";
    }
    return out;
}

inline nlohmann::ordered_json to_json(const std::vector<SweepRow>& rows) {
    nlohmann::ordered_json out = nlohmann::ordered_json::array();
    for (const auto& row : rows) {
        out.push_back({{"target_recall", row.target_recall},
                       {"measured_recall", row.measured_recall},
                       {"accuracy", row.accuracy},
                       {"mean_query_seconds", row.mean_query_seconds},
                       {"trees", row.chosen_trees},
                       {"depth", row.chosen_depth},
                       {"votes", row.chosen_votes},
                       {"infeasible", row.infeasible},
                       {"exhaustive_mode", row.exhaustive_mode}});
    }
    return out;
}

inline std::string to_csv(const std::vector<SweepRow>& rows) {
    std::string out =
        "target_recall,measured_recall,accuracy,mean_query_seconds,trees,depth,votes,"
        "infeasible,exhaustive_mode\n";
    auto num = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    for (const auto& row : rows) {
        out += num(row.target_recall) + "," + num(row.measured_recall) + "," +
               num(row.accuracy) + "," + num(row.mean_query_seconds) + "," +
               std::to_string(row.chosen_trees) + "," + std::to_string(row.chosen_depth) + "," +
               std::to_string(row.chosen_votes) + "," + (row.infeasible ? "1" : "0") + "," +
               (row.exhaustive_mode ? "1" : "0") + "\n";
    }
    return out;
}

}  // namespace rpf
