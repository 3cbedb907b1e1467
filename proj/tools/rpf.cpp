// Command-line front end: data synthesis and conversion, index build/tune,
// neighbor queries, classification, and benchmarking. Every run writes its
// resolved configuration next to (or inside) its output so results can be
// reproduced from the artifact alone.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <rpf/rpf.hpp>

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct RunConfig {
    std::string subcommand;
    std::vector<std::string> inputs;
    std::string method;
    std::uint64_t k = 0;
    double target_recall = 0;
    std::uint64_t trees = 0, depth = 0, votes = 0;  // 0 = auto / not applicable
    double sparsity_a = 0;                          // 0 = auto
    std::uint64_t folds = 0, repetitions = 0;
    std::uint64_t seed = 0;
    std::string output;
    std::string format;
};

ordered_json to_json(const RunConfig& cfg) {
    return {{"subcommand", cfg.subcommand},
            {"inputs", cfg.inputs},
            {"method", cfg.method},
            {"k", cfg.k},
            {"target_recall", cfg.target_recall},
            {"trees", cfg.trees},
            {"depth", cfg.depth},
            {"votes", cfg.votes},
            {"sparsity_a", cfg.sparsity_a},
            {"folds", cfg.folds},
            {"repetitions", cfg.repetitions},
            {"seed", cfg.seed},
            {"output", cfg.output},
            {"format", cfg.format}};
}

void require_input(const std::string& path) {
    if (!fs::exists(path)) throw rpf::ArgumentError("input file not found: " + path);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw rpf::IoError("cannot open for writing: " + path);
    os << text;
    if (!os.flush()) throw rpf::IoError("write failed: " + path);
}

// Binary outputs cannot carry the config in-band; they get a sidecar.
// Subcommand-specific knobs that fall outside RunConfig ride along in params.
void write_sidecar(const std::string& out_path, const RunConfig& cfg,
                   const ordered_json& params = ordered_json::object()) {
    ordered_json body{{"run_config", to_json(cfg)}};
    if (!params.empty()) body["params"] = params;
    write_text(out_path + ".run.json", body.dump(2) + "\n");
}

std::string csv_field(const std::string& value) {
    if (value.find_first_of(",\"\n") == std::string::npos) return value;
    std::string quoted = "\"";
    for (char c : value) {
        if (c == '"') quoted += '"';
        quoted += c;
    }
    return quoted + "\"";
}

void emit(const std::string& out_path, const std::string& text) {
    if (out_path.empty())
        std::cout << text;
    else
        write_text(out_path, text);
}

// --- shared mrpt settings -------------------------------------------------

struct MrptFlags {
    std::string index_path;
    std::uint64_t trees = 0;  // >0 selects a fixed build
    std::int64_t depth = -1;  // -1 = auto
    std::uint64_t votes = 0;  // 0 = auto (1 for fixed builds)
    double recall = 0.85;
    double sparsity = 0;  // 0 = auto
};

void add_mrpt_flags(CLI::App* cmd, MrptFlags& flags, bool allow_index) {
    if (allow_index)
        cmd->add_option("--index", flags.index_path, "load a saved index instead of building");
    cmd->add_option("--trees", flags.trees, "fixed tree count (skips tuning)");
    cmd->add_option("--depth", flags.depth, "tree depth; omit for automatic");
    cmd->add_option("--votes", flags.votes, "vote threshold for fixed builds");
    cmd->add_option("--recall", flags.recall, "target recall for tuning")
        ->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--sparsity", flags.sparsity, "projection density a; 0 derives 1/sqrt(d)");
}

rpf::MRPTIndex make_mrpt_index(const rpf::DataMatrix& data, const MrptFlags& flags,
                               std::uint64_t k, std::uint64_t seed, unsigned threads,
                               rpf::AutoTuneResult* tune_out = nullptr) {
    const double a = flags.sparsity > 0 ? flags.sparsity : rpf::default_sparsity(data.dims());
    if (flags.trees > 0) {
        const std::size_t depth = flags.depth >= 0
                                      ? static_cast<std::size_t>(flags.depth)
                                      : rpf::default_depth(data.rows(), k);
        rpf::MRPTIndex index = rpf::build_index(data, flags.trees, depth, a, seed, threads);
        index.default_vote_threshold = flags.votes > 0 ? flags.votes : 1;
        return index;
    }
    rpf::AutoTuneConfig config;
    config.target_recall = flags.recall;
    config.k = k;
    if (flags.depth >= 0) config.max_depth = static_cast<std::size_t>(flags.depth);
    config.validation_queries = std::min<std::size_t>(100, data.rows());
    config.sparsity_a = flags.sparsity;
    config.seed = seed;
    config.threads = threads;
    auto [index, tune] = rpf::autotune(data, config);
    if (tune_out) *tune_out = tune;
    return index;
}

std::unique_ptr<rpf::Searcher> make_searcher(const std::string& method,
                                             const rpf::DataMatrix& data, const MrptFlags& flags,
                                             std::uint64_t k, std::uint64_t leaf_capacity,
                                             std::uint64_t seed, unsigned threads) {
    if (method == "exhaustive") return std::make_unique<rpf::ExhaustiveSearcher>(data);
    if (method == "balltree")
        return std::make_unique<rpf::BallTreeSearcher>(data, leaf_capacity, seed);
    if (method == "mrpt") {
        if (!flags.index_path.empty()) {
            require_input(flags.index_path);
            rpf::MRPTIndex index = rpf::load_index(flags.index_path, data);
            if (flags.votes > 0) index.default_vote_threshold = flags.votes;
            return std::make_unique<rpf::MrptSearcher>(std::move(index));
        }
        return std::make_unique<rpf::MrptSearcher>(make_mrpt_index(data, flags, k, seed, threads));
    }
    throw rpf::ArgumentError("unknown method: " + method);
}

// --- subcommand state -----------------------------------------------------

struct Args {
    // common
    std::uint64_t seed = 42;
    unsigned threads = 0;  // 0 = all hardware threads
    std::uint64_t k = 5;
    std::string data_path, labels_path, queries_path, out_path;
    std::string format = "json";

    // synth
    std::uint64_t n = 1000, d = 64, classes = 5;
    double spread = 0.5;

    // convert
    std::string in_path;
    bool has_header = false;
    std::int64_t label_column = -1;
    std::string labels_out;

    // build/tune
    std::uint64_t trees = 32;
    std::int64_t depth = -1;
    double sparsity = 0;
    double recall = 0.85;
    std::uint64_t max_trees = 32;
    std::int64_t max_depth = -1;
    std::uint64_t validation_queries = 100;
    std::string report_path;

    // query/classify/cv/sweep
    std::string method = "mrpt";
    std::vector<std::string> methods;
    MrptFlags mrpt;
    std::uint64_t leaf_capacity = 40;
    std::uint64_t folds = 10;
    std::uint64_t reps = 5;
    std::string targets_csv = "0.5,0.6,0.7,0.8,0.9,0.97";
};

unsigned resolve_threads(unsigned requested) {
    return requested > 0 ? requested : rpf::hardware_threads();
}

// --- subcommands ----------------------------------------------------------

int cmd_synth(const Args& args) {
    rpf::SyntheticData synth =
        rpf::generate_synthetic(args.n, args.d, args.classes, args.spread, args.seed);
    const std::string matrix_path = args.out_path + ".annm";
    const std::string labels_path = args.out_path + ".annl";
    rpf::save_binary(synth.matrix, matrix_path);
    rpf::save_labels(synth.labels, labels_path);

    RunConfig cfg;
    cfg.subcommand = "synth";
    cfg.seed = args.seed;
    cfg.output = args.out_path;
    cfg.format = "annm+annl";
    write_sidecar(args.out_path, cfg,
                  {{"n", args.n},
                   {"d", args.d},
                   {"classes", args.classes},
                   {"spread", args.spread}});
    std::cout << "wrote " << matrix_path << " (" << args.n << "x" << args.d << ") and "
              << labels_path << " (" << args.classes << " classes)\n";
    return 0;
}

int cmd_convert(const Args& args) {
    require_input(args.in_path);
    RunConfig cfg;
    cfg.subcommand = "convert";
    cfg.inputs = {args.in_path};
    cfg.seed = args.seed;
    cfg.output = args.out_path;

    const bool from_csv = args.in_path.size() >= 4 &&
                          args.in_path.substr(args.in_path.size() - 4) == ".csv";
    if (from_csv) {
        std::optional<std::size_t> label_col;
        if (args.label_column >= 0) label_col = static_cast<std::size_t>(args.label_column);
        rpf::CsvData parsed = rpf::load_csv(args.in_path, args.has_header, label_col);
        rpf::save_binary(parsed.matrix, args.out_path);
        cfg.format = "annm";
        if (parsed.labels) {
            if (args.labels_out.empty())
                throw rpf::ArgumentError("--label-column given but no --labels-out path");
            rpf::save_labels(*parsed.labels, args.labels_out);
            cfg.format = "annm+annl";
        }
        write_sidecar(args.out_path, cfg,
                      {{"has_header", args.has_header}, {"label_column", args.label_column}});
        std::cout << "wrote " << args.out_path << " (" << parsed.matrix.rows() << "x"
                  << parsed.matrix.dims() << ")\n";
    } else {
        rpf::DataMatrix matrix = rpf::load_binary(args.in_path);
        std::optional<rpf::LabelVector> labels;
        if (!args.labels_path.empty()) {
            require_input(args.labels_path);
            labels = rpf::load_labels(args.labels_path);
            if (labels->ids.size() != matrix.rows())
                throw rpf::ArgumentError("label count does not match matrix rows");
        }
        std::string csv;
        char buf[48];
        for (std::size_t i = 0; i < matrix.rows(); ++i) {
            const auto row = matrix.row(i);
            for (std::size_t j = 0; j < row.size(); ++j) {
                std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(row[j]));
                if (j) csv += ',';
                csv += buf;
            }
            if (labels) {
                csv += ',';
                csv += csv_field(labels->class_names[labels->ids[i]]);
            }
            csv += '\n';
        }
        write_text(args.out_path, csv);
        cfg.format = "csv";
        write_sidecar(args.out_path, cfg);
        std::cout << "wrote " << args.out_path << "\n";
    }
    return 0;
}

int cmd_build(const Args& args) {
    require_input(args.data_path);
    const rpf::DataMatrix data = rpf::load_binary(args.data_path);
    const unsigned threads = resolve_threads(args.threads);
    const double a = args.sparsity > 0 ? args.sparsity : rpf::default_sparsity(data.dims());
    const std::size_t depth = args.depth >= 0 ? static_cast<std::size_t>(args.depth)
                                              : rpf::default_depth(data.rows(), args.k);
    rpf::MRPTIndex index = rpf::build_index(data, args.trees, depth, a, args.seed, threads);
    rpf::save_index(index, args.out_path);

    RunConfig cfg;
    cfg.subcommand = "build";
    cfg.inputs = {args.data_path};
    cfg.k = args.k;
    cfg.trees = args.trees;
    cfg.depth = depth;
    cfg.sparsity_a = a;
    cfg.seed = args.seed;
    cfg.output = args.out_path;
    cfg.format = "anni";
    write_sidecar(args.out_path, cfg);
    std::cout << "wrote " << args.out_path << " (T=" << args.trees << " l=" << depth << ")\n";
    return 0;
}

int cmd_tune(const Args& args) {
    require_input(args.data_path);
    const rpf::DataMatrix data = rpf::load_binary(args.data_path);
    const unsigned threads = resolve_threads(args.threads);

    rpf::AutoTuneConfig config;
    config.target_recall = args.recall;
    config.k = args.k;
    config.max_trees = args.max_trees;
    if (args.max_depth >= 0) config.max_depth = static_cast<std::size_t>(args.max_depth);
    config.validation_queries = std::min<std::size_t>(args.validation_queries, data.rows());
    config.sparsity_a = args.sparsity;
    config.seed = args.seed;
    config.threads = threads;
    auto [index, tune] = rpf::autotune(data, config);
    rpf::save_index(index, args.out_path);

    RunConfig cfg;
    cfg.subcommand = "tune";
    cfg.inputs = {args.data_path};
    cfg.method = "mrpt";
    cfg.k = args.k;
    cfg.target_recall = args.recall;
    cfg.trees = tune.chosen_trees;
    cfg.depth = tune.chosen_depth;
    cfg.votes = tune.chosen_votes;
    cfg.sparsity_a = args.sparsity;
    cfg.seed = args.seed;
    cfg.output = args.out_path;
    cfg.format = "anni+json";

    ordered_json grid = ordered_json::array();
    for (const auto& point : tune.grid_report)
        grid.push_back({{"trees", point.trees},
                        {"depth", point.depth},
                        {"votes", point.votes},
                        {"recall", point.recall},
                        {"cost", point.cost}});
    ordered_json report{{"run_config", to_json(cfg)},
                        {"chosen",
                         {{"trees", tune.chosen_trees},
                          {"depth", tune.chosen_depth},
                          {"votes", tune.chosen_votes}}},
                        {"estimated_recall", tune.estimated_recall},
                        {"estimated_cost", tune.estimated_cost},
                        {"exhaustive_mode", tune.exhaustive_mode},
                        {"infeasible", tune.infeasible},
                        {"grid", std::move(grid)}};
    const std::string report_path =
        args.report_path.empty() ? args.out_path + ".tune.json" : args.report_path;
    write_text(report_path, report.dump(2) + "\n");
    write_sidecar(args.out_path, cfg);

    std::cout << "tuned T=" << tune.chosen_trees << " l=" << tune.chosen_depth
              << " v=" << tune.chosen_votes << " estimated recall " << tune.estimated_recall
              << (tune.infeasible ? " (infeasible target)" : "")
              << (tune.exhaustive_mode ? " (exhaustive mode)" : "") << "\n";
    return 0;
}

int cmd_query(const Args& args) {
    require_input(args.data_path);
    require_input(args.queries_path);
    const rpf::DataMatrix data = rpf::load_binary(args.data_path);
    const rpf::DataMatrix queries = rpf::load_binary(args.queries_path);
    if (queries.dims() != data.dims())
        throw rpf::ArgumentError("query dimension does not match indexed data");
    const unsigned threads = resolve_threads(args.threads);

    const std::unique_ptr<rpf::Searcher> searcher = make_searcher(
        args.method, data, args.mrpt, args.k, args.leaf_capacity, args.seed, threads);

    std::vector<rpf::QueryResult> results(queries.rows());
    rpf::parallel_for(0, queries.rows(), threads, [&](std::size_t i) {
        results[i] = searcher->knn(queries.row(i), args.k);
    });

    RunConfig cfg;
    cfg.subcommand = "query";
    cfg.inputs = {args.data_path, args.queries_path};
    cfg.method = args.method;
    cfg.k = args.k;
    cfg.seed = args.seed;
    cfg.output = args.out_path;
    cfg.format = "json";

    ordered_json out = ordered_json::array();
    for (std::size_t i = 0; i < results.size(); ++i) {
        out.push_back({{"query", i},
                       {"indices", results[i].indices},
                       {"distances", results[i].distances},
                       {"candidates_examined", results[i].candidates_examined},
                       {"fallback", rpf::to_string(results[i].fallback_level)}});
    }
    emit(args.out_path,
         ordered_json{{"run_config", to_json(cfg)}, {"results", std::move(out)}}.dump(2) + "\n");
    return 0;
}

int cmd_classify(const Args& args) {
    require_input(args.data_path);
    require_input(args.labels_path);
    require_input(args.queries_path);
    const rpf::DataMatrix train = rpf::load_binary(args.data_path);
    const rpf::LabelVector labels = rpf::load_labels(args.labels_path);
    if (labels.ids.size() != train.rows())
        throw rpf::ArgumentError("label count does not match training rows");
    const rpf::DataMatrix queries = rpf::load_binary(args.queries_path);
    if (queries.dims() != train.dims())
        throw rpf::ArgumentError("query dimension does not match training data");
    const unsigned threads = resolve_threads(args.threads);

    const std::unique_ptr<rpf::Searcher> searcher = make_searcher(
        args.method, train, args.mrpt, args.k, args.leaf_capacity, args.seed, threads);

    const rpf::BatchResult batch =
        rpf::predict_batch(*searcher, labels, queries, args.k, threads);

    RunConfig cfg;
    cfg.subcommand = "classify";
    cfg.inputs = {args.data_path, args.labels_path, args.queries_path};
    cfg.method = args.method;
    cfg.k = args.k;
    cfg.seed = args.seed;
    cfg.output = args.out_path;
    cfg.format = "csv";

    std::string csv = "# config: " + to_json(cfg).dump() + "\n";
    csv += "query_row,predicted_class_name,votes,tie_broken,query_seconds\n";
    char buf[32];
    for (std::size_t i = 0; i < batch.predictions.size(); ++i) {
        const rpf::Prediction& pred = batch.predictions[i];
        std::string votes;
        for (std::size_t c = 0; c < pred.votes.size(); ++c) {
            if (c) votes += '|';
            votes += labels.class_names[c] + ":" + std::to_string(pred.votes[c]);
        }
        std::snprintf(buf, sizeof(buf), "%.9g", batch.query_seconds[i]);
        csv += std::to_string(i) + "," + csv_field(labels.class_names[pred.class_id]) + "," +
               csv_field(votes) + "," + (pred.tie_broken ? "1" : "0") + "," + buf + "\n";
    }
    emit(args.out_path, csv);
    return 0;
}

rpf::Method cli_method(const std::string& name, const Args& args, unsigned threads) {
    if (name == "exhaustive")
        return {"exhaustive", "full scan",
                [](const rpf::DataMatrix& train, std::uint64_t) {
                    return std::make_unique<rpf::ExhaustiveSearcher>(train);
                }};
    if (name == "balltree") {
        const std::uint64_t capacity = args.leaf_capacity;
        return {"ball_tree", "leaf_capacity=" + std::to_string(capacity),
                [capacity](const rpf::DataMatrix& train, std::uint64_t fold_seed) {
                    return std::make_unique<rpf::BallTreeSearcher>(train, capacity, fold_seed);
                }};
    }
    if (name == "mrpt") {
        const MrptFlags flags = args.mrpt;
        const std::uint64_t k = args.k;
        std::string summary;
        if (flags.trees > 0) {
            summary = "T=" + std::to_string(flags.trees) + " l=" +
                      (flags.depth >= 0 ? std::to_string(flags.depth) : std::string("auto")) +
                      " v=" + std::to_string(flags.votes > 0 ? flags.votes : 1);
        } else {
            summary = "tuned target_recall=" + std::to_string(flags.recall);
        }
        return {"mrpt", summary,
                [flags, k, threads](const rpf::DataMatrix& train, std::uint64_t fold_seed) {
                    return std::make_unique<rpf::MrptSearcher>(
                        make_mrpt_index(train, flags, k, fold_seed, threads));
                }};
    }
    throw rpf::ArgumentError("unknown method: " + name);
}

int cmd_cv(const Args& args) {
    require_input(args.data_path);
    require_input(args.labels_path);
    const rpf::DataMatrix data = rpf::load_binary(args.data_path);
    const rpf::LabelVector labels = rpf::load_labels(args.labels_path);
    const unsigned threads = resolve_threads(args.threads);
    const std::vector<std::string> methods =
        args.methods.empty() ? std::vector<std::string>{"exhaustive"} : args.methods;

    RunConfig cfg;
    cfg.subcommand = "cv";
    cfg.inputs = {args.data_path, args.labels_path};
    for (std::size_t i = 0; i < methods.size(); ++i)
        cfg.method += (i ? "," : "") + methods[i];
    cfg.k = args.k;
    cfg.target_recall = args.mrpt.recall;
    cfg.trees = args.mrpt.trees;
    cfg.depth = args.mrpt.depth >= 0 ? args.mrpt.depth : 0;
    cfg.votes = args.mrpt.votes;
    cfg.sparsity_a = args.mrpt.sparsity;
    cfg.folds = args.folds;
    cfg.repetitions = args.reps;
    cfg.seed = args.seed;
    cfg.output = args.out_path;
    cfg.format = args.format;

    std::vector<rpf::CrossValidationResult> results;
    for (const std::string& name : methods) {
        results.push_back(rpf::cross_validate(data, labels, cli_method(name, args, threads),
                                              args.folds, args.reps, args.k, args.seed,
                                              threads));
        const auto& r = results.back();
        char line[256];
        std::snprintf(line, sizeof(line),
                      "cv %s: accuracy %.4f +/- %.4f, f1 %.4f (%zu folds x %zu reps)\n",
                      r.method.c_str(), r.mean.accuracy, r.stddev.accuracy, r.mean.f1,
                      r.folds, r.repetitions);
        std::cout << line;
    }

    if (args.format == "json") {
        ordered_json out = ordered_json::array();
        for (const auto& r : results) out.push_back(rpf::to_json(r));
        emit(args.out_path,
             ordered_json{{"run_config", to_json(cfg)}, {"results", std::move(out)}}.dump(2) +
                 "\n");
    } else {
        std::string csv = "# config: " + to_json(cfg).dump() + "\n";
        for (std::size_t i = 0; i < results.size(); ++i) {
            std::string part = rpf::to_csv(results[i]);
            if (i > 0) part.erase(0, part.find('\n') + 1);  // keep one header
            csv += part;
        }
        emit(args.out_path, csv);
    }
    return 0;
}

int cmd_sweep(const Args& args) {
    require_input(args.data_path);
    require_input(args.labels_path);
    const rpf::DataMatrix data = rpf::load_binary(args.data_path);
    const rpf::LabelVector labels = rpf::load_labels(args.labels_path);
    const unsigned threads = resolve_threads(args.threads);

    std::vector<double> targets;
    for (std::size_t pos = 0; pos < args.targets_csv.size();) {
        std::size_t comma = args.targets_csv.find(',', pos);
        if (comma == std::string::npos) comma = args.targets_csv.size();
        try {
            targets.push_back(std::stod(args.targets_csv.substr(pos, comma - pos)));
        } catch (const std::exception&) {
            throw rpf::ArgumentError("bad --targets entry: " +
                                     args.targets_csv.substr(pos, comma - pos));
        }
        pos = comma + 1;
    }

    const std::vector<rpf::SweepRow> rows =
        rpf::recall_sweep(data, labels, targets, args.k, args.folds, args.seed, threads);
    for (const auto& row : rows) {
        char line[256];
        std::snprintf(line, sizeof(line),
                      "sweep target %.2f: recall %.4f, accuracy %.4f, %.3f ms/query%s\n",
                      row.target_recall, row.measured_recall, row.accuracy,
                      row.mean_query_seconds * 1e3, row.infeasible ? " (infeasible)" : "");
        std::cout << line;
    }

    RunConfig cfg;
    cfg.subcommand = "sweep";
    cfg.inputs = {args.data_path, args.labels_path};
    cfg.method = "mrpt";
    cfg.k = args.k;
    cfg.folds = args.folds;
    cfg.repetitions = 1;
    cfg.seed = args.seed;
    cfg.output = args.out_path;
    cfg.format = args.format;

    if (args.format == "json") {
        emit(args.out_path,
             ordered_json{{"run_config", to_json(cfg)}, {"results", rpf::to_json(rows)}}.dump(2) +
                 "\n");
    } else {
        emit(args.out_path, "# config: " + to_json(cfg).dump() + "\n" + rpf::to_csv(rows));
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"random-projection forest nearest-neighbor toolkit"};
    app.require_subcommand(1);
    Args args;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--seed", args.seed, "RNG seed");
        cmd->add_option("--threads", args.threads, "worker thread cap; 0 = all cores")
            ->envname("RPF_THREADS");
    };

    CLI::App* synth = app.add_subcommand("synth", "generate a labeled Gaussian-blob dataset");
    synth->add_option("--n", args.n, "points")->check(CLI::PositiveNumber);
    synth->add_option("--d", args.d, "dimensions")->check(CLI::PositiveNumber);
    synth->add_option("--classes", args.classes, "class count")->check(CLI::PositiveNumber);
    synth->add_option("--spread", args.spread, "within-class standard deviation");
    synth->add_option("--out", args.out_path, "output path prefix")->required();
    add_common(synth);

    CLI::App* convert = app.add_subcommand("convert", "convert between csv and annm");
    convert->add_option("--in", args.in_path, "input file (.csv or .annm)")->required();
    convert->add_option("--out", args.out_path, "output file")->required();
    convert->add_flag("--has-header", args.has_header, "skip the first csv line");
    convert->add_option("--label-column", args.label_column,
                        "csv column holding class labels (0-based)");
    convert->add_option("--labels-out", args.labels_out, "annl output for extracted labels");
    convert->add_option("--labels", args.labels_path, "annl file to append as a csv column");
    add_common(convert);

    CLI::App* build = app.add_subcommand("build", "build an index with fixed parameters");
    build->add_option("--data", args.data_path, "annm training data")->required();
    build->add_option("--out", args.out_path, "anni output path")->required();
    build->add_option("--trees", args.trees, "tree count");
    build->add_option("--depth", args.depth, "tree depth; omit for automatic");
    build->add_option("--sparsity", args.sparsity, "projection density a; 0 derives 1/sqrt(d)");
    build->add_option("--k", args.k, "expected neighbor count (sizes automatic depth)");
    add_common(build);

    CLI::App* tune = app.add_subcommand("tune", "tune an index to a target recall");
    tune->add_option("--data", args.data_path, "annm training data")->required();
    tune->add_option("--out", args.out_path, "anni output path")->required();
    tune->add_option("--report", args.report_path, "tuning report path (default <out>.tune.json)");
    tune->add_option("--recall", args.recall, "target recall")->check(CLI::Range(0.0, 1.0));
    tune->add_option("--k", args.k, "neighbors per query");
    tune->add_option("--max-trees", args.max_trees, "largest tree count to consider");
    tune->add_option("--max-depth", args.max_depth, "largest depth to consider");
    tune->add_option("--validation-queries", args.validation_queries,
                     "indexed points sampled for recall estimation");
    tune->add_option("--sparsity", args.sparsity, "projection density a; 0 derives 1/sqrt(d)");
    add_common(tune);

    CLI::App* query = app.add_subcommand("query", "retrieve nearest neighbors");
    query->add_option("--data", args.data_path, "annm indexed data")->required();
    query->add_option("--queries", args.queries_path, "annm query points")->required();
    query->add_option("--k", args.k, "neighbors per query");
    query->add_option("--method", args.method, "exhaustive | balltree | mrpt")
        ->check(CLI::IsMember({"exhaustive", "balltree", "mrpt"}));
    query->add_option("--leaf-capacity", args.leaf_capacity, "ball tree leaf size");
    query->add_option("--out", args.out_path, "output path (stdout when omitted)");
    add_mrpt_flags(query, args.mrpt, true);
    add_common(query);

    CLI::App* classify = app.add_subcommand("classify", "predict labels for query points");
    classify->add_option("--train", args.data_path, "annm training data")->required();
    classify->add_option("--labels", args.labels_path, "annl training labels")->required();
    classify->add_option("--queries", args.queries_path, "annm query points")->required();
    classify->add_option("--k", args.k, "neighbors per vote");
    classify->add_option("--method", args.method, "exhaustive | balltree | mrpt")
        ->check(CLI::IsMember({"exhaustive", "balltree", "mrpt"}));
    classify->add_option("--leaf-capacity", args.leaf_capacity, "ball tree leaf size");
    classify->add_option("--out", args.out_path, "csv output path (stdout when omitted)");
    add_mrpt_flags(classify, args.mrpt, true);
    add_common(classify);

    CLI::App* cv = app.add_subcommand("cv", "cross-validated benchmark");
    cv->add_option("--data", args.data_path, "annm data")->required();
    cv->add_option("--labels", args.labels_path, "annl labels")->required();
    cv->add_option("--method", args.methods, "method to benchmark (repeatable)")
        ->check(CLI::IsMember({"exhaustive", "balltree", "mrpt"}));
    cv->add_option("--k", args.k, "neighbors per vote");
    cv->add_option("--folds", args.folds, "fold count")->check(CLI::Range(2u, 1000000u));
    cv->add_option("--reps", args.reps, "repetitions");
    cv->add_option("--leaf-capacity", args.leaf_capacity, "ball tree leaf size");
    cv->add_option("--format", args.format, "json | csv")
        ->check(CLI::IsMember({"json", "csv"}));
    cv->add_option("--out", args.out_path, "output path (stdout when omitted)");
    add_mrpt_flags(cv, args.mrpt, false);
    add_common(cv);

    CLI::App* sweep = app.add_subcommand("sweep", "recall-target sweep");
    sweep->add_option("--data", args.data_path, "annm data")->required();
    sweep->add_option("--labels", args.labels_path, "annl labels")->required();
    sweep->add_option("--targets", args.targets_csv, "comma-separated recall targets");
    sweep->add_option("--k", args.k, "neighbors per vote");
    sweep->add_option("--folds", args.folds, "fold count")->check(CLI::Range(2u, 1000000u));
    sweep->add_option("--format", args.format, "json | csv")
        ->check(CLI::IsMember({"json", "csv"}));
    sweep->add_option("--out", args.out_path, "output path (stdout when omitted)");
    add_common(sweep);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (synth->parsed()) return cmd_synth(args);
        if (convert->parsed()) return cmd_convert(args);
        if (build->parsed()) return cmd_build(args);
        if (tune->parsed()) return cmd_tune(args);
        if (query->parsed()) return cmd_query(args);
        if (classify->parsed()) return cmd_classify(args);
        if (cv->parsed()) return cmd_cv(args);
        if (sweep->parsed()) return cmd_sweep(args);
        return 2;
    } catch (const rpf::ArgumentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
