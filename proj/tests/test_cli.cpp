// End-to-end checks of the command-line binary. The test runner passes the
// binary's location in RPF_CLI_BIN; every case works in its own temp
// directory and inspects exit codes, outputs, and side files.

#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <json.hpp>

#include <rpf/classifier.hpp>
#include <rpf/dataset.hpp>
#include <rpf/exact.hpp>
#include <rpf/mrpt.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string cli_bin() {
    const char* bin = std::getenv("RPF_CLI_BIN");
    REQUIRE(bin != nullptr);
    return bin;
}

struct CliRun {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("rpf_cli_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }

    CliRun run(const std::string& args, const std::string& env_prefix = "") const {
        const fs::path out = path / "stdout.txt";
        const fs::path err = path / "stderr.txt";
        const std::string command = env_prefix + "\"" + cli_bin() + "\" " + args + " > \"" +
                                    out.string() + "\" 2> \"" + err.string() + "\"";
        const int status = std::system(command.c_str());
        CliRun result;
        result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        result.out = slurp(out);
        result.err = slurp(err);
        return result;
    }

    std::string file(const std::string& name) const { return (path / name).string(); }
};

// splits one CSV line, honoring double quotes
std::vector<std::string> cells_of(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    bool quoted = false;
    for (char ch : line) {
        if (ch == '"')
            quoted = !quoted;
        else if (ch == ',' && !quoted) {
            out.push_back(cell);
            cell.clear();
        } else
            cell += ch;
    }
    out.push_back(cell);
    return out;
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) out.push_back(line);
    return out;
}

std::string mask_timings(std::string text) {
    static const std::regex seconds("(\"[a-z_]*seconds\": )[-+0-9.eE]+");
    return std::regex_replace(text, seconds, "$010");
}

void make_dataset(const TempDir& dir, const std::string& prefix, std::size_t n, std::size_t d,
                  std::size_t classes, double spread, std::uint64_t seed) {
    const auto run = dir.run("synth --n " + std::to_string(n) + " --d " + std::to_string(d) +
                             " --classes " + std::to_string(classes) + " --spread " +
                             std::to_string(spread) + " --seed " + std::to_string(seed) +
                             " --out " + dir.file(prefix));
    REQUIRE(run.exit_code == 0);
}

}  // namespace

TEST_CASE("synth writes loadable matrix, labels, and a sidecar config") {
    TempDir dir;
    const auto run = dir.run("synth --n 200 --d 16 --classes 5 --seed 1 --out " + dir.file("toy"));
    REQUIRE(run.exit_code == 0);
    REQUIRE(run.out.find("200x16") != std::string::npos);

    const rpf::DataMatrix matrix = rpf::load_binary(dir.file("toy.annm"));
    REQUIRE(matrix.rows() == 200);
    REQUIRE(matrix.dims() == 16);
    const rpf::LabelVector labels = rpf::load_labels(dir.file("toy.annl"));
    REQUIRE(labels.ids.size() == 200);
    REQUIRE(labels.class_count() == 5);

    const json sidecar = json::parse(slurp(dir.file("toy.run.json")));
    REQUIRE(sidecar["run_config"]["subcommand"] == "synth");
    REQUIRE(sidecar["run_config"]["seed"] == 1);
    REQUIRE(sidecar["params"]["n"] == 200);
    REQUIRE(sidecar["params"]["classes"] == 5);
}

TEST_CASE("synth is deterministic in its seed") {
    TempDir dir;
    make_dataset(dir, "a", 150, 8, 3, 0.4, 9);
    make_dataset(dir, "b", 150, 8, 3, 0.4, 9);
    REQUIRE(slurp(dir.file("a.annm")) == slurp(dir.file("b.annm")));
    REQUIRE(slurp(dir.file("a.annl")) == slurp(dir.file("b.annl")));

    make_dataset(dir, "c", 150, 8, 3, 0.4, 10);
    REQUIRE(slurp(dir.file("a.annm")) != slurp(dir.file("c.annm")));
}

TEST_CASE("synth rejects bad arguments with a usage exit") {
    TempDir dir;
    REQUIRE(dir.run("synth --classes 0 --out " + dir.file("x")).exit_code == 2);
    REQUIRE(dir.run("synth --n 100").exit_code == 2);  // --out is required
}

TEST_CASE("matrix and labels survive a csv round trip byte for byte") {
    TempDir dir;
    make_dataset(dir, "src", 80, 6, 4, 0.5, 21);

    const auto to_csv = dir.run("convert --in " + dir.file("src.annm") + " --out " +
                                dir.file("src.csv") + " --labels " + dir.file("src.annl"));
    REQUIRE(to_csv.exit_code == 0);
    const auto lines = lines_of(slurp(dir.file("src.csv")));
    REQUIRE(lines.size() == 80);
    REQUIRE(cells_of(lines[0]).size() == 7);  // 6 values + class name

    const auto back = dir.run("convert --in " + dir.file("src.csv") + " --out " +
                              dir.file("back.annm") + " --label-column 6 --labels-out " +
                              dir.file("back.annl"));
    REQUIRE(back.exit_code == 0);
    REQUIRE(slurp(dir.file("back.annm")) == slurp(dir.file("src.annm")));
    REQUIRE(slurp(dir.file("back.annl")) == slurp(dir.file("src.annl")));
}

TEST_CASE("convert reports missing and inconsistent arguments as usage errors") {
    TempDir dir;
    const auto missing = dir.run("convert --in " + dir.file("absent.csv") + " --out " +
                                 dir.file("y.annm"));
    REQUIRE(missing.exit_code == 2);
    REQUIRE(missing.err.find("not found") != std::string::npos);

    std::ofstream(dir.file("t.csv")) << "1,2,a\n3,4,b\n";
    REQUIRE(dir.run("convert --in " + dir.file("t.csv") + " --out " + dir.file("t.annm") +
                    " --label-column 2")
                .exit_code == 2);
}

TEST_CASE("a corrupt matrix file is a runtime failure") {
    TempDir dir;
    std::ofstream(dir.file("junk.annm"), std::ios::binary) << "not a matrix";
    make_dataset(dir, "q", 20, 4, 2, 0.5, 1);
    const auto run = dir.run("query --data " + dir.file("junk.annm") + " --queries " +
                             dir.file("q.annm") + " --method exhaustive");
    REQUIRE(run.exit_code == 1);
}

TEST_CASE("build writes an index the library can load back") {
    TempDir dir;
    make_dataset(dir, "train", 300, 10, 3, 0.5, 33);
    const auto run = dir.run("build --data " + dir.file("train.annm") + " --out " +
                             dir.file("idx.anni") + " --trees 4 --depth 3 --seed 3");
    REQUIRE(run.exit_code == 0);

    const rpf::DataMatrix data = rpf::load_binary(dir.file("train.annm"));
    const rpf::MRPTIndex index = rpf::load_index(dir.file("idx.anni"), data);
    REQUIRE(index.tree_count() == 4);
    REQUIRE(index.built_depth() == 3);

    const json sidecar = json::parse(slurp(dir.file("idx.anni.run.json")));
    REQUIRE(sidecar["run_config"]["subcommand"] == "build");
    REQUIRE(sidecar["run_config"]["trees"] == 4);
    REQUIRE(sidecar["run_config"]["depth"] == 3);
}

TEST_CASE("build without a depth derives one from the data") {
    TempDir dir;
    make_dataset(dir, "train", 1000, 6, 2, 0.5, 7);
    const auto run = dir.run("build --data " + dir.file("train.annm") + " --out " +
                             dir.file("idx.anni") + " --trees 2 --k 5");
    REQUIRE(run.exit_code == 0);
    const json sidecar = json::parse(slurp(dir.file("idx.anni.run.json")));
    REQUIRE(sidecar["run_config"]["depth"] == 3);  // 1000 / max(20,100) -> floor log2 = 3
}

TEST_CASE("an overdeep build names the admissible maximum") {
    TempDir dir;
    make_dataset(dir, "train", 1000, 6, 2, 0.5, 7);
    const auto run = dir.run("build --data " + dir.file("train.annm") + " --out " +
                             dir.file("idx.anni") + " --trees 2 --depth 30");
    REQUIRE(run.exit_code == 2);
    REQUIRE(run.err.find("9") != std::string::npos);
}

TEST_CASE("tune writes an index and a grid report meeting the target") {
    TempDir dir;
    make_dataset(dir, "train", 600, 12, 4, 0.4, 11);
    const auto run = dir.run("tune --data " + dir.file("train.annm") + " --out " +
                             dir.file("tuned.anni") +
                             " --recall 0.85 --k 5 --max-trees 8 --max-depth 4 --seed 5");
    REQUIRE(run.exit_code == 0);
    REQUIRE(run.out.find("tuned T=") != std::string::npos);

    const json report = json::parse(slurp(dir.file("tuned.anni.tune.json")));
    REQUIRE(report["run_config"]["subcommand"] == "tune");
    REQUIRE(report["run_config"]["target_recall"] == 0.85);
    REQUIRE(report["chosen"]["trees"].get<std::size_t>() >= 1);
    REQUIRE(report["grid"].is_array());
    REQUIRE(report["grid"].size() == 4 * (8 * 9 / 2));  // l_max * sum over T of T thresholds
    REQUIRE(report["infeasible"].is_boolean());
    if (!report["infeasible"].get<bool>())
        REQUIRE(report["estimated_recall"].get<double>() >= 0.85);

    const rpf::DataMatrix data = rpf::load_binary(dir.file("train.annm"));
    REQUIRE_NOTHROW(rpf::load_index(dir.file("tuned.anni"), data));
}

TEST_CASE("tuning to full recall reports exhaustive mode") {
    TempDir dir;
    make_dataset(dir, "train", 200, 8, 2, 0.5, 3);
    const auto run = dir.run("tune --data " + dir.file("train.annm") + " --out " +
                             dir.file("full.anni") + " --recall 1.0 --k 3");
    REQUIRE(run.exit_code == 0);
    const json report = json::parse(slurp(dir.file("full.anni.tune.json")));
    REQUIRE(report["exhaustive_mode"] == true);
    REQUIRE(report["chosen"]["depth"] == 0);
}

TEST_CASE("query emits one result object per query row") {
    TempDir dir;
    make_dataset(dir, "corpus", 250, 9, 3, 0.5, 41);
    make_dataset(dir, "probes", 7, 9, 2, 0.5, 42);
    const auto run = dir.run("query --data " + dir.file("corpus.annm") + " --queries " +
                             dir.file("probes.annm") +
                             " --k 4 --method exhaustive --out " + dir.file("hits.json"));
    REQUIRE(run.exit_code == 0);

    const json out = json::parse(slurp(dir.file("hits.json")));
    REQUIRE(out["run_config"]["subcommand"] == "query");
    REQUIRE(out["run_config"]["method"] == "exhaustive");
    REQUIRE(out["results"].size() == 7);

    const rpf::DataMatrix corpus = rpf::load_binary(dir.file("corpus.annm"));
    const rpf::DataMatrix probes = rpf::load_binary(dir.file("probes.annm"));
    for (std::size_t i = 0; i < 7; ++i) {
        const auto& entry = out["results"][i];
        REQUIRE(entry["query"] == i);
        REQUIRE(entry["fallback"] == "none");
        REQUIRE(entry["candidates_examined"] == 250);
        const auto expected = rpf::exhaustive_knn(corpus, probes.row(i), 4);
        REQUIRE(entry["indices"].get<std::vector<std::uint32_t>>() == expected.indices);
    }
}

TEST_CASE("query without an output path prints to stdout") {
    TempDir dir;
    make_dataset(dir, "corpus", 60, 5, 2, 0.5, 8);
    make_dataset(dir, "probes", 3, 5, 2, 0.5, 9);
    const auto run = dir.run("query --data " + dir.file("corpus.annm") + " --queries " +
                             dir.file("probes.annm") + " --k 2 --method balltree");
    REQUIRE(run.exit_code == 0);
    const json out = json::parse(run.out);
    REQUIRE(out["results"].size() == 3);
}

TEST_CASE("a saved index answers queries through the cli") {
    TempDir dir;
    make_dataset(dir, "corpus", 400, 8, 3, 0.5, 13);
    make_dataset(dir, "probes", 5, 8, 2, 0.5, 14);
    REQUIRE(dir.run("build --data " + dir.file("corpus.annm") + " --out " + dir.file("idx.anni") +
                    " --trees 4 --depth 3 --seed 19")
                .exit_code == 0);

    const auto direct = dir.run("query --data " + dir.file("corpus.annm") + " --queries " +
                                dir.file("probes.annm") +
                                " --k 3 --method mrpt --trees 4 --depth 3 --seed 19");
    const auto loaded = dir.run("query --data " + dir.file("corpus.annm") + " --queries " +
                                dir.file("probes.annm") + " --k 3 --method mrpt --index " +
                                dir.file("idx.anni"));
    REQUIRE(direct.exit_code == 0);
    REQUIRE(loaded.exit_code == 0);
    REQUIRE(json::parse(direct.out)["results"] == json::parse(loaded.out)["results"]);
}

TEST_CASE("a tampered index file fails with a runtime error") {
    TempDir dir;
    make_dataset(dir, "corpus", 100, 6, 2, 0.5, 23);
    make_dataset(dir, "probes", 3, 6, 2, 0.5, 24);
    REQUIRE(dir.run("build --data " + dir.file("corpus.annm") + " --out " + dir.file("idx.anni") +
                    " --trees 2 --depth 2")
                .exit_code == 0);

    // flip one bit of the stored checksum; the payload still parses
    std::string bytes = slurp(dir.file("idx.anni"));
    bytes[48] = static_cast<char>(bytes[48] ^ 0x01);
    std::ofstream(dir.file("bad.anni"), std::ios::binary) << bytes;

    const auto run = dir.run("query --data " + dir.file("corpus.annm") + " --queries " +
                             dir.file("probes.annm") + " --method mrpt --index " +
                             dir.file("bad.anni"));
    REQUIRE(run.exit_code == 1);
    REQUIRE(run.err.find("checksum") != std::string::npos);
}

TEST_CASE("classifying the training points against themselves is perfect at k=1") {
    TempDir dir;
    make_dataset(dir, "train", 90, 7, 3, 0.5, 31);
    const auto run = dir.run("classify --train " + dir.file("train.annm") + " --labels " +
                             dir.file("train.annl") + " --queries " + dir.file("train.annm") +
                             " --k 1 --method exhaustive --out " + dir.file("pred.csv"));
    REQUIRE(run.exit_code == 0);

    const rpf::LabelVector labels = rpf::load_labels(dir.file("train.annl"));
    const auto lines = lines_of(slurp(dir.file("pred.csv")));
    REQUIRE(lines.size() == 2 + 90);  // config comment, header, rows
    REQUIRE(lines[0].rfind("# config:", 0) == 0);
    REQUIRE(lines[1] == "query_row,predicted_class_name,votes,tie_broken,query_seconds");
    for (std::size_t i = 0; i < 90; ++i) {
        const auto cells = cells_of(lines[2 + i]);
        REQUIRE(cells.size() == 5);
        REQUIRE(cells[0] == std::to_string(i));
        REQUIRE(cells[1] == labels.class_names[labels.ids[i]]);
        REQUIRE(cells[3] == "0");
    }
}

TEST_CASE("a depth-zero forest classifies byte-identically to exhaustive search") {
    TempDir dir;
    make_dataset(dir, "train", 120, 6, 3, 0.6, 37);
    make_dataset(dir, "probes", 30, 6, 3, 0.6, 38);

    auto prediction_columns = [&](const std::string& method_args, const std::string& out_name) {
        REQUIRE(dir.run("classify --train " + dir.file("train.annm") + " --labels " +
                        dir.file("train.annl") + " --queries " + dir.file("probes.annm") +
                        " --k 5 " + method_args + " --out " + dir.file(out_name))
                    .exit_code == 0);
        std::string columns;
        const auto lines = lines_of(slurp(dir.file(out_name)));
        for (std::size_t i = 2; i < lines.size(); ++i) {
            const auto cells = cells_of(lines[i]);
            columns += cells[0] + "," + cells[1] + "," + cells[2] + "," + cells[3] + "\n";
        }
        return columns;
    };

    const std::string exhaustive = prediction_columns("--method exhaustive", "a.csv");
    const std::string flat_mrpt =
        prediction_columns("--method mrpt --trees 2 --depth 0", "b.csv");
    REQUIRE(exhaustive == flat_mrpt);
    REQUIRE_FALSE(exhaustive.empty());
}

TEST_CASE("classify treats a missing label file as a usage error") {
    TempDir dir;
    make_dataset(dir, "train", 40, 4, 2, 0.5, 2);
    const auto run = dir.run("classify --train " + dir.file("train.annm") + " --labels " +
                             dir.file("nope.annl") + " --queries " + dir.file("train.annm"));
    REQUIRE(run.exit_code == 2);
    REQUIRE(run.err.find("not found") != std::string::npos);
}

TEST_CASE("cross-validation benchmarks several methods in one run") {
    TempDir dir;
    make_dataset(dir, "set", 120, 6, 3, 0.5, 47);
    const auto run = dir.run("cv --data " + dir.file("set.annm") + " --labels " +
                             dir.file("set.annl") +
                             " --method exhaustive --method mrpt --trees 2 --depth 0" +
                             " --k 3 --folds 3 --reps 2 --seed 9 --format json --out " +
                             dir.file("cv.json"));
    REQUIRE(run.exit_code == 0);

    // one summary line per method on stdout
    std::size_t summary_lines = 0;
    for (const auto& line : lines_of(run.out))
        if (line.rfind("cv ", 0) == 0) ++summary_lines;
    REQUIRE(summary_lines == 2);

    const json out = json::parse(slurp(dir.file("cv.json")));
    REQUIRE(out["run_config"]["subcommand"] == "cv");
    REQUIRE(out["run_config"]["method"] == "exhaustive,mrpt");
    REQUIRE(out["results"].size() == 2);
    REQUIRE(out["results"][0]["method"] == "exhaustive");
    REQUIRE(out["results"][1]["method"] == "mrpt");
    for (const auto& result : out["results"]) {
        REQUIRE(result["records"].size() == 6);
        const double accuracy = result["summary"]["mean"]["accuracy"].get<double>();
        REQUIRE(accuracy >= 0.0);
        REQUIRE(accuracy <= 1.0);
    }

    // depth 0 search is exhaustive search, so the fold metrics agree exactly
    REQUIRE(out["results"][0]["summary"] == out["results"][1]["summary"]);
}

TEST_CASE("cross-validation can emit a single flat csv") {
    TempDir dir;
    make_dataset(dir, "set", 100, 5, 2, 0.5, 53);
    const auto run = dir.run("cv --data " + dir.file("set.annm") + " --labels " +
                             dir.file("set.annl") +
                             " --method exhaustive --method balltree --k 3 --folds 2 --reps 2" +
                             " --format csv --out " + dir.file("cv.csv"));
    REQUIRE(run.exit_code == 0);

    const auto lines = lines_of(slurp(dir.file("cv.csv")));
    REQUIRE(lines.size() == 1 + 1 + 8);  // config comment, one header, 2 methods x 4 cells
    REQUIRE(lines[0].rfind("# config:", 0) == 0);
    REQUIRE(lines[1].rfind("method,config,seed", 0) == 0);
    REQUIRE(cells_of(lines[2])[0] == "exhaustive");
    REQUIRE(cells_of(lines[6])[0] == "ball_tree");
    for (std::size_t i = 2; i < lines.size(); ++i) REQUIRE(cells_of(lines[i]).size() == 14);
}

TEST_CASE("cross-validation output is byte-stable across thread counts") {
    TempDir dir;
    make_dataset(dir, "set", 150, 8, 3, 0.5, 59);
    // same output path both times; the config embedded in the file names it
    const std::string base = "cv --data " + dir.file("set.annm") + " --labels " +
                             dir.file("set.annl") +
                             " --method exhaustive --method mrpt --trees 3 --depth 2" +
                             " --k 3 --folds 3 --reps 2 --seed 4 --format json --out " +
                             dir.file("cv.json");
    REQUIRE(dir.run(base + " --threads 1").exit_code == 0);
    const std::string single = mask_timings(slurp(dir.file("cv.json")));
    REQUIRE(dir.run(base + " --threads 8").exit_code == 0);
    REQUIRE(single == mask_timings(slurp(dir.file("cv.json"))));
}

TEST_CASE("the thread cap can come from the environment") {
    TempDir dir;
    make_dataset(dir, "set", 80, 5, 2, 0.5, 61);
    const auto run = dir.run("cv --data " + dir.file("set.annm") + " --labels " +
                                 dir.file("set.annl") + " --method exhaustive --k 3" +
                                 " --folds 2 --reps 1 --format json --out " + dir.file("cv.json"),
                             "RPF_THREADS=2 ");
    REQUIRE(run.exit_code == 0);
    REQUIRE(json::parse(slurp(dir.file("cv.json")))["results"].size() == 1);
}

TEST_CASE("a sweep emits one row per target") {
    TempDir dir;
    make_dataset(dir, "set", 300, 10, 3, 0.4, 67);
    const auto run = dir.run("sweep --data " + dir.file("set.annm") + " --labels " +
                             dir.file("set.annl") +
                             " --targets 0.6,0.9 --k 3 --folds 2 --seed 3 --format csv --out " +
                             dir.file("sweep.csv"));
    REQUIRE(run.exit_code == 0);

    std::size_t summary_lines = 0;
    for (const auto& line : lines_of(run.out))
        if (line.rfind("sweep target", 0) == 0) ++summary_lines;
    REQUIRE(summary_lines == 2);

    const auto lines = lines_of(slurp(dir.file("sweep.csv")));
    REQUIRE(lines.size() == 1 + 1 + 2);  // config comment, header, one row per target
    REQUIRE(lines[1].rfind("target_recall,measured_recall", 0) == 0);
    REQUIRE(cells_of(lines[2]).size() == 9);

    const auto as_json = dir.run("sweep --data " + dir.file("set.annm") + " --labels " +
                                 dir.file("set.annl") +
                                 " --targets 0.6,0.9 --k 3 --folds 2 --seed 3 --format json" +
                                 " --out " + dir.file("sweep.json"));
    REQUIRE(as_json.exit_code == 0);
    const json out = json::parse(slurp(dir.file("sweep.json")));
    REQUIRE(out["results"].size() == 2);
    REQUIRE(out["results"][0]["target_recall"] == 0.6);
}

TEST_CASE("sweep rejects malformed targets") {
    TempDir dir;
    make_dataset(dir, "set", 60, 4, 2, 0.5, 71);
    const auto run = dir.run("sweep --data " + dir.file("set.annm") + " --labels " +
                             dir.file("set.annl") + " --targets 0.5,abc --k 3 --folds 2");
    REQUIRE(run.exit_code == 2);
    REQUIRE(run.err.find("abc") != std::string::npos);
}

TEST_CASE("usage problems exit with status two") {
    TempDir dir;
    REQUIRE(dir.run("").exit_code == 2);                    // a subcommand is required
    REQUIRE(dir.run("frobnicate").exit_code == 2);          // unknown subcommand
    make_dataset(dir, "set", 30, 4, 2, 0.5, 73);
    REQUIRE(dir.run("query --data " + dir.file("set.annm") + " --queries " +
                    dir.file("set.annm") + " --method quantum")
                .exit_code == 2);                           // method outside the allowed set
}

TEST_CASE("help is available and exits cleanly") {
    TempDir dir;
    const auto run = dir.run("--help");
    REQUIRE(run.exit_code == 0);
    REQUIRE(run.out.find("synth") != std::string::npos);
    REQUIRE(run.out.find("sweep") != std::string::npos);
    REQUIRE(dir.run("tune --help").exit_code == 0);
}
