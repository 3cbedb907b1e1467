#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "common.hpp"
#include "io_detail.hpp"
#include "random.hpp"

namespace rpf {

// Dense n x d row-major matrix of 32-bit floats; the corpus being indexed.
// Immutable after construction, safe to share across threads.
class DataMatrix {
public:
    DataMatrix(std::size_t n, std::size_t d, std::vector<float> values)
        : n_(n), d_(d), values_(std::move(values)) {
        if (n_ < 1 || d_ < 1) throw ArgumentError("DataMatrix: n and d must be >= 1");
        if (values_.size() != n_ * d_)
            throw ArgumentError("DataMatrix: expected " + std::to_string(n_ * d_) +
                                " values, got " + std::to_string(values_.size()));
        for (float v : values_)
            if (!std::isfinite(v)) throw ArgumentError("DataMatrix: non-finite value");
    }

    std::size_t rows() const { return n_; }
    std::size_t dims() const { return d_; }

    std::span<const float> row(std::size_t i) const { return {values_.data() + i * d_, d_}; }
    std::span<const float> values() const { return values_; }

    // New matrix holding the given rows, in the given order.
    DataMatrix select(std::span<const std::uint32_t> row_ids) const {
        std::vector<float> out;
        out.reserve(row_ids.size() * d_);
        for (std::uint32_t r : row_ids) {
            const auto src = row(r);
            out.insert(out.end(), src.begin(), src.end());
        }
        return DataMatrix(row_ids.size(), d_, std::move(out));
    }

private:
    std::size_t n_;
    std::size_t d_;
    std::vector<float> values_;
};

// Class ids in [0, C) with index-aligned display names.
struct LabelVector {
    std::vector<std::uint32_t> ids;
    std::vector<std::string> class_names;

    std::size_t size() const { return ids.size(); }
    std::size_t class_count() const { return class_names.size(); }

    // Full invariant: every id in range and every class non-empty. Fold
    // subsets may legitimately miss a class, so select() does not re-check.
    void validate() const {
        const std::size_t c = class_count();
        if (c == 0) throw ArgumentError("LabelVector: no classes");
        std::vector<bool> seen(c, false);
        for (std::uint32_t id : ids) {
            if (id >= c) throw ArgumentError("LabelVector: class id out of range");
            seen[id] = true;
        }
        for (std::size_t i = 0; i < c; ++i)
            if (!seen[i])
                throw ArgumentError("LabelVector: class '" + class_names[i] + "' has no members");
    }

    LabelVector select(std::span<const std::uint32_t> row_ids) const {
        LabelVector out;
        out.class_names = class_names;
        out.ids.reserve(row_ids.size());
        for (std::uint32_t r : row_ids) out.ids.push_back(ids.at(r));
        return out;
    }
};

// Stratified cross-validation split: test sets partition [0, n).
struct FoldPlan {
    struct Fold {
        std::vector<std::uint32_t> train;
        std::vector<std::uint32_t> test;
    };
    std::vector<Fold> folds;
    std::uint64_t seed = 0;

    std::size_t fold_count() const { return folds.size(); }
};

// ---------------------------------------------------------------------------
// CSV ingestion

struct CsvData {
    DataMatrix matrix;
    std::optional<LabelVector> labels;
};

namespace detail {

inline std::string_view trim_cell(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline float parse_cell(std::string_view cell, std::size_t line_no, std::size_t col_no) {
    const std::string_view t = trim_cell(cell);
    float value = 0.0f;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
    if (ec != std::errc{} || ptr != t.data() + t.size() || !std::isfinite(value))
        throw FormatError("CSV: cell at line " + std::to_string(line_no) + ", column " +
                          std::to_string(col_no) + " is not a finite number: '" +
                          std::string(cell) + "'");
    return value;
}

}  // namespace detail

// Loads a CSV of decimal numbers, one point per record. If label_column is
// given, that column is factorized into class ids in first-appearance order.
inline CsvData load_csv(const std::filesystem::path& path, bool has_header = false,
                        std::optional<std::size_t> label_column = std::nullopt) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open CSV file: " + path.string());

    std::vector<float> values;
    LabelVector labels;
    std::unordered_map<std::string, std::uint32_t> label_ids;

    std::string line;
    std::size_t line_no = 0;
    std::size_t arity = 0;
    std::size_t rows = 0;

    if (has_header && std::getline(is, line)) ++line_no;

    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;

        std::vector<std::string_view> cells;
        std::string_view rest = line;
        for (;;) {
            const auto comma = rest.find(',');
            cells.push_back(rest.substr(0, comma));
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }

        if (arity == 0) {
            arity = cells.size();
            if (label_column && *label_column >= arity)
                throw ArgumentError("CSV: label column " + std::to_string(*label_column) +
                                    " out of range for " + std::to_string(arity) + " columns");
            if (arity - (label_column ? 1 : 0) < 1)
                throw FormatError("CSV: no feature columns besides the label column");
        } else if (cells.size() != arity) {
            throw FormatError("CSV: ragged row at line " + std::to_string(line_no) + ": got " +
                              std::to_string(cells.size()) + " cells, expected " +
                              std::to_string(arity));
        }

        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (label_column && c == *label_column) {
                const std::string name(detail::trim_cell(cells[c]));
                auto [it, inserted] =
                    label_ids.emplace(name, static_cast<std::uint32_t>(labels.class_names.size()));
                if (inserted) labels.class_names.push_back(name);
                labels.ids.push_back(it->second);
            } else {
                values.push_back(detail::parse_cell(cells[c], line_no, c + 1));
            }
        }
        ++rows;
    }

    if (rows == 0) throw FormatError("CSV: no data rows in " + path.string());

    const std::size_t d = arity - (label_column ? 1 : 0);
    CsvData out{DataMatrix(rows, d, std::move(values)), std::nullopt};
    if (label_column) {
        labels.validate();
        out.labels = std::move(labels);
    }
    return out;
}

// ---------------------------------------------------------------------------
// ANNM binary matrix format: "ANNM", version u32 = 1, n u64, d u64, then
// n*d IEEE-754 f32 values row-major. All fields little-endian.

namespace detail {

// Float array <-> little-endian byte image, in bulk.
inline std::vector<unsigned char> f32_le_bytes(std::span<const float> values) {
    std::vector<unsigned char> bytes(values.size() * 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const std::uint32_t u = std::bit_cast<std::uint32_t>(values[i]);
        bytes[4 * i + 0] = static_cast<unsigned char>(u);
        bytes[4 * i + 1] = static_cast<unsigned char>(u >> 8);
        bytes[4 * i + 2] = static_cast<unsigned char>(u >> 16);
        bytes[4 * i + 3] = static_cast<unsigned char>(u >> 24);
    }
    return bytes;
}

inline std::vector<float> f32_from_le_bytes(std::span<const unsigned char> bytes) {
    std::vector<float> values(bytes.size() / 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const std::uint32_t u = static_cast<std::uint32_t>(bytes[4 * i + 0]) |
                                static_cast<std::uint32_t>(bytes[4 * i + 1]) << 8 |
                                static_cast<std::uint32_t>(bytes[4 * i + 2]) << 16 |
                                static_cast<std::uint32_t>(bytes[4 * i + 3]) << 24;
        values[i] = std::bit_cast<float>(u);
    }
    return values;
}

}  // namespace detail

inline void save_binary(const DataMatrix& matrix, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    detail::write_bytes(os, "ANNM", 4);
    detail::write_u32(os, 1);
    detail::write_u64(os, matrix.rows());
    detail::write_u64(os, matrix.dims());
    const auto payload = detail::f32_le_bytes(matrix.values());
    detail::write_bytes(os, payload.data(), payload.size());
    os.flush();
    if (!os) throw IoError("write failed: " + path.string());
}

inline DataMatrix load_binary(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path.string());
    std::error_code ec;
    const std::uint64_t file_size = std::filesystem::file_size(path, ec);
    if (ec) throw IoError("cannot stat: " + path.string());

    char magic[4];
    detail::read_bytes(is, magic, 4, "ANNM magic");
    if (std::string_view(magic, 4) != "ANNM")
        throw FormatError("bad magic in " + path.string() + ": expected ANNM");
    const std::uint32_t version = detail::read_u32(is, "ANNM version");
    if (version != 1)
        throw FormatError("unsupported ANNM version " + std::to_string(version) + " in " +
                          path.string());
    const std::uint64_t n = detail::read_u64(is, "ANNM row count");
    const std::uint64_t d = detail::read_u64(is, "ANNM dimension");
    if (n < 1 || d < 1) throw FormatError("ANNM header declares empty matrix");
    if (n > SIZE_MAX / d / sizeof(float))
        throw FormatError("ANNM header declares an implausibly large matrix");

    const std::uint64_t required = n * d * sizeof(float);
    constexpr std::uint64_t kHeader = 24;  // magic + version + n + d
    const std::uint64_t present = file_size >= kHeader ? file_size - kHeader : 0;
    if (present < required)
        throw FormatError("truncated ANNM payload in " + path.string() + ": " +
                          std::to_string(required) + " bytes required, " +
                          std::to_string(present) + " present");

    std::vector<unsigned char> payload(required);
    detail::read_bytes(is, payload.data(), payload.size(), "ANNM payload");
    auto values = detail::f32_from_le_bytes(payload);
    for (float v : values)
        if (!std::isfinite(v))
            throw FormatError("non-finite value in ANNM payload of " + path.string());
    return DataMatrix(n, d, std::move(values));
}

// ---------------------------------------------------------------------------
// ANNL label format: "ANNL", version u32 = 1, n u64, C u64, n u32 class ids,
// then C length-prefixed UTF-8 names (u32 length + bytes).

inline void save_labels(const LabelVector& labels, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    detail::write_bytes(os, "ANNL", 4);
    detail::write_u32(os, 1);
    detail::write_u64(os, labels.size());
    detail::write_u64(os, labels.class_count());
    for (std::uint32_t id : labels.ids) detail::write_u32(os, id);
    for (const std::string& name : labels.class_names) {
        detail::write_u32(os, static_cast<std::uint32_t>(name.size()));
        detail::write_bytes(os, name.data(), name.size());
    }
    os.flush();
    if (!os) throw IoError("write failed: " + path.string());
}

inline LabelVector load_labels(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path.string());

    char magic[4];
    detail::read_bytes(is, magic, 4, "ANNL magic");
    if (std::string_view(magic, 4) != "ANNL")
        throw FormatError("bad magic in " + path.string() + ": expected ANNL");
    const std::uint32_t version = detail::read_u32(is, "ANNL version");
    if (version != 1)
        throw FormatError("unsupported ANNL version " + std::to_string(version) + " in " +
                          path.string());
    const std::uint64_t n = detail::read_u64(is, "ANNL count");
    const std::uint64_t c = detail::read_u64(is, "ANNL class count");

    LabelVector labels;
    labels.ids.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) labels.ids.push_back(detail::read_u32(is, "ANNL id"));
    labels.class_names.reserve(c);
    for (std::uint64_t i = 0; i < c; ++i) {
        const std::uint32_t len = detail::read_u32(is, "ANNL name length");
        std::string name(len, '\0');
        detail::read_bytes(is, name.data(), len, "ANNL name");
        labels.class_names.push_back(std::move(name));
    }
    try {
        labels.validate();
    } catch (const ArgumentError& e) {
        throw FormatError(std::string("invalid ANNL content in ") + path.string() + ": " +
                          e.what());
    }
    return labels;
}

// ---------------------------------------------------------------------------
// Synthetic Gaussian mixture generator

struct SyntheticData {
    DataMatrix matrix;
    LabelVector labels;
};

// c cluster centers uniform in [-1,1]^d; points assigned round-robin to
// classes; point = class center + N(0, spread^2) noise. Pure function of its
// arguments.
inline SyntheticData generate_synthetic(std::size_t n, std::size_t d, std::size_t c,
                                        double spread, std::uint64_t seed) {
    if (c < 1 || n < c) throw ArgumentError("generate_synthetic: need n >= c >= 1");
    if (d < 1) throw ArgumentError("generate_synthetic: need d >= 1");
    if (!(spread > 0.0)) throw ArgumentError("generate_synthetic: spread must be > 0");

    RngStream rng(seed, 0);
    std::vector<double> centers(c * d);
    for (double& v : centers) v = 2.0 * rng.next_double() - 1.0;

    std::vector<float> values(n * d);
    LabelVector labels;
    labels.ids.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t cls = i % c;
        labels.ids[i] = static_cast<std::uint32_t>(cls);
        for (std::size_t j = 0; j < d; ++j)
            values[i * d + j] =
                static_cast<float>(centers[cls * d + j] + spread * rng.next_normal());
    }
    labels.class_names.reserve(c);
    for (std::size_t cls = 0; cls < c; ++cls)
        labels.class_names.push_back("class_" + std::to_string(cls));

    return {DataMatrix(n, d, std::move(values)), std::move(labels)};
}

// ---------------------------------------------------------------------------
// Stratified k-fold assignment: per-class seeded shuffle, then round-robin
// over folds, so per-class test counts differ by at most one across folds.

inline FoldPlan stratified_kfold(const LabelVector& labels, std::size_t fold_count,
                                 std::uint64_t seed) {
    if (fold_count < 2) throw ArgumentError("stratified_kfold: fold_count must be >= 2");
    const std::size_t n = labels.size();
    if (fold_count > n)
        throw ArgumentError("stratified_kfold: fold_count " + std::to_string(fold_count) +
                            " exceeds point count " + std::to_string(n));
    labels.validate();

    const std::size_t c = labels.class_count();
    std::vector<std::vector<std::uint32_t>> members(c);
    for (std::size_t i = 0; i < n; ++i)
        members[labels.ids[i]].push_back(static_cast<std::uint32_t>(i));

    RngStream rng(seed, 0);
    std::vector<std::vector<std::uint32_t>> test_sets(fold_count);
    for (std::size_t cls = 0; cls < c; ++cls) {
        auto& list = members[cls];
        for (std::size_t i = list.size(); i > 1; --i)
            std::swap(list[i - 1], list[rng.next_below(i)]);
        for (std::size_t j = 0; j < list.size(); ++j)
            test_sets[j % fold_count].push_back(list[j]);
    }

    FoldPlan plan;
    plan.seed = seed;
    plan.folds.resize(fold_count);
    std::vector<bool> in_test(n);
    for (std::size_t f = 0; f < fold_count; ++f) {
        auto& fold = plan.folds[f];
        fold.test = std::move(test_sets[f]);
        std::sort(fold.test.begin(), fold.test.end());
        std::fill(in_test.begin(), in_test.end(), false);
        for (std::uint32_t t : fold.test) in_test[t] = true;
        fold.train.reserve(n - fold.test.size());
        for (std::size_t i = 0; i < n; ++i)
            if (!in_test[i]) fold.train.push_back(static_cast<std::uint32_t>(i));
    }
    return plan;
}

}  // namespace rpf
