#pragma once

// Dataset representation, weak-label ingestion and the one-class LF convention.
//
// A labeling function (LF) either abstains or emits one class. Raw datasets may
// contain LFs that emit several different classes; to_one_class_lfs() splits
// those into one derived LF per (original LF, emitted class) pair. Training
// works only on the derived form: a binary match matrix L (n x m) plus the
// LF-to-class mapping T (m x c, one class per LF).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sepll/error.hpp"
#include "sepll/random.hpp"

namespace sepll {

namespace fs = std::filesystem;

using ClassIndex = std::size_t;
inline constexpr int kAbstain = -1;

struct Sample {
    std::uint64_t id = 0;
    std::string text;
    std::optional<ClassIndex> gold_label;

    bool operator==(const Sample&) const = default;
};

/// One split: samples plus the raw n x m0 weak-label matrix (kAbstain or a
/// class index per cell).
struct Split {
    std::vector<Sample> samples;
    std::vector<std::vector<int>> weak_labels;

    std::size_t size() const noexcept { return samples.size(); }
    bool operator==(const Split&) const = default;
};

enum class SplitName { kTrain, kDev, kTest };

inline constexpr std::array<SplitName, 3> kAllSplits{SplitName::kTrain, SplitName::kDev, SplitName::kTest};

inline std::string_view to_string(SplitName s) {
    switch (s) {
        case SplitName::kTrain: return "train";
        case SplitName::kDev: return "dev";
        case SplitName::kTest: return "test";
    }
    return "?";
}

struct SplitSet {
    Split train;
    Split dev;
    Split test;
    std::vector<std::string> class_names;
    std::size_t num_original_lfs = 0;

    std::size_t num_classes() const noexcept { return class_names.size(); }

    const Split& split(SplitName s) const {
        switch (s) {
            case SplitName::kTrain: return train;
            case SplitName::kDev: return dev;
            case SplitName::kTest: return test;
        }
        return train;
    }
    Split& split(SplitName s) { return const_cast<Split&>(std::as_const(*this).split(s)); }

    /// Checks every invariant; throws DataError naming the offending split/sample.
    void validate() const {
        if (class_names.empty()) throw DataError("class_names must be non-empty");
        const auto c = static_cast<int>(class_names.size());
        for (SplitName name : kAllSplits) {
            const Split& s = split(name);
            const std::string where(to_string(name));
            if (s.weak_labels.size() != s.samples.size())
                throw DataError(where + ": weak-label row count does not match sample count");
            std::unordered_set<std::uint64_t> ids;
            for (std::size_t i = 0; i < s.samples.size(); ++i) {
                const Sample& smp = s.samples[i];
                if (!ids.insert(smp.id).second)
                    throw DataError(where + ": duplicate sample id " + std::to_string(smp.id));
                if (smp.gold_label && *smp.gold_label >= class_names.size())
                    throw DataError(where + ": sample " + std::to_string(smp.id) + ": class index out of range");
                if (s.weak_labels[i].size() != num_original_lfs)
                    throw DataError(where + ": sample " + std::to_string(smp.id) + ": inconsistent LF count (expected " +
                                    std::to_string(num_original_lfs) + ", got " +
                                    std::to_string(s.weak_labels[i].size()) + ")");
                for (int v : s.weak_labels[i]) {
                    if (v != kAbstain && (v < 0 || v >= c))
                        throw DataError(where + ": sample " + std::to_string(smp.id) + ": class index out of range (" +
                                        std::to_string(v) + ")");
                }
            }
        }
    }

    bool operator==(const SplitSet&) const = default;
};

/// Sparse binary n x m matrix, stored as sorted column lists per row.
class MatchMatrix {
public:
    using Index = std::uint32_t;

    MatchMatrix() = default;

    MatchMatrix(std::size_t n, std::size_t m) : m_(m), rows_(n) {}

    /// Builds from explicit rows; each row is sorted and checked for range and
    /// duplicates.
    MatchMatrix(std::size_t m, std::vector<std::vector<Index>> rows) : m_(m), rows_(std::move(rows)) {
        for (std::size_t i = 0; i < rows_.size(); ++i) {
            auto& r = rows_[i];
            std::sort(r.begin(), r.end());
            if (std::adjacent_find(r.begin(), r.end()) != r.end())
                throw DataError("duplicate match entry in row " + std::to_string(i));
            if (!r.empty() && r.back() >= m_)
                throw DataError("match column " + std::to_string(r.back()) + " out of range in row " +
                                std::to_string(i));
        }
    }

    static MatchMatrix from_pairs(std::size_t n, std::size_t m,
                                  std::span<const std::pair<std::size_t, std::size_t>> pairs) {
        std::vector<std::vector<Index>> rows(n);
        for (auto [i, j] : pairs) {
            if (i >= n || j >= m)
                throw DataError("match entry (" + std::to_string(i) + ", " + std::to_string(j) + ") out of range");
            rows[i].push_back(static_cast<Index>(j));
        }
        return MatchMatrix(m, std::move(rows));
    }

    std::size_t n() const noexcept { return rows_.size(); }
    std::size_t m() const noexcept { return m_; }

    std::span<const Index> row(std::size_t i) const { return rows_[i]; }
    std::size_t row_count(std::size_t i) const { return rows_[i].size(); }

    bool contains(std::size_t i, std::size_t j) const {
        const auto& r = rows_[i];
        return std::binary_search(r.begin(), r.end(), static_cast<Index>(j));
    }

    std::size_t nnz() const noexcept {
        std::size_t total = 0;
        for (const auto& r : rows_) total += r.size();
        return total;
    }

    std::vector<double> dense_row(std::size_t i) const {
        std::vector<double> out(m_, 0.0);
        for (Index j : rows_[i]) out[j] = 1.0;
        return out;
    }

    /// Selects a subset of rows in the given order.
    MatchMatrix select_rows(std::span<const std::size_t> idx) const {
        std::vector<std::vector<Index>> rows;
        rows.reserve(idx.size());
        for (std::size_t i : idx) rows.push_back(rows_.at(i));
        return MatchMatrix(m_, std::move(rows));
    }

    /// Reorders columns: new column perm[j] holds old column j.
    MatchMatrix permute_columns(std::span<const std::size_t> perm) const {
        std::vector<std::vector<Index>> rows(rows_.size());
        for (std::size_t i = 0; i < rows_.size(); ++i)
            for (Index j : rows_[i]) rows[i].push_back(static_cast<Index>(perm[j]));
        return MatchMatrix(m_, std::move(rows));
    }

    bool operator==(const MatchMatrix&) const = default;

private:
    std::size_t m_ = 0;
    std::vector<std::vector<Index>> rows_;
};

/// LF-to-class assignment T; each LF maps to exactly one class.
class MappingMatrix {
public:
    MappingMatrix() = default;

    MappingMatrix(std::vector<ClassIndex> class_of, std::size_t num_classes)
        : class_of_(std::move(class_of)), c_(num_classes) {
        if (c_ == 0) throw DataError("mapping matrix needs at least one class");
        for (std::size_t j = 0; j < class_of_.size(); ++j)
            if (class_of_[j] >= c_)
                throw DataError("LF " + std::to_string(j) + " maps to class " + std::to_string(class_of_[j]) +
                                ": class index out of range");
    }

    std::size_t m() const noexcept { return class_of_.size(); }
    std::size_t c() const noexcept { return c_; }
    ClassIndex class_of(std::size_t j) const { return class_of_[j]; }
    const std::vector<ClassIndex>& classes() const noexcept { return class_of_; }

    std::vector<std::size_t> lfs_of_class(ClassIndex k) const {
        std::vector<std::size_t> out;
        for (std::size_t j = 0; j < class_of_.size(); ++j)
            if (class_of_[j] == k) out.push_back(j);
        return out;
    }

    /// Dense m x c row-major form.
    std::vector<double> dense() const {
        std::vector<double> t(class_of_.size() * c_, 0.0);
        for (std::size_t j = 0; j < class_of_.size(); ++j) t[j * c_ + class_of_[j]] = 1.0;
        return t;
    }

    MappingMatrix permute(std::span<const std::size_t> perm) const {
        std::vector<ClassIndex> out(class_of_.size());
        for (std::size_t j = 0; j < class_of_.size(); ++j) out[perm[j]] = class_of_[j];
        return MappingMatrix(std::move(out), c_);
    }

    bool operator==(const MappingMatrix&) const = default;

private:
    std::vector<ClassIndex> class_of_;
    std::size_t c_ = 0;
};

/// Row-normalized L. Rows without any match are uniform and flagged as unlabeled.
struct TargetDistribution {
    std::size_t n = 0;
    std::size_t m = 0;
    std::vector<double> rows;          // n x m row-major
    std::vector<bool> unlabeled_mask;  // length n
    std::vector<std::size_t> included; // rows that enter the training stream

    std::span<const double> row(std::size_t i) const { return {rows.data() + i * m, m}; }
};

// ---------------------------------------------------------------------------
// One-class conversion

struct LfProvenance {
    std::size_t original_lf = 0;
    std::optional<ClassIndex> cls;           // empty when the LF never fires
    std::optional<std::size_t> derived_index; // empty when dropped
};

struct OneClassLfs {
    MatchMatrix train;
    MatchMatrix dev;
    MatchMatrix test;
    MappingMatrix mapping;
    std::vector<LfProvenance> provenance;

    const MatchMatrix& matches(SplitName s) const {
        switch (s) {
            case SplitName::kTrain: return train;
            case SplitName::kDev: return dev;
            case SplitName::kTest: return test;
        }
        return train;
    }
};

/// Splits multi-class LFs into class-specific ones. The derived inventory is
/// computed over all splits jointly; LFs that never fire are dropped. Column
/// order: original LF order, ascending class within one original LF.
inline OneClassLfs to_one_class_lfs(const SplitSet& data) {
    data.validate();
    const std::size_t m0 = data.num_original_lfs;
    const std::size_t c = data.num_classes();
    std::vector<std::vector<bool>> emitted(m0, std::vector<bool>(c, false));
    for (SplitName s : kAllSplits)
        for (const auto& row : data.split(s).weak_labels)
            for (std::size_t j = 0; j < m0; ++j)
                if (row[j] != kAbstain) emitted[j][static_cast<std::size_t>(row[j])] = true;

    OneClassLfs out;
    std::vector<std::vector<std::size_t>> derived_of(m0, std::vector<std::size_t>(c, SIZE_MAX));
    std::vector<ClassIndex> class_of;
    for (std::size_t j = 0; j < m0; ++j) {
        bool any = false;
        for (ClassIndex k = 0; k < c; ++k) {
            if (!emitted[j][k]) continue;
            any = true;
            derived_of[j][k] = class_of.size();
            out.provenance.push_back({j, k, class_of.size()});
            class_of.push_back(k);
        }
        if (!any) out.provenance.push_back({j, std::nullopt, std::nullopt});
    }
    const std::size_t m = class_of.size();
    out.mapping = MappingMatrix(std::move(class_of), c);

    auto convert = [&](const Split& split) {
        std::vector<std::vector<MatchMatrix::Index>> rows(split.size());
        for (std::size_t i = 0; i < split.size(); ++i)
            for (std::size_t j = 0; j < m0; ++j) {
                const int v = split.weak_labels[i][j];
                if (v != kAbstain)
                    rows[i].push_back(static_cast<MatchMatrix::Index>(derived_of[j][static_cast<std::size_t>(v)]));
            }
        return MatchMatrix(m, std::move(rows));
    };
    out.train = convert(data.train);
    out.dev = convert(data.dev);
    out.test = convert(data.test);
    return out;
}

// ---------------------------------------------------------------------------
// Targets

inline TargetDistribution build_targets(const MatchMatrix& L, bool include_unlabeled) {
    if (L.m() == 0) throw DataError("cannot build targets with zero labeling functions");
    TargetDistribution p;
    p.n = L.n();
    p.m = L.m();
    p.rows.assign(p.n * p.m, 0.0);
    p.unlabeled_mask.assign(p.n, false);
    const double uniform = 1.0 / static_cast<double>(p.m);
    for (std::size_t i = 0; i < p.n; ++i) {
        auto r = L.row(i);
        double* out = p.rows.data() + i * p.m;
        if (r.empty()) {
            std::fill(out, out + p.m, uniform);
            p.unlabeled_mask[i] = true;
            if (include_unlabeled) p.included.push_back(i);
        } else {
            const double w = 1.0 / static_cast<double>(r.size());
            for (auto j : r) out[j] = w;
            p.included.push_back(i);
        }
    }
    return p;
}

// ---------------------------------------------------------------------------
// Plain-text matrix files

inline void write_triplets(std::ostream& os, const MatchMatrix& L) {
    os << L.n() << ' ' << L.m() << '\n';
    for (std::size_t i = 0; i < L.n(); ++i)
        for (auto j : L.row(i)) os << i << ' ' << j << '\n';
}

inline MatchMatrix read_triplets(std::istream& is, const std::string& source = "<stream>") {
    std::string line;
    long line_no = 0;
    std::size_t n = 0, m = 0;
    bool have_header = false;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::size_t a = 0, b = 0;
        std::string rest;
        if (!(ls >> a >> b) || (ls >> rest)) throw DataError(source, line_no, "expected two integers");
        if (!have_header) {
            n = a;
            m = b;
            have_header = true;
        } else {
            if (a >= n || b >= m) throw DataError(source, line_no, "entry out of range");
            pairs.emplace_back(a, b);
        }
    }
    if (!have_header) throw DataError(source, 0, "missing 'n m' header");
    std::vector<std::vector<MatchMatrix::Index>> rows(n);
    for (auto [i, j] : pairs) rows[i].push_back(static_cast<MatchMatrix::Index>(j));
    try {
        return MatchMatrix(m, std::move(rows));
    } catch (const DataError& e) {
        throw DataError(source, 0, e.what());
    }
}

inline void write_class_of(std::ostream& os, const MappingMatrix& T) {
    os << T.m() << ' ' << T.c() << '\n';
    for (std::size_t j = 0; j < T.m(); ++j) os << T.class_of(j) << '\n';
}

inline MappingMatrix read_class_of(std::istream& is, const std::string& source = "<stream>") {
    std::size_t m = 0, c = 0;
    if (!(is >> m >> c)) throw DataError(source, 1, "missing 'm c' header");
    std::vector<ClassIndex> class_of(m);
    for (std::size_t j = 0; j < m; ++j)
        if (!(is >> class_of[j])) throw DataError(source, static_cast<long>(j + 2), "expected class index");
    std::string extra;
    if (is >> extra) throw DataError(source, 0, "trailing content after " + std::to_string(m) + " rows");
    return MappingMatrix(std::move(class_of), c);
}

// ---------------------------------------------------------------------------
// Dataset files

enum class DatasetFormat { kWrenchJson, kJsonl };

inline DatasetFormat parse_dataset_format(std::string_view s) {
    if (s == "wrench-json") return DatasetFormat::kWrenchJson;
    if (s == "jsonl") return DatasetFormat::kJsonl;
    throw ConfigError("unknown dataset format '" + std::string(s) + "' (expected wrench-json or jsonl)");
}

namespace detail {

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError(p.string(), 0, "cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline long line_of_offset(const std::string& text, std::size_t offset) {
    offset = std::min(offset, text.size());
    return 1 + static_cast<long>(std::count(text.begin(), text.begin() + static_cast<long>(offset), '\n'));
}

template <typename Json>
Json parse_json(const std::string& text, const std::string& source, long line_hint = 0) {
    try {
        return Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        const long line = line_hint > 0 ? line_hint : line_of_offset(text, e.byte);
        throw DataError(source, line, std::string("parse failure: ") + e.what());
    }
}

inline std::vector<std::string> read_class_names(const fs::path& dir) {
    const fs::path p = dir / "label.json";
    const auto j = parse_json<nlohmann::ordered_json>(read_file(p), p.string());
    if (!j.is_object() || j.empty()) throw DataError(p.string(), 0, "expected a non-empty object index -> name");
    std::vector<std::string> names(j.size());
    std::vector<bool> seen(j.size(), false);
    for (auto it = j.begin(); it != j.end(); ++it) {
        std::size_t idx = 0;
        try {
            std::size_t used = 0;
            idx = std::stoul(it.key(), &used);
            if (used != it.key().size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw DataError(p.string(), 0, "class key '" + it.key() + "' is not an index");
        }
        if (idx >= names.size() || seen[idx]) throw DataError(p.string(), 0, "class indices must be 0..c-1");
        if (!it.value().is_string()) throw DataError(p.string(), 0, "class name must be a string");
        names[idx] = it.value().get<std::string>();
        seen[idx] = true;
    }
    return names;
}

// Reads one sample record (shared by both formats); `text` is located by the caller.
template <typename Json>
void read_record(const Json& rec, std::string text, std::uint64_t id, std::size_t c, Split& out,
                 const std::string& source, long line) {
    Sample s;
    s.id = id;
    s.text = std::move(text);
    if (rec.contains("label") && !rec["label"].is_null()) {
        if (!rec["label"].is_number_integer()) throw DataError(source, line, "label must be an integer or null");
        const auto v = rec["label"].template get<long long>();
        if (v < 0 || static_cast<std::size_t>(v) >= c) throw DataError(source, line, "class index out of range");
        s.gold_label = static_cast<ClassIndex>(v);
    }
    std::vector<int> weak;
    if (rec.contains("weak_labels")) {
        if (!rec["weak_labels"].is_array()) throw DataError(source, line, "weak_labels must be an array");
        for (const auto& v : rec["weak_labels"]) {
            if (!v.is_number_integer()) throw DataError(source, line, "weak label must be an integer");
            const auto x = v.template get<long long>();
            if (x != kAbstain && (x < 0 || static_cast<std::size_t>(x) >= c))
                throw DataError(source, line, "class index out of range (" + std::to_string(x) + ")");
            weak.push_back(static_cast<int>(x));
        }
    }
    out.samples.push_back(std::move(s));
    out.weak_labels.push_back(std::move(weak));
}

inline Split read_wrench_split(const fs::path& p, std::size_t c) {
    const std::string text = read_file(p);
    const auto j = parse_json<nlohmann::ordered_json>(text, p.string());
    if (!j.is_object()) throw DataError(p.string(), 1, "expected an object keyed by sample id");
    Split out;
    for (auto it = j.begin(); it != j.end(); ++it) {
        std::uint64_t id = 0;
        try {
            std::size_t used = 0;
            id = std::stoull(it.key(), &used);
            if (used != it.key().size() || it.key().front() == '-') throw std::invalid_argument("id");
        } catch (const std::exception&) {
            throw DataError(p.string(), 0, "sample id '" + it.key() + "' is not a non-negative integer");
        }
        const auto& rec = it.value();
        const std::string where = p.string() + " [id " + it.key() + "]";
        if (!rec.is_object() || !rec.contains("data") || !rec["data"].is_object() || !rec["data"].contains("text") ||
            !rec["data"]["text"].is_string())
            throw DataError(where, 0, "missing data.text");
        read_record(rec, rec["data"]["text"].template get<std::string>(), id, c, out, where, 0);
    }
    return out;
}

inline Split read_jsonl_split(const fs::path& p, std::size_t c) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError(p.string(), 0, "cannot open file");
    Split out;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto rec = parse_json<nlohmann::ordered_json>(line, p.string(), line_no);
        if (!rec.is_object() || !rec.contains("text") || !rec["text"].is_string())
            throw DataError(p.string(), line_no, "missing string field 'text'");
        std::uint64_t id = out.samples.size();
        if (rec.contains("id")) {
            if (!rec["id"].is_number_unsigned()) throw DataError(p.string(), line_no, "id must be non-negative");
            id = rec["id"].template get<std::uint64_t>();
        }
        read_record(rec, rec["text"].template get<std::string>(), id, c, out, p.string(), line_no);
    }
    return out;
}

inline fs::path find_split_file(const fs::path& dir, SplitName s, std::string_view ext) {
    std::vector<std::string> names;
    switch (s) {
        case SplitName::kTrain: names = {"train"}; break;
        case SplitName::kDev: names = {"valid", "dev"}; break;
        case SplitName::kTest: names = {"test"}; break;
    }
    for (const auto& n : names) {
        fs::path p = dir / (n + std::string(ext));
        if (fs::exists(p)) return p;
    }
    return {};
}

}  // namespace detail

/// Loads a dataset directory: label.json plus train/valid(dev)/test files in
/// the given format. Missing dev/test files yield empty splits; train is required.
inline SplitSet load_dataset(const fs::path& dir, DatasetFormat format) {
    if (!fs::is_directory(dir)) throw DataError(dir.string(), 0, "dataset directory not found");
    SplitSet out;
    out.class_names = detail::read_class_names(dir);
    const std::string_view ext = format == DatasetFormat::kWrenchJson ? ".json" : ".jsonl";
    std::optional<std::size_t> width;
    std::string width_source;
    for (SplitName s : kAllSplits) {
        const fs::path p = detail::find_split_file(dir, s, ext);
        if (p.empty()) {
            if (s == SplitName::kTrain)
                throw DataError((dir / ("train" + std::string(ext))).string(), 0, "train split file missing");
            continue;
        }
        Split split = format == DatasetFormat::kWrenchJson ? detail::read_wrench_split(p, out.num_classes())
                                                           : detail::read_jsonl_split(p, out.num_classes());
        for (std::size_t i = 0; i < split.size(); ++i) {
            const std::size_t w = split.weak_labels[i].size();
            if (!width) {
                width = w;
                width_source = p.string();
            } else if (*width != w) {
                throw DataError(p.string(), 0,
                                "sample " + std::to_string(split.samples[i].id) + ": inconsistent LF count (" +
                                    std::to_string(w) + " vs " + std::to_string(*width) + " in " + width_source + ")");
            }
        }
        out.split(s) = std::move(split);
    }
    out.num_original_lfs = width.value_or(0);
    out.validate();
    return out;
}

/// Writes a dataset in the same layout load_dataset() reads.
inline void save_dataset(const SplitSet& data, const fs::path& dir, DatasetFormat format) {
    data.validate();
    fs::create_directories(dir);
    {
        nlohmann::ordered_json labels = nlohmann::ordered_json::object();
        for (std::size_t k = 0; k < data.class_names.size(); ++k) labels[std::to_string(k)] = data.class_names[k];
        std::ofstream(dir / "label.json", std::ios::binary) << labels.dump(2) << '\n';
    }
    for (SplitName s : kAllSplits) {
        const Split& split = data.split(s);
        const std::string base = s == SplitName::kDev ? "valid" : std::string(to_string(s));
        auto record = [&](std::size_t i) {
            nlohmann::ordered_json rec;
            const Sample& smp = split.samples[i];
            rec["label"] = smp.gold_label ? nlohmann::ordered_json(*smp.gold_label) : nlohmann::ordered_json(nullptr);
            rec["weak_labels"] = split.weak_labels[i];
            return rec;
        };
        if (format == DatasetFormat::kWrenchJson) {
            nlohmann::ordered_json obj = nlohmann::ordered_json::object();
            for (std::size_t i = 0; i < split.size(); ++i) {
                auto rec = record(i);
                rec["data"] = {{"text", split.samples[i].text}};
                obj[std::to_string(split.samples[i].id)] = std::move(rec);
            }
            std::ofstream(dir / (base + ".json"), std::ios::binary) << obj.dump(2) << '\n';
        } else {
            std::ofstream os(dir / (base + ".jsonl"), std::ios::binary);
            for (std::size_t i = 0; i < split.size(); ++i) {
                nlohmann::ordered_json rec;
                rec["id"] = split.samples[i].id;
                rec["text"] = split.samples[i].text;
                auto r = record(i);
                rec["label"] = r["label"];
                rec["weak_labels"] = r["weak_labels"];
                os << rec.dump() << '\n';
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Synthetic data

struct SynthSpec {
    std::size_t num_classes = 2;
    std::size_t lfs_per_class = 3;
    std::size_t n_train = 2000;
    std::size_t n_dev = 500;
    std::size_t n_test = 500;
    double lf_accuracy = 0.85;
    double lf_coverage = 0.5;

    void validate() const {
        if (num_classes < 2) throw ConfigError("synth: need at least 2 classes");
        if (lfs_per_class < 1) throw ConfigError("synth: need at least 1 LF per class");
        if (!(lf_accuracy > 0.0 && lf_accuracy <= 1.0)) throw ConfigError("synth: lf_accuracy must be in (0, 1]");
        if (!(lf_coverage > 0.0 && lf_coverage <= 1.0)) throw ConfigError("synth: lf_coverage must be in (0, 1]");
    }
};

namespace detail {

// Text shape of the synthetic generator.
inline constexpr std::size_t kSynthTokens = 12;
inline constexpr std::size_t kSynthTopicWords = 30;
inline constexpr std::size_t kSynthFillerWords = 400;
inline constexpr double kSynthTopicRate = 0.22;
inline constexpr double kSynthCrossTopicRate = 0.04;

}  // namespace detail

/// Generates a weakly labeled text dataset. Each of the `lfs_per_class` raw LFs
/// fires on a sample with probability lf_coverage and then emits the true class
/// with probability lf_accuracy, otherwise a uniformly chosen wrong class, so
/// after one-class splitting there are lfs_per_class derived LFs per class.
/// Texts mix class topic words with filler; a firing LF also plants its own
/// trigger keyword, as a keyword rule would require.
inline SplitSet synth_dataset(const SynthSpec& spec, std::uint64_t seed) {
    using namespace detail;
    spec.validate();
    const std::size_t c = spec.num_classes;
    const std::size_t m0 = spec.lfs_per_class;
    Rng rng = make_stream(seed, "synth");

    SplitSet out;
    for (std::size_t k = 0; k < c; ++k) out.class_names.push_back("class" + std::to_string(k));
    out.num_original_lfs = m0;

    auto topic_word = [](std::size_t k, std::size_t t) { return "t" + std::to_string(k) + "w" + std::to_string(t); };
    auto make_split = [&](std::size_t n, Split& split) {
        for (std::size_t i = 0; i < n; ++i) {
            const ClassIndex y = uniform_index(rng, c);
            std::vector<std::string> tokens;
            tokens.reserve(kSynthTokens + m0);
            for (std::size_t t = 0; t < kSynthTokens; ++t) {
                const double u = uniform01(rng);
                if (u < kSynthTopicRate) {
                    tokens.push_back(topic_word(y, uniform_index(rng, kSynthTopicWords)));
                } else if (u < kSynthTopicRate + kSynthCrossTopicRate) {
                    tokens.push_back(topic_word(uniform_index(rng, c), uniform_index(rng, kSynthTopicWords)));
                } else {
                    tokens.push_back("f" + std::to_string(uniform_index(rng, kSynthFillerWords)));
                }
            }
            std::vector<int> weak(m0, kAbstain);
            for (std::size_t j = 0; j < m0; ++j) {
                if (uniform01(rng) >= spec.lf_coverage) continue;
                ClassIndex emitted = y;
                if (uniform01(rng) >= spec.lf_accuracy) {
                    emitted = uniform_index(rng, c - 1);
                    if (emitted >= y) ++emitted;
                }
                weak[j] = static_cast<int>(emitted);
                const std::string keyword = "kw" + std::to_string(j) + "c" + std::to_string(emitted);
                tokens.insert(tokens.begin() + static_cast<long>(uniform_index(rng, tokens.size() + 1)), keyword);
            }
            std::string text;
            for (std::size_t t = 0; t < tokens.size(); ++t) {
                if (t) text += ' ';
                text += tokens[t];
            }
            split.samples.push_back({static_cast<std::uint64_t>(i), std::move(text), y});
            split.weak_labels.push_back(std::move(weak));
        }
    };
    make_split(spec.n_train, out.train);
    make_split(spec.n_dev, out.dev);
    make_split(spec.n_test, out.test);
    return out;
}

}  // namespace sepll
