#pragma once

// Task metrics and the analyses of a trained model: how well each latent path
// reproduces the LF matches (memorization), performance grouped by number of
// LF matches, and the train/test gap. Reports serialize to JSON, CSV and SVG.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sepll/data.hpp"
#include "sepll/error.hpp"
#include "sepll/metrics.hpp"
#include "sepll/model.hpp"
#include "sepll/parallel.hpp"

namespace sepll {

using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Task metrics

struct EvalReport {
    std::string split;
    Metric metric = Metric::kAccuracy;
    double value = 0.0;
    std::vector<double> precision;  // per class
    std::vector<double> recall;     // per class
    Confusion confusion;

    bool operator==(const EvalReport& o) const {
        return split == o.split && metric == o.metric && value == o.value && precision == o.precision &&
               recall == o.recall && confusion.c == o.confusion.c && confusion.counts == o.confusion.counts;
    }
};

inline EvalReport task_metrics(std::span<const ClassIndex> preds, std::span<const ClassIndex> gold, Metric metric,
                               std::size_t num_classes, ClassIndex positive_class = 1, std::string split = "test") {
    if (metric == Metric::kBinaryF1 && num_classes != 2)
        throw ConfigError("binary_f1 requires exactly 2 classes, got " + std::to_string(num_classes));
    EvalReport r;
    r.split = std::move(split);
    r.metric = metric;
    r.confusion = confusion(preds, gold, num_classes);
    r.value = metric_value(r.confusion, metric, positive_class);
    for (ClassIndex k = 0; k < num_classes; ++k) {
        r.precision.push_back(r.confusion.precision(k));
        r.recall.push_back(r.confusion.recall(k));
    }
    return r;
}

inline ordered_json to_json(const EvalReport& r) {
    ordered_json j;
    j["split"] = r.split;
    j["metric"] = std::string(to_string(r.metric));
    j["value"] = r.value;
    j["precision"] = r.precision;
    j["recall"] = r.recall;
    j["num_classes"] = r.confusion.c;
    j["confusion"] = r.confusion.counts;
    return j;
}

inline EvalReport eval_report_from_json(const ordered_json& j) {
    EvalReport r;
    r.split = j.at("split").get<std::string>();
    r.metric = parse_metric(j.at("metric").get<std::string>());
    r.value = j.at("value").get<double>();
    r.precision = j.at("precision").get<std::vector<double>>();
    r.recall = j.at("recall").get<std::vector<double>>();
    r.confusion.c = j.at("num_classes").get<std::size_t>();
    r.confusion.counts = j.at("confusion").get<std::vector<std::size_t>>();
    return r;
}

// ---------------------------------------------------------------------------
// LF memorization

/// Predicted match iff probability > k / m (strict). With m <= k the
/// threshold is >= 1 and nothing is ever predicted.
inline MatchMatrix lf_match_predict(std::span<const std::vector<double>> probabilities, int k = 4) {
    if (k <= 0) throw ConfigError("threshold k must be positive");
    if (probabilities.empty()) return MatchMatrix(0, 0);
    const std::size_t m = probabilities.front().size();
    if (m == 0) throw DataError("lf_match_predict: rows must have at least one LF");
    const double threshold = static_cast<double>(k) / static_cast<double>(m);
    std::vector<std::vector<MatchMatrix::Index>> rows(probabilities.size());
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
        if (probabilities[i].size() != m) throw DataError("lf_match_predict: ragged probability rows");
        for (std::size_t j = 0; j < m; ++j)
            if (probabilities[i][j] > threshold) rows[i].push_back(static_cast<MatchMatrix::Index>(j));
    }
    return MatchMatrix(m, std::move(rows));
}

enum class LatentPath { kLfLatent, kFull, kTaskMapped };

inline constexpr std::array<LatentPath, 3> kAllPaths{LatentPath::kLfLatent, LatentPath::kFull, LatentPath::kTaskMapped};

inline std::string_view to_string(LatentPath p) {
    switch (p) {
        case LatentPath::kLfLatent: return "lf_latent";
        case LatentPath::kFull: return "full";
        case LatentPath::kTaskMapped: return "task_mapped";
    }
    return "?";
}

struct PathMetrics {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    double cross_entropy = 0.0;

    bool operator==(const PathMetrics&) const = default;
};

struct MemorizationReport {
    int threshold_k = 4;
    std::size_t rows = 0;          // samples scored
    std::size_t matched_rows = 0;  // samples entering the cross-entropy
    std::array<PathMetrics, 3> paths{};
    double uniform_ce = 0.0;

    const PathMetrics& path(LatentPath p) const { return paths[static_cast<std::size_t>(p)]; }
    PathMetrics& path(LatentPath p) { return paths[static_cast<std::size_t>(p)]; }

    bool operator==(const MemorizationReport&) const = default;
};

/// Per-path prediction distributions for every sample.
struct PathDistributions {
    std::array<std::vector<std::vector<double>>, 3> probs;
};

inline PathDistributions path_distributions(const SepLLParams& params, std::span<const FeatureVector> features) {
    PathDistributions out;
    for (auto& p : out.probs) p.resize(features.size());
    parallel_for(features.size(), [&](std::size_t i) {
        const auto t = forward(params, features[i]);
        out.probs[0][i] = softmax(t.lf_logits);
        out.probs[1][i] = t.q;
        out.probs[2][i] = softmax(map_to_lfs(t.task_logits, params.mapping));
    });
    return out;
}

/// Scores one set of distributions against L: cell accuracy and macro-F1
/// (mean of the F1 for "match" and "no match" over all n x m cells) on the
/// thresholded predictions; cross-entropy against P over matched rows only.
inline PathMetrics score_path(std::span<const std::vector<double>> probs, const MatchMatrix& L, int k) {
    if (probs.size() != L.n()) throw DataError("memorization: row count mismatch");
    const MatchMatrix pred = lf_match_predict(probs, k);
    std::array<std::size_t, 4> cells{};  // [true*2 + pred]
    double ce = 0.0;
    std::size_t matched = 0;
    for (std::size_t i = 0; i < L.n(); ++i) {
        if (probs[i].size() != L.m()) throw DataError("LF dimension mismatch");
        std::size_t tp = 0;
        for (auto j : pred.row(i)) tp += L.contains(i, j) ? 1 : 0;
        const std::size_t fp = pred.row_count(i) - tp;
        const std::size_t fn = L.row_count(i) - tp;
        cells[3] += tp;
        cells[1] += fp;
        cells[2] += fn;
        cells[0] += L.m() - tp - fp - fn;
        auto row = L.row(i);
        if (row.empty()) continue;
        ++matched;
        const double w = 1.0 / static_cast<double>(row.size());
        for (auto j : row) ce -= w * std::log(std::max(probs[i][j], kProbClamp));
    }
    Confusion cm{2, {cells[0], cells[1], cells[2], cells[3]}};
    PathMetrics pm;
    pm.accuracy = cm.accuracy();
    pm.macro_f1 = cm.macro_f1();
    pm.cross_entropy = matched ? ce / static_cast<double>(matched) : 0.0;
    return pm;
}

/// Cross-entropy of P (row-normalized L) against the uniform distribution,
/// over matched rows; equals ln m.
inline double uniform_cross_entropy(const MatchMatrix& L) {
    const double log_u = std::log(1.0 / static_cast<double>(L.m()));
    double ce = 0.0;
    std::size_t matched = 0;
    for (std::size_t i = 0; i < L.n(); ++i) {
        auto row = L.row(i);
        if (row.empty()) continue;
        ++matched;
        for (std::size_t e = 0; e < row.size(); ++e) ce -= log_u / static_cast<double>(row.size());
    }
    return matched ? ce / static_cast<double>(matched) : 0.0;
}

inline MemorizationReport memorization_report(const PathDistributions& dists, const MatchMatrix& L, int k = 4) {
    MemorizationReport r;
    r.threshold_k = k;
    r.rows = L.n();
    for (std::size_t i = 0; i < L.n(); ++i) r.matched_rows += L.row_count(i) ? 1 : 0;
    for (std::size_t p = 0; p < 3; ++p) r.paths[p] = score_path(dists.probs[p], L, k);
    r.uniform_ce = uniform_cross_entropy(L);
    return r;
}

inline MemorizationReport memorization_report(const SepLLParams& params, std::span<const FeatureVector> features,
                                              const MatchMatrix& L, int k = 4) {
    if (features.size() != L.n()) throw DataError("memorization: features and L differ in row count");
    if (L.m() != params.m()) throw DataError("LF dimension mismatch: model has " + std::to_string(params.m()) +
                                             " LFs, data has " + std::to_string(L.m()));
    return memorization_report(path_distributions(params, features), L, k);
}

inline ordered_json to_json(const MemorizationReport& r) {
    ordered_json j;
    j["threshold_k"] = r.threshold_k;
    j["rows"] = r.rows;
    j["matched_rows"] = r.matched_rows;
    auto& paths = j["paths"] = ordered_json::object();
    for (LatentPath p : kAllPaths) {
        const auto& pm = r.path(p);
        paths[std::string(to_string(p))] = {
            {"accuracy", pm.accuracy}, {"macro_f1", pm.macro_f1}, {"cross_entropy", pm.cross_entropy}};
    }
    j["uniform_cross_entropy"] = r.uniform_ce;
    return j;
}

inline MemorizationReport memorization_from_json(const ordered_json& j) {
    MemorizationReport r;
    r.threshold_k = j.at("threshold_k").get<int>();
    r.rows = j.at("rows").get<std::size_t>();
    r.matched_rows = j.at("matched_rows").get<std::size_t>();
    for (LatentPath p : kAllPaths) {
        const auto& e = j.at("paths").at(std::string(to_string(p)));
        r.path(p) = {e.at("accuracy").get<double>(), e.at("macro_f1").get<double>(),
                     e.at("cross_entropy").get<double>()};
    }
    r.uniform_ce = j.at("uniform_cross_entropy").get<double>();
    return r;
}

inline std::string memorization_csv(const MemorizationReport& r) {
    std::ostringstream os;
    os.precision(17);
    os << "path,accuracy,macro_f1,cross_entropy\n";
    for (LatentPath p : kAllPaths) {
        const auto& pm = r.path(p);
        os << to_string(p) << ',' << pm.accuracy << ',' << pm.macro_f1 << ',' << pm.cross_entropy << '\n';
    }
    os << "uniform,,," << r.uniform_ce << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------
// Performance by number of LF matches

struct MatchGroup {
    std::size_t match_count = 0;
    double value = 0.0;
    std::size_t support = 0;

    bool operator==(const MatchGroup&) const = default;
};

/// Groups samples by their number of LF matches; empty groups are omitted.
inline std::vector<MatchGroup> match_count_breakdown(std::span<const ClassIndex> preds,
                                                     std::span<const ClassIndex> gold, const MatchMatrix& L,
                                                     Metric metric, std::size_t num_classes,
                                                     ClassIndex positive_class = 1) {
    if (preds.size() != gold.size() || preds.size() != L.n())
        throw DataError("match_count_breakdown: predictions, gold and L differ in length");
    std::map<std::size_t, std::pair<std::vector<ClassIndex>, std::vector<ClassIndex>>> groups;
    for (std::size_t i = 0; i < L.n(); ++i) {
        auto& g = groups[L.row_count(i)];
        g.first.push_back(preds[i]);
        g.second.push_back(gold[i]);
    }
    std::vector<MatchGroup> out;
    for (auto& [count, g] : groups)
        out.push_back({count, metric_value(confusion(g.first, g.second, num_classes), metric, positive_class),
                       g.first.size()});
    return out;
}

inline std::string breakdown_csv(std::span<const MatchGroup> groups) {
    std::ostringstream os;
    os.precision(17);
    os << "match_count,value,support\n";
    for (const auto& g : groups) os << g.match_count << ',' << g.value << ',' << g.support << '\n';
    return os.str();
}

inline ordered_json to_json(std::span<const MatchGroup> groups, Metric metric) {
    ordered_json j;
    j["metric"] = std::string(to_string(metric));
    auto& arr = j["groups"] = ordered_json::array();
    for (const auto& g : groups) arr.push_back({{"match_count", g.match_count}, {"value", g.value}, {"support", g.support}});
    return j;
}

inline std::vector<MatchGroup> breakdown_from_json(const ordered_json& j) {
    std::vector<MatchGroup> out;
    for (const auto& e : j.at("groups"))
        out.push_back({e.at("match_count").get<std::size_t>(), e.at("value").get<double>(),
                       e.at("support").get<std::size_t>()});
    return out;
}

// ---------------------------------------------------------------------------
// Train/test gap

using ReportCells = std::map<std::string, double>;

inline ReportCells cells(const MemorizationReport& r) {
    ReportCells c;
    for (LatentPath p : kAllPaths) {
        const std::string name(to_string(p));
        c[name + ".accuracy"] = r.path(p).accuracy;
        c[name + ".macro_f1"] = r.path(p).macro_f1;
        c[name + ".cross_entropy"] = r.path(p).cross_entropy;
    }
    c["uniform.cross_entropy"] = r.uniform_ce;
    return c;
}

inline ReportCells cells(const EvalReport& r) {
    ReportCells c;
    c[std::string(to_string(r.metric))] = r.value;
    c["accuracy"] = r.confusion.accuracy();
    for (std::size_t k = 0; k < r.precision.size(); ++k) {
        c["precision." + std::to_string(k)] = r.precision[k];
        c["recall." + std::to_string(k)] = r.recall[k];
    }
    return c;
}

/// |train - test| for every cell present in both reports.
inline ReportCells train_test_gap(const ReportCells& train, const ReportCells& test) {
    if (train.size() != test.size()) throw DataError("train_test_gap: reports have different cells");
    ReportCells gap;
    for (const auto& [key, v] : train) {
        auto it = test.find(key);
        if (it == test.end()) throw DataError("train_test_gap: cell '" + key + "' missing from second report");
        gap[key] = std::abs(v - it->second);
    }
    return gap;
}

inline ReportCells train_test_gap(const MemorizationReport& train, const MemorizationReport& test) {
    return train_test_gap(cells(train), cells(test));
}

// ---------------------------------------------------------------------------
// SVG bar charts

namespace detail {

inline std::string svg_escape(std::string_view s) {
    std::string out;
    for (char ch : s) {
        switch (ch) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            default: out += ch;
        }
    }
    return out;
}

struct Bar {
    std::string label;
    double value = 0.0;
};

inline std::string bar_chart(std::string_view title, std::span<const Bar> bars) {
    const double width = 60.0 * static_cast<double>(std::max<std::size_t>(bars.size(), 1)) + 80.0;
    const double height = 260.0, top = 40.0, base = 200.0;
    double vmax = 0.0;
    for (const auto& b : bars) vmax = std::max(vmax, b.value);
    if (vmax <= 0.0) vmax = 1.0;
    std::ostringstream os;
    os.precision(4);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
    os << "<text x=\"10\" y=\"20\" font-size=\"14\">" << svg_escape(title) << "</text>\n";
    os << "<line x1=\"40\" y1=\"" << base << "\" x2=\"" << width - 20 << "\" y2=\"" << base
       << "\" stroke=\"black\"/>\n";
    for (std::size_t i = 0; i < bars.size(); ++i) {
        const double h = (base - top) * bars[i].value / vmax;
        const double x = 50.0 + 60.0 * static_cast<double>(i);
        os << "<rect x=\"" << x << "\" y=\"" << base - h << "\" width=\"40\" height=\"" << h
           << "\" fill=\"steelblue\"/>\n";
        os << "<text x=\"" << x << "\" y=\"" << base - h - 4 << "\" font-size=\"10\">" << bars[i].value
           << "</text>\n";
        os << "<text x=\"" << x << "\" y=\"" << base + 14 << "\" font-size=\"10\">" << svg_escape(bars[i].label)
           << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace detail

inline std::string breakdown_svg(std::span<const MatchGroup> groups, Metric metric) {
    std::vector<detail::Bar> bars;
    for (const auto& g : groups)
        bars.push_back({std::to_string(g.match_count) + " (n=" + std::to_string(g.support) + ")", g.value});
    return detail::bar_chart(std::string(to_string(metric)) + " by number of LF matches", bars);
}

inline std::string memorization_svg(const MemorizationReport& r) {
    std::vector<detail::Bar> bars;
    for (LatentPath p : kAllPaths) bars.push_back({std::string(to_string(p)), r.path(p).cross_entropy});
    bars.push_back({"uniform", r.uniform_ce});
    return detail::bar_chart("cross-entropy to the LF distribution per path", bars);
}

}  // namespace sepll
