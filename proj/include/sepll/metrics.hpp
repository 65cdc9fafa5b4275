#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sepll/data.hpp"
#include "sepll/error.hpp"

namespace sepll {

enum class Metric { kAccuracy, kBinaryF1, kMacroF1 };

inline std::string_view to_string(Metric m) {
    switch (m) {
        case Metric::kAccuracy: return "accuracy";
        case Metric::kBinaryF1: return "binary_f1";
        case Metric::kMacroF1: return "macro_f1";
    }
    return "?";
}

inline Metric parse_metric(std::string_view s) {
    if (s == "accuracy") return Metric::kAccuracy;
    if (s == "binary_f1") return Metric::kBinaryF1;
    if (s == "macro_f1") return Metric::kMacroF1;
    throw ConfigError("unknown metric '" + std::string(s) + "'");
}

/// counts[gold * c + pred]
struct Confusion {
    std::size_t c = 0;
    std::vector<std::size_t> counts;

    std::size_t at(ClassIndex gold, ClassIndex pred) const { return counts[gold * c + pred]; }

    std::size_t total() const {
        std::size_t n = 0;
        for (auto v : counts) n += v;
        return n;
    }
    std::size_t trace() const {
        std::size_t n = 0;
        for (std::size_t k = 0; k < c; ++k) n += at(k, k);
        return n;
    }
    std::size_t support(ClassIndex k) const {
        std::size_t n = 0;
        for (std::size_t p = 0; p < c; ++p) n += at(k, p);
        return n;
    }
    std::size_t predicted(ClassIndex k) const {
        std::size_t n = 0;
        for (std::size_t g = 0; g < c; ++g) n += at(g, k);
        return n;
    }
    double precision(ClassIndex k) const {
        const auto p = predicted(k);
        return p ? static_cast<double>(at(k, k)) / static_cast<double>(p) : 0.0;
    }
    double recall(ClassIndex k) const {
        const auto s = support(k);
        return s ? static_cast<double>(at(k, k)) / static_cast<double>(s) : 0.0;
    }
    double f1(ClassIndex k) const {
        const double tp = static_cast<double>(at(k, k));
        const double fp = static_cast<double>(predicted(k)) - tp;
        const double fn = static_cast<double>(support(k)) - tp;
        const double denom = 2.0 * tp + fp + fn;
        return denom > 0.0 ? 2.0 * tp / denom : 0.0;
    }
    double accuracy() const {
        const auto n = total();
        return n ? static_cast<double>(trace()) / static_cast<double>(n) : 0.0;
    }
    double macro_f1() const {
        if (c == 0) return 0.0;
        double s = 0.0;
        for (std::size_t k = 0; k < c; ++k) s += f1(k);
        return s / static_cast<double>(c);
    }
};

inline Confusion confusion(std::span<const ClassIndex> preds, std::span<const ClassIndex> gold, std::size_t c) {
    if (preds.size() != gold.size()) throw DataError("predictions and gold labels differ in length");
    Confusion cm{c, std::vector<std::size_t>(c * c, 0)};
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] >= c || gold[i] >= c) throw DataError("label out of range in metric computation");
        ++cm.counts[gold[i] * c + preds[i]];
    }
    return cm;
}

inline double metric_value(const Confusion& cm, Metric metric, ClassIndex positive_class = 1) {
    switch (metric) {
        case Metric::kAccuracy: return cm.accuracy();
        case Metric::kBinaryF1:
            if (cm.c != 2) throw ConfigError("binary_f1 requires exactly 2 classes, got " + std::to_string(cm.c));
            if (positive_class >= 2) throw ConfigError("positive class must be 0 or 1");
            return cm.f1(positive_class);
        case Metric::kMacroF1: return cm.macro_f1();
    }
    return 0.0;
}

/// Gold labels of a split; throws if any sample lacks one.
inline std::vector<ClassIndex> require_gold(const Split& split, std::string_view split_name) {
    std::vector<ClassIndex> out;
    out.reserve(split.size());
    for (const auto& s : split.samples) {
        if (!s.gold_label)
            throw DataError(std::string(split_name) + ": sample " + std::to_string(s.id) + " has no gold label");
        out.push_back(*s.gold_label);
    }
    return out;
}

}  // namespace sepll
