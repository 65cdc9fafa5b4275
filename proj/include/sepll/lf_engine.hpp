#pragma once

// Labeling-function rules, their application to text, coverage statistics
// and the majority-vote baseline.

#include <algorithm>
#include <memory>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "sepll/data.hpp"
#include "sepll/error.hpp"
#include "sepll/parallel.hpp"
#include "sepll/random.hpp"
#include "sepll/text.hpp"

namespace sepll {

/// Whole-token, case-insensitive keyword rule. A term may span several tokens,
/// in which case they must appear consecutively.
struct KeywordRule {
    std::vector<std::vector<std::string>> terms;
};

/// Any-position ECMAScript regex search over the raw text.
struct RegexRule {
    std::string pattern;
    std::shared_ptr<const std::regex> compiled;
};

class LabelingFunction {
public:
    static LabelingFunction keyword(std::size_t id, std::vector<std::string> terms, ClassIndex cls,
                                    std::string name = {}) {
        KeywordRule rule;
        for (const auto& t : terms) {
            auto toks = tokenize(t);
            if (!toks.empty()) rule.terms.push_back(std::move(toks));
        }
        if (rule.terms.empty()) throw ConfigError("LF " + std::to_string(id) + ": keyword list is empty");
        return LabelingFunction(id, std::move(rule), cls, std::move(name));
    }

    static LabelingFunction regex(std::size_t id, std::string pattern, ClassIndex cls, std::string name = {}) {
        RegexRule rule;
        try {
            rule.compiled = std::make_shared<const std::regex>(pattern, std::regex::ECMAScript);
        } catch (const std::regex_error& e) {
            throw ConfigError("LF " + std::to_string(id) + ": regex does not compile: " + e.what());
        }
        rule.pattern = std::move(pattern);
        return LabelingFunction(id, std::move(rule), cls, std::move(name));
    }

    std::size_t id() const noexcept { return id_; }
    ClassIndex cls() const noexcept { return cls_; }
    const std::string& name() const noexcept { return name_; }
    bool is_keyword() const noexcept { return std::holds_alternative<KeywordRule>(rule_); }

    /// `tokens` is the lowercased tokenization of `text`; passed in so a sample
    /// is tokenized once for all keyword rules.
    bool matches(std::string_view text, const std::vector<std::string>& tokens) const {
        if (const auto* kw = std::get_if<KeywordRule>(&rule_)) {
            for (const auto& term : kw->terms) {
                if (term.size() > tokens.size()) continue;
                auto it = std::search(tokens.begin(), tokens.end(), term.begin(), term.end());
                if (it != tokens.end()) return true;
            }
            return false;
        }
        const auto& rx = std::get<RegexRule>(rule_);
        return std::regex_search(text.begin(), text.end(), *rx.compiled);
    }

private:
    LabelingFunction(std::size_t id, std::variant<KeywordRule, RegexRule> rule, ClassIndex cls, std::string name)
        : id_(id), rule_(std::move(rule)), cls_(cls), name_(std::move(name)) {}

    std::size_t id_;
    std::variant<KeywordRule, RegexRule> rule_;
    ClassIndex cls_;
    std::string name_;
};

/// Parses one LF definition of the form `<keyword|regex> <class-name> <payload>`.
/// The payload is a comma-separated term list for keyword rules and the raw
/// pattern for regex rules.
inline LabelingFunction parse_lf(std::size_t id, const std::string& name, std::string_view spec,
                                 const std::vector<std::string>& class_names) {
    spec = trim(spec);
    auto next_word = [&spec]() {
        const auto end = spec.find_first_of(" \t");
        std::string word(spec.substr(0, end));
        spec = end == std::string_view::npos ? std::string_view{} : trim(spec.substr(end));
        return word;
    };
    const std::string type = next_word();
    const std::string cls_name = next_word();
    if (type.empty() || cls_name.empty() || spec.empty())
        throw ConfigError("LF '" + name + "': expected '<keyword|regex> <class> <terms or pattern>'");
    const auto it = std::find(class_names.begin(), class_names.end(), cls_name);
    if (it == class_names.end()) throw ConfigError("LF '" + name + "': unknown class '" + cls_name + "'");
    const auto cls = static_cast<ClassIndex>(it - class_names.begin());
    if (type == "keyword") return LabelingFunction::keyword(id, split_list(spec), cls, name);
    if (type == "regex") return LabelingFunction::regex(id, std::string(spec), cls, name);
    throw ConfigError("LF '" + name + "': unknown rule type '" + type + "'");
}

inline MappingMatrix mapping_of(const std::vector<LabelingFunction>& lfs, std::size_t num_classes) {
    std::vector<ClassIndex> cls;
    cls.reserve(lfs.size());
    for (const auto& lf : lfs) cls.push_back(lf.cls());
    return MappingMatrix(std::move(cls), num_classes);
}

/// L_ij = 1 iff rule j matches sample i. Samples are evaluated in parallel;
/// each writes only its own row.
inline MatchMatrix apply_lfs(const std::vector<LabelingFunction>& lfs, const std::vector<Sample>& samples) {
    std::vector<std::vector<MatchMatrix::Index>> rows(samples.size());
    parallel_for(samples.size(), [&](std::size_t i) {
        const auto tokens = tokenize(samples[i].text);
        for (std::size_t j = 0; j < lfs.size(); ++j) {
            bool hit = false;
            try {
                hit = lfs[j].matches(samples[i].text, tokens);
            } catch (const std::regex_error& e) {
                throw DataError("LF " + std::to_string(lfs[j].id()) + " failed on sample " +
                                std::to_string(samples[i].id) + ": " + e.what());
            }
            if (hit) rows[i].push_back(static_cast<MatchMatrix::Index>(j));
        }
    });
    return MatchMatrix(lfs.size(), std::move(rows));
}

/// Per sample: class votes = sum_j L_ij T_j; the argmax wins. Rows without a
/// match and tied votes are resolved by a uniform draw from `seed`'s
/// dedicated stream.
inline std::vector<ClassIndex> majority_vote(const MatchMatrix& L, const MappingMatrix& T, std::uint64_t seed) {
    if (L.m() != T.m()) throw DataError("majority_vote: L has " + std::to_string(L.m()) + " LFs, T has " +
                                        std::to_string(T.m()));
    Rng rng = make_stream(seed, "mv-ties");
    const std::size_t c = T.c();
    std::vector<ClassIndex> out(L.n());
    std::vector<std::size_t> votes(c);
    std::vector<ClassIndex> tied;
    for (std::size_t i = 0; i < L.n(); ++i) {
        std::fill(votes.begin(), votes.end(), 0);
        for (auto j : L.row(i)) ++votes[T.class_of(j)];
        const std::size_t best = *std::max_element(votes.begin(), votes.end());
        tied.clear();
        for (ClassIndex k = 0; k < c; ++k)
            if (votes[k] == best) tied.push_back(k);
        out[i] = tied.size() == 1 ? tied.front() : tied[uniform_index(rng, tied.size())];
    }
    return out;
}

struct LfStat {
    double coverage = 0.0;
    std::size_t hits = 0;
    std::optional<double> precision;  // needs gold labels and at least one hit
};

struct LfStats {
    std::vector<LfStat> per_lf;
    std::size_t n = 0;
    double coverage = 0.0;
    double mean_matches = 0.0;  // over matched samples
    double conflict_rate = 0.0; // matched samples whose LFs span >= 2 classes
};

inline LfStats compute_stats(const MatchMatrix& L, const MappingMatrix& T,
                             const std::optional<std::vector<std::optional<ClassIndex>>>& gold = std::nullopt) {
    if (L.m() != T.m()) throw DataError("compute_stats: L/T LF count mismatch");
    if (gold && gold->size() != L.n()) throw DataError("compute_stats: gold label count mismatch");
    LfStats s;
    s.n = L.n();
    s.per_lf.resize(L.m());
    std::vector<std::size_t> correct(L.m(), 0), judged(L.m(), 0);
    std::size_t matched = 0, total_matches = 0, conflicted = 0;
    for (std::size_t i = 0; i < L.n(); ++i) {
        auto row = L.row(i);
        if (row.empty()) continue;
        ++matched;
        total_matches += row.size();
        const ClassIndex first = T.class_of(row.front());
        bool conflict = false;
        for (auto j : row) {
            ++s.per_lf[j].hits;
            conflict = conflict || T.class_of(j) != first;
            if (gold && (*gold)[i]) {
                ++judged[j];
                if (*(*gold)[i] == T.class_of(j)) ++correct[j];
            }
        }
        if (conflict) ++conflicted;
    }
    const double n = static_cast<double>(std::max<std::size_t>(1, L.n()));
    for (std::size_t j = 0; j < L.m(); ++j) {
        s.per_lf[j].coverage = static_cast<double>(s.per_lf[j].hits) / n;
        if (judged[j] > 0) s.per_lf[j].precision = static_cast<double>(correct[j]) / static_cast<double>(judged[j]);
    }
    s.coverage = static_cast<double>(matched) / n;
    if (matched > 0) {
        s.mean_matches = static_cast<double>(total_matches) / static_cast<double>(matched);
        s.conflict_rate = static_cast<double>(conflicted) / static_cast<double>(matched);
    }
    return s;
}

inline std::vector<std::optional<ClassIndex>> gold_labels(const Split& split) {
    std::vector<std::optional<ClassIndex>> out;
    out.reserve(split.size());
    for (const auto& s : split.samples) out.push_back(s.gold_label);
    return out;
}

inline nlohmann::ordered_json to_json(const LfStats& s) {
    nlohmann::ordered_json j;
    j["n"] = s.n;
    j["coverage"] = s.coverage;
    j["mean_matches"] = s.mean_matches;
    j["conflict_rate"] = s.conflict_rate;
    auto& per = j["per_lf"] = nlohmann::ordered_json::array();
    for (const auto& lf : s.per_lf) {
        nlohmann::ordered_json e{{"coverage", lf.coverage}, {"hits", lf.hits}};
        e["precision"] = lf.precision ? nlohmann::ordered_json(*lf.precision) : nlohmann::ordered_json(nullptr);
        per.push_back(std::move(e));
    }
    return j;
}

}  // namespace sepll
