#pragma once

// Plain-text experiment configuration: INI-style sections [data], [lfs],
// [encoder], [model], [train]. Unknown sections or keys are errors.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>

#include "sepll/data.hpp"
#include "sepll/error.hpp"
#include "sepll/lf_engine.hpp"
#include "sepll/trainer.hpp"

namespace sepll {

enum class LabelSource { kWeakLabels, kLfs };

struct DataConfig {
    std::string path;  // resolved against the config file's directory
    std::string format = "wrench-json";  // wrench-json | jsonl | synth
    LabelSource source = LabelSource::kWeakLabels;
    SynthSpec synth;
    std::optional<std::uint64_t> synth_seed;  // defaults to train.seed
};

struct RunConfig {
    DataConfig data;
    std::vector<std::pair<std::string, std::string>> lf_rules;  // name -> rule, file order
    ExperimentConfig experiment;
};

namespace detail {

template <typename T>
T parse_number(const std::string& section, const std::string& key, const std::string& value) {
    T out{};
    const char* b = value.data();
    const char* e = b + value.size();
    auto [ptr, ec] = std::from_chars(b, e, out);
    if (ec != std::errc() || ptr != e)
        throw ConfigError("[" + section + "] " + key + ": cannot parse '" + value + "' as a number");
    return out;
}

// from_chars for double is missing in some standard libraries; strtod is exact enough.
template <>
inline double parse_number<double>(const std::string& section, const std::string& key, const std::string& value) {
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(value, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != value.size())
        throw ConfigError("[" + section + "] " + key + ": cannot parse '" + value + "' as a number");
    return out;
}

inline bool parse_bool(const std::string& section, const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw ConfigError("[" + section + "] " + key + ": expected true/false, got '" + value + "'");
}

inline std::string lf_penalty_name(LfPenalty p) { return p == LfPenalty::kParameters ? "parameters" : "activations"; }

}  // namespace detail

inline RunConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = {}) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    RunConfig cfg;
    auto& tc = cfg.experiment.train;
    for (const auto& [section, body] : tree) {
        if (!body.data().empty() && body.empty())
            throw ConfigError("config: key '" + section + "' outside of a section");
        for (const auto& [key, node] : body) {
            const std::string v = node.get_value<std::string>();
            using detail::parse_bool;
            using detail::parse_number;
            auto num = [&]<typename T>(T& dst) { dst = parse_number<T>(section, key, v); };
            auto unknown = [&] { throw ConfigError("config: unknown key '" + key + "' in [" + section + "]"); };
            if (section == "data") {
                auto& d = cfg.data;
                if (key == "path") d.path = v;
                else if (key == "format") d.format = v;
                else if (key == "source") {
                    if (v == "weak_labels") d.source = LabelSource::kWeakLabels;
                    else if (v == "lfs") d.source = LabelSource::kLfs;
                    else throw ConfigError("[data] source must be weak_labels or lfs");
                } else if (key == "synth_classes") num(d.synth.num_classes);
                else if (key == "synth_lfs_per_class") num(d.synth.lfs_per_class);
                else if (key == "synth_n_train") num(d.synth.n_train);
                else if (key == "synth_n_dev") num(d.synth.n_dev);
                else if (key == "synth_n_test") num(d.synth.n_test);
                else if (key == "synth_lf_accuracy") num(d.synth.lf_accuracy);
                else if (key == "synth_lf_coverage") num(d.synth.lf_coverage);
                else if (key == "synth_seed") d.synth_seed = parse_number<std::uint64_t>(section, key, v);
                else unknown();
            } else if (section == "lfs") {
                cfg.lf_rules.emplace_back(key, v);
            } else if (section == "encoder") {
                auto& vc = cfg.experiment.vocab;
                auto& ec = cfg.experiment.encoder;
                if (key == "max_features") num(vc.max_features);
                else if (key == "min_df") num(vc.min_df);
                else if (key == "lowercase") vc.lowercase = parse_bool(section, key, v);
                else if (key == "hidden") num(ec.hidden);
                else if (key == "d") num(ec.d);
                else if (key == "activation") ec.activation = parse_activation(v);
                else unknown();
            } else if (section == "model") {
                auto& mc = cfg.experiment.model;
                if (key == "head_layers") num(mc.head_layers);
                else if (key == "head_hidden") num(mc.head_hidden);
                else if (key == "head_activation") mc.head_activation = parse_activation(v);
                else unknown();
            } else if (section == "train") {
                if (key == "learning_rate") num(tc.learning_rate);
                else if (key == "batch_size") num(tc.batch_size);
                else if (key == "warmup_steps") num(tc.warmup_steps);
                else if (key == "weight_decay") num(tc.weight_decay);
                else if (key == "l2_lf") num(tc.l2_lf);
                else if (key == "lf_penalty") {
                    if (v == "parameters") tc.lf_penalty = LfPenalty::kParameters;
                    else if (v == "activations") tc.lf_penalty = LfPenalty::kActivations;
                    else throw ConfigError("[train] lf_penalty must be parameters or activations");
                } else if (key == "noise_lambda") num(tc.noise_lambda);
                else if (key == "use_unlabeled") tc.use_unlabeled = parse_bool(section, key, v);
                else if (key == "max_epochs") num(tc.max_epochs);
                else if (key == "patience") num(tc.patience);
                else if (key == "seed") num(tc.seed);
                else if (key == "metric") tc.metric = parse_metric(v);
                else if (key == "positive_class") num(tc.positive_class);
                else unknown();
            } else {
                throw ConfigError("config: unknown section [" + section + "]");
            }
        }
    }
    if (cfg.data.format != "synth") {
        parse_dataset_format(cfg.data.format);
        if (cfg.data.path.empty()) throw ConfigError("[data] path is required");
        if (!base_dir.empty() && std::filesystem::path(cfg.data.path).is_relative())
            cfg.data.path = (base_dir / cfg.data.path).lexically_normal().string();
    } else {
        cfg.data.synth.validate();
    }
    if (cfg.data.source == LabelSource::kLfs && cfg.lf_rules.empty())
        throw ConfigError("[data] source = lfs but the [lfs] section is empty");
    tc.validate();
    return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    return parse_config(in, path.parent_path());
}

/// Canonical echo of every setting, in the same format parse_config reads.
inline std::string config_to_ini(const RunConfig& cfg) {
    std::ostringstream os;
    os.precision(17);
    const auto& d = cfg.data;
    const auto& vc = cfg.experiment.vocab;
    const auto& ec = cfg.experiment.encoder;
    const auto& mc = cfg.experiment.model;
    const auto& tc = cfg.experiment.train;
    os << "[data]\n";
    if (!d.path.empty()) os << "path = " << d.path << '\n';
    os << "format = " << d.format << '\n';
    os << "source = " << (d.source == LabelSource::kLfs ? "lfs" : "weak_labels") << '\n';
    if (d.format == "synth") {
        os << "synth_classes = " << d.synth.num_classes << '\n'
           << "synth_lfs_per_class = " << d.synth.lfs_per_class << '\n'
           << "synth_n_train = " << d.synth.n_train << '\n'
           << "synth_n_dev = " << d.synth.n_dev << '\n'
           << "synth_n_test = " << d.synth.n_test << '\n'
           << "synth_lf_accuracy = " << d.synth.lf_accuracy << '\n'
           << "synth_lf_coverage = " << d.synth.lf_coverage << '\n';
        if (d.synth_seed) os << "synth_seed = " << *d.synth_seed << '\n';
    }
    if (!cfg.lf_rules.empty()) {
        os << "\n[lfs]\n";
        for (const auto& [name, rule] : cfg.lf_rules) os << name << " = " << rule << '\n';
    }
    os << "\n[encoder]\n"
       << "max_features = " << vc.max_features << '\n'
       << "min_df = " << vc.min_df << '\n'
       << "lowercase = " << (vc.lowercase ? "true" : "false") << '\n'
       << "hidden = " << ec.hidden << '\n'
       << "d = " << ec.d << '\n'
       << "activation = " << to_string(ec.activation) << '\n';
    os << "\n[model]\n"
       << "head_layers = " << mc.head_layers << '\n'
       << "head_hidden = " << mc.head_hidden << '\n'
       << "head_activation = " << to_string(mc.head_activation) << '\n';
    os << "\n[train]\n"
       << "learning_rate = " << tc.learning_rate << '\n'
       << "batch_size = " << tc.batch_size << '\n'
       << "warmup_steps = " << tc.warmup_steps << '\n'
       << "weight_decay = " << tc.weight_decay << '\n'
       << "l2_lf = " << tc.l2_lf << '\n'
       << "lf_penalty = " << detail::lf_penalty_name(tc.lf_penalty) << '\n'
       << "noise_lambda = " << tc.noise_lambda << '\n'
       << "use_unlabeled = " << (tc.use_unlabeled ? "true" : "false") << '\n'
       << "max_epochs = " << tc.max_epochs << '\n'
       << "patience = " << tc.patience << '\n'
       << "seed = " << tc.seed << '\n'
       << "metric = " << to_string(tc.metric) << '\n'
       << "positive_class = " << tc.positive_class << '\n';
    return os.str();
}

/// Loaded data in the one-class LF form, ready for training or analysis.
struct LoadedData {
    SplitSet splits;
    OneClassLfs lfs;
};

/// Loads (or generates) the dataset named by the config and derives L/T,
/// either from the dataset's weak labels or by applying the [lfs] rules.
inline LoadedData load_data(const RunConfig& cfg) {
    LoadedData out;
    if (cfg.data.format == "synth") {
        out.splits = synth_dataset(cfg.data.synth, cfg.data.synth_seed.value_or(cfg.experiment.train.seed));
    } else {
        out.splits = load_dataset(cfg.data.path, parse_dataset_format(cfg.data.format));
    }
    if (cfg.data.source == LabelSource::kWeakLabels) {
        out.lfs = to_one_class_lfs(out.splits);
    } else {
        std::vector<LabelingFunction> lfs;
        for (std::size_t j = 0; j < cfg.lf_rules.size(); ++j)
            lfs.push_back(parse_lf(j, cfg.lf_rules[j].first, cfg.lf_rules[j].second, out.splits.class_names));
        out.lfs.mapping = mapping_of(lfs, out.splits.num_classes());
        out.lfs.train = apply_lfs(lfs, out.splits.train.samples);
        out.lfs.dev = apply_lfs(lfs, out.splits.dev.samples);
        out.lfs.test = apply_lfs(lfs, out.splits.test.samples);
        for (std::size_t j = 0; j < lfs.size(); ++j) out.lfs.provenance.push_back({j, lfs[j].cls(), j});
    }
    if (out.lfs.mapping.m() == 0) throw DataError("no labeling function fires on any sample");
    return out;
}

}  // namespace sepll
