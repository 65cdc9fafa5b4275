// sepll: command-line front end for the weak-supervision toolkit.
//
//   sepll synth    --out DIR [--seed N] [synthetic dataset options]
//   sepll convert  DATASET_DIR --format F --out DIR
//   sepll apply-lfs --config PATH --out DIR
//   sepll stats    --config PATH [--out DIR]
//   sepll train    --config PATH [--seed N] --out DIR
//   sepll eval     --config PATH --checkpoint PATH --out DIR
//   sepll analyze  --config PATH --checkpoint PATH --which W --out DIR [--threshold-k K] [--plot]
//   sepll ablate   --config PATH [--datasets A,B] --out DIR
//
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sepll/sepll.hpp"

namespace fs = std::filesystem;
using namespace sepll;

namespace {

struct CommonOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = "out";
    std::string format = "wrench-json";
    bool plot = false;
    std::string datasets;
    bool datasets_given = false;
    int threshold_k = 4;
    std::string checkpoint;
    std::string which = "task";
    std::string input;
    SynthSpec synth;
};

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw DataError(p.string(), 0, "cannot write file");
    os << text;
}

void write_json(const fs::path& p, const ordered_json& j) { write_text(p, j.dump(2) + "\n"); }

RunConfig load_run_config(const CommonOptions& opt) {
    if (opt.config.empty()) throw ConfigError("--config is required");
    RunConfig cfg = load_config(opt.config);
    if (opt.seed) cfg.experiment.train.seed = *opt.seed;
    return cfg;
}

void add_data_inputs(RunManifest& m, const CommonOptions& opt, const RunConfig& cfg) {
    m.add_input("config", opt.config);
    if (cfg.data.format != "synth") m.add_input_dir("dataset", cfg.data.path);
}

void finish_manifest(RunManifest& m, const fs::path& out) {
    write_json(out / "manifest.json", to_json(m));
}

void write_lf_outputs(const fs::path& out, const OneClassLfs& lfs) {
    for (SplitName s : kAllSplits) {
        std::ostringstream os;
        write_triplets(os, lfs.matches(s));
        write_text(out / ("L." + std::string(to_string(s)) + ".triplets"), os.str());
    }
    std::ostringstream ts;
    write_class_of(ts, lfs.mapping);
    write_text(out / "T.classof", ts.str());
    std::ostringstream ps;
    ps << "original_lf,class,derived_lf,status\n";
    for (const auto& p : lfs.provenance) {
        ps << p.original_lf << ',' << (p.cls ? std::to_string(*p.cls) : "") << ','
           << (p.derived_index ? std::to_string(*p.derived_index) : "") << ','
           << (p.derived_index ? "kept" : "dropped") << '\n';
    }
    write_text(out / "provenance.csv", ps.str());
}

void add_lf_artifacts(RunManifest& m, const fs::path& out) {
    for (SplitName s : kAllSplits) m.add_artifact("matches", out / ("L." + std::string(to_string(s)) + ".triplets"));
    m.add_artifact("mapping", out / "T.classof");
    m.add_artifact("provenance", out / "provenance.csv");
}

// ---------------------------------------------------------------------------

int cmd_synth(const CommonOptions& opt) {
    const fs::path out = opt.out;
    const auto fmt = parse_dataset_format(opt.format);
    const auto data = synth_dataset(opt.synth, opt.seed.value_or(0));
    save_dataset(data, out, fmt);
    std::cout << "wrote synthetic dataset to " << out.string() << " (" << data.train.size() << "/"
              << data.dev.size() << "/" << data.test.size() << " samples)\n";
    return 0;
}

int cmd_convert(const CommonOptions& opt) {
    if (opt.input.empty()) throw ConfigError("convert: dataset directory required");
    const fs::path out = opt.out;
    const auto data = load_dataset(opt.input, parse_dataset_format(opt.format));
    const auto lfs = to_one_class_lfs(data);
    fs::create_directories(out);
    write_lf_outputs(out, lfs);
    RunManifest m;
    m.command = "convert";
    m.config_echo = "format = " + opt.format + "\n";
    m.add_input_dir("dataset", opt.input);
    add_lf_artifacts(m, out);
    finish_manifest(m, out);
    std::size_t dropped = 0;
    for (const auto& p : lfs.provenance) dropped += p.derived_index ? 0 : 1;
    std::cout << "converted " << data.num_original_lfs << " LFs into " << lfs.mapping.m() << " one-class LFs ("
              << dropped << " dropped)\n";
    return 0;
}

int cmd_apply_lfs(const CommonOptions& opt) {
    RunConfig cfg = load_run_config(opt);
    cfg.data.source = LabelSource::kLfs;
    if (cfg.lf_rules.empty()) throw ConfigError("apply-lfs: the [lfs] section is empty");
    const auto loaded = load_data(cfg);
    const fs::path out = opt.out;
    fs::create_directories(out);
    write_lf_outputs(out, loaded.lfs);
    RunManifest m;
    m.command = "apply-lfs";
    m.seed = cfg.experiment.train.seed;
    m.config_echo = config_to_ini(cfg);
    add_data_inputs(m, opt, cfg);
    add_lf_artifacts(m, out);
    finish_manifest(m, out);
    std::cout << "applied " << cfg.lf_rules.size() << " labeling functions\n";
    return 0;
}

int cmd_stats(const CommonOptions& opt) {
    const RunConfig cfg = load_run_config(opt);
    const auto loaded = load_data(cfg);
    ordered_json j;
    for (SplitName s : kAllSplits) {
        const Split& split = loaded.splits.split(s);
        j[std::string(to_string(s))] =
            to_json(compute_stats(loaded.lfs.matches(s), loaded.lfs.mapping, gold_labels(split)));
    }
    j["num_classes"] = loaded.splits.num_classes();
    j["num_lfs"] = loaded.lfs.mapping.m();
    const fs::path out = opt.out;
    fs::create_directories(out);
    write_json(out / "stats.json", j);
    std::cout << j.dump(2) << '\n';
    return 0;
}

int cmd_train(const CommonOptions& opt) {
    const RunConfig cfg = load_run_config(opt);
    const auto loaded = load_data(cfg);
    if (loaded.splits.dev.size() == 0) throw DataError("dev split required for early stopping");
    const fs::path out = opt.out;
    fs::create_directories(out);
    const auto data = prepare_data(loaded.splits, loaded.lfs.train, loaded.lfs.mapping, cfg.experiment.vocab);
    TrainResult result;
    try {
        result = train(data, cfg.experiment);
    } catch (const TrainingDiverged& e) {
        write_text(out / "history.csv", history_csv(e.history()));
        throw;
    }
    Checkpoint ck{data.vocab, result.params, config_to_ini(cfg)};
    {
        std::ofstream os(out / "checkpoint.bin", std::ios::binary);
        write_checkpoint(os, ck);
    }
    write_text(out / "history.csv", history_csv(result.history));
    RunManifest m;
    m.command = "train";
    m.seed = cfg.experiment.train.seed;
    m.config_echo = ck.config_echo;
    add_data_inputs(m, opt, cfg);
    m.add_artifact("checkpoint", out / "checkpoint.bin");
    m.add_artifact("history", out / "history.csv");
    finish_manifest(m, out);
    std::cout << "best dev " << to_string(cfg.experiment.train.metric) << " " << result.history.best_dev_metric
              << " at epoch " << result.history.best_epoch << " (" << result.history.epochs.size() << " epochs)\n";
    return 0;
}

struct EvalContext {
    RunConfig cfg;
    LoadedData loaded;
    Checkpoint ck;
    std::vector<FeatureVector> train, dev, test;
};

EvalContext load_eval_context(const CommonOptions& opt) {
    if (opt.checkpoint.empty()) throw ConfigError("--checkpoint is required");
    EvalContext ctx;
    ctx.cfg = load_run_config(opt);
    ctx.loaded = load_data(ctx.cfg);
    std::ifstream is(opt.checkpoint, std::ios::binary);
    if (!is) throw DataError(opt.checkpoint, 0, "cannot open checkpoint");
    ctx.ck = read_checkpoint(is);
    if (ctx.ck.params.m() != ctx.loaded.lfs.mapping.m())
        throw DataError("LF dimension mismatch: checkpoint has " + std::to_string(ctx.ck.params.m()) +
                        " LFs, data has " + std::to_string(ctx.loaded.lfs.mapping.m()));
    if (ctx.ck.params.mapping != ctx.loaded.lfs.mapping)
        throw DataError("LF dimension mismatch: checkpoint LF-to-class mapping differs from the data");
    ctx.train = featurize_all(texts_of(ctx.loaded.splits.train), ctx.ck.vocab);
    ctx.dev = featurize_all(texts_of(ctx.loaded.splits.dev), ctx.ck.vocab);
    ctx.test = featurize_all(texts_of(ctx.loaded.splits.test), ctx.ck.vocab);
    return ctx;
}

const std::vector<FeatureVector>& features_of(const EvalContext& ctx, SplitName s) {
    switch (s) {
        case SplitName::kTrain: return ctx.train;
        case SplitName::kDev: return ctx.dev;
        case SplitName::kTest: return ctx.test;
    }
    return ctx.test;
}

void write_task_reports(const EvalContext& ctx, const fs::path& out, RunManifest& m) {
    const auto& tc = ctx.cfg.experiment.train;
    ordered_json j;
    std::ostringstream csv;
    csv.precision(17);
    csv << "split,model,metric,value\n";
    for (SplitName s : {SplitName::kDev, SplitName::kTest}) {
        const Split& split = ctx.loaded.splits.split(s);
        if (split.size() == 0) continue;
        const auto gold = require_gold(split, to_string(s));
        const auto preds = predict_all(ctx.ck.params, features_of(ctx, s));
        const auto report = task_metrics(preds, gold, tc.metric, ctx.loaded.splits.num_classes(), tc.positive_class,
                                         std::string(to_string(s)));
        const auto mv = majority_vote(ctx.loaded.lfs.matches(s), ctx.loaded.lfs.mapping, tc.seed);
        const auto mv_report = task_metrics(mv, gold, tc.metric, ctx.loaded.splits.num_classes(), tc.positive_class,
                                            std::string(to_string(s)));
        j[std::string(to_string(s))] = {{"sepll", to_json(report)}, {"majority_vote", to_json(mv_report)}};
        csv << to_string(s) << ",sepll," << to_string(tc.metric) << ',' << report.value << '\n';
        csv << to_string(s) << ",majority_vote," << to_string(tc.metric) << ',' << mv_report.value << '\n';
        std::cout << to_string(s) << ": sepll " << to_string(tc.metric) << " " << report.value << ", majority vote "
                  << mv_report.value << '\n';
    }
    write_json(out / "eval.json", j);
    write_text(out / "eval.csv", csv.str());
    m.add_artifact("eval_json", out / "eval.json");
    m.add_artifact("eval_csv", out / "eval.csv");
}

RunManifest eval_manifest(const std::string& command, const CommonOptions& opt, const EvalContext& ctx) {
    RunManifest m;
    m.command = command;
    m.seed = ctx.cfg.experiment.train.seed;
    m.config_echo = config_to_ini(ctx.cfg);
    add_data_inputs(m, opt, ctx.cfg);
    m.add_input("checkpoint", opt.checkpoint);
    return m;
}

int cmd_eval(const CommonOptions& opt) {
    const auto ctx = load_eval_context(opt);
    const fs::path out = opt.out;
    fs::create_directories(out);
    auto m = eval_manifest("eval", opt, ctx);
    write_task_reports(ctx, out, m);
    finish_manifest(m, out);
    return 0;
}

int cmd_analyze(const CommonOptions& opt) {
    if (opt.threshold_k < 2 || opt.threshold_k > 4) throw ConfigError("--threshold-k must be 2, 3 or 4");
    const auto ctx = load_eval_context(opt);
    const fs::path out = opt.out;
    fs::create_directories(out);
    auto m = eval_manifest("analyze " + opt.which, opt, ctx);
    const auto& tc = ctx.cfg.experiment.train;
    const auto& L_test = ctx.loaded.lfs.test;
    if (opt.which == "task") {
        write_task_reports(ctx, out, m);
    } else if (opt.which == "memorization") {
        const auto r = memorization_report(ctx.ck.params, ctx.test, L_test, opt.threshold_k);
        write_json(out / "memorization.json", to_json(r));
        write_text(out / "memorization.csv", memorization_csv(r));
        m.add_artifact("memorization_json", out / "memorization.json");
        m.add_artifact("memorization_csv", out / "memorization.csv");
        if (opt.plot) {
            write_text(out / "memorization.svg", memorization_svg(r));
            m.add_artifact("memorization_svg", out / "memorization.svg");
        }
        std::cout << memorization_csv(r);
    } else if (opt.which == "matches") {
        const auto gold = require_gold(ctx.loaded.splits.test, "test");
        const auto preds = predict_all(ctx.ck.params, ctx.test);
        const auto groups =
            match_count_breakdown(preds, gold, L_test, tc.metric, ctx.loaded.splits.num_classes(), tc.positive_class);
        write_text(out / "matches.csv", breakdown_csv(groups));
        write_json(out / "matches.json", to_json(groups, tc.metric));
        m.add_artifact("matches_csv", out / "matches.csv");
        m.add_artifact("matches_json", out / "matches.json");
        if (opt.plot) {
            write_text(out / "matches.svg", breakdown_svg(groups, tc.metric));
            m.add_artifact("matches_svg", out / "matches.svg");
        }
        std::cout << breakdown_csv(groups);
    } else if (opt.which == "gap") {
        const auto train_r = memorization_report(ctx.ck.params, ctx.train, ctx.loaded.lfs.train, opt.threshold_k);
        const auto test_r = memorization_report(ctx.ck.params, ctx.test, L_test, opt.threshold_k);
        ordered_json j;
        j["train"] = to_json(train_r);
        j["test"] = to_json(test_r);
        j["gap"] = train_test_gap(train_r, test_r);
        write_json(out / "gap.json", j);
        m.add_artifact("gap_json", out / "gap.json");
        std::cout << j["gap"].dump(2) << '\n';
    } else {
        throw ConfigError("--which must be one of task, memorization, matches, gap");
    }
    finish_manifest(m, out);
    return 0;
}

int cmd_ablate(const CommonOptions& opt) {
    const RunConfig base = load_run_config(opt);
    std::vector<std::pair<std::string, RunConfig>> runs;
    if (opt.datasets_given) {
        const auto names = split_list(opt.datasets);
        if (names.empty()) throw ConfigError("--datasets: empty dataset list");
        for (const auto& path : names) {
            RunConfig c = base;
            c.data.path = path;
            if (c.data.format == "synth") c.data.format = "wrench-json";
            runs.emplace_back(fs::path(path).filename().string(), std::move(c));
        }
    } else {
        std::string name = base.data.format == "synth" ? "synth" : fs::path(base.data.path).filename().string();
        runs.emplace_back(name, base);
    }

    std::vector<std::vector<AblationRow>> tables;
    RunManifest m;
    m.command = "ablate";
    m.seed = base.experiment.train.seed;
    m.config_echo = config_to_ini(base);
    m.add_input("config", opt.config);
    for (const auto& [name, cfg] : runs) {
        if (cfg.data.format != "synth") m.add_input_dir("dataset:" + name, cfg.data.path);
        const auto loaded = load_data(cfg);
        const auto data = prepare_data(loaded.splits, loaded.lfs.train, loaded.lfs.mapping, cfg.experiment.vocab);
        tables.push_back(run_ablation(data, cfg.experiment));
        std::cerr << "ablation finished for " << name << '\n';
    }

    std::ostringstream csv;
    csv.precision(6);
    csv << "variant";
    for (const auto& r : runs) csv << ',' << r.first << "_dev," << r.first << "_test";
    if (runs.size() > 1) csv << ",avg_dev,avg_test";
    csv << '\n';
    const std::size_t variants = tables.front().size();
    for (std::size_t v = 0; v < variants; ++v) {
        csv << tables.front()[v].variant;
        double dev_sum = 0.0, test_sum = 0.0;
        for (const auto& t : tables) {
            csv << ',' << t[v].dev_metric << ',';
            if (t[v].test_metric) csv << *t[v].test_metric;
            dev_sum += t[v].dev_metric;
            test_sum += t[v].test_metric.value_or(0.0);
        }
        if (runs.size() > 1) {
            const double n = static_cast<double>(tables.size());
            csv << ',' << dev_sum / n << ',' << test_sum / n;
        }
        csv << '\n';
    }
    const fs::path out = opt.out;
    fs::create_directories(out);
    write_text(out / "ablation.csv", csv.str());
    m.add_artifact("ablation", out / "ablation.csv");
    finish_manifest(m, out);
    std::cout << csv.str();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Weak supervision by separating task and labeling-function information"};
    app.require_subcommand(1);
    CommonOptions opt;

    auto add_config = [&](CLI::App* sub, bool required = true) {
        auto* o = sub->add_option("--config", opt.config, "Experiment config file");
        if (required) o->required();
    };
    auto add_seed = [&](CLI::App* sub) { sub->add_option("--seed", opt.seed, "Root random seed"); };
    auto add_out = [&](CLI::App* sub) { sub->add_option("--out", opt.out, "Output directory"); };

    auto* synth = app.add_subcommand("synth", "Generate a synthetic weakly labeled dataset");
    add_seed(synth);
    add_out(synth);
    synth->add_option("--format", opt.format, "Output format (wrench-json, jsonl)");
    synth->add_option("--classes", opt.synth.num_classes, "Number of classes");
    synth->add_option("--lfs-per-class", opt.synth.lfs_per_class, "Labeling functions per class");
    synth->add_option("--n-train", opt.synth.n_train);
    synth->add_option("--n-dev", opt.synth.n_dev);
    synth->add_option("--n-test", opt.synth.n_test);
    synth->add_option("--accuracy", opt.synth.lf_accuracy, "Probability a firing LF names the true class");
    synth->add_option("--coverage", opt.synth.lf_coverage, "Probability an LF fires on a sample");

    auto* convert = app.add_subcommand("convert", "Split multi-class LFs into one-class LFs and write L/T files");
    convert->add_option("input", opt.input, "Dataset directory")->required();
    convert->add_option("--format", opt.format, "Input format (wrench-json, jsonl)");
    add_out(convert);

    auto* apply = app.add_subcommand("apply-lfs", "Apply the [lfs] rules of a config to the dataset texts");
    add_config(apply);
    add_out(apply);

    auto* stats = app.add_subcommand("stats", "Coverage and conflict statistics per split");
    add_config(stats);
    add_seed(stats);
    add_out(stats);

    auto* trn = app.add_subcommand("train", "Train a model and write checkpoint, history and manifest");
    add_config(trn);
    add_seed(trn);
    add_out(trn);

    auto* ev = app.add_subcommand("eval", "Task metrics of a checkpoint against majority vote");
    add_config(ev);
    add_seed(ev);
    add_out(ev);
    ev->add_option("--checkpoint", opt.checkpoint)->required();

    auto* an = app.add_subcommand("analyze", "Memorization, match-count breakdown and train/test gap");
    add_config(an);
    add_seed(an);
    add_out(an);
    an->add_option("--checkpoint", opt.checkpoint)->required();
    an->add_option("--which", opt.which, "task, memorization, matches or gap");
    an->add_option("--threshold-k", opt.threshold_k, "Match threshold k (probability > k/m)");
    an->add_flag("--plot", opt.plot, "Also write SVG charts");

    auto* ab = app.add_subcommand("ablate", "Run the routing-strategy ablation");
    add_config(ab);
    add_seed(ab);
    add_out(ab);
    auto* ds = ab->add_option("--datasets", opt.datasets, "Comma-separated dataset directories");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(ExitCode::kUsage);
    }
    opt.datasets_given = ds->count() > 0;

    try {
        if (synth->parsed()) return cmd_synth(opt);
        if (convert->parsed()) return cmd_convert(opt);
        if (apply->parsed()) return cmd_apply_lfs(opt);
        if (stats->parsed()) return cmd_stats(opt);
        if (trn->parsed()) return cmd_train(opt);
        if (ev->parsed()) return cmd_eval(opt);
        if (an->parsed()) return cmd_analyze(opt);
        if (ab->parsed()) return cmd_ablate(opt);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(e.code());
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(ExitCode::kData);
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(ExitCode::kData);
    }
    return static_cast<int>(ExitCode::kUsage);
}
