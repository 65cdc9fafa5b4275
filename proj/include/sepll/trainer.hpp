#pragma once

// AdamW training with linear warmup, the LF-routing strategies (decoupled
// weight decay, LF-path L2, hallucinated same-class matches, uniform targets
// for unmatched samples), dev-based early stopping and the routing ablation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "sepll/data.hpp"
#include "sepll/encoder.hpp"
#include "sepll/error.hpp"
#include "sepll/metrics.hpp"
#include "sepll/model.hpp"
#include "sepll/parallel.hpp"
#include "sepll/random.hpp"

namespace sepll {

struct TrainConfig {
    double learning_rate = 1e-4;
    std::size_t batch_size = 16;
    std::size_t warmup_steps = 0;
    double weight_decay = 0.01;
    double l2_lf = 0.5;
    LfPenalty lf_penalty = LfPenalty::kParameters;
    double noise_lambda = 0.2;
    bool use_unlabeled = true;
    std::size_t max_epochs = 50;
    std::size_t patience = 5;
    std::uint64_t seed = 0;
    Metric metric = Metric::kAccuracy;
    ClassIndex positive_class = 1;

    void validate() const {
        if (!(learning_rate >= 0.0) || !(weight_decay >= 0.0) || !(l2_lf >= 0.0) || !(noise_lambda >= 0.0))
            throw ConfigError("train: real-valued settings must be >= 0");
        if (noise_lambda > 1.0) throw ConfigError("train: noise_lambda must be in [0, 1]");
        if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
        if (max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
    }
};

/// Everything needed to go from texts and L/T to a trained model.
struct ExperimentConfig {
    VocabConfig vocab;
    EncoderConfig encoder;
    ModelConfig model;
    TrainConfig train;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double dev_metric = 0.0;
    double lr = 0.0;

    bool operator==(const EpochRecord&) const = default;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    double best_dev_metric = -1.0;

    bool operator==(const TrainHistory&) const = default;
};

inline std::string history_csv(const TrainHistory& h) {
    std::ostringstream os;
    os.precision(17);
    os << "epoch,train_loss,dev_metric,lr\n";
    for (const auto& e : h.epochs) os << e.epoch << ',' << e.train_loss << ',' << e.dev_metric << ',' << e.lr << '\n';
    return os.str();
}

/// Thrown when the loss turns non-finite; keeps the epochs completed so far.
class TrainingDiverged : public NumericalError {
public:
    TrainingDiverged(const std::string& what, TrainHistory history)
        : NumericalError(what), history_(std::move(history)) {}
    const TrainHistory& history() const noexcept { return history_; }

private:
    TrainHistory history_;
};

// ---------------------------------------------------------------------------
// Noise injection

/// For every class that already has a match on sample i, each unmatched LF of
/// that class gains a match independently with probability lambda. Existing
/// matches are kept.
inline MatchMatrix inject_noise(const MatchMatrix& L, const MappingMatrix& T, double lambda, Rng& rng) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("noise lambda must be in [0, 1]");
    if (L.m() != T.m()) throw DataError("inject_noise: L/T LF count mismatch");
    if (lambda == 0.0) return L;
    std::vector<std::vector<std::size_t>> by_class(T.c());
    for (std::size_t j = 0; j < T.m(); ++j) by_class[T.class_of(j)].push_back(j);
    std::vector<std::vector<MatchMatrix::Index>> rows(L.n());
    std::vector<bool> class_hit(T.c());
    for (std::size_t i = 0; i < L.n(); ++i) {
        auto row = L.row(i);
        rows[i].assign(row.begin(), row.end());
        if (row.empty()) continue;
        std::fill(class_hit.begin(), class_hit.end(), false);
        for (auto j : row) class_hit[T.class_of(j)] = true;
        for (ClassIndex k = 0; k < T.c(); ++k) {
            if (!class_hit[k]) continue;
            for (std::size_t j : by_class[k]) {
                if (std::binary_search(row.begin(), row.end(), static_cast<MatchMatrix::Index>(j))) continue;
                if (lambda >= 1.0 || uniform01(rng) < lambda) rows[i].push_back(static_cast<MatchMatrix::Index>(j));
            }
        }
    }
    return MatchMatrix(L.m(), std::move(rows));
}

// ---------------------------------------------------------------------------
// Optimizer

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

struct OptimizerState {
    SepLLParams m;
    SepLLParams v;
    std::size_t step = 0;

    static OptimizerState for_params(const SepLLParams& p) { return {p.zeros_like(), p.zeros_like(), 0}; }
};

/// One decoupled-weight-decay Adam update:
///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2,
///   theta <- theta - lr * mhat / (sqrt(vhat) + eps) - lr * wd * theta.
inline void adamw_step(SepLLParams& params, const SepLLParams& grads, OptimizerState& state, const AdamWConfig& cfg,
                       double lr) {
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    std::vector<std::span<double>> p, m, v;
    std::vector<std::span<const double>> g;
    params.for_each_tensor([&](std::span<double> x, bool) { p.push_back(x); });
    state.m.for_each_tensor([&](std::span<double> x, bool) { m.push_back(x); });
    state.v.for_each_tensor([&](std::span<double> x, bool) { v.push_back(x); });
    grads.for_each_tensor([&](std::span<const double> x, bool) { g.push_back(x); });
    if (p.size() != g.size() || p.size() != m.size() || p.size() != v.size())
        throw DataError("adamw_step: parameter/gradient structure mismatch");
    bool finite = true;
    for (std::size_t k = 0; k < p.size(); ++k) {
        if (p[k].size() != g[k].size() || p[k].size() != m[k].size() || p[k].size() != v[k].size())
            throw DataError("adamw_step: tensor shape mismatch");
        double* theta = p[k].data();
        double* mk = m[k].data();
        double* vk = v[k].data();
        const double* gk = g[k].data();
        for (std::size_t i = 0; i < p[k].size(); ++i) {
            mk[i] = cfg.beta1 * mk[i] + (1.0 - cfg.beta1) * gk[i];
            vk[i] = cfg.beta2 * vk[i] + (1.0 - cfg.beta2) * gk[i] * gk[i];
            const double mhat = mk[i] / bc1;
            const double vhat = vk[i] / bc2;
            theta[i] -= lr * (mhat / (std::sqrt(vhat) + cfg.eps)) + lr * cfg.weight_decay * theta[i];
            finite = finite && std::isfinite(theta[i]);
        }
    }
    if (!finite) throw NumericalError("non-finite parameter after AdamW update");
}

/// Linear ramp from 0 to base_lr over warmup_steps, then constant.
inline double lr_schedule(std::size_t step, std::size_t warmup_steps, double base_lr) {
    if (warmup_steps == 0 || step >= warmup_steps) return base_lr;
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
}

// ---------------------------------------------------------------------------
// Training loop

inline std::vector<ClassIndex> predict_all(const SepLLParams& params, std::span<const FeatureVector> features) {
    std::vector<ClassIndex> out(features.size());
    parallel_for(features.size(), [&](std::size_t i) { out[i] = task_predict(params, features[i]); });
    return out;
}

/// Featurized inputs for one training run; lets callers share featurization
/// across several runs on the same data.
struct PreparedData {
    Vocabulary vocab;
    std::vector<FeatureVector> train;
    std::vector<FeatureVector> dev;
    std::vector<FeatureVector> test;
    std::vector<ClassIndex> dev_gold;
    std::vector<ClassIndex> test_gold;  // empty when test gold is unavailable
    MatchMatrix train_matches;
    MappingMatrix mapping;
    std::size_t num_classes = 0;
};

inline std::vector<std::string> texts_of(const Split& split) {
    std::vector<std::string> out;
    out.reserve(split.size());
    for (const auto& s : split.samples) out.push_back(s.text);
    return out;
}

/// Fits the vocabulary on train texts only and featurizes all splits.
inline PreparedData prepare_data(const SplitSet& splits, const MatchMatrix& train_matches, const MappingMatrix& T,
                                 const VocabConfig& vocab_cfg) {
    if (splits.dev.size() == 0) throw DataError("dev split required for early stopping");
    if (train_matches.n() != splits.train.size()) throw DataError("train L row count does not match train split");
    if (train_matches.m() != T.m()) throw DataError("LF dimension mismatch between L and T");
    if (T.c() != splits.num_classes()) throw DataError("T class count does not match dataset classes");
    PreparedData d;
    const auto train_texts = texts_of(splits.train);
    d.vocab = fit_vocabulary(train_texts, vocab_cfg);
    d.train = featurize_all(train_texts, d.vocab);
    d.dev = featurize_all(texts_of(splits.dev), d.vocab);
    d.test = featurize_all(texts_of(splits.test), d.vocab);
    d.dev_gold = require_gold(splits.dev, "dev");
    const bool test_gold = std::all_of(splits.test.samples.begin(), splits.test.samples.end(),
                                       [](const Sample& s) { return s.gold_label.has_value(); });
    if (test_gold) d.test_gold = require_gold(splits.test, "test");
    d.train_matches = train_matches;
    d.mapping = T;
    d.num_classes = splits.num_classes();
    return d;
}

struct TrainResult {
    SepLLParams params;
    TrainHistory history;
};

/// Observer hook called after every epoch with the current parameters.
using EpochCallback = std::function<void(std::size_t epoch, const SepLLParams&)>;

inline TrainResult train(const PreparedData& data, const ExperimentConfig& cfg, const EpochCallback& on_epoch = {}) {
    const TrainConfig& tc = cfg.train;
    tc.validate();
    if (data.dev.empty()) throw DataError("dev split required for early stopping");
    Rng init_rng = make_stream(tc.seed, "init");
    Rng noise_rng = make_stream(tc.seed, "noise");
    Rng shuffle_rng = make_stream(tc.seed, "shuffle");

    TrainResult best;
    SepLLParams params = make_model(data.vocab.size(), cfg.encoder, cfg.model, data.mapping, init_rng);
    SepLLParams grads = params.zeros_like();
    OptimizerState opt = OptimizerState::for_params(params);
    const AdamWConfig adam{0.9, 0.999, 1e-8, tc.weight_decay};
    const Objective objective{tc.l2_lf, tc.lf_penalty};

    TrainHistory history;
    std::size_t since_best = 0;
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < tc.max_epochs; ++epoch) {
        const MatchMatrix noisy = inject_noise(data.train_matches, data.mapping, tc.noise_lambda, noise_rng);
        const TargetDistribution targets = build_targets(noisy, tc.use_unlabeled);
        std::vector<std::size_t> order = targets.included;
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        EpochRecord rec;
        rec.epoch = epoch;
        double loss_sum = 0.0;
        std::size_t batches = 0;
        double lr = tc.learning_rate;
        try {
            for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
                const std::size_t end = std::min(order.size(), start + tc.batch_size);
                const std::span<const std::size_t> batch(order.data() + start, end - start);
                const auto r = backward(params, data.train, targets, batch, objective, grads);
                lr = lr_schedule(step, tc.warmup_steps, tc.learning_rate);
                adamw_step(params, grads, opt, adam, lr);
                ++step;
                loss_sum += r.loss;
                ++batches;
            }
        } catch (const NumericalError& e) {
            throw TrainingDiverged(std::string("training diverged in epoch ") + std::to_string(epoch) + ": " +
                                       e.what(),
                                   history);
        }
        rec.train_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
        rec.lr = lr;
        const auto preds = predict_all(params, data.dev);
        rec.dev_metric = metric_value(confusion(preds, data.dev_gold, data.num_classes), tc.metric, tc.positive_class);
        history.epochs.push_back(rec);
        if (on_epoch) on_epoch(epoch, params);

        if (rec.dev_metric > history.best_dev_metric) {
            history.best_dev_metric = rec.dev_metric;
            history.best_epoch = epoch;
            best.params = params;
            since_best = 0;
        } else if (++since_best >= tc.patience) {
            break;
        }
    }
    best.history = std::move(history);
    return best;
}

/// Convenience wrapper: prepares features, then trains.
inline std::pair<PreparedData, TrainResult> train(const SplitSet& splits, const MatchMatrix& train_matches,
                                                  const MappingMatrix& T, const ExperimentConfig& cfg) {
    PreparedData data = prepare_data(splits, train_matches, T, cfg.vocab);
    TrainResult result = train(data, cfg);
    return {std::move(data), std::move(result)};
}

// ---------------------------------------------------------------------------
// Routing ablation

struct AblationRow {
    std::string variant;
    TrainConfig config;
    double dev_metric = 0.0;
    std::optional<double> test_metric;
    std::size_t best_epoch = 0;
};

/// Full model, each routing strategy removed individually, and the basic
/// model without any of them.
inline std::vector<std::pair<std::string, TrainConfig>> ablation_variants(const TrainConfig& base) {
    std::vector<std::pair<std::string, TrainConfig>> v;
    v.emplace_back("Full", base);
    auto no_wd = base;
    no_wd.weight_decay = 0.0;
    v.emplace_back("-WeightDecay", no_wd);
    auto no_l2 = base;
    no_l2.l2_lf = 0.0;
    v.emplace_back("-L2", no_l2);
    auto no_unl = base;
    no_unl.use_unlabeled = false;
    v.emplace_back("-Unlabeled", no_unl);
    auto no_noise = base;
    no_noise.noise_lambda = 0.0;
    v.emplace_back("-Noise", no_noise);
    auto basic = base;
    basic.weight_decay = 0.0;
    basic.l2_lf = 0.0;
    basic.use_unlabeled = false;
    basic.noise_lambda = 0.0;
    v.emplace_back("Basic", basic);
    return v;
}

inline std::optional<double> test_metric_of(const PreparedData& data, const SepLLParams& params,
                                            const TrainConfig& tc) {
    if (data.test_gold.empty() || data.test.empty()) return std::nullopt;
    const auto preds = predict_all(params, data.test);
    return metric_value(confusion(preds, data.test_gold, data.num_classes), tc.metric, tc.positive_class);
}

inline std::vector<AblationRow> run_ablation(const PreparedData& data, const ExperimentConfig& base) {
    std::vector<AblationRow> rows;
    for (auto& [name, tc] : ablation_variants(base.train)) {
        ExperimentConfig cfg = base;
        cfg.train = tc;
        const auto result = train(data, cfg);
        rows.push_back({name, tc, result.history.best_dev_metric, test_metric_of(data, result.params, tc),
                        result.history.best_epoch});
    }
    return rows;
}

inline std::vector<AblationRow> run_ablation(const SplitSet& splits, const MatchMatrix& train_matches,
                                             const MappingMatrix& T, const ExperimentConfig& base) {
    return run_ablation(prepare_data(splits, train_matches, T, base.vocab), base);
}

}  // namespace sepll
