#pragma once

// The branched model: an encoder z = h(x), a task head producing c class
// logits and an LF head producing m LF logits. The two are recombined in LF
// space through the mapping T,
//
//     combined_j = task_logits[class_of(j)] + lf_logits[j],
//
// trained with cross-entropy against the LF distribution P. The class
// prediction reads only the task head, which never sees a class label.

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "sepll/data.hpp"
#include "sepll/encoder.hpp"
#include "sepll/error.hpp"
#include "sepll/random.hpp"

namespace sepll {

inline constexpr double kProbClamp = 1e-12;

struct ModelConfig {
    std::size_t head_layers = 1;  // 1 = affine head, 2 = one hidden layer
    std::size_t head_hidden = 64;
    Activation head_activation = Activation::kTanh;
};

struct SepLLParams {
    EncoderParams encoder;
    Mlp task_head;  // R^d -> R^c
    Mlp lf_head;    // R^d -> R^m
    MappingMatrix mapping;

    std::size_t c() const { return task_head.output_dim(); }
    std::size_t m() const { return lf_head.output_dim(); }
    std::size_t d() const { return encoder.output_dim(); }

    std::size_t num_params() const {
        return encoder.num_params() + task_head.num_params() + lf_head.num_params();
    }

    /// Visits encoder, task head and LF head tensors in a fixed order; the
    /// second argument tells whether the tensor belongs to the LF head.
    template <typename Fn>
    void for_each_tensor(Fn&& fn) {
        encoder.for_each_tensor([&](std::span<double> t) { fn(t, false); });
        task_head.for_each_tensor([&](std::span<double> t) { fn(t, false); });
        lf_head.for_each_tensor([&](std::span<double> t) { fn(t, true); });
    }
    template <typename Fn>
    void for_each_tensor(Fn&& fn) const {
        encoder.for_each_tensor([&](std::span<const double> t) { fn(t, false); });
        task_head.for_each_tensor([&](std::span<const double> t) { fn(t, false); });
        lf_head.for_each_tensor([&](std::span<const double> t) { fn(t, true); });
    }

    SepLLParams zeros_like() const {
        return {encoder.zeros_like(), task_head.zeros_like(), lf_head.zeros_like(), mapping};
    }

    void validate() const {
        if (encoder.layers.empty() || task_head.layers.empty() || lf_head.layers.empty())
            throw DataError("model has an empty component");
        if (task_head.input_dim() != d() || lf_head.input_dim() != d())
            throw DataError("head input dimension does not match encoder output");
        if (mapping.c() != c()) throw DataError("task head output does not match class count of T");
        if (mapping.m() != m()) throw DataError("LF dimension mismatch between LF head and T");
    }

    bool operator==(const SepLLParams&) const = default;
};

inline Mlp make_head(std::size_t d, std::size_t out, const ModelConfig& cfg, Rng& rng) {
    std::vector<std::size_t> dims{d};
    if (cfg.head_layers >= 2) dims.push_back(cfg.head_hidden);
    dims.push_back(out);
    Mlp head(dims, cfg.head_activation);
    init_glorot(head, rng);
    return head;
}

inline SepLLParams make_model(std::size_t input_dim, const EncoderConfig& enc, const ModelConfig& cfg,
                              MappingMatrix mapping, Rng& rng) {
    if (cfg.head_layers < 1 || cfg.head_layers > 2) throw ConfigError("head_layers must be 1 or 2");
    SepLLParams p;
    p.encoder = make_encoder(input_dim, enc, rng);
    p.task_head = make_head(enc.d, mapping.c(), cfg, rng);
    p.lf_head = make_head(enc.d, mapping.m(), cfg, rng);
    p.mapping = std::move(mapping);
    return p;
}

inline std::vector<double> softmax(std::span<const double> logits) {
    std::vector<double> out(logits.size());
    if (logits.empty()) return out;
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) sum += out[i] = std::exp(logits[i] - mx);
    for (auto& v : out) v /= sum;
    return out;
}

/// task_logits mapped into LF space: entry j is task_logits[class_of(j)].
inline std::vector<double> map_to_lfs(std::span<const double> task_logits, const MappingMatrix& T) {
    std::vector<double> out(T.m());
    for (std::size_t j = 0; j < T.m(); ++j) out[j] = task_logits[T.class_of(j)];
    return out;
}

struct ForwardTrace {
    std::vector<double> z;
    std::vector<double> task_logits;
    std::vector<double> lf_logits;
    std::vector<double> combined_logits;
    std::vector<double> q;
    std::vector<double> task_probs;
};

namespace detail {

struct FullTrace {
    MlpTrace encoder;
    MlpTrace task;
    MlpTrace lf;
    ForwardTrace out;
};

inline ForwardTrace recombine(std::vector<double> z, std::vector<double> task_logits, std::vector<double> lf_logits,
                              const MappingMatrix& T) {
    ForwardTrace t;
    t.combined_logits = map_to_lfs(task_logits, T);
    for (std::size_t j = 0; j < t.combined_logits.size(); ++j) t.combined_logits[j] += lf_logits[j];
    check_finite(t.combined_logits, "combined logits");
    t.q = softmax(t.combined_logits);
    t.task_probs = softmax(task_logits);
    t.z = std::move(z);
    t.task_logits = std::move(task_logits);
    t.lf_logits = std::move(lf_logits);
    return t;
}

inline FullTrace full_forward(const SepLLParams& params, const FeatureVector& features) {
    FullTrace t;
    t.encoder = mlp_forward(params.encoder, features);
    const auto& z = t.encoder.result();
    check_finite(z, "encoder output");
    t.task = mlp_forward(params.task_head, std::span<const double>(z));
    t.lf = mlp_forward(params.lf_head, std::span<const double>(z));
    t.out = recombine(z, t.task.result(), t.lf.result(), params.mapping);
    return t;
}

}  // namespace detail

/// Recombination from given head outputs; the model-free part of forward().
inline ForwardTrace forward_from_logits(std::span<const double> task_logits, std::span<const double> lf_logits,
                                        const MappingMatrix& T) {
    if (task_logits.size() != T.c() || lf_logits.size() != T.m()) throw DataError("logit shapes do not match T");
    return detail::recombine({}, {task_logits.begin(), task_logits.end()}, {lf_logits.begin(), lf_logits.end()}, T);
}

inline ForwardTrace forward(const SepLLParams& params, const FeatureVector& features) {
    return detail::full_forward(params, features).out;
}

/// Batch-mean cross-entropy -(1/n) sum_i sum_j P_ij log max(Q_ij, 1e-12).
inline double ce_loss(std::span<const std::vector<double>> q_batch, std::span<const std::vector<double>> targets) {
    if (q_batch.size() != targets.size()) throw DataError("ce_loss: batch size mismatch");
    if (q_batch.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < q_batch.size(); ++i) {
        if (q_batch[i].size() != targets[i].size()) throw DataError("ce_loss: row width mismatch");
        for (std::size_t j = 0; j < q_batch[i].size(); ++j)
            if (targets[i][j] != 0.0) total -= targets[i][j] * std::log(std::max(q_batch[i][j], kProbClamp));
    }
    return total / static_cast<double>(q_batch.size());
}

inline ClassIndex argmax_lowest(std::span<const double> v) {
    return static_cast<ClassIndex>(std::max_element(v.begin(), v.end()) - v.begin());
}

/// Argmax of the task head; ties go to the lowest class index.
inline ClassIndex task_predict(const SepLLParams& params, const FeatureVector& features) {
    return argmax_lowest(forward(params, features).task_probs);
}

// ---------------------------------------------------------------------------
// Objective and gradients

enum class LfPenalty { kParameters, kActivations };

/// Penalty on the LF path on top of the cross-entropy: l2_lf * ||lf_head params||^2,
/// or l2_lf * mean_i ||lf_logits_i||^2 in activation mode.
struct Objective {
    double l2_lf = 0.0;
    LfPenalty penalty = LfPenalty::kParameters;
};

struct BackwardResult {
    double loss = 0.0;  // ce + penalty
    double ce = 0.0;
};

/// Exact gradients of the batch objective over rows `batch` of (features, P).
/// `grads` must have the parameter shapes; it is overwritten.
inline BackwardResult backward(const SepLLParams& params, std::span<const FeatureVector> features,
                               const TargetDistribution& targets, std::span<const std::size_t> batch,
                               const Objective& objective, SepLLParams& grads) {
    if (targets.m != params.m()) throw DataError("LF dimension mismatch between targets and model");
    grads.for_each_tensor([](std::span<double> t, bool) { std::fill(t.begin(), t.end(), 0.0); });
    BackwardResult r;
    if (batch.empty()) return r;
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    const std::size_t m = params.m();
    const std::size_t c = params.c();
    std::vector<double> g_comb(m), g_task(c);
    double act_penalty = 0.0;
    for (std::size_t i : batch) {
        const auto t = detail::full_forward(params, features[i]);
        const auto p = targets.row(i);
        const auto& q = t.out.q;
        double kept_mass = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            if (p[j] == 0.0) continue;
            r.ce -= p[j] * std::log(std::max(q[j], kProbClamp));
            if (q[j] >= kProbClamp) kept_mass += p[j];
        }
        for (std::size_t j = 0; j < m; ++j)
            g_comb[j] = inv_b * (q[j] * kept_mass - (q[j] >= kProbClamp ? p[j] : 0.0));
        std::fill(g_task.begin(), g_task.end(), 0.0);
        for (std::size_t j = 0; j < m; ++j) g_task[params.mapping.class_of(j)] += g_comb[j];
        if (objective.penalty == LfPenalty::kActivations && objective.l2_lf != 0.0) {
            for (std::size_t j = 0; j < m; ++j) {
                const double a = t.out.lf_logits[j];
                act_penalty += a * a;
                g_comb[j] += 2.0 * objective.l2_lf * inv_b * a;
            }
        }
        const auto& z = t.encoder.result();
        auto gz = mlp_backward(params.task_head, z, t.task, g_task, grads.task_head);
        const auto gz_lf = mlp_backward(params.lf_head, z, t.lf, g_comb, grads.lf_head);
        for (std::size_t k = 0; k < gz.size(); ++k) gz[k] += gz_lf[k];
        mlp_backward(params.encoder, features[i], t.encoder, gz, grads.encoder);
    }
    r.ce *= inv_b;
    double penalty = 0.0;
    if (objective.l2_lf != 0.0) {
        if (objective.penalty == LfPenalty::kParameters) {
            auto g_it = grads.lf_head.layers.begin();
            for (const auto& layer : params.lf_head.layers) {
                for (std::size_t k = 0; k < layer.weight.size(); ++k) {
                    penalty += layer.weight[k] * layer.weight[k];
                    g_it->weight[k] += 2.0 * objective.l2_lf * layer.weight[k];
                }
                for (std::size_t k = 0; k < layer.bias.size(); ++k) {
                    penalty += layer.bias[k] * layer.bias[k];
                    g_it->bias[k] += 2.0 * objective.l2_lf * layer.bias[k];
                }
                ++g_it;
            }
            penalty *= objective.l2_lf;
        } else {
            penalty = objective.l2_lf * act_penalty * inv_b;
        }
    }
    r.loss = r.ce + penalty;
    if (!std::isfinite(r.loss)) throw NumericalError("non-finite loss");
    grads.for_each_tensor([](std::span<const double> t, bool) { detail::check_finite(t, "gradient"); });
    return r;
}

/// Objective value only (no gradients); used for finite-difference checks
/// and held-out monitoring.
inline double objective_value(const SepLLParams& params, std::span<const FeatureVector> features,
                              const TargetDistribution& targets, std::span<const std::size_t> batch,
                              const Objective& objective) {
    if (batch.empty()) return 0.0;
    double ce = 0.0, act = 0.0;
    for (std::size_t i : batch) {
        const auto t = forward(params, features[i]);
        const auto p = targets.row(i);
        for (std::size_t j = 0; j < p.size(); ++j)
            if (p[j] != 0.0) ce -= p[j] * std::log(std::max(t.q[j], kProbClamp));
        for (double a : t.lf_logits) act += a * a;
    }
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double penalty = 0.0;
    if (objective.penalty == LfPenalty::kParameters) {
        params.lf_head.for_each_tensor([&](std::span<const double> t) {
            for (double v : t) penalty += v * v;
        });
        penalty *= objective.l2_lf;
    } else {
        penalty = objective.l2_lf * act * inv_b;
    }
    return ce * inv_b + penalty;
}

/// Reorders LF units: new LF perm[j] is old LF j (LF head output units and T).
inline SepLLParams permute_lfs(const SepLLParams& params, std::span<const std::size_t> perm) {
    SepLLParams out = params;
    Dense& last = out.lf_head.layers.back();
    const Dense& src = params.lf_head.layers.back();
    for (std::size_t j = 0; j < src.out; ++j) {
        out.lf_head.layers.back().bias[perm[j]] = src.bias[j];
        for (std::size_t i = 0; i < src.in; ++i) last.w(i, perm[j]) = src.w(i, j);
    }
    out.mapping = params.mapping.permute(perm);
    return out;
}

// ---------------------------------------------------------------------------
// Model checkpoint: vocabulary + encoder/head blocks + T + config echo, then
// the float64 payload for the three MLPs in header order.

struct Checkpoint {
    Vocabulary vocab;
    SepLLParams params;
    std::string config_echo;
};

inline void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
    const auto& v = ck.vocab;
    os << "SEPLL-CHECKPOINT 1\n";
    os << "vocab " << v.size() << ' ' << v.num_docs << ' ' << v.config.max_features << ' ' << v.config.min_df << ' '
       << (v.config.lowercase ? 1 : 0) << '\n';
    for (std::size_t i = 0; i < v.size(); ++i) os << v.tokens[i] << ' ' << v.df[i] << '\n';
    os << "d " << ck.params.d() << '\n';
    write_mlp_header(os, "encoder", ck.params.encoder);
    write_mlp_header(os, "task_head", ck.params.task_head);
    write_mlp_header(os, "lf_head", ck.params.lf_head);
    os << "mapping " << ck.params.mapping.m() << ' ' << ck.params.mapping.c() << '\n';
    for (std::size_t j = 0; j < ck.params.mapping.m(); ++j) os << (j ? " " : "") << ck.params.mapping.class_of(j);
    os << '\n';
    os << "config " << ck.config_echo.size() << '\n' << ck.config_echo << '\n';
    os << "payload " << ck.params.num_params() << '\n';
    write_mlp_payload(os, ck.params.encoder);
    write_mlp_payload(os, ck.params.task_head);
    write_mlp_payload(os, ck.params.lf_head);
}

inline Checkpoint read_checkpoint(std::istream& is) {
    using detail::read_header_line;
    if (read_header_line(is) != "SEPLL-CHECKPOINT 1") throw DataError("not a model checkpoint");
    Checkpoint ck;
    std::string tag;
    {
        std::istringstream ls(read_header_line(is));
        std::size_t count = 0;
        int lower = 1;
        if (!(ls >> tag >> count >> ck.vocab.num_docs >> ck.vocab.config.max_features >> ck.vocab.config.min_df >>
              lower) ||
            tag != "vocab")
            throw DataError("checkpoint: bad vocab header");
        ck.vocab.config.lowercase = lower != 0;
        for (std::size_t i = 0; i < count; ++i) {
            std::istringstream ts(read_header_line(is));
            std::string tok;
            std::size_t df = 0;
            if (!(ts >> tok >> df)) throw DataError("checkpoint: bad vocab entry");
            ck.vocab.tokens.push_back(std::move(tok));
            ck.vocab.df.push_back(df);
        }
        ck.vocab.rebuild_index();
    }
    std::size_t d = 0;
    {
        std::istringstream ls(read_header_line(is));
        if (!(ls >> tag >> d) || tag != "d") throw DataError("checkpoint: missing d");
    }
    ck.params.encoder = read_mlp_header(is, "encoder");
    ck.params.task_head = read_mlp_header(is, "task_head");
    ck.params.lf_head = read_mlp_header(is, "lf_head");
    {
        std::istringstream ls(read_header_line(is));
        std::size_t m = 0, c = 0;
        if (!(ls >> tag >> m >> c) || tag != "mapping") throw DataError("checkpoint: bad mapping header");
        std::istringstream cs(read_header_line(is));
        std::vector<ClassIndex> cls(m);
        for (auto& k : cls)
            if (!(cs >> k)) throw DataError("checkpoint: bad mapping row");
        ck.params.mapping = MappingMatrix(std::move(cls), c);
    }
    {
        std::istringstream ls(read_header_line(is));
        std::size_t bytes = 0;
        if (!(ls >> tag >> bytes) || tag != "config") throw DataError("checkpoint: bad config header");
        ck.config_echo.resize(bytes);
        if (!is.read(ck.config_echo.data(), static_cast<std::streamsize>(bytes)) || is.get() != '\n')
            throw DataError("checkpoint: config echo truncated");
    }
    {
        std::istringstream ls(read_header_line(is));
        std::size_t count = 0;
        if (!(ls >> tag >> count) || tag != "payload" || count != ck.params.num_params())
            throw DataError("checkpoint: payload size mismatch");
    }
    read_mlp_payload(is, ck.params.encoder);
    read_mlp_payload(is, ck.params.task_head);
    read_mlp_payload(is, ck.params.lf_head);
    if (ck.params.d() != d) throw DataError("checkpoint: d does not match encoder output");
    if (ck.params.encoder.input_dim() != ck.vocab.size())
        throw DataError("checkpoint: encoder input does not match vocabulary size");
    ck.params.validate();
    return ck;
}

}  // namespace sepll
