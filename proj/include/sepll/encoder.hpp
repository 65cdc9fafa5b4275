#pragma once

// Text featurization (TF-IDF over a fitted vocabulary) and the dense
// multilayer maps used for the encoder h: X -> R^d and for both model heads.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sepll/error.hpp"
#include "sepll/parallel.hpp"
#include "sepll/random.hpp"
#include "sepll/text.hpp"

namespace sepll {

// ---------------------------------------------------------------------------
// Vocabulary and TF-IDF

struct VocabConfig {
    std::size_t max_features = 5000;
    std::size_t min_df = 1;
    bool lowercase = true;
};

struct Vocabulary {
    VocabConfig config;
    std::vector<std::string> tokens;  // index -> token
    std::vector<std::size_t> df;      // index -> document frequency
    std::size_t num_docs = 0;
    std::unordered_map<std::string, std::uint32_t> index;

    std::size_t size() const noexcept { return tokens.size(); }

    void rebuild_index() {
        index.clear();
        for (std::size_t i = 0; i < tokens.size(); ++i) index.emplace(tokens[i], static_cast<std::uint32_t>(i));
    }

    double idf(std::size_t i) const {
        return std::log((1.0 + static_cast<double>(num_docs)) / (1.0 + static_cast<double>(df[i]))) + 1.0;
    }

    bool operator==(const Vocabulary& o) const {
        return tokens == o.tokens && df == o.df && num_docs == o.num_docs;
    }
};

/// Ranks tokens by (document frequency desc, token asc) and keeps the first
/// max_features with df >= min_df.
inline Vocabulary fit_vocabulary(std::span<const std::string> texts, const VocabConfig& config = {}) {
    if (texts.empty()) throw DataError("cannot fit a vocabulary on an empty corpus");
    std::map<std::string, std::size_t> df;
    for (const auto& text : texts) {
        auto toks = tokenize(text, config.lowercase);
        std::sort(toks.begin(), toks.end());
        toks.erase(std::unique(toks.begin(), toks.end()), toks.end());
        for (auto& t : toks) ++df[t];
    }
    std::vector<std::pair<std::string, std::size_t>> ranked;
    for (auto& [tok, count] : df)
        if (count >= config.min_df) ranked.emplace_back(tok, count);
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    if (ranked.size() > config.max_features) ranked.resize(config.max_features);

    Vocabulary v;
    v.config = config;
    v.num_docs = texts.size();
    for (auto& [tok, count] : ranked) {
        v.tokens.push_back(tok);
        v.df.push_back(count);
    }
    v.rebuild_index();
    return v;
}

/// Sparse, L2-normalized TF-IDF vector; entries sorted by index.
struct FeatureVector {
    std::size_t dim = 0;
    std::vector<std::pair<std::uint32_t, double>> entries;

    bool empty() const noexcept { return entries.empty(); }

    std::vector<double> dense() const {
        std::vector<double> out(dim, 0.0);
        for (auto [i, w] : entries) out[i] = w;
        return out;
    }

    bool operator==(const FeatureVector&) const = default;
};

inline FeatureVector featurize(std::string_view text, const Vocabulary& vocab) {
    std::map<std::uint32_t, double> tf;
    for (const auto& tok : tokenize(text, vocab.config.lowercase)) {
        auto it = vocab.index.find(tok);
        if (it != vocab.index.end()) tf[it->second] += 1.0;
    }
    FeatureVector f;
    f.dim = vocab.size();
    double norm2 = 0.0;
    for (auto [i, count] : tf) {
        const double w = count * vocab.idf(i);
        f.entries.emplace_back(i, w);
        norm2 += w * w;
    }
    if (norm2 > 0.0) {
        const double inv = 1.0 / std::sqrt(norm2);
        for (auto& e : f.entries) e.second *= inv;
    }
    return f;
}

inline std::vector<FeatureVector> featurize_all(std::span<const std::string> texts, const Vocabulary& vocab) {
    std::vector<FeatureVector> out(texts.size());
    parallel_for(texts.size(), [&](std::size_t i) { out[i] = featurize(texts[i], vocab); });
    return out;
}

// ---------------------------------------------------------------------------
// Dense multilayer maps

enum class Activation { kTanh, kRelu, kIdentity };

inline std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::kTanh: return "tanh";
        case Activation::kRelu: return "relu";
        case Activation::kIdentity: return "identity";
    }
    return "?";
}

inline Activation parse_activation(std::string_view s) {
    if (s == "tanh") return Activation::kTanh;
    if (s == "relu") return Activation::kRelu;
    if (s == "identity") return Activation::kIdentity;
    throw ConfigError("unknown activation '" + std::string(s) + "'");
}

inline double activate(Activation a, double x) {
    switch (a) {
        case Activation::kTanh: return std::tanh(x);
        case Activation::kRelu: return x > 0.0 ? x : 0.0;
        case Activation::kIdentity: return x;
    }
    return x;
}

// Derivative expressed through the activation's output y = f(x).
inline double activate_grad(Activation a, double y) {
    switch (a) {
        case Activation::kTanh: return 1.0 - y * y;
        case Activation::kRelu: return y > 0.0 ? 1.0 : 0.0;
        case Activation::kIdentity: return 1.0;
    }
    return 1.0;
}

/// Affine layer; weight is in x out, row-major (row = input unit).
struct Dense {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> weight;
    std::vector<double> bias;

    Dense() = default;
    Dense(std::size_t in_dim, std::size_t out_dim) : in(in_dim), out(out_dim), weight(in_dim * out_dim, 0.0), bias(out_dim, 0.0) {}

    double& w(std::size_t i, std::size_t o) { return weight[i * out + o]; }
    double w(std::size_t i, std::size_t o) const { return weight[i * out + o]; }

    bool operator==(const Dense&) const = default;
};

/// Stack of affine layers with `activation` after every layer but the last.
struct Mlp {
    std::vector<Dense> layers;
    Activation activation = Activation::kTanh;

    Mlp() = default;

    /// dims = {input, hidden..., output}; all weights zero.
    Mlp(std::span<const std::size_t> dims, Activation act) : activation(act) {
        if (dims.size() < 2) throw ConfigError("an MLP needs at least input and output dimensions");
        for (std::size_t l = 0; l + 1 < dims.size(); ++l) layers.emplace_back(dims[l], dims[l + 1]);
    }
    Mlp(std::initializer_list<std::size_t> dims, Activation act)
        : Mlp(std::span<const std::size_t>(dims.begin(), dims.size()), act) {}

    std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in; }
    std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().out; }

    std::size_t num_params() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.weight.size() + l.bias.size();
        return n;
    }

    /// Same shapes, all zeros.
    Mlp zeros_like() const {
        Mlp z = *this;
        for (auto& l : z.layers) {
            std::fill(l.weight.begin(), l.weight.end(), 0.0);
            std::fill(l.bias.begin(), l.bias.end(), 0.0);
        }
        return z;
    }

    template <typename Fn>
    void for_each_tensor(Fn&& fn) {
        for (auto& l : layers) {
            fn(std::span<double>(l.weight));
            fn(std::span<double>(l.bias));
        }
    }
    template <typename Fn>
    void for_each_tensor(Fn&& fn) const {
        for (const auto& l : layers) {
            fn(std::span<const double>(l.weight));
            fn(std::span<const double>(l.bias));
        }
    }

    bool operator==(const Mlp&) const = default;
};

/// Scaled uniform init in +-sqrt(6 / (fan_in + fan_out)); biases zero.
inline void init_glorot(Mlp& mlp, Rng& rng) {
    for (auto& l : mlp.layers) {
        const double limit = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (auto& w : l.weight) w = dist(rng);
        std::fill(l.bias.begin(), l.bias.end(), 0.0);
    }
}

/// Per-layer outputs of one forward pass (after activation; last layer linear).
struct MlpTrace {
    std::vector<std::vector<double>> outputs;

    const std::vector<double>& result() const { return outputs.back(); }
};

namespace detail {

inline void finish_layer(const Mlp& mlp, std::size_t l, std::vector<double>& y) {
    if (l + 1 < mlp.layers.size())
        for (auto& v : y) v = activate(mlp.activation, v);
}

inline void dense_layer(const Dense& layer, std::span<const double> x, std::vector<double>& y) {
    y = layer.bias;
    for (std::size_t i = 0; i < layer.in; ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        const double* row = layer.weight.data() + i * layer.out;
        for (std::size_t o = 0; o < layer.out; ++o) y[o] += xi * row[o];
    }
}

inline void check_finite(std::span<const double> v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x)) throw NumericalError(std::string("non-finite value in ") + what);
}

}  // namespace detail

inline MlpTrace mlp_forward(const Mlp& mlp, std::span<const double> input) {
    if (input.size() != mlp.input_dim())
        throw DataError("input dimension " + std::to_string(input.size()) + " does not match layer input " +
                        std::to_string(mlp.input_dim()));
    MlpTrace t;
    t.outputs.resize(mlp.layers.size());
    std::span<const double> x = input;
    for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
        detail::dense_layer(mlp.layers[l], x, t.outputs[l]);
        detail::finish_layer(mlp, l, t.outputs[l]);
        x = t.outputs[l];
    }
    return t;
}

inline MlpTrace mlp_forward(const Mlp& mlp, const FeatureVector& input) {
    if (input.dim != mlp.input_dim())
        throw DataError("feature dimension " + std::to_string(input.dim) + " does not match encoder input " +
                        std::to_string(mlp.input_dim()));
    MlpTrace t;
    t.outputs.resize(mlp.layers.size());
    const Dense& first = mlp.layers.front();
    auto& y0 = t.outputs[0];
    y0 = first.bias;
    for (auto [i, xi] : input.entries) {
        const double* row = first.weight.data() + static_cast<std::size_t>(i) * first.out;
        for (std::size_t o = 0; o < first.out; ++o) y0[o] += xi * row[o];
    }
    detail::finish_layer(mlp, 0, y0);
    for (std::size_t l = 1; l < mlp.layers.size(); ++l) {
        detail::dense_layer(mlp.layers[l], t.outputs[l - 1], t.outputs[l]);
        detail::finish_layer(mlp, l, t.outputs[l]);
    }
    return t;
}

namespace detail {

// Backpropagates through layers [1, L) and returns dLoss/d(pre-activation of layer 0).
inline std::vector<double> backward_upper(const Mlp& mlp, const MlpTrace& trace, std::span<const double> grad_out,
                                          Mlp& grads) {
    std::vector<double> delta(grad_out.begin(), grad_out.end());
    for (std::size_t l = mlp.layers.size(); l-- > 1;) {
        const Dense& layer = mlp.layers[l];
        Dense& g = grads.layers[l];
        const auto& x = trace.outputs[l - 1];
        for (std::size_t o = 0; o < layer.out; ++o) g.bias[o] += delta[o];
        std::vector<double> prev(layer.in, 0.0);
        for (std::size_t i = 0; i < layer.in; ++i) {
            const double* row = layer.weight.data() + i * layer.out;
            double* grow = g.weight.data() + i * layer.out;
            double acc = 0.0;
            for (std::size_t o = 0; o < layer.out; ++o) {
                grow[o] += x[i] * delta[o];
                acc += row[o] * delta[o];
            }
            prev[i] = acc * activate_grad(mlp.activation, x[i]);
        }
        delta = std::move(prev);
    }
    return delta;
}

}  // namespace detail

/// Accumulates parameter gradients into `grads` and returns dLoss/dinput.
inline std::vector<double> mlp_backward(const Mlp& mlp, std::span<const double> input, const MlpTrace& trace,
                                        std::span<const double> grad_out, Mlp& grads) {
    auto delta = detail::backward_upper(mlp, trace, grad_out, grads);
    const Dense& first = mlp.layers.front();
    Dense& g = grads.layers.front();
    std::vector<double> grad_in(first.in, 0.0);
    for (std::size_t o = 0; o < first.out; ++o) g.bias[o] += delta[o];
    for (std::size_t i = 0; i < first.in; ++i) {
        const double* row = first.weight.data() + i * first.out;
        double* grow = g.weight.data() + i * first.out;
        double acc = 0.0;
        for (std::size_t o = 0; o < first.out; ++o) {
            grow[o] += input[i] * delta[o];
            acc += row[o] * delta[o];
        }
        grad_in[i] = acc;
    }
    return grad_in;
}

/// Sparse-input variant; the input gradient is not needed and not computed.
inline void mlp_backward(const Mlp& mlp, const FeatureVector& input, const MlpTrace& trace,
                         std::span<const double> grad_out, Mlp& grads) {
    auto delta = detail::backward_upper(mlp, trace, grad_out, grads);
    Dense& g = grads.layers.front();
    const std::size_t out = g.out;
    for (std::size_t o = 0; o < out; ++o) g.bias[o] += delta[o];
    for (auto [i, xi] : input.entries) {
        double* grow = g.weight.data() + static_cast<std::size_t>(i) * out;
        for (std::size_t o = 0; o < out; ++o) grow[o] += xi * delta[o];
    }
}

// ---------------------------------------------------------------------------
// Encoder h: X -> R^d

struct EncoderConfig {
    std::size_t hidden = 256;
    std::size_t d = 64;
    Activation activation = Activation::kTanh;
};

/// The encoder is an Mlp from vocabulary dimension to d.
using EncoderParams = Mlp;

inline EncoderParams make_encoder(std::size_t input_dim, const EncoderConfig& cfg, Rng& rng) {
    std::vector<std::size_t> dims{input_dim};
    if (cfg.hidden > 0) dims.push_back(cfg.hidden);
    dims.push_back(cfg.d);
    EncoderParams p(dims, cfg.activation);
    init_glorot(p, rng);
    return p;
}

inline std::vector<double> encode(const FeatureVector& features, const EncoderParams& params) {
    auto trace = mlp_forward(params, features);
    detail::check_finite(trace.result(), "encoder output");
    return trace.result();
}

// ---------------------------------------------------------------------------
// Binary checkpoint blocks: a text header describing every MLP followed by
// row-major little-endian float64 payload (per layer: weight, then bias).

namespace detail {

inline void write_f64_le(std::ostream& os, double v) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    char buf[8];
    for (int b = 0; b < 8; ++b) buf[b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
    os.write(buf, 8);
}

inline double read_f64_le(std::istream& is) {
    unsigned char buf[8];
    if (!is.read(reinterpret_cast<char*>(buf), 8)) throw DataError("checkpoint payload truncated");
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(buf[b]) << (8 * b);
    return std::bit_cast<double>(bits);
}

inline std::string read_header_line(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw DataError("checkpoint header truncated");
    return line;
}

}  // namespace detail

inline void write_mlp_header(std::ostream& os, std::string_view name, const Mlp& mlp) {
    os << "mlp " << name << ' ' << to_string(mlp.activation) << ' ' << mlp.layers.size() << '\n';
    for (const auto& l : mlp.layers) os << "layer " << l.in << ' ' << l.out << '\n';
}

inline Mlp read_mlp_header(std::istream& is, std::string_view expected_name) {
    std::istringstream hs(detail::read_header_line(is));
    std::string tag, name, act;
    std::size_t count = 0;
    if (!(hs >> tag >> name >> act >> count) || tag != "mlp" || name != expected_name)
        throw DataError("checkpoint: expected mlp block '" + std::string(expected_name) + "'");
    Mlp mlp;
    mlp.activation = parse_activation(act);
    for (std::size_t l = 0; l < count; ++l) {
        std::istringstream ls(detail::read_header_line(is));
        std::size_t in = 0, out = 0;
        if (!(ls >> tag >> in >> out) || tag != "layer") throw DataError("checkpoint: bad layer line");
        if (!mlp.layers.empty() && mlp.layers.back().out != in)
            throw DataError("checkpoint: layer shapes do not chain");
        mlp.layers.emplace_back(in, out);
    }
    return mlp;
}

inline void write_mlp_payload(std::ostream& os, const Mlp& mlp) {
    mlp.for_each_tensor([&](std::span<const double> t) {
        for (double v : t) detail::write_f64_le(os, v);
    });
}

inline void read_mlp_payload(std::istream& is, Mlp& mlp) {
    mlp.for_each_tensor([&](std::span<double> t) {
        for (double& v : t) {
            v = detail::read_f64_le(is);
            if (!std::isfinite(v)) throw DataError("checkpoint contains non-finite parameter");
        }
    });
}

inline void write_encoder_checkpoint(std::ostream& os, const EncoderParams& enc) {
    os << "SEPLL-ENCODER 1\n";
    os << "d " << enc.output_dim() << '\n';
    write_mlp_header(os, "encoder", enc);
    os << "payload " << enc.num_params() << '\n';
    write_mlp_payload(os, enc);
}

inline EncoderParams read_encoder_checkpoint(std::istream& is) {
    if (detail::read_header_line(is) != "SEPLL-ENCODER 1") throw DataError("not an encoder checkpoint");
    std::istringstream ds(detail::read_header_line(is));
    std::string tag;
    std::size_t d = 0;
    if (!(ds >> tag >> d) || tag != "d") throw DataError("checkpoint: missing d");
    EncoderParams enc = read_mlp_header(is, "encoder");
    if (enc.output_dim() != d) throw DataError("checkpoint: d does not match last layer");
    std::istringstream ps(detail::read_header_line(is));
    std::size_t count = 0;
    if (!(ps >> tag >> count) || tag != "payload" || count != enc.num_params())
        throw DataError("checkpoint: payload size mismatch");
    read_mlp_payload(is, enc);
    return enc;
}

}  // namespace sepll
