#pragma once

// Independent reference implementations used as test oracles. They work on
// dense arrays in long double and share no code with the library beyond the
// plain data types.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include "sepll/sepll.hpp"

namespace oracle {

using Vec = std::vector<long double>;

inline Vec softmax(const std::vector<double>& x) {
    Vec e(x.size());
    long double sum = 0.0L;
    for (std::size_t i = 0; i < x.size(); ++i) sum += e[i] = std::exp(static_cast<long double>(x[i]));
    for (auto& v : e) v /= sum;
    return e;
}

// combined = T * task_logits + lf_logits with T as a dense m x c 0/1 matrix.
inline Vec recombine(const std::vector<double>& task, const std::vector<double>& lf, const sepll::MappingMatrix& T) {
    const auto dense = T.dense();
    Vec out(T.m());
    for (std::size_t j = 0; j < T.m(); ++j) {
        long double acc = lf[j];
        for (std::size_t k = 0; k < T.c(); ++k) acc += dense[j * T.c() + k] * static_cast<long double>(task[k]);
        out[j] = acc;
    }
    return out;
}

inline long double ce(const std::vector<std::vector<double>>& q, const std::vector<std::vector<double>>& p) {
    long double total = 0.0L;
    for (std::size_t i = 0; i < q.size(); ++i)
        for (std::size_t j = 0; j < q[i].size(); ++j) {
            const long double qq = std::max<long double>(q[i][j], 1e-12L);
            total += -static_cast<long double>(p[i][j]) * std::log(qq);
        }
    return q.empty() ? 0.0L : total / static_cast<long double>(q.size());
}

// Every class holding the maximal vote count, counting votes cell by cell
// over the dense matrices.
inline std::vector<std::size_t> vote_winners(const std::vector<double>& dense_row, const sepll::MappingMatrix& T) {
    const auto t = T.dense();
    std::vector<long> votes(T.c(), 0);
    for (std::size_t k = 0; k < T.c(); ++k)
        for (std::size_t j = 0; j < T.m(); ++j)
            if (dense_row[j] == 1.0 && t[j * T.c() + k] == 1.0) ++votes[k];
    long best = -1;
    for (long v : votes) best = std::max(best, v);
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < T.c(); ++k)
        if (votes[k] == best) out.push_back(k);
    return out;
}

// Dense forward pass: hidden layers use the MLP activation, the last layer is linear.
inline Vec mlp_forward(const sepll::Mlp& mlp, const Vec& x) {
    Vec cur = x;
    for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
        const auto& layer = mlp.layers[l];
        Vec next(layer.out);
        for (std::size_t o = 0; o < layer.out; ++o) {
            long double acc = layer.bias[o];
            for (std::size_t i = 0; i < layer.in; ++i) acc += cur[i] * static_cast<long double>(layer.weight[i * layer.out + o]);
            if (l + 1 < mlp.layers.size()) {
                switch (mlp.activation) {
                    case sepll::Activation::kTanh: acc = std::tanh(acc); break;
                    case sepll::Activation::kRelu: acc = acc > 0 ? acc : 0; break;
                    case sepll::Activation::kIdentity: break;
                }
            }
            next[o] = acc;
        }
        cur = std::move(next);
    }
    return cur;
}

inline Vec dense_input(const sepll::FeatureVector& f) {
    Vec x(f.dim, 0.0L);
    for (auto [i, v] : f.entries) x[i] = v;
    return x;
}

// Central finite-difference gradient of `f` with respect to every parameter,
// in for_each_tensor order.
inline std::vector<double> numeric_gradient(sepll::SepLLParams params, const std::function<double(const sepll::SepLLParams&)>& f,
                                            double step) {
    std::vector<double> out;
    std::vector<std::span<double>> tensors;
    params.for_each_tensor([&](std::span<double> t, bool) { tensors.push_back(t); });
    for (auto t : tensors)
        for (double& v : t) {
            const double orig = v;
            v = orig + step;
            const double up = f(params);
            v = orig - step;
            const double down = f(params);
            v = orig;
            out.push_back((up - down) / (2.0 * step));
        }
    return out;
}

inline std::vector<double> flatten(const sepll::SepLLParams& p) {
    std::vector<double> out;
    p.for_each_tensor([&](std::span<const double> t, bool) { out.insert(out.end(), t.begin(), t.end()); });
    return out;
}

// Random instance helpers ---------------------------------------------------

inline sepll::MappingMatrix random_mapping(std::mt19937_64& rng, std::size_t m, std::size_t c) {
    std::vector<std::size_t> cls(m);
    for (std::size_t j = 0; j < m; ++j) cls[j] = j < c ? j : rng() % c;
    std::shuffle(cls.begin(), cls.end(), rng);
    return sepll::MappingMatrix(cls, c);
}

inline sepll::MatchMatrix random_matches(std::mt19937_64& rng, std::size_t n, std::size_t m, double density) {
    std::bernoulli_distribution hit(density);
    std::vector<std::vector<sepll::MatchMatrix::Index>> rows(n);
    for (auto& r : rows)
        for (std::size_t j = 0; j < m; ++j)
            if (hit(rng)) r.push_back(static_cast<sepll::MatchMatrix::Index>(j));
    return sepll::MatchMatrix(m, std::move(rows));
}

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double scale) {
    std::uniform_real_distribution<double> u(-scale, scale);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

inline sepll::FeatureVector random_features(std::mt19937_64& rng, std::size_t dim, std::size_t nnz) {
    sepll::FeatureVector f;
    f.dim = dim;
    std::vector<std::size_t> idx(dim);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(nnz, dim));
    std::sort(idx.begin(), idx.end());
    std::uniform_real_distribution<double> u(0.05, 1.0);
    for (auto i : idx) f.entries.emplace_back(i, u(rng));
    return f;
}

}  // namespace oracle
