#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "sepll/sepll.hpp"

using namespace sepll;

namespace {

struct Fixture {
    SepLLParams params;
    std::vector<FeatureVector> features;
    TargetDistribution targets;
    std::vector<std::size_t> batch;
};

Fixture small_model(std::uint64_t seed, std::size_t head_layers = 1, double bias_scale = 0.3) {
    std::mt19937_64 rng(seed);
    Fixture f;
    const std::size_t in = 10, c = 2, m = 3;
    const MappingMatrix T({0, 0, 1}, c);
    Rng init(seed);
    ModelConfig mc;
    mc.head_layers = head_layers;
    mc.head_hidden = 5;
    f.params = make_model(in, {8, 4, Activation::kTanh}, mc, T, init);
    // Non-zero biases so their gradients are exercised too.
    f.params.for_each_tensor([&](std::span<double> t, bool) {
        if (t.size() <= 8)
            for (auto& v : t) v = oracle::random_vector(rng, 1, bias_scale)[0];
    });
    for (int i = 0; i < 5; ++i) f.features.push_back(oracle::random_features(rng, in, 4));
    f.targets = build_targets(MatchMatrix(m, {{0}, {0, 2}, {}, {1}, {1, 2}}), true);
    f.batch = {0, 1, 2, 3, 4};
    return f;
}

double max_rel_error(const std::vector<double>& a, const std::vector<double>& n, double floor) {
    double worst = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k)
        worst = std::max(worst, std::abs(a[k] - n[k]) / std::max({std::abs(a[k]), std::abs(n[k]), floor}));
    return worst;
}

}  // namespace

TEST(Recombine, ExampleFromMapping) {
    const MappingMatrix T({0, 0, 1}, 2);
    const std::vector<double> task{2.0, -1.0}, lf{0.5, 0.0, 0.0};
    const auto t = forward_from_logits(task, lf, T);
    EXPECT_EQ(t.combined_logits, (std::vector<double>{2.5, 2.0, -1.0}));
    const auto ref = oracle::softmax(t.combined_logits);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(t.q[j], static_cast<double>(ref[j]), 1e-15);
}

TEST(Recombine, MatchesDenseOracleOnRandomInstances) {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t c = 2 + rng() % 4;
        const std::size_t m = c + rng() % 8;
        const auto T = oracle::random_mapping(rng, m, c);
        const auto task = oracle::random_vector(rng, c, 5.0);
        const auto lf = oracle::random_vector(rng, m, 5.0);
        const auto t = forward_from_logits(task, lf, T);
        const auto comb = oracle::recombine(task, lf, T);
        for (std::size_t j = 0; j < m; ++j) EXPECT_NEAR(t.combined_logits[j], static_cast<double>(comb[j]), 1e-10);
        const auto q = oracle::softmax(t.combined_logits);
        const auto p = oracle::softmax(task);
        for (std::size_t j = 0; j < m; ++j) EXPECT_NEAR(t.q[j], static_cast<double>(q[j]), 1e-10);
        for (std::size_t k = 0; k < c; ++k) EXPECT_NEAR(t.task_probs[k], static_cast<double>(p[k]), 1e-10);
    }
}

TEST(Softmax, ShiftInvariantAndStableForLargeLogits) {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 200; ++trial) {
        auto x = oracle::random_vector(rng, 1 + rng() % 10, 10.0);
        const double shift = oracle::random_vector(rng, 1, 500.0)[0];
        auto y = x;
        for (auto& v : y) v += shift;
        const auto a = softmax(x), b = softmax(y);
        for (std::size_t k = 0; k < x.size(); ++k) EXPECT_NEAR(a[k], b[k], 1e-12);
        EXPECT_EQ(argmax_lowest(x), argmax_lowest(y));
    }
    const auto big = softmax(std::vector<double>{1000.0, 1000.0});
    EXPECT_DOUBLE_EQ(big[0], 0.5);
}

TEST(CeLoss, MatchesOracleAndKnownValues) {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t m = 2 + rng() % 8;
        const auto L = oracle::random_matches(rng, 1 + rng() % 6, m, 0.3);
        const auto P = build_targets(L, true);
        std::vector<std::vector<double>> q, p;
        for (std::size_t i = 0; i < L.n(); ++i) {
            q.push_back(softmax(oracle::random_vector(rng, m, 6.0)));
            p.emplace_back(P.row(i).begin(), P.row(i).end());
        }
        const double v = ce_loss(q, p);
        EXPECT_GE(v, 0.0);
        EXPECT_NEAR(v, static_cast<double>(oracle::ce(q, p)), 1e-10);
    }
    // q = P gives the entropy of P; uniform rows give ln m.
    const std::vector<std::vector<double>> half{{0.5, 0.5, 0.0}};
    EXPECT_NEAR(ce_loss(half, half), std::log(2.0), 1e-15);
    const std::vector<std::vector<double>> uni{{0.25, 0.25, 0.25, 0.25}};
    EXPECT_NEAR(ce_loss(uni, uni), std::log(4.0), 1e-15);
    // Clamp keeps zero probabilities finite.
    const std::vector<std::vector<double>> zq{{1.0, 0.0}}, zp{{0.0, 1.0}};
    EXPECT_NEAR(ce_loss(zq, zp), -std::log(1e-12), 1e-9);
}

TEST(TaskPredict, TiesGoToLowestClass) {
    EXPECT_EQ(argmax_lowest(std::vector<double>{0.3, 0.7, 0.7}), 1u);
    EXPECT_EQ(argmax_lowest(std::vector<double>{0.5, 0.5}), 0u);
}

TEST(Backward, MatchesFiniteDifferences) {
    for (std::uint64_t seed = 0; seed < 5; ++seed)
        for (std::size_t layers : {1u, 2u})
            for (auto penalty : {LfPenalty::kParameters, LfPenalty::kActivations}) {
                auto f = small_model(seed, layers);
                const Objective obj{0.1, penalty};
                auto grads = f.params.zeros_like();
                backward(f.params, f.features, f.targets, f.batch, obj, grads);
                const auto numeric = oracle::numeric_gradient(
                    f.params,
                    [&](const SepLLParams& p) { return objective_value(p, f.features, f.targets, f.batch, obj); },
                    1e-4);
                EXPECT_LT(max_rel_error(oracle::flatten(grads), numeric, 1e-7), 1e-4)
                    << "seed " << seed << " layers " << layers;
            }
}

TEST(Backward, LossEqualsObjectiveValue) {
    auto f = small_model(3);
    const Objective obj{0.5, LfPenalty::kParameters};
    auto grads = f.params.zeros_like();
    const auto r = backward(f.params, f.features, f.targets, f.batch, obj, grads);
    EXPECT_NEAR(r.loss, objective_value(f.params, f.features, f.targets, f.batch, obj), 1e-12);
    std::vector<std::vector<double>> q, p;
    for (auto i : f.batch) {
        q.push_back(forward(f.params, f.features[i]).q);
        p.emplace_back(f.targets.row(i).begin(), f.targets.row(i).end());
    }
    EXPECT_NEAR(r.ce, ce_loss(q, p), 1e-12);
}

TEST(Backward, RejectsMismatchedTargets) {
    auto f = small_model(1);
    auto grads = f.params.zeros_like();
    const auto wrong = build_targets(MatchMatrix(4, {{0}}), true);
    const std::vector<std::size_t> b{0};
    EXPECT_THROW(backward(f.params, f.features, wrong, b, {}, grads), DataError);
}

TEST(Model, PermutationEquivariance) {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 100; ++trial) {
        auto f = small_model(trial);
        std::vector<std::size_t> perm(f.params.m());
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        const auto permuted = permute_lfs(f.params, perm);
        for (const auto& x : f.features) {
            const auto a = forward(f.params, x);
            const auto b = forward(permuted, x);
            for (std::size_t j = 0; j < perm.size(); ++j) EXPECT_NEAR(a.q[j], b.q[perm[j]], 1e-14);
            EXPECT_EQ(a.task_probs, b.task_probs);
        }
    }
}

TEST(Model, TaskPredictIsShiftInvariantUnderBiasShift) {
    for (int trial = 0; trial < 100; ++trial) {
        auto f = small_model(trial);
        auto shifted = f.params;
        for (auto& b : shifted.task_head.layers.back().bias) b += 3.0 + trial;
        for (const auto& x : f.features) EXPECT_EQ(task_predict(f.params, x), task_predict(shifted, x));
    }
}

TEST(Checkpoint, RoundTripIsBitExactAndValidates) {
    const std::vector<std::string> docs{"a b", "b c d", "e"};
    Checkpoint ck;
    ck.vocab = fit_vocabulary(docs);
    Rng rng(3);
    ck.params = make_model(ck.vocab.size(), {6, 3, Activation::kTanh}, {}, MappingMatrix({1, 0, 1, 1}, 2), rng);
    ck.config_echo = "[train]\nseed = 3\n";
    std::stringstream ss;
    write_checkpoint(ss, ck);
    const auto back = read_checkpoint(ss);
    EXPECT_EQ(back.vocab, ck.vocab);
    EXPECT_EQ(back.params, ck.params);
    EXPECT_EQ(back.config_echo, ck.config_echo);
    std::stringstream again;
    write_checkpoint(again, back);
    EXPECT_EQ(again.str(), ss.str());

    std::string bytes = ss.str();
    const auto pos = bytes.find("mapping 4 2");
    bytes.replace(pos, 11, "mapping 5 2");
    std::stringstream bad(bytes);
    EXPECT_THROW(read_checkpoint(bad), DataError);
}
