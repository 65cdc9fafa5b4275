#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "sepll/sepll.hpp"

using namespace sepll;

TEST(Metrics, AccuracyAndF1FromConfusion) {
    const std::vector<ClassIndex> gold{0, 0, 0, 1, 1, 2}, pred{0, 1, 0, 1, 0, 2};
    const auto r = task_metrics(pred, gold, Metric::kMacroF1, 3);
    EXPECT_DOUBLE_EQ(r.confusion.accuracy(), 4.0 / 6.0);
    // class 0: p=2/3 r=2/3; class 1: p=1/2 r=1/2; class 2: p=1 r=1
    EXPECT_NEAR(r.value, (2.0 / 3.0 + 0.5 + 1.0) / 3.0, 1e-15);
    EXPECT_DOUBLE_EQ(r.precision[1], 0.5);
    const std::vector<ClassIndex> g2{1, 1, 0, 0}, p2{1, 0, 0, 0};
    const auto b = task_metrics(p2, g2, Metric::kBinaryF1, 2, 1);
    EXPECT_NEAR(b.value, 2.0 * 1.0 * 0.5 / 1.5, 1e-15);
    EXPECT_THROW(task_metrics(pred, gold, Metric::kBinaryF1, 3), ConfigError);
}

TEST(Metrics, EmptyClassesScoreZeroNotNan) {
    const std::vector<ClassIndex> gold{0, 0}, pred{0, 0};
    const auto r = task_metrics(pred, gold, Metric::kMacroF1, 2);
    EXPECT_DOUBLE_EQ(r.precision[1], 0.0);
    EXPECT_FALSE(std::isnan(r.value));
}

TEST(EvalReport, JsonRoundTrip) {
    const std::vector<ClassIndex> gold{0, 1, 1, 0}, pred{0, 1, 0, 0};
    const auto r = task_metrics(pred, gold, Metric::kAccuracy, 2, 1, "dev");
    EXPECT_EQ(eval_report_from_json(to_json(r)), r);
}

TEST(LfMatchPredict, StrictThreshold) {
    // m = 8, k = 4: threshold 0.5, a probability of exactly 0.5 is not a match.
    const std::vector<std::vector<double>> probs{{0.5, 0.5, 0, 0, 0, 0, 0, 0}, {0.6, 0.4, 0, 0, 0, 0, 0, 0}};
    const auto pred = lf_match_predict(probs, 4);
    EXPECT_EQ(pred.row_count(0), 0u);
    EXPECT_TRUE(pred.contains(1, 0));
    EXPECT_FALSE(pred.contains(1, 1));
    EXPECT_EQ(lf_match_predict(probs, 2).row_count(1), 2u);  // threshold 0.25
    EXPECT_THROW(lf_match_predict(probs, 0), ConfigError);
}

TEST(Memorization, ScorePathMatchesCellCountingOracle) {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t m = 2 + rng() % 10;
        const std::size_t n = 1 + rng() % 12;
        const auto L = oracle::random_matches(rng, n, m, 0.25);
        std::vector<std::vector<double>> probs;
        for (std::size_t i = 0; i < n; ++i) probs.push_back(softmax(oracle::random_vector(rng, m, 4.0)));
        const int k = 1 + static_cast<int>(rng() % 3);
        const auto pm = score_path(probs, L, k);

        long tp = 0, tn = 0, fp = 0, fn = 0;
        long double ce = 0;
        long matched = 0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                const bool truth = L.contains(i, j);
                const bool guess = probs[i][j] > static_cast<double>(k) / static_cast<double>(m);
                (truth ? (guess ? tp : fn) : (guess ? fp : tn))++;
            }
            if (L.row_count(i) == 0) continue;
            ++matched;
            for (auto j : L.row(i)) ce -= std::log(std::max<long double>(probs[i][j], 1e-12L)) / L.row_count(i);
        }
        auto f1 = [](long t, long f_p, long f_n) {
            const double p = t + f_p ? static_cast<double>(t) / static_cast<double>(t + f_p) : 0.0;
            const double r = t + f_n ? static_cast<double>(t) / static_cast<double>(t + f_n) : 0.0;
            return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
        };
        const double total = static_cast<double>(n * m);
        EXPECT_NEAR(pm.accuracy, static_cast<double>(tp + tn) / total, 1e-12);
        EXPECT_NEAR(pm.macro_f1, 0.5 * (f1(tp, fp, fn) + f1(tn, fn, fp)), 1e-12);
        EXPECT_NEAR(pm.cross_entropy, matched ? static_cast<double>(ce / matched) : 0.0, 1e-10);
    }
}

TEST(Memorization, UniformCrossEntropyIsLogM) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t m = 2 + rng() % 20;
        auto L = oracle::random_matches(rng, 10, m, 0.3);
        if (L.nnz() == 0) continue;
        EXPECT_NEAR(uniform_cross_entropy(L), std::log(static_cast<double>(m)), 1e-12);
        std::vector<std::vector<double>> uni(10, std::vector<double>(m, 1.0 / static_cast<double>(m)));
        EXPECT_NEAR(score_path(uni, L, 4).cross_entropy, std::log(static_cast<double>(m)), 1e-12);
    }
}

TEST(Memorization, PathsOfModelAndDimensionCheck) {
    Rng rng(3);
    const MappingMatrix T({0, 1, 1, 0, 1}, 2);
    const auto params = make_model(6, {8, 4, Activation::kTanh}, {}, T, rng);
    std::mt19937_64 g(3);
    std::vector<FeatureVector> feats;
    for (int i = 0; i < 4; ++i) feats.push_back(oracle::random_features(g, 6, 3));
    const auto d = path_distributions(params, feats);
    for (std::size_t i = 0; i < feats.size(); ++i) {
        const auto t = forward(params, feats[i]);
        EXPECT_EQ(d.probs[1][i], t.q);
        for (std::size_t j = 0; j < 5; ++j) {
            // task-mapped path: softmax over m of task_logits[class_of(j)]
            long double z = 0;
            for (std::size_t l = 0; l < 5; ++l) z += std::exp(static_cast<long double>(t.task_logits[T.class_of(l)]));
            EXPECT_NEAR(d.probs[2][i][j], static_cast<double>(std::exp((long double)t.task_logits[T.class_of(j)]) / z),
                        1e-14);
        }
    }
    const MatchMatrix wrong(4, std::vector<std::vector<MatchMatrix::Index>>(4));
    try {
        memorization_report(params, feats, wrong);
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("LF dimension mismatch"), std::string::npos);
    }
}

TEST(Memorization, JsonRoundTrip) {
    MemorizationReport r;
    r.threshold_k = 3;
    r.rows = 10;
    r.matched_rows = 7;
    r.paths[0] = {0.9, 0.6, 1.2};
    r.paths[1] = {0.8, 0.55, 1.1};
    r.paths[2] = {0.85, 0.5, 1.3};
    r.uniform_ce = std::log(9.0);
    EXPECT_EQ(memorization_from_json(to_json(r)), r);
}

TEST(MatchBreakdown, GroupsBySupport) {
    const MatchMatrix L(3, {{0}, {}, {0, 1}, {2}, {}});
    const std::vector<ClassIndex> gold{0, 1, 1, 0, 0}, pred{0, 1, 0, 1, 0};
    const auto groups = match_count_breakdown(pred, gold, L, Metric::kAccuracy, 2);
    ASSERT_EQ(groups.size(), 3u);
    EXPECT_EQ(groups[0], (MatchGroup{0, 1.0, 2}));
    EXPECT_EQ(groups[1], (MatchGroup{1, 0.5, 2}));
    EXPECT_EQ(groups[2], (MatchGroup{2, 0.0, 1}));
    std::size_t total = 0;
    for (const auto& g : groups) total += g.support;
    EXPECT_EQ(total, L.n());
    EXPECT_EQ(breakdown_from_json(to_json(groups, Metric::kAccuracy)), groups);
    EXPECT_NE(breakdown_svg(groups, Metric::kAccuracy).find("<svg"), std::string::npos);
}

TEST(Gap, AbsoluteDifferencePerCell) {
    ReportCells a{{"x", 0.9}, {"y", 0.2}}, b{{"x", 0.7}, {"y", 0.5}};
    const auto g = train_test_gap(a, b);
    EXPECT_NEAR(g.at("x"), 0.2, 1e-15);
    EXPECT_NEAR(g.at("y"), 0.3, 1e-15);
    EXPECT_THROW(train_test_gap(a, ReportCells{{"x", 1.0}}), DataError);
}
