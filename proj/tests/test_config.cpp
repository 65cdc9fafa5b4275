#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "sepll/sepll.hpp"
#include "temp_dir.hpp"

using namespace sepll;

namespace {

RunConfig parse(const std::string& text) {
    std::istringstream is(text);
    return parse_config(is, "/base");
}

}  // namespace

TEST(Config, ParsesAllSections) {
    const auto cfg = parse(R"([data]
path = data/youtube
format = jsonl
source = lfs

[lfs]
sub = keyword spam subscribe
link = regex spam https?://

[encoder]
max_features = 100
hidden = 32
d = 8
activation = relu

[model]
head_layers = 2
head_hidden = 16

[train]
learning_rate = 0.005
batch_size = 8
warmup_steps = 100
weight_decay = 0.001
l2_lf = 0.5
lf_penalty = activations
noise_lambda = 0.2
use_unlabeled = false
max_epochs = 3
patience = 1
seed = 11
metric = macro_f1
)");
    EXPECT_EQ(cfg.data.path, "/base/data/youtube");
    EXPECT_EQ(cfg.data.format, "jsonl");
    EXPECT_EQ(cfg.data.source, LabelSource::kLfs);
    ASSERT_EQ(cfg.lf_rules.size(), 2u);
    EXPECT_EQ(cfg.lf_rules[1].first, "link");
    EXPECT_EQ(cfg.experiment.vocab.max_features, 100u);
    EXPECT_EQ(cfg.experiment.encoder.activation, Activation::kRelu);
    EXPECT_EQ(cfg.experiment.model.head_layers, 2u);
    const auto& t = cfg.experiment.train;
    EXPECT_DOUBLE_EQ(t.learning_rate, 0.005);
    EXPECT_EQ(t.warmup_steps, 100u);
    EXPECT_EQ(t.lf_penalty, LfPenalty::kActivations);
    EXPECT_FALSE(t.use_unlabeled);
    EXPECT_EQ(t.seed, 11u);
    EXPECT_EQ(t.metric, Metric::kMacroF1);
}

TEST(Config, EchoRoundTrips) {
    auto cfg = parse("[data]\nformat = synth\nsynth_n_train = 40\n[train]\nseed = 3\nl2_lf = 0.25\n");
    const std::string echo = config_to_ini(cfg);
    std::istringstream is(echo);
    const auto again = parse_config(is);
    EXPECT_EQ(config_to_ini(again), echo);
    EXPECT_EQ(again.data.synth.n_train, 40u);
    EXPECT_DOUBLE_EQ(again.experiment.train.l2_lf, 0.25);
}

TEST(Config, RejectsUnknownAndInvalidValues) {
    EXPECT_THROW(parse("[data]\npath = x\n[train]\nlearning_rat = 1\n"), ConfigError);
    EXPECT_THROW(parse("[data]\npath = x\n[optimizer]\nlr = 1\n"), ConfigError);
    EXPECT_THROW(parse("[data]\npath = x\n[train]\nnoise_lambda = 1.5\n"), ConfigError);
    EXPECT_THROW(parse("[data]\npath = x\n[train]\nweight_decay = -0.1\n"), ConfigError);
    EXPECT_THROW(parse("[data]\npath = x\n[train]\nbatch_size = 0\n"), ConfigError);
    EXPECT_THROW(parse("[data]\npath = x\n[train]\nseed = abc\n"), ConfigError);
    EXPECT_THROW(parse("[data]\nformat = csv\npath = x\n"), ConfigError);
    EXPECT_THROW(parse("[data]\nformat = wrench-json\n"), ConfigError);
    EXPECT_THROW(parse("[data]\npath = x\nsource = lfs\n"), ConfigError);
    try {
        parse("[data]\npath = x\n[train]\nmetric = bleu\n");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ExitCode::kUsage);
    }
}

TEST(Config, LoadDataAppliesRules) {
    auto cfg = parse(R"([data]
format = synth
synth_n_train = 50
synth_n_dev = 10
synth_n_test = 10
source = lfs
[lfs]
a = keyword class0 kw0c0, kw1c0
b = regex class1 kw[0-9]c1
)");
    const auto loaded = load_data(cfg);
    ASSERT_EQ(loaded.lfs.mapping.m(), 2u);
    EXPECT_EQ(loaded.lfs.mapping.class_of(1), 1u);
    for (std::size_t i = 0; i < loaded.splits.train.size(); ++i) {
        const auto& w = loaded.splits.train.weak_labels[i];
        EXPECT_EQ(loaded.lfs.train.contains(i, 0), w[0] == 0 || w[1] == 0);
        EXPECT_EQ(loaded.lfs.train.contains(i, 1), w[0] == 1 || w[1] == 1 || w[2] == 1);
    }
}

TEST(Manifest, DigestsAndVerification) {
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    TempDir tmp;
    const auto f = tmp.path() / "a.txt";
    std::ofstream(f) << "hello";
    RunManifest m;
    m.command = "train";
    m.seed = 4;
    m.config_echo = "[train]\nseed = 4\n";
    m.add_artifact("x", f);
    const auto back = manifest_from_json(to_json(m));
    EXPECT_EQ(back.artifacts[0].sha256, m.artifacts[0].sha256);
    EXPECT_EQ(back.seed, 4u);
    EXPECT_TRUE(verify_manifest(back).empty());
    std::ofstream(f) << "changed";
    EXPECT_EQ(verify_manifest(back).size(), 1u);
}
