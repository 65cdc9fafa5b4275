// Runs the built command-line tool end to end on a small synthetic dataset.

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <sys/wait.h>

#include "sepll/sepll.hpp"
#include "temp_dir.hpp"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(SEPLL_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        root = tmp.path();
        ASSERT_EQ(run("synth --seed 1 --n-train 200 --n-dev 60 --n-test 60 --out " + (root / "ds").string()), 0);
        std::ofstream(root / "run.ini") << "[data]\npath = ds\n[encoder]\nhidden = 16\nd = 8\n"
                                           "[train]\nmax_epochs = 3\nseed = 5\n";
    }
    std::string config() const { return "--config " + (root / "run.ini").string(); }

    TempDir tmp;
    fs::path root;
};

}  // namespace

TEST_F(Cli, TrainEvalAnalyzePipeline) {
    const auto out = root / "train";
    ASSERT_EQ(run("train " + config() + " --out " + out.string()), 0);
    for (const char* f : {"checkpoint.bin", "history.csv", "manifest.json"}) EXPECT_TRUE(fs::exists(out / f)) << f;
    const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
    EXPECT_EQ(manifest["seed"], 5);
    EXPECT_EQ(manifest["tool_version"], sepll::kToolVersion);
    EXPECT_NE(manifest["config"].get<std::string>().find("seed = 5"), std::string::npos);
    EXPECT_TRUE(sepll::verify_manifest(sepll::manifest_from_json(manifest)).empty());

    const std::string ck = " --checkpoint " + (out / "checkpoint.bin").string();
    ASSERT_EQ(run("eval " + config() + ck + " --out " + (root / "eval").string()), 0);
    EXPECT_TRUE(fs::exists(root / "eval" / "eval.json"));
    for (const char* which : {"task", "memorization", "matches", "gap"})
        EXPECT_EQ(run("analyze " + config() + ck + " --which " + which + " --plot --out " + (root / "an").string()), 0)
            << which;
    EXPECT_TRUE(fs::exists(root / "an" / "memorization.svg"));
    EXPECT_TRUE(fs::exists(root / "an" / "matches.csv"));
    EXPECT_EQ(run("analyze " + config() + ck + " --which nope --out " + (root / "an").string()), 1);
    EXPECT_EQ(run("analyze " + config() + ck + " --threshold-k 7 --out " + (root / "an").string()), 1);
}

TEST_F(Cli, SameSeedGivesIdenticalArtifacts) {
    ASSERT_EQ(run("train " + config() + " --out " + (root / "a").string()), 0);
    ASSERT_EQ(run("train " + config() + " --out " + (root / "b").string()), 0);
    EXPECT_EQ(slurp(root / "a" / "checkpoint.bin"), slurp(root / "b" / "checkpoint.bin"));
    EXPECT_EQ(slurp(root / "a" / "history.csv"), slurp(root / "b" / "history.csv"));
    ASSERT_EQ(run("train " + config() + " --seed 6 --out " + (root / "c").string()), 0);
    EXPECT_NE(slurp(root / "a" / "checkpoint.bin"), slurp(root / "c" / "checkpoint.bin"));
}

TEST_F(Cli, ConvertWritesMatricesAndProvenance) {
    ASSERT_EQ(run("convert " + (root / "ds").string() + " --out " + (root / "conv").string()), 0);
    std::ifstream t(root / "conv" / "T.classof");
    const auto T = sepll::read_class_of(t);
    EXPECT_EQ(T.m(), 6u);
    std::ifstream l(root / "conv" / "L.train.triplets");
    EXPECT_EQ(sepll::read_triplets(l).n(), 200u);
    EXPECT_NE(slurp(root / "conv" / "provenance.csv").find("original_lf"), std::string::npos);
}

TEST_F(Cli, ExitCodes) {
    EXPECT_EQ(run("--help"), 0);
    EXPECT_EQ(run(""), 1);
    EXPECT_EQ(run("train --bogus-flag"), 1);
    EXPECT_EQ(run("train --config " + (root / "missing.ini").string()), 1);
    EXPECT_EQ(run("ablate " + config() + " --datasets '' --out " + (root / "ab").string()), 1);

    // Malformed dataset: data error.
    std::ofstream(root / "ds" / "train.json") << "{ \"0\": {\"label\": 0, ";
    EXPECT_EQ(run("stats " + config() + " --out " + (root / "st").string()), 2);
}

TEST_F(Cli, MissingDevSplitIsDataError) {
    fs::remove(root / "ds" / "valid.json");
    const std::string cmd = std::string(SEPLL_CLI) + " train " + config() + " --out " + (root / "t").string() +
                            " 2> " + (root / "err.txt").string();
    const int status = std::system(cmd.c_str());
    EXPECT_EQ(WEXITSTATUS(status), 2);
    EXPECT_NE(slurp(root / "err.txt").find("dev split required for early stopping"), std::string::npos);
}

TEST_F(Cli, CheckpointLfMismatchIsRejected) {
    ASSERT_EQ(run("train " + config() + " --out " + (root / "t").string()), 0);
    std::ofstream(root / "rules.ini") << "[data]\npath = ds\nsource = lfs\n[lfs]\nonly = keyword class0 kw0c0\n"
                                         "[encoder]\nhidden = 16\nd = 8\n";
    const std::string cmd = std::string(SEPLL_CLI) + " eval --config " + (root / "rules.ini").string() +
                            " --checkpoint " + (root / "t" / "checkpoint.bin").string() + " --out " +
                            (root / "e").string() + " 2> " + (root / "err.txt").string();
    const int status = std::system(cmd.c_str());
    EXPECT_NE(WEXITSTATUS(status), 0);
    EXPECT_NE(slurp(root / "err.txt").find("LF dimension mismatch"), std::string::npos);
}

TEST_F(Cli, AblateWritesTable) {
    std::ofstream(root / "quick.ini") << "[data]\npath = ds\n[encoder]\nhidden = 8\nd = 4\n[train]\nmax_epochs = 1\n";
    ASSERT_EQ(run("ablate --config " + (root / "quick.ini").string() + " --datasets " + (root / "ds").string() + "," +
                  (root / "ds").string() + " --out " + (root / "ab").string()),
              0);
    const auto table = slurp(root / "ab" / "ablation.csv");
    EXPECT_NE(table.find("avg_dev"), std::string::npos);
    for (const char* v : {"Full", "-WeightDecay", "-L2", "-Unlabeled", "-Noise", "Basic"})
        EXPECT_NE(table.find(v), std::string::npos) << v;
}
