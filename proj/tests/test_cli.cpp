#include <filesystem>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "dncc/checkpoint.hpp"
#include "dncc/cli.hpp"
#include "dncc/text.hpp"

namespace fs = std::filesystem;
using dncc::read_file;

namespace {

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("dncc_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    int run(std::vector<std::string> args) {
        out_.str("");
        err_.str("");
        return dncc::cli::run(args, out_, err_);
    }
    std::string p(const std::string& name) const { return (dir_ / name).string(); }

    // Small, fast training flags.
    static std::vector<std::string> quick(std::vector<std::string> extra) {
        std::vector<std::string> a{"train",   "--per-class", "40", "--dim",   "6",   "--hidden", "16",
                                   "--epochs", "3",          "--batch", "32", "--heads", "4"};
        a.insert(a.end(), extra.begin(), extra.end());
        return a;
    }

    fs::path dir_;
    std::ostringstream out_, err_;
};

// Checkpoints embed wall-clock timings, so compare what they restore rather than raw bytes.
void expect_same_state(const std::string& a, const std::string& b) {
    const auto ca = dncc::load_checkpoint(a), cb = dncc::load_checkpoint(b);
    const auto pa = ca.model.parameters(), pb = cb.model.parameters();
    ASSERT_EQ(pa.size(), pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        EXPECT_TRUE(std::equal(pa[i].data().begin(), pa[i].data().end(), pb[i].data().begin())) << i;
    }
    EXPECT_EQ(ca.state->velocity, cb.state->velocity);
    EXPECT_EQ(ca.state->next_epoch, cb.state->next_epoch);
}

}  // namespace

TEST_F(CliTest, TrainWritesArtifacts) {
    EXPECT_EQ(run(quick({"--lambda", "ramp:1e-2", "--out", p("r")})), 0) << err_.str();
    for (const char* f : {"manifest.json", "checkpoint.bin", "metrics.jsonl", "metrics.csv", "timing.csv"}) {
        EXPECT_TRUE(fs::exists(dir_ / "r" / f)) << f;
    }
    const auto manifest = nlohmann::json::parse(read_file(p("r/manifest.json")));
    EXPECT_TRUE(manifest.contains("dataset_fingerprint"));
    EXPECT_EQ(manifest.at("config").at("ensemble").at("num_heads"), 4);
}

TEST_F(CliTest, ZeroHeadsIsUsageError) {
    EXPECT_EQ(run(quick({"--heads", "0", "--out", p("r")})), 2);
    EXPECT_FALSE(err_.str().empty());
}

TEST_F(CliTest, UnknownFlagIsUsageError) {
    EXPECT_EQ(run({"train", "--no-such-flag"}), 2);
    EXPECT_EQ(run({}), 2);
}

TEST_F(CliTest, IndivisibleWidthIsUsageError) {
    EXPECT_EQ(run(quick({"--heads", "3", "--out", p("r")})), 2);
}

TEST_F(CliTest, BadLambdaIsUsageError) {
    EXPECT_EQ(run(quick({"--lambda", "linear:1", "--out", p("r")})), 2);
}

TEST_F(CliTest, MissingIdxPathsIsUsageError) {
    EXPECT_EQ(run({"train", "--data", "idx", "--out", p("r")}), 2);
}

TEST_F(CliTest, DivergentTrainingExitsOne) {
    EXPECT_EQ(run(quick({"--lr", "1e200", "--out", p("r")})), 1);
}

TEST_F(CliTest, SameFlagsGiveIdenticalMetrics) {
    ASSERT_EQ(run(quick({"--out", p("a")})), 0);
    ASSERT_EQ(run(quick({"--out", p("b")})), 0);
    EXPECT_EQ(read_file(p("a/metrics.jsonl")), read_file(p("b/metrics.jsonl")));
    EXPECT_EQ(read_file(p("a/metrics.csv")), read_file(p("b/metrics.csv")));
    expect_same_state(p("a/checkpoint.bin"), p("b/checkpoint.bin"));
}

TEST_F(CliTest, StopAndResumeMatchesUninterrupted) {
    ASSERT_EQ(run(quick({"--epochs", "6", "--out", p("full")})), 0);
    ASSERT_EQ(run(quick({"--epochs", "6", "--stop-after", "3", "--out", p("part")})), 0);
    ASSERT_EQ(run({"train", "--resume", p("part/checkpoint.bin"), "--out", p("part")}), 0) << err_.str();
    EXPECT_EQ(read_file(p("full/metrics.jsonl")), read_file(p("part/metrics.jsonl")));
    expect_same_state(p("full/checkpoint.bin"), p("part/checkpoint.bin"));
}

TEST_F(CliTest, EvaluateCheckpoint) {
    ASSERT_EQ(run(quick({"--out", p("r")})), 0);
    ASSERT_EQ(run({"evaluate", "--checkpoint", p("r/checkpoint.bin")}), 0) << err_.str();
    const auto j = nlohmann::json::parse(out_.str());
    EXPECT_LE(j.at("ensemble_loss").get<double>(), j.at("mean_individual_loss").get<double>() + 1e-9);
}

TEST_F(CliTest, VerifyPassesAndIsDeterministic) {
    ASSERT_EQ(run({"verify", "--trials", "1", "--seed", "7"}), 0) << out_.str();
    const std::string first = out_.str();
    ASSERT_EQ(run({"verify", "--trials", "1", "--seed", "7"}), 0);
    EXPECT_EQ(out_.str(), first);
}

TEST_F(CliTest, SignFlipCanaryFails) {
    EXPECT_EQ(run({"verify", "--trials", "20", "--inject-sign-flip", "--out", p("v")}), 1);
    EXPECT_TRUE(fs::exists(dir_ / "v" / "verify_failure.json"));
}

TEST_F(CliTest, DiversitySelfComparisonIsZero) {
    ASSERT_EQ(run(quick({"--out", p("r")})), 0);
    ASSERT_EQ(run({"diversity", "--dncc", p("r/checkpoint.bin"), "--baseline", p("r/checkpoint.bin"), "--out",
                   p("d")}),
              0)
        << err_.str();
    const auto lines = dncc::split_lines(read_file(p("d/deltas.csv")));
    std::size_t rows = 0;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        ++rows;
        EXPECT_NE(lines[i].find(",0,0"), std::string_view::npos) << lines[i];
    }
    EXPECT_EQ(rows, 6u);
}

TEST_F(CliTest, DiversityHeadMismatchIsUsageError) {
    ASSERT_EQ(run(quick({"--out", p("a")})), 0);
    ASSERT_EQ(run(quick({"--heads", "2", "--out", p("b")})), 0);
    EXPECT_EQ(run({"diversity", "--dncc", p("a/checkpoint.bin"), "--baseline", p("b/checkpoint.bin"), "--out",
                   p("d")}),
              2);
}

TEST_F(CliTest, LambdaAblationRowCount) {
    std::vector<std::string> a{"ablate", "lambda", "--lambda-list", "0,1e-8,1e-6,1e-4,1e-2,1", "--seeds", "0,1",
                               "--per-class", "20", "--dim", "4", "--hidden", "8", "--heads", "2",
                               "--epochs", "1", "--out", p("ab")};
    ASSERT_EQ(run(a), 0) << err_.str();
    const auto lines = dncc::split_lines(read_file(p("ab/ablation.csv")));
    std::size_t rows = 0;
    for (std::size_t i = 1; i < lines.size(); ++i) rows += !lines[i].empty();
    EXPECT_EQ(rows, 12u);
}

TEST_F(CliTest, FailedSubRunExitsOneAfterSweep) {
    std::vector<std::string> a{"ablate", "size", "--m-list", "2,3", "--per-class", "20", "--dim", "4",
                               "--hidden", "8", "--epochs", "1", "--out", p("ab")};
    EXPECT_EQ(run(a), 1);
    const auto lines = dncc::split_lines(read_file(p("ab/ablation.csv")));
    std::size_t rows = 0;
    for (std::size_t i = 1; i < lines.size(); ++i) rows += !lines[i].empty();
    EXPECT_EQ(rows, 1u);
    EXPECT_TRUE(fs::exists(dir_ / "ab" / "failures.csv"));
}
