#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cli/cli.hpp"
#include "edgeinfer/bundle.hpp"
#include "support/helpers.hpp"
#include "support/power_fixture.hpp"

using namespace edgeinfer;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  Run r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

/// Synthetic data, a backbone, a trained head and its variants, built once.
class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    ::setenv("SOURCE_DATE_EPOCH", "1700000000", 1);
    dir_ = new testgen::TempDir("cli");
    const auto d = dir_->path().string();
    ASSERT_EQ(run({"dataset", "synth", "--out", d + "/data", "--per-class", "15", "--size", "32", "--seed", "2"}).code, 0);
    ASSERT_EQ(run({"model", "fixture", "--out", d + "/backbone", "--input-size", "32", "--seed", "1"}).code, 0);
    const auto t = run({"train-head", "--model", d + "/backbone", "--manifest", d + "/data/manifest.tsv", "--out",
                        d + "/trained", "--epochs", "3", "--folds", "3", "--threads", "1"});
    ASSERT_EQ(t.code, 0) << t.err;
  }
  static void TearDownTestSuite() {
    delete dir_;
    ::unsetenv("SOURCE_DATE_EPOCH");
  }
  static std::string path(const std::string& rel) { return (dir_->path() / rel).string(); }

  static testgen::TempDir* dir_;
};

testgen::TempDir* CliPipeline::dir_ = nullptr;

}  // namespace

TEST(Cli, HelpExitsZeroForEverySubcommand) {
  const std::vector<std::vector<std::string>> commands{
      {"--help"},         {"model", "--help"},   {"model", "inspect", "--help"}, {"model", "validate", "--help"},
      {"model", "fixture", "--help"}, {"dataset", "--help"}, {"dataset", "ingest", "--help"},
      {"dataset", "augment", "--help"}, {"dataset", "split", "--help"}, {"dataset", "synth", "--help"},
      {"train-head", "--help"}, {"eval", "--help"}, {"quantize", "--help"}, {"infer", "--help"},
      {"bench", "--help"},      {"power-report", "--help"}, {"serve", "--help"}};
  for (const auto& c : commands) {
    const auto r = run(c);
    EXPECT_EQ(r.code, 0) << c.front();
    EXPECT_FALSE(r.out.empty()) << c.front();
  }
  EXPECT_NE(run({"--help"}).out.find("Exit codes"), std::string::npos);
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"quantize", "--bogus"}).code, 2);
  EXPECT_EQ(run({"quantize", "--in", "x"}).code, 2);
}

TEST(Cli, VersionPrints) {
  const auto r = run({"--version"});
  EXPECT_EQ(r.code, 0);
  EXPECT_FALSE(r.out.empty());
}

TEST(Cli, ErrorClassesMapToExitCodes) {
  EXPECT_EQ(cli::exit_code_for(ErrorCode::kIo), 3);
  EXPECT_EQ(cli::exit_code_for(ErrorCode::kChecksumMismatch), 4);
  EXPECT_EQ(cli::exit_code_for(ErrorCode::kParseError), 5);
  EXPECT_EQ(cli::exit_code_for(ErrorCode::kMissingCalibration), 6);
  EXPECT_EQ(cli::exit_code_for(ErrorCode::kWidthMismatch), 7);
  EXPECT_EQ(cli::exit_code_for(ErrorCode::kEmptyWindow), 8);
  EXPECT_EQ(cli::exit_code_for(ErrorCode::kInvalidArgument), 9);
  testgen::TempDir dir("cli-err");
  EXPECT_EQ(run({"model", "validate", (dir / "absent").string()}).code, 3);
  std::ofstream(dir / "bad.log") << "2024-01-01T00:00:00Z,5\nnonsense\n";
  const auto r = run({"power-report", "--log", (dir / "bad.log").string(), "--idle",
                      "2024-01-01T00:00:00Z/2024-01-01T00:01:00Z", "--window",
                      "fp32=2024-01-01T00:01:00Z/2024-01-01T00:02:00Z"});
  EXPECT_EQ(r.code, 5);
  EXPECT_NE(r.err.find("2"), std::string::npos);
}

TEST(Cli, PowerReportPrintsRatios) {
  testgen::TempDir dir("cli-power");
  const auto f = testgen::reference_power_fixture();
  std::ofstream(dir / "power.log") << f.log;
  std::vector<std::string> args{"power-report", "--log", (dir / "power.log").string(), "--idle",
                                format_iso8601(f.idle.start) + "/" + format_iso8601(f.idle.end)};
  for (const auto& w : f.windows) {
    args.push_back("--window");
    args.push_back(w.label + "=" + format_iso8601(w.start) + "/" + format_iso8601(w.end));
  }
  const auto r = run(args);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("0.92"), std::string::npos);
  EXPECT_NE(r.out.find("0.90"), std::string::npos);
}

TEST_F(CliPipeline, TrainedBundleValidatesAndInfers) {
  EXPECT_EQ(run({"model", "validate", path("trained")}).code, 0);
  const auto inspect = run({"model", "inspect", path("trained")});
  EXPECT_EQ(inspect.code, 0);
  EXPECT_NE(inspect.out.find("MatMul"), std::string::npos);
  const auto img = path("data/Monkeypox/Monkeypox_0000.png");
  const auto r = run({"infer", "--model", path("trained"), "--image", img});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("%"), std::string::npos);
  std::ofstream(path("junk.png")) << "junk";
  EXPECT_EQ(run({"infer", "--model", path("trained"), "--image", path("junk.png")}).code, 5);
}

TEST_F(CliPipeline, QuantizeAllIsByteIdenticalAcrossRuns) {
  for (const char* out : {"q1", "q2"}) {
    const auto r = run({"quantize", "--in", path("trained"), "--out", path(out), "--precision", "all",
                        "--calib-manifest", path("data/manifest.tsv"), "--calib-count", "8", "--threads", "1"});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  std::vector<fs::path> variants;
  for (const auto& e : fs::directory_iterator(path("q1"))) variants.push_back(e.path());
  ASSERT_EQ(variants.size(), 4u);
  for (const auto& v : variants) {
    for (const char* file : {kManifestFile, kWeightsFile}) {
      const auto a = slurp(v / file);
      EXPECT_FALSE(a.empty()) << v;
      EXPECT_EQ(a, slurp(fs::path(path("q2")) / v.filename() / file)) << v.filename() << "/" << file;
    }
    EXPECT_EQ(run({"model", "validate", v.string()}).code, 0) << v;
  }
}

TEST_F(CliPipeline, EvalReportsAreByteIdentical) {
  for (const char* out : {"e1.json", "e2.json"}) {
    const auto r = run({"eval", "--model", path("trained"), "--manifest", path("data/manifest.tsv"), "--folds", "3",
                        "--partition", "test", "--fold", "1", "--threads", "1", "--out", path(out)});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  EXPECT_FALSE(slurp(path("e1.json")).empty());
  EXPECT_EQ(slurp(path("e1.json")), slurp(path("e2.json")));
}

TEST_F(CliPipeline, DatasetCommandsReportCounts) {
  const auto aug = run({"dataset", "augment", "--manifest", path("data/manifest.tsv"), "--out", path("aug.tsv"),
                        "--factor", "14", "--seed", "1"});
  ASSERT_EQ(aug.code, 0) << aug.err;
  EXPECT_NE(aug.out.find("30 originals -> 420 items"), std::string::npos) << aug.out;
  const auto split = run({"dataset", "split", "--manifest", path("aug.tsv"), "--folds", "3", "--seed", "1"});
  EXPECT_EQ(split.code, 0) << split.err;
  EXPECT_EQ(run({"dataset", "augment", "--manifest", path("data/manifest.tsv"), "--out", path("x.tsv"), "--factor",
                 "0"})
                .code,
            2);
}

TEST_F(CliPipeline, BenchWritesAReport) {
  const auto r = run({"bench", "--model", path("trained"), "--manifest", path("data/manifest.tsv"), "--count", "6",
                      "--batch-size", "4", "--warmup", "1", "--reps", "1", "--out", path("bench.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(slurp(path("bench.json")).find("images_per_second"), std::string::npos);
}
