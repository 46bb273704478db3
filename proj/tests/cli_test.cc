#include "cli.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "ddmpc/scenario.h"

namespace ddmpc {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code{};
  std::string out;
  std::string err;
};

Result RunTool(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  Result r;
  r.code = RunCli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string ReadAll(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("ddmpc_cli_test_" +
            std::string(::testing::UnitTest::GetInstance()
                            ->current_test_info()
                            ->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

TEST_F(CliTest, ListsPresets) {
  const Result r = RunTool({"presets"});
  EXPECT_EQ(r.code, kExitOk);
  for (const std::string& name : PresetNames()) {
    EXPECT_NE(r.out.find(name + "\n"), std::string::npos) << name;
  }
  const Result show = RunTool({"presets", "--show", "viB_periodic"});
  EXPECT_EQ(show.code, kExitOk);
  EXPECT_EQ(ParseScenarioText(show.out), Preset("viB_periodic"));
}

TEST_F(CliTest, ValidatesPresets) {
  const Result r = RunTool({"validate", "--scenario", "viA_lipschitz"});
  EXPECT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("ok"), std::string::npos);
}

TEST_F(CliTest, ZeroStepsIsValidationError) {
  const Result r = RunTool({"run", "--scenario", "viA_lipschitz", "--steps", "0",
                        "--output", dir_.string()});
  EXPECT_EQ(r.code, kExitValidation);
  EXPECT_NE(r.err.find("steps"), std::string::npos) << r.err;
}

TEST_F(CliTest, UnknownOptionAndScenario) {
  EXPECT_EQ(RunTool({"run", "--bogus"}).code, kExitValidation);
  EXPECT_EQ(RunTool({"run", "--scenario", "no_such_thing"}).code, kExitValidation);
  EXPECT_EQ(RunTool({"run", "--scenario", "viA_lipschitz", "--mode", "fast"}).code,
            kExitValidation);
}

TEST_F(CliTest, InitialInfeasibleExitCode) {
  // A prior so wide that the input gain may vanish: no controller can
  // guarantee decrease for every admissible system.
  ScenarioConfig c = Preset("viA_lipschitz");
  c.name = "wide_prior";
  c.prior.kind = PriorSpec::Kind::kEllipsoid;
  c.prior.center_a = c.prior.blocks.m12.leftCols(2);
  c.prior.center_b = c.prior.blocks.m12.rightCols(1);
  c.prior.d = Matrix::Identity(2, 2);
  c.prior.blocks = QmiBlocks{};
  c.seeds = 1;
  const fs::path file = dir_ / "wide.json";
  std::ofstream(file) << SerializeScenario(c);
  const Result r = RunTool({"run", "--scenario", file.string(), "--steps", "5",
                        "--output", (dir_ / "out").string()});
  EXPECT_EQ(r.code, kExitInitialInfeasible) << r.err;
  EXPECT_NE(r.err.find("bootstrap"), std::string::npos) << r.err;
}

TEST_F(CliTest, RunWritesDeterministicOutputs) {
  const std::vector<std::string> base = {"run", "--scenario", "viA_lipschitz",
                                         "--steps", "8", "--seeds", "2",
                                         "--compare-static", "--output"};
  std::vector<std::string> a = base;
  a.push_back((dir_ / "a").string());
  std::vector<std::string> b = base;
  b.push_back((dir_ / "b").string());
  const Result ra = RunTool(a);
  ASSERT_EQ(ra.code, kExitOk) << ra.err;
  ASSERT_EQ(RunTool(b).code, kExitOk);
  EXPECT_NE(ra.out.find("mean improvement"), std::string::npos);
  int files = 0;
  for (const auto& entry : fs::directory_iterator(dir_ / "a")) {
    const fs::path other = dir_ / "b" / entry.path().filename();
    ASSERT_TRUE(fs::exists(other)) << other;
    EXPECT_EQ(ReadAll(entry.path()), ReadAll(other)) << entry.path();
    ++files;
  }
  // Four trajectories, summary, state norms, inputs and overlay.
  EXPECT_EQ(files, 8);
  EXPECT_TRUE(fs::exists(dir_ / "a" / "viA_lipschitz_adaptive_seed0.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "a" / "viA_lipschitz_static_seed1.csv"));
}

TEST_F(CliTest, CompareStaticRejectedInBootstrapMode) {
  const Result r = RunTool({"run", "--scenario", "viA_widened_bootstrap",
                        "--steps", "12", "--seeds", "1", "--compare-static",
                        "--output", dir_.string()});
  EXPECT_EQ(r.code, kExitValidation);
}

TEST_F(CliTest, HelpExitsCleanly) {
  const Result r = RunTool({"--help"});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_NE(r.out.find("run"), std::string::npos);
}

}  // namespace
}  // namespace ddmpc
