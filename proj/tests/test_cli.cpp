#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <gtest/gtest.h>

namespace fs = std::filesystem;

namespace {

const std::string kCli = HPMSM_CLI_PATH;
const fs::path kScenarios = HPMSM_SCENARIO_DIR;

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("hpmsm_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write_config(const std::string& name, const std::string& text) const {
    const fs::path p = dir_ / name;
    std::ofstream(p) << text;
    return p;
  }

  int cli(const std::string& args, const fs::path& out) const {
    const std::string cmd = kCli + " " + args + " --out " + out.string() + " > " +
                            (dir_ / "stdout.txt").string() + " 2> " +
                            (dir_ / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  fs::path dir_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> data_lines(const fs::path& p) {
  std::vector<std::string> out;
  std::ifstream in(p);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line[0] != '#') out.push_back(line);
  }
  return out;
}

}  // namespace

TEST_F(CliTest, ZeroHorizonWritesHeaderOnly) {
  const auto cfg = write_config("zero.ini", "[run]\nhorizon = 0\n");
  ASSERT_EQ(cli("run --config " + cfg.string(), dir_ / "out"), 0);
  const auto lines = data_lines(dir_ / "out" / "trajectory.csv");
  ASSERT_EQ(lines.size(), 1u);
  EXPECT_EQ(lines[0].rfind("t,j,event,", 0), 0u);
  EXPECT_EQ(data_lines(dir_ / "out" / "jumps.csv").size(), 1u);
}

TEST_F(CliTest, SignChangingProfileIsRejected) {
  const auto cfg = kScenarios / "sign_change.ini";
  EXPECT_EQ(cli("validate --config " + cfg.string(), dir_ / "out"), 1);
  EXPECT_EQ(cli("run --config " + cfg.string(), dir_ / "out"), 1);
  EXPECT_NE(slurp(dir_ / "stderr.txt").find("sign"), std::string::npos);
}

TEST_F(CliTest, UnknownKeyIsRejected) {
  const auto cfg = write_config("typo.ini", "[observer]\nkpp = 1\n");
  EXPECT_EQ(cli("validate --config " + cfg.string(), dir_ / "out"), 1);
  EXPECT_NE(slurp(dir_ / "stderr.txt").find("kpp"), std::string::npos);
}

TEST_F(CliTest, MissingConfigFails) {
  EXPECT_EQ(cli("run --config " + (dir_ / "absent.ini").string(), dir_ / "out"), 1);
  EXPECT_NE(cli("run", dir_ / "out"), 0);
}

TEST_F(CliTest, ValidateEchoesEffectiveValues) {
  ASSERT_EQ(cli("validate --config " + (kScenarios / "default.ini").string(), dir_ / "out"), 0);
  const std::string out = slurp(dir_ / "stdout.txt");
  EXPECT_NE(out.find("observer.kp"), std::string::npos);
  EXPECT_NE(out.find("ok"), std::string::npos);
}

TEST_F(CliTest, SingleVariantCompareGivesOneRow) {
  const auto cfg = write_config("cmp.ini",
                                "[profile]\nsegments = constant 0.05\n"
                                "[initial]\neta_angle = 0\nxi_hat_fraction = 1\nexact_back_emf = true\n"
                                "[run]\nhorizon = 0.02\n"
                                "[compare]\nvariants = hybrid\n");
  ASSERT_EQ(cli("compare --config " + cfg.string(), dir_ / "out"), 0);
  const auto lines = data_lines(dir_ / "out" / "compare.csv");
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[1].rfind("hybrid,", 0), 0u);
}

TEST_F(CliTest, RunIsDeterministic) {
  const auto cfg = write_config("det.ini",
                                "[profile]\nsegments = constant 0.05\n"
                                "[initial]\neta_angle = 2.5\nxi_hat_fraction = 0.5\n"
                                "[run]\nvariant = hybrid+identifier\nhorizon = 0.032\ndownsample = 50\n");
  ASSERT_EQ(cli("run --config " + cfg.string(), dir_ / "a"), 0);
  ASSERT_EQ(cli("run --config " + cfg.string(), dir_ / "b"), 0);
  for (const char* f : {"trajectory.csv", "jumps.csv", "summary.txt"}) {
    const std::string a = slurp(dir_ / "a" / f);
    EXPECT_FALSE(a.empty()) << f;
    EXPECT_EQ(a, slurp(dir_ / "b" / f)) << f;
  }
  EXPECT_EQ(data_lines(dir_ / "a" / "jumps.csv").size(), 7u);
}

TEST_F(CliTest, ReducedRunWritesArc) {
  const auto cfg = write_config("red.ini",
                                "[initial]\neta_angle = 3.0\n"
                                "[run]\nvariant = reduced_hybrid\nhorizon = 0.02\nstep = 1e-5\n"
                                "downsample = 10\n");
  ASSERT_EQ(cli("run --config " + cfg.string(), dir_ / "out"), 0);
  const auto lines = data_lines(dir_ / "out" / "trajectory.csv");
  EXPECT_GT(lines.size(), 100u);
  EXPECT_NE(slurp(dir_ / "out" / "trajectory.csv").find(",pre,"), std::string::npos);
}

TEST_F(CliTest, SweepIsSeeded) {
  const auto cfg = write_config("sw.ini",
                                "[sweep]\nepsilon_fractions = 1\neta_angles = 0\n"
                                "xi_hat_fractions = 1\nrandom_points = 2\nhorizon = 0.01\n");
  ASSERT_EQ(cli("sweep --seed 3 --config " + cfg.string(), dir_ / "a"), 0);
  ASSERT_EQ(cli("sweep --seed 3 --config " + cfg.string(), dir_ / "b"), 0);
  EXPECT_EQ(slurp(dir_ / "a" / "sweep.csv"), slurp(dir_ / "b" / "sweep.csv"));
  EXPECT_EQ(data_lines(dir_ / "a" / "sweep.csv").size(), 2u);
}
