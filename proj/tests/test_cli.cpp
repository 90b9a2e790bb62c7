#include <cstdio>
#include <filesystem>
#include <fstream>

#include <sys/wait.h>
#include <unistd.h>

#include <gtest/gtest.h>

#include <geoflow/io.hpp>

using namespace geoflow;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string output;
};

Outcome cli(const std::string& args, const std::string& env = "") {
  std::string cmd = env + " " + GEOFLOW_CLI_PATH + " " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  std::string out;
  char buf[4096];
  while (size_t n = std::fread(buf, 1, sizeof buf, p)) out.append(buf, n);
  int status = pclose(p);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

class CliDir : public ::testing::Test {
 protected:
  fs::path dir;
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("geoflow_cli_" + std::to_string(::getpid()) + "_" +
           ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  std::string config(const std::string& name, const std::string& text) {
    auto p = dir / name;
    std::ofstream(p) << text;
    return p.string();
  }
  std::string out(const std::string& sub) const { return (dir / sub).string(); }
};

const char* kSmallShear =
    "system.kind = shear-flow\n"
    "geometry.Nx = 32\n"
    "geometry.Ny = 16\n"
    "integration.t_end = 0.5\n"
    "integration.sample_every = 0.1\n"
    "output.snapshot_every = 0.25\n";

}  // namespace

TEST(Cli, DesignReportForTheReferenceChannel) {
  auto r = cli("design --X 2 --Y 0.9 --gamma 1");
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("nd_condition_lhs: 0.936667\n"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("Z_gamma: "), std::string::npos);
  EXPECT_NE(r.output.find("lambda1_bound: "), std::string::npos);
}

TEST(Cli, DesignRejectsFullWidth) {
  auto r = cli("design --X 2 --Y 1.0 --gamma 1");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("Y < 1"), std::string::npos) << r.output;
}

TEST(Cli, DesignNotesStableUncontrolledChannel) {
  auto r = cli("design --X 0.3 --Y 0.9 --gamma 0");
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("note: uncontrolled equilibrium is formally stable"), std::string::npos) << r.output;
}

TEST(Cli, UnknownSuiteIsAConfigError) {
  EXPECT_EQ(cli("verify nosuch").code, 1);
  EXPECT_EQ(cli("nosuchcommand").code, 1);
  EXPECT_EQ(cli("").code, 1);
}

TEST(Cli, VerifyMetricPasses) {
  auto r = cli("verify metric --quick");
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("metric: 4/4 passed"), std::string::npos) << r.output;
}

TEST(Cli, VerifyEquivalenceQuickPasses) {
  auto r = cli("verify equivalence --quick");
  EXPECT_EQ(r.code, 0) << r.output;
}

TEST(Cli, ThreadVariableIsValidated) {
  EXPECT_EQ(cli("verify metric --quick", "GEOFLOW_THREADS=zero").code, 1);
  EXPECT_EQ(cli("verify metric --quick", "GEOFLOW_THREADS=0").code, 1);
  EXPECT_EQ(cli("verify metric --quick", "GEOFLOW_THREADS=2").code, 0);
}

TEST_F(CliDir, RigidGainOneIsRejected) {
  auto c = config("k1.cfg", "system.kind = rigid-body\ncontrol.mode = gain\ncontrol.k = 1\n");
  auto r = cli("rigidbody --config " + c + " --out " + out("o"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("k must differ from 1"), std::string::npos) << r.output;
  EXPECT_FALSE(fs::exists(out("o") + "/trajectory.csv"));
}

TEST_F(CliDir, RigidRunsAreDeterministicAndReparse) {
  auto c = config("r.cfg",
                  "system.kind = rigid-body\ncontrol.mode = gain\ncontrol.k = 0.8\nperturbation.amplitude = 1e-3\n"
                  "integration.t_end = 50\n");
  ASSERT_EQ(cli("rigidbody --config " + c + " --out " + out("a")).code, 0);
  ASSERT_EQ(cli("rigidbody --config " + c + " --out " + out("b")).code, 0);
  ASSERT_EQ(cli("rigidbody --config " + c + " --out " + out("s") + " --seed 9").code, 0);
  std::string a = read_file(out("a") + "/trajectory.csv"), b = read_file(out("b") + "/trajectory.csv");
  EXPECT_EQ(a, b);
  EXPECT_NE(a, read_file(out("s") + "/trajectory.csv"));
  auto rows = parse_csv(a, kRigidHeader);
  ASSERT_EQ(rows.size(), 501u);
  EXPECT_EQ(rows[0][0], 0.0);
  EXPECT_NEAR(rows.back()[0], 50.0, 1e-12);
  for (const auto& row : rows) EXPECT_LT(std::abs(row[2] - 1.0), 1e-2);
}

TEST_F(CliDir, RigidFreeRunShowsTheInstability) {
  auto c = config("f.cfg", "system.kind = rigid-body\nperturbation.amplitude = 1e-3\nintegration.t_end = 100\n");
  ASSERT_EQ(cli("rigidbody --config " + c + " --out " + out("o")).code, 0);
  auto rows = parse_csv(read_file(out("o") + "/trajectory.csv"), kRigidHeader);
  double worst = 0;
  for (const auto& row : rows) worst = std::max(worst, std::abs(row[2] - 1.0));
  EXPECT_GT(worst, 0.1);
}

TEST_F(CliDir, ConfigErrorsNameTheLine) {
  auto c = config("bad.cfg", "system.kind = rigid-body\ncontrl.k = 0.8\n");
  auto r = cli("rigidbody --config " + c + " --out " + out("o"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("bad.cfg:2: unknown key 'contrl.k'"), std::string::npos) << r.output;
  EXPECT_EQ(cli("rigidbody --config " + out("missing.cfg")).code, 1);
}

TEST_F(CliDir, ShearflowIsDeterministicAndReparses) {
  auto c = config("s.cfg", kSmallShear);
  ASSERT_EQ(cli("shearflow --config " + c + " --out " + out("a")).code, 0);
  ASSERT_EQ(cli("shearflow --config " + c + " --out " + out("b")).code, 0);
  std::string a = read_file(out("a") + "/series.csv");
  EXPECT_EQ(a, read_file(out("b") + "/series.csv"));
  EXPECT_EQ(read_file(out("a") + "/omega_0001.field"), read_file(out("b") + "/omega_0001.field"));
  auto rows = parse_series_csv(a);
  // every sample stride plus the final step
  ASSERT_GE(rows.size(), 6u);
  EXPECT_EQ(rows.front().t, 0.0);
  EXPECT_NEAR(rows.back().t, 0.5, 1e-3);
  EXPECT_EQ(series_csv(rows), a);
  auto snap = read_snapshot(out("a") + "/omega_0002.field");
  EXPECT_EQ(snap.Nx, 32);
  EXPECT_EQ(snap.Ny, 16);
  EXPECT_EQ(snap.data.cols(), 17);
  EXPECT_NEAR(snap.t, 0.5, 1e-3);
  EXPECT_NE(read_file(out("a") + "/conditions.txt").find("nd_condition: pass"), std::string::npos);
}

TEST_F(CliDir, ShearflowSeedChangesTheRun) {
  auto c = config("s.cfg", kSmallShear);
  ASSERT_EQ(cli("shearflow --config " + c + " --out " + out("a")).code, 0);
  ASSERT_EQ(cli("shearflow --config " + c + " --out " + out("b") + " --seed 7").code, 0);
  EXPECT_NE(read_file(out("a") + "/series.csv"), read_file(out("b") + "/series.csv"));
}

TEST_F(CliDir, IndefiniteMetricExitsThree) {
  auto c = config("e.cfg", std::string(kSmallShear) + "control.mode = explicit\ncontrol.gamma = 1\ncontrol.a0 = 1.2\n");
  auto r = cli("shearflow --config " + c + " --out " + out("o"));
  EXPECT_EQ(r.code, 3) << r.output;
  EXPECT_FALSE(fs::exists(out("o") + "/series.csv"));
}

TEST_F(CliDir, RequireStableChecksTheConditions) {
  auto c = config("g.cfg", std::string(kSmallShear) + "control.gamma = 0.5\n");
  auto r = cli("shearflow --config " + c + " --out " + out("o") + " --require-stable");
  EXPECT_EQ(r.code, 3) << r.output;
  EXPECT_NE(read_file(out("o") + "/conditions.txt").find("nd_condition: fail"), std::string::npos);
  EXPECT_EQ(cli("shearflow --config " + c + " --out " + out("p")).code, 0);
}

TEST_F(CliDir, EigenAndStabilityWriteReports) {
  auto r = cli("eigen --X 2 --Y 0.9 --n 32 --out " + out("e"));
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("bound_holds: yes"), std::string::npos) << r.output;
  EXPECT_EQ(parse_csv(read_file(out("e") + "/eigenvalues.csv"), "index,eigenvalue").size(), 10u);

  r = cli("stability --X 2 --Y 0.9 --n 32 --out " + out("s") + " --require-stable");
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("negative_definite: yes"), std::string::npos) << r.output;
  auto ev = parse_csv(read_file(out("s") + "/eigenvalues.csv"), "index,eigenvalue");
  ASSERT_EQ(ev.size(), 10u);
  EXPECT_LT(ev[0][1], 0.0);
}
