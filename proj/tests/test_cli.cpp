#include <sys/wait.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include <isar/io.hpp>

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(ISAR_CLI_PATH) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, pipe)) r.out += buf;
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("isar_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string common() const {
    return "--scenario " ISAR_SCENARIO_DIR "/default.cfg --out-dir " + dir_.string() + " --no-timestamp";
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, SimulateWritesFullGrid) {
  const auto r = run("simulate " + common());
  ASSERT_EQ(r.code, 0) << r.out;
  const auto data = isar::io::load_rcs_csv((dir_ / "rcs.csv").string());
  EXPECT_EQ(data.geometry.size(), 1681u);
  EXPECT_NEAR(data.geometry.bandwidth(), 3e9, 1e-3);
}

TEST_F(CliTest, BackprojectionRasterPeaksAtZeroDb) {
  ASSERT_EQ(run("simulate " + common()).code, 0);
  const auto r = run("image --method bp -i " + (dir_ / "rcs.csv").string() + " " + common());
  ASSERT_EQ(r.code, 0) << r.out;
  std::istringstream is(slurp(dir_ / "image.csv"));
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "x_m,y_m,re,im,mag_db");
  double max_db = -1e300;
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    max_db = std::max(max_db, *isar::io::parse_double(isar::io::split(line, ',').back()));
    ++rows;
  }
  EXPECT_EQ(rows, 101u * 101u);
  EXPECT_EQ(max_db, 0.0);
}

TEST_F(CliTest, OutputsAreReproducible) {
  ASSERT_EQ(run("two-point --separation 0.15 " + common()).code, 0);
  const std::string raster = slurp(dir_ / "two_point_raster.csv");
  const std::string peaks = slurp(dir_ / "peaks.csv");
  ASSERT_EQ(run("two-point --separation 0.15 " + common()).code, 0);
  EXPECT_EQ(slurp(dir_ / "two_point_raster.csv"), raster);
  EXPECT_EQ(slurp(dir_ / "peaks.csv"), peaks);
  EXPECT_EQ(std::count(peaks.begin(), peaks.end(), '\n'), 3);

  const std::string sc = "--scenario " ISAR_SCENARIO_DIR "/default.cfg --out-dir " + dir_.string();
  ASSERT_EQ(run("simulate " + sc).code, 0);
  EXPECT_EQ(slurp(dir_ / "rcs.csv").rfind("# generated ", 0), 0u);
}

TEST_F(CliTest, ExtractFromRaster) {
  ASSERT_EQ(run("simulate --scenario " ISAR_SCENARIO_DIR "/extraction.cfg --out-dir " + dir_.string()).code, 0);
  ASSERT_EQ(run("image -i " + (dir_ / "rcs.csv").string() + " --scenario " ISAR_SCENARIO_DIR
                "/extraction.cfg --out-dir " + dir_.string()).code, 0);
  const auto r = run("extract --raster " + (dir_ / "image.csv").string() + " --gate-x 0.3 --gate-y 0 --scenario " +
                     ISAR_SCENARIO_DIR "/extraction.cfg");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto nl = r.out.find('\n');
  EXPECT_EQ(r.out.substr(0, nl), "extracted_dbsm");
  EXPECT_NEAR(*isar::io::parse_double(isar::io::trim(r.out.substr(nl + 1))), -30.0, 1.5);
}

TEST_F(CliTest, SweepPrintsSummary) {
  const std::string sc = dir_ / "small.cfg";
  std::ofstream(sc) << "sweep_positions = 36\n";
  const auto r = run("sweep --distance 0.3 --method bp --jobs 2 --no-timestamp --scenario " + sc +
                     " --out-dir " + dir_.string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(r.out.rfind("mean_dbsm,p10_dbsm,p90_dbsm\n", 0), 0u);
  const auto summary = slurp(dir_ / "sweep_summary.csv");
  const auto values = isar::io::split(summary.substr(summary.find('\n') + 1), ',');
  ASSERT_EQ(values.size(), 3u);
  EXPECT_NEAR(*isar::io::parse_double(values[0]), -30.0, 1.5);
  const auto rows = slurp(dir_ / "sweep.csv");
  EXPECT_EQ(std::count(rows.begin(), rows.end(), '\n'), 37);
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(run("simulate --bogus-flag").code, 2);
  EXPECT_EQ(run("").code, 2);

  const fs::path bad = dir_ / "bad.csv";
  std::ofstream(bad) << "freq_hz,angle_deg,re,im\n1e9,0,1,0\n1e9,1,1\n";
  const auto r = run("image -i " + bad.string() + " " + common());
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.out.find("line 3"), std::string::npos) << r.out;

  const fs::path cfg = dir_ / "broken.cfg";
  std::ofstream(cfg) << "gate_radius_m = -1\n";
  EXPECT_EQ(run("simulate --scenario " + cfg.string()).code, 1);
}

TEST_F(CliTest, BudgetExhaustionIsFlagged) {
  const fs::path cfg = dir_ / "tight.cfg";
  std::ofstream(cfg) << "n_freq = 9\nn_angle = 9\ngrid_extent_m = 0.3\nmax_matvecs = 6\n"
                        "scatterer = 0.02, 0, 1, 0\nscatterer = -0.03, 0.01, 1, 0\n";
  const std::string args = "--scenario " + cfg.string() + " --out-dir " + dir_.string() + " --no-timestamp";
  ASSERT_EQ(run("simulate " + args).code, 0);
  const auto r = run("image --method l1 -i " + (dir_ / "rcs.csv").string() + " " + args);
  EXPECT_EQ(r.code, 4) << r.out;
  EXPECT_EQ(slurp(dir_ / "image.csv").rfind("# status: budget_exhausted\n", 0), 0u);
}
