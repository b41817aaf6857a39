#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "intermit/cli.hpp"

namespace fs = std::filesystem;
using namespace intermit;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("intermit_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

nlohmann::json small_config() {
  return {{"n_max", 3000},
          {"cells", 512},
          {"n_split", 300},
          {"ulam", {{"cells", 256}, {"contraction_trials", 20}}},
          {"lasota_yorke", {{"cells", 1024}, {"trials", 50}}},
          {"aperiodicity", {{"cells", 128}, {"t_grid", 16}}},
          {"scaling", {{"n_max", 2000}}}};
}

int run_cli(const fs::path& dir, const std::string& command, const nlohmann::json& cfg, const std::string& extra = "") {
  const fs::path cfg_path = dir / "config.json";
  std::ofstream(cfg_path) << cfg.dump();
  const std::string cmd = std::string(INTERMIT_CLI_PATH) + " " + command + " --config " + cfg_path.string() +
                          " --out " + (dir / "out").string() + " " + extra + " > " + (dir / "stdout.txt").string() +
                          " 2> " + (dir / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

}  // namespace

TEST(Config, DefaultsAndOverrides) {
  const auto c = cli::config_from_json({{"map", {{"family", "lsv"}}}, {"cells", 64}, {"decay", {{"n", 50}}},
                                           {"windows", {{"decay", {10, 50}}}}});
  EXPECT_EQ(c.map.family, "lsv");
  EXPECT_DOUBLE_EQ(c.map.z, 0.25);
  EXPECT_EQ(c.cells, 64u);
  EXPECT_EQ(c.decay.n, 50u);
  EXPECT_EQ(c.n_split, 400u);
  EXPECT_NO_THROW(cli::check_config(c));
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(cli::config_from_json({{"cels", 64}}), cli::ConfigError);
  EXPECT_THROW(cli::config_from_json({{"decay", {{"lag", 3}}}}), cli::ConfigError);
  EXPECT_THROW(cli::config_from_json({{"cells", "many"}}), cli::ConfigError);
  EXPECT_THROW(cli::config_from_json({{"theory", {{"tail_exponent", "two"}}}}), cli::ConfigError);
  auto c = cli::config_from_json({{"n_split", 100}});
  EXPECT_THROW(cli::check_config(c), cli::ConfigError);  // decay.n = 300 > n_split
  c = cli::config_from_json({{"checks", {"induce", "spectra"}}});
  EXPECT_THROW(cli::check_config(c), cli::ConfigError);
}

TEST(Checks, KindsAndOverrides) {
  cli::RunConfig cfg;
  cfg.theory = {{"x", 5.0}};
  cli::Pipeline p(cfg);
  EXPECT_TRUE(p.near("y", 1.05, 1.0, 0.1).pass());
  EXPECT_FALSE(p.near("x", 1.05, 1.0, 0.1).pass());
  EXPECT_TRUE(p.at_most("y", 1.0, 1.0).pass());
  EXPECT_FALSE(p.at_least("y", 0.9, 1.0).pass());
  EXPECT_FALSE(p.at_most("y", std::nan(""), 1.0).pass());
  const nlohmann::json j = p.near("y", 1.0, 1.0, 0.1, 1e-9);
  EXPECT_EQ(j["bound"].get<double>(), 1e-9);
  EXPECT_TRUE(j["pass"].get<bool>());
}

TEST(Cli, InduceWritesRecordsAndSeries) {
  const auto dir = scratch("induce");
  ASSERT_EQ(run_cli(dir, "induce", small_config()), 0) << slurp(dir / "stderr.txt");
  const auto rec = read_json(dir / "out" / "induce.json");
  EXPECT_EQ(rec["gcd_return_times"].get<int>(), 1);
  EXPECT_NEAR(rec["tail_fit"]["slope"].get<double>(), -2.0, 0.1);
  const auto csv = slurp(dir / "out" / "induce.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "n,tail,d_n");
  EXPECT_NE(slurp(dir / "stdout.txt").find("PASS tail_exponent"), std::string::npos);
}

TEST(Cli, DecayCsvColumnsAndDeterminism) {
  const auto dir = scratch("decay");
  ASSERT_EQ(run_cli(dir, "decay", small_config()), 0) << slurp(dir / "stdout.txt") << slurp(dir / "stderr.txt");
  const auto first = slurp(dir / "out" / "decay.csv");
  EXPECT_EQ(first.substr(0, first.find('\n')), "n,cov,predicted_term,f_beta");
  const auto rec = read_json(dir / "out" / "decay.json");
  EXPECT_TRUE(rec.contains("rate_fit"));
  EXPECT_NEAR(rec["rate_fit"]["slope"].get<double>(), -1.0, 0.25);
  ASSERT_EQ(run_cli(dir, "decay", small_config()), 0);
  EXPECT_EQ(slurp(dir / "out" / "decay.csv"), first);
}

TEST(Cli, AperiodicityRecord) {
  const auto dir = scratch("aperiodicity");
  auto cfg = small_config();
  cfg["aperiodicity"]["t_grid"] = 64;
  ASSERT_EQ(run_cli(dir, "aperiodicity", cfg), 0) << slurp(dir / "stdout.txt");
  const auto rec = read_json(dir / "out" / "aperiodicity.json");
  EXPECT_EQ(rec["gcd_return_times"].get<int>(), 1);
  EXPECT_EQ(rec["t_grid"].get<int>(), 64);
  EXPECT_GE(rec["min_twisted_sv"].get<double>(), 0.05);
}

TEST(Cli, UlamWritesCoordinateMatrix) {
  const auto dir = scratch("ulam");
  ASSERT_EQ(run_cli(dir, "ulam", small_config()), 0) << slurp(dir / "stdout.txt");
  std::ifstream in(dir / "out" / "ulam_matrix.coo");
  std::string comment;
  std::getline(in, comment);
  std::size_t rows = 0, cols = 0, nnz = 0;
  in >> rows >> cols >> nnz;
  EXPECT_EQ(rows, 256u);
  EXPECT_EQ(cols, 256u);
  std::size_t r, c, lines = 0;
  double v, first_row = 0.0;
  while (in >> r >> c >> v) {
    ++lines;
    if (r == 0) first_row += v;
  }
  EXPECT_EQ(lines, nnz);
  EXPECT_NEAR(first_row, 1.0, 1e-12);
}

TEST(Cli, ReportFailsOnCorruptedTheory) {
  const auto dir = scratch("report");
  auto cfg = small_config();
  cfg["checks"] = {"validate", "induce"};
  ASSERT_EQ(run_cli(dir, "report", cfg), 0) << slurp(dir / "stdout.txt");
  EXPECT_TRUE(read_json(dir / "out" / "report.json")["pass"].get<bool>());
  cfg["theory"] = {{"tail_exponent", 3.0}};
  EXPECT_EQ(run_cli(dir, "report", cfg), 1);
  const auto rep = read_json(dir / "out" / "report.json");
  EXPECT_FALSE(rep["pass"].get<bool>());
  EXPECT_EQ(rep["failing"], nlohmann::json::array({"tail_exponent"}));
  EXPECT_NE(slurp(dir / "stdout.txt").find("FAIL tail_exponent"), std::string::npos);
}

TEST(Cli, FlagsOverrideConfig) {
  const auto dir = scratch("flags");
  // lsv: affine slope exactly 2, strict expansion fails
  ASSERT_EQ(run_cli(dir, "validate", small_config(), "--gamma 0.6 --family lsv"), 1) << slurp(dir / "stderr.txt");
  const auto rec = read_json(dir / "out" / "validate.json");
  EXPECT_FALSE(rec["strict_expansion"].get<bool>());
  EXPECT_EQ(rec["map"]["family"], "lsv");
  EXPECT_DOUBLE_EQ(rec["map"]["gamma"].get<double>(), 0.6);
  EXPECT_DOUBLE_EQ(rec["z"].get<double>(), 0.25);
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("exit");
  EXPECT_EQ(run_cli(dir, "induce", {{"cels", 3}}), 2);
  EXPECT_EQ(run_cli(dir, "induce", small_config(), "--gamma 1.5"), 2);
  EXPECT_EQ(run_cli(dir, "spectra", small_config()), 2);
  std::ofstream(dir / "broken.json") << "{ not json";
  const std::string cmd = std::string(INTERMIT_CLI_PATH) + " induce --config " + (dir / "broken.json").string() + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  EXPECT_EQ(WEXITSTATUS(status), 2);

  auto cfg = small_config();
  cfg["windows"] = {{"tail", {4000, 5000}}};  // beyond n_max: nothing to fit
  EXPECT_EQ(run_cli(dir, "induce", cfg), 3);
  const auto diag = read_json(dir / "out" / "error.json");
  EXPECT_EQ(diag["error"], "InsufficientDataError");
  EXPECT_EQ(diag["command"], "induce");
}
