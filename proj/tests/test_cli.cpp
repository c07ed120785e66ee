#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "spectrisk/io.hpp"

namespace fs = std::filesystem;
using spectrisk::io::json;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "spectrisk_test_cli";
  fs::create_directories(dir);
  return dir / name;
}

// Runs the CLI with a shell-quoted argument string; stdout and stderr kept apart.
Run cli(const std::string& args) {
  const auto err_path = scratch("stderr.txt");
  const std::string cmd = std::string(SPECTRISK_CLI) + " " + args + " 2>" + err_path.string();
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  char buf[4096];
  std::size_t got = 0;
  while ((got = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, got);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = slurp(err_path);
  return r;
}

const std::string kIdentity = R"('{"type":"point_masses","atoms":[{"t":1,"w":1}]}')";

// Value of column `col` in the row whose lambda equals `lambda`, from CSV text.
double csv_value(const std::string& text, const std::string& col, double lambda) {
  const auto path = scratch("parse.csv");
  spectrisk::io::write_text(path.string(), text);
  const auto t = spectrisk::io::read_csv(path.string());
  std::size_t c = 0;
  while (c < t.header.size() && t.header[c] != col) ++c;
  if (c == t.header.size()) throw std::runtime_error("no column " + col);
  for (const auto& row : t.rows) {
    if (std::abs(row[0] - lambda) <= 1e-12 * lambda) return row[c];
  }
  throw std::runtime_error("no row for lambda");
}

}  // namespace

TEST(Cli, TheoryRidgeGoldenRatio) {
  const auto r = cli("theory ridge --spectrum " + kIdentity + " --gamma 1 --alpha2 1 --lambda-grid 0.1:10:3");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NEAR(csv_value(r.out, "risk", 1.0), (1.0 + std::sqrt(5.0)) / 2.0, 1e-12);
  EXPECT_NEAR(csv_value(r.out, "estimation_risk", 1.0), (std::sqrt(5.0) - 1.0) / 2.0, 1e-12);
}

TEST(Cli, TheoryRidgeWritesManifest) {
  const auto out = scratch("ridge.csv");
  fs::remove(out.string() + ".manifest.json");
  const auto r = cli("theory ridge --spectrum " + kIdentity + " --gamma 2 --alpha2 1e6 --lambda-grid 1:1:1 --out " +
                     out.string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto star = csv_value(slurp(out), "risk_star", 1.0);
  EXPECT_NEAR(star / 1e6, 0.5, 1e-4);  // (1 - 1/γ)α² to leading order
  const auto manifest = json::parse(slurp(out.string() + ".manifest.json"));
  EXPECT_EQ(manifest["config"]["gamma"], 2.0);
  EXPECT_EQ(manifest["config"]["solver"]["max_iter"], 10000);
}

TEST(Cli, TheoryRdaAtUnitRidge) {
  const auto r = cli("theory rda --spectrum " + kIdentity + " --gamma 1 --alpha2 1 --lambda-grid 1:1:1");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NEAR(csv_value(r.out, "theta", 1.0), 0.65349137953368770686, 1e-12);
  EXPECT_NEAR(csv_value(r.out, "error", 1.0), 0.25671977254652968702, 1e-12);
  EXPECT_NEAR(csv_value(r.out, "bayes_error", 1.0), 0.5 * std::erfc(1.0 / std::sqrt(2.0)), 1e-12);
}

TEST(Cli, TheoryRdaUnequalBalancedMatchesEqual) {
  const auto eq = cli("theory rda --spectrum " + kIdentity + " --gamma 1 --alpha2 1 --lambda-grid 1:1:1");
  const auto un = cli("theory rda --spectrum " + kIdentity +
                      " --alpha2 1 --gamma-plus 2 --gamma-minus 2 --lambda-grid 1:1:1");
  ASSERT_EQ(un.code, 0) << un.err;
  EXPECT_NEAR(csv_value(un.out, "error", 1.0), csv_value(eq.out, "error", 1.0), 1e-10);
  const auto half = cli("theory rda --spectrum " + kIdentity + " --alpha2 1 --gamma-plus 2 --lambda-grid 1:1:1");
  EXPECT_EQ(half.code, 2);
  EXPECT_NE(half.err.find("--gamma-plus"), std::string::npos);
}

TEST(Cli, WorstCaseAndRegimes) {
  const auto w = cli("theory worst-case --k1 1 --k2 1 --gamma 0.5 --alpha2 1");
  ASSERT_EQ(w.code, 0) << w.err;
  const auto wj = json::parse(w.out);
  EXPECT_EQ(wj["ir_least_favorable"]["atoms"].size(), 1u);
  EXPECT_EQ(wj["ir_least_favorable"]["atoms"][0]["t"], 1.0);
  EXPECT_NEAR(wj["ir_margin"].get<double>(), 1.0 / std::sqrt(1.5), 1e-12);
  EXPECT_NEAR(wj["lda_margin"].get<double>(), 1.0 / std::sqrt(3.0), 1e-12);
  EXPECT_TRUE(wj["ir_beats_lda"].get<bool>());
  const auto over = json::parse(cli("theory worst-case --k1 0.5 --k2 2 --gamma 2 --alpha2 1").out);
  EXPECT_TRUE(over["lda_margin"].is_null());

  const auto g = cli("theory regimes --spectrum " + kIdentity + " --gamma 1");
  ASSERT_EQ(g.code, 0) << g.err;
  const auto gj = json::parse(g.out);
  EXPECT_NEAR(gj["coefficient"].get<double>(), 1.0, 1e-12);
  EXPECT_NEAR(gj["weak_slope"].get<double>(), 1.0, 1e-12);
}

TEST(Cli, ConfigErrorsExitTwoAndNameTheField) {
  const auto grid = cli("theory ridge --spectrum " + kIdentity + " --gamma 1 --alpha2 1 --lambda-grid 0:1:5");
  EXPECT_EQ(grid.code, 2);
  const auto spec = cli(R"(theory ridge --spectrum '{"type":"ar1","rho":2}' --gamma 1 --alpha2 1)");
  EXPECT_EQ(spec.code, 2);
  EXPECT_NE(spec.err.find("spectrum.rho"), std::string::npos) << spec.err;
  const auto gamma = cli("theory ridge --spectrum " + kIdentity + " --gamma -1 --alpha2 1");
  EXPECT_EQ(gamma.code, 2);
  EXPECT_NE(gamma.err.find("--gamma"), std::string::npos);
  EXPECT_EQ(cli("theory ridge --gamma 1 --alpha2 1").code, 2);  // missing --spectrum
  EXPECT_EQ(cli("theory ridge --spectrum " + kIdentity + " --gamma 1 --alpha2 1 --max-iter 0").code, 2);
}

TEST(Cli, SolverFailureExitsThree) {
  const auto r = cli(R"(theory ridge --spectrum '{"type":"ar1","rho":0.9}' --gamma 1 --alpha2 1 )"
                     "--lambda-grid 1e-4:1e-4:1 --max-iter 2 --fixed-point-budget 2");
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("NoConvergence"), std::string::npos) << r.err;
}

TEST(Cli, SimIsReproducibleFromManifest) {
  const auto cfg = std::string(SPECTRISK_CONFIG_DIR) + "/smoke_ridge.json";
  const auto a = scratch("sim_a"), b = scratch("sim_b"), c = scratch("sim_c");
  for (const auto& d : {a, b, c}) fs::remove_all(d);
  ASSERT_EQ(cli("sim ridge --config " + cfg + " --out " + a.string()).code, 0);
  ASSERT_EQ(cli("sim ridge --config " + cfg + " --out " + b.string()).code, 0);
  const auto first = slurp(a / "sim_ridge.csv");
  ASSERT_FALSE(first.empty());
  EXPECT_EQ(first, slurp(b / "sim_ridge.csv"));
  ASSERT_EQ(cli("sim ridge --config " + (a / "manifest.json").string() + " --out " + c.string()).code, 0);
  EXPECT_EQ(first, slurp(c / "sim_ridge.csv"));
  const auto manifest = json::parse(slurp(a / "manifest.json"));
  EXPECT_EQ(manifest["runs"][0]["seed"], 42);

  // A different seed gives a different draw.
  const auto d = scratch("sim_d");
  fs::remove_all(d);
  ASSERT_EQ(cli("sim ridge --config " + cfg + " --seed 43 --out " + d.string()).code, 0);
  EXPECT_NE(first, slurp(d / "sim_ridge.csv"));
}

TEST(Cli, SimRdaRuns) {
  const auto cfg = std::string(SPECTRISK_CONFIG_DIR) + "/smoke_rda.json";
  const auto out = scratch("sim_rda");
  fs::remove_all(out);
  const auto r = cli("sim rda --config " + cfg + " --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto t = spectrisk::io::read_csv((out / "sim_rda.csv").string());
  EXPECT_EQ(t.rows.size(), 3u);
  const auto bad = scratch("bad_config.json");
  spectrisk::io::write_text(bad.string(), R"({"covariance":{"type":"identity"},"p":10,"seed":1,"colour":"red"})");
  const auto e = cli("sim rda --config " + bad.string() + " --out " + out.string());
  EXPECT_EQ(e.code, 2);
  EXPECT_NE(e.err.find("colour"), std::string::npos) << e.err;
}

TEST(Cli, CompareReportsGapAndGridMismatch) {
  const auto t1 = scratch("cmp_a.csv"), t2 = scratch("cmp_b.csv"), t3 = scratch("cmp_c.csv");
  const std::string base = "theory ridge --spectrum " + kIdentity + " --gamma 1 --alpha2 1 --out ";
  ASSERT_EQ(cli(base + t1.string() + " --lambda-grid 0.1:10:5").code, 0);
  ASSERT_EQ(cli(base + t2.string() + " --lambda-grid 0.1:10:5").code, 0);
  ASSERT_EQ(cli(base + t3.string() + " --lambda-grid 0.1:10:4").code, 0);
  const auto same = cli("compare --theory-csv " + t1.string() + " --sim-csv " + t2.string() + " --tolerance 0");
  ASSERT_EQ(same.code, 0) << same.err;
  const auto j = json::parse(same.out);
  EXPECT_EQ(j["max_gap"], 0.0);
  EXPECT_TRUE(j["pass"].get<bool>());
  const auto mism = cli("compare --theory-csv " + t1.string() + " --sim-csv " + t3.string());
  EXPECT_EQ(mism.code, 2);
  EXPECT_NE(mism.err.find("GridMismatch"), std::string::npos) << mism.err;
}
