#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <sys/wait.h>

#include <json.hpp>

#include "tfdgqme/series_io.hpp"

using namespace tfdgqme;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string output;  // stdout and stderr interleaved
};

Run run_cli(const std::string& args) {
  const std::string cmd = std::string(TFDGQME_CLI) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  while (fgets(buf.data(), buf.size(), pipe)) r.output += buf.data();
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string config_path(const std::string& name) { return std::string(TFDGQME_CONFIG_DIR) + "/" + name + ".cfg"; }

std::string slurp(const std::string& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t data_lines(const std::string& p) {
  std::istringstream in(slurp(p));
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') ++n;
  return n;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("tfdgqme_cli_" + std::to_string(std::random_device{}()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  // Writes a config with the given overrides applied to the model-1 file.
  std::string config(const std::map<std::string, std::string>& overrides, const std::string& drop = "") {
    std::istringstream in(slurp(config_path("model1")));
    std::string line, text;
    while (std::getline(in, line)) {
      const auto eq = line.find('=');
      const std::string key = eq == std::string::npos ? "" : trim(line.substr(0, eq));
      if (!key.empty() && key == drop) continue;
      if (overrides.count(key))
        text += key + " = " + overrides.at(key) + "\n";
      else
        text += line + "\n";
    }
    const std::string p = path("model.cfg");
    std::ofstream(p) << text;
    return p;
  }
  fs::path dir_;
};

}  // namespace

TEST_F(Cli, PropagateWritesOneRowPerStepAndIsReproducible) {
  const std::string base = "propagate --config " + config_path("model1") +
                           " --backend dense --n-modes 2 --n-fock 3 --t-final 0.5 --dt 0.01";
  const auto a = run_cli(base + " --out " + path("a.txt"));
  ASSERT_EQ(a.code, 0) << a.output;
  EXPECT_EQ(data_lines(path("a.txt")), 51u);
  const auto b = run_cli(base + " --out " + path("b.txt"));
  ASSERT_EQ(b.code, 0) << b.output;
  EXPECT_EQ(slurp(path("a.txt")), slurp(path("b.txt")));
  const auto u = read_useries(path("a.txt"));
  EXPECT_EQ(u.series.backend, "dense");
  EXPECT_NE(a.output.find(u.fingerprint), std::string::npos);
}

TEST_F(Cli, MissingConfigKeyIsNamed) {
  const std::string cfg = config({}, "omega_max");
  const auto r = run_cli("propagate --config " + cfg + " --out " + path("u.txt"));
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.output.find("omega_max"), std::string::npos) << r.output;
  EXPECT_FALSE(fs::exists(path("u.txt")));
}

TEST_F(Cli, UsageErrorsExitNonzero) {
  EXPECT_EQ(run_cli("").code, 1);
  EXPECT_EQ(run_cli("frobnicate").code, 1);
  EXPECT_EQ(run_cli("propagate --out x.txt").code, 1);
  EXPECT_EQ(run_cli("--help").code, 0);
  EXPECT_EQ(run_cli("pfi " + path("absent.txt") + " --out " + path("p.txt")).code, 1);
}

TEST_F(Cli, RabiLimitPipelineReproducesClosedForm) {
  const std::string cfg = config({{"xi", "0.0"}, {"n_modes", "1"}, {"n_fock", "2"}, {"tt_rank", "2"},
                                  {"t_final", "2.0"}, {"dt", "5e-4"}});
  const auto r = run_cli("pipeline --config " + cfg + " --out " + path("run"));
  ASSERT_EQ(r.code, 0) << r.output;
  ASSERT_EQ(run_cli("rabi --dt 5e-4 --t-final 2 --out " + path("rabi.txt")).code, 0);
  const std::string d = path("run") + "/";
  for (const std::string a : {d + "result_direct.txt", d + "result_full.txt", d + "result_pop.txt",
                              d + "result_donor.txt+" + d + "result_acceptor.txt"}) {
    const auto c = run_cli("compare " + a + " " + path("rabi.txt") + " --tol 1e-6");
    EXPECT_EQ(c.code, 0) << a << "\n" << c.output;
  }
  const auto manifest = nlohmann::json::parse(slurp(d + "manifest.json"));
  EXPECT_EQ(manifest["comparisons"].size(), 3u);
  EXPECT_GE(manifest["stages"].size(), 10u);
}

TEST_F(Cli, CompareIdenticalIsZeroAndDetectsDifferences) {
  ASSERT_EQ(run_cli("rabi --dt 0.01 --t-final 3 --out " + path("a.txt")).code, 0);
  ASSERT_EQ(run_cli("rabi --dt 0.01 --t-final 3 --gamma 1.1 --out " + path("b.txt")).code, 0);
  const auto same = run_cli("compare " + path("a.txt") + " " + path("a.txt"));
  EXPECT_EQ(same.code, 0);
  EXPECT_NE(same.output.find("sup |dsigma_z| = 0 "), std::string::npos) << same.output;
  const auto diff = run_cli("compare " + path("a.txt") + " " + path("b.txt") + " --tol 1e-3");
  EXPECT_EQ(diff.code, 3) << diff.output;
  // Restricting the window to t = 0 hides the difference.
  EXPECT_EQ(run_cli("compare " + path("a.txt") + " " + path("b.txt") + " --t-max 0").code, 0);
}

TEST_F(Cli, StagesChainAndAcceptorEmitsInhomogeneousTerm) {
  ASSERT_EQ(run_cli("propagate --config " + config_path("model1") +
                    " --backend dense --n-modes 1 --n-fock 3 --t-final 0.6 --dt 0.01 --out " + path("u.txt"))
                .code,
            0);
  ASSERT_EQ(run_cli("pfi " + path("u.txt") + " --out " + path("pfi.txt")).code, 0);
  const auto k = run_cli("kernel " + path("pfi.txt") + " --type acceptor --out " + path("k.txt"));
  ASSERT_EQ(k.code, 0) << k.output;
  EXPECT_NE(k.output.find("iterations="), std::string::npos);
  EXPECT_TRUE(fs::exists(path("k.txt.inhom")));
  const auto kin = read_kernel(path("k.txt"));
  EXPECT_EQ(kin.kernel.type.name(), "acceptor");
  EXPECT_EQ(read_inhom(path("k.txt.inhom")).fingerprint, kin.kernel.fingerprint);

  const auto g = run_cli("gqme " + path("k.txt") + " --type acceptor --t-final 0.5 --out " + path("r.txt"));
  ASSERT_EQ(g.code, 0) << g.output;
  EXPECT_EQ(read_result(path("r.txt")).sigma.size(), 51u);
  EXPECT_EQ(run_cli("gqme " + path("k.txt") + " --type full --out " + path("r2.txt")).code, 1);

  ASSERT_EQ(run_cli("kernel " + path("pfi.txt") + " --type donor --out " + path("kd.txt")).code, 0);
  EXPECT_FALSE(fs::exists(path("kd.txt.inhom")));
  const auto m = run_cli("memtime " + path("kd.txt") + " --conv-param 1e-3 --out " + path("m.txt"));
  ASSERT_EQ(m.code, 0) << m.output;
  const auto j = nlohmann::json::parse(m.output);
  EXPECT_TRUE(j["monotone"].get<bool>());
  EXPECT_GT(j["memory_time"].get<double>(), 0.0);
}

TEST_F(Cli, MismatchedArtifactsAreRejected) {
  const std::string common = " --backend dense --n-modes 1 --n-fock 3 --t-final 0.3 --dt 0.01";
  ASSERT_EQ(run_cli("propagate --config " + config_path("model1") + common + " --out " + path("u1.txt")).code, 0);
  ASSERT_EQ(run_cli("propagate --config " + config_path("model2") + common + " --out " + path("u2.txt")).code, 0);
  for (const std::string i : {"1", "2"}) {
    ASSERT_EQ(run_cli("pfi " + path("u" + i + ".txt") + " --out " + path("p" + i + ".txt")).code, 0);
    ASSERT_EQ(run_cli("kernel " + path("p" + i + ".txt") + " --type acceptor --out " + path("k" + i + ".txt")).code, 0);
    ASSERT_EQ(run_cli("gqme " + path("k" + i + ".txt") + " --out " + path("r" + i + ".txt")).code, 0);
  }
  // Kernel from one model with the inhomogeneous term of another.
  const auto g = run_cli("gqme " + path("k1.txt") + " --inhom " + path("k2.txt.inhom") + " --out " + path("x.txt"));
  EXPECT_EQ(g.code, 1);
  EXPECT_NE(g.output.find("fingerprint mismatch"), std::string::npos) << g.output;
  const auto c = run_cli("compare " + path("r1.txt") + " " + path("r2.txt"));
  EXPECT_EQ(c.code, 1);
  EXPECT_NE(c.output.find("fingerprint mismatch"), std::string::npos) << c.output;
}
