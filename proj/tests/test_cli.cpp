#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "hjlab/errors.hpp"
#include "hjlab/experiment.hpp"

using namespace hjlab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path d = fs::temp_directory_path() / ("hjlab_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(HJLAB_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void put(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST(Preset, Kolmogorov2) {
  const DriftBundle b = preset_frame("kolmogorov2");
  EXPECT_EQ(b.frame.kappa, 1);
  EXPECT_EQ(b.frame.n, (std::vector<int>{1, 1}));
}

TEST(Preset, Chain3) {
  const DriftBundle b = preset_frame("chain-3");
  EXPECT_EQ(b.frame.kappa, 2);
  EXPECT_EQ(b.frame.n, (std::vector<int>{1, 1, 1}));
}

TEST(Preset, Unknown) {
  EXPECT_THROW(preset_frame("nosuch"), UnknownPreset);
  EXPECT_THROW(preset_frame("chain-1"), UnknownPreset);
  EXPECT_THROW(preset_frame("chain-3x"), UnknownPreset);
}

TEST(Config, ThresholdNamed) {
  // kolmogorov2 at q = 2: 2/2 + 1 + 1 = 3
  EXPECT_DOUBLE_EQ(p_threshold(preset_frame("kolmogorov2").frame, 2.0), 3.0);
  try {
    config_from_json(json{{"preset", "kolmogorov2"}, {"p", 3.0}});
    FAIL() << "p at the threshold accepted";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("p > N/q + 1 + sum_j j n_j"), std::string::npos);
  }
}

TEST(Config, Strict) {
  EXPECT_THROW(config_from_json(json{{"preset", "kolmogorov2"}, {"qq", 2}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"lambda", 2.0}, {"Lambda", 1.0}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"scenarios", {"nope"}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"grid", {{"cells", 3}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"q", "two"}}), ConfigError);
  const ExperimentConfig c = config_from_json(json{{"preset", "chain-3"}, {"q", 3.0}});
  EXPECT_DOUBLE_EQ(c.p, 2 * (3.0 / 3 + 1 + 3));
}

TEST(Config, InlineMatrices) {
  const ExperimentConfig c =
      config_from_json(json{{"A", {{0, 0}, {1, 0}}}, {"P0", {{1, 0}, {0, 0}}}});
  EXPECT_TRUE(c.preset.empty());
  EXPECT_EQ(config_drift(c).frame.kappa, 1);
}

TEST(Substream, LabelsDiffer) {
  auto a = substream(7, "a"), a2 = substream(7, "a"), b = substream(7, "b"), c = substream(8, "a");
  const auto va = a();
  EXPECT_EQ(va, a2());
  EXPECT_NE(va, b());
  EXPECT_NE(va, c());
}

TEST(Cli, ExitCodes) {
  const fs::path d = scratch("codes");
  EXPECT_EQ(run_cli("decompose --frame chain-3", d / "a.log"), 0);
  EXPECT_NE(slurp(d / "a.log").find("\"kappa\": 2"), std::string::npos);
  EXPECT_EQ(run_cli("decompose --frame nosuch", d / "b.log"), 2);
  EXPECT_EQ(run_cli("nosuch-subcommand", d / "c.log"), 2);
  EXPECT_EQ(run_cli("run", d / "d.log"), 2);
  put(d / "typo.json", R"({"preset": "kolmogorov2", "lamda": 1})");
  EXPECT_EQ(run_cli("run --config " + (d / "typo.json").string(), d / "e.log"), 2);
}

TEST(Cli, PBelowThresholdRejected) {
  const fs::path d = scratch("pthr");
  put(d / "c.json", R"({"preset": "kolmogorov2", "q": 2, "p": 2.5})");
  EXPECT_EQ(run_cli("run --config " + (d / "c.json").string(), d / "log"), 2);
  EXPECT_NE(slurp(d / "log").find("p > N/q + 1 + sum_j j n_j"), std::string::npos);
}

TEST(Cli, EmptyScenariosManifestOnly) {
  const fs::path d = scratch("empty");
  put(d / "c.json", R"({"preset": "kolmogorov2", "scenarios": []})");
  EXPECT_EQ(run_cli("run --config " + (d / "c.json").string() + " --out " + (d / "out").string(),
                    d / "log"),
            0);
  EXPECT_TRUE(fs::exists(d / "out" / "manifest.json"));
  size_t files = 0;
  for (const auto& e : fs::directory_iterator(d / "out")) {
    (void)e;
    ++files;
  }
  EXPECT_EQ(files, 2u);  // manifest and summary
}

TEST(Cli, CostKolmogorov) {
  const fs::path d = scratch("cost");
  EXPECT_EQ(run_cli("cost --frame kolmogorov2 --to 0,1 --t 1 --trajectory " +
                        (d / "traj.csv").string(),
                    d / "log"),
            0);
  const std::string out = slurp(d / "log");
  const auto pos = out.find("\"J\": ");
  ASSERT_NE(pos, std::string::npos);
  EXPECT_NEAR(std::stod(out.substr(pos + 5)), 6.0, 1e-6);
  EXPECT_EQ(slurp(d / "traj.csv").rfind("tau,eta1,eta2,beta1,beta2", 0), 0u);
}

TEST(Cli, SolveThenAnalyse) {
  const fs::path d = scratch("solve");
  const std::string stem = (d / "u").string();
  ASSERT_EQ(run_cli("solve --frame kolmogorov2 --grid 33,33,4 --t1 0.1 --bmax 2 --out " + stem,
                    d / "s.log"),
            0)
      << slurp(d / "s.log");
  EXPECT_TRUE(fs::exists(stem + ".bin"));
  EXPECT_TRUE(fs::exists(stem + ".json"));
  EXPECT_EQ(run_cli("oscillate --in " + stem + " --levels 2 --out " + (d / "osc").string(),
                    d / "o.log"),
            0)
      << slurp(d / "o.log");
  EXPECT_TRUE(fs::exists(d / "osc" / "oscillation.json"));
  EXPECT_EQ(run_cli("holderfit --in " + stem + " --svg --out " + (d / "hf").string(), d / "h.log"),
            0)
      << slurp(d / "h.log");
  EXPECT_TRUE(fs::exists(d / "hf" / "holderfit.csv"));
  EXPECT_TRUE(fs::exists(d / "hf" / "holderfit.svg"));
}

TEST(Cli, GaugeSeeded) {
  const fs::path d = scratch("gauge");
  ASSERT_EQ(run_cli("gauge --samples 5 --seed 3", d / "a"), 0);
  ASSERT_EQ(run_cli("gauge --samples 5 --seed 3", d / "b"), 0);
  ASSERT_EQ(run_cli("modulus --samples 5 --seed 4", d / "c"), 0);
  EXPECT_EQ(slurp(d / "a"), slurp(d / "b"));
  EXPECT_NE(slurp(d / "a"), slurp(d / "c"));
  EXPECT_EQ(slurp(d / "a").rfind("t,x1,x2,rho,omega\n", 0), 0u);
}

TEST(Cli, RunDeterministic) {
  const fs::path d = scratch("det");
  put(d / "c.json",
      R"({"preset": "kolmogorov2", "scenarios": ["flow-identity", "cost-scaling", "curved"], "seed": 11})");
  const std::string cfg = "run --config " + (d / "c.json").string();
  ASSERT_EQ(run_cli(cfg + " --out " + (d / "r1").string(), d / "l1"), 0) << slurp(d / "l1");
  ASSERT_EQ(run_cli(cfg + " --out " + (d / "r2").string(), d / "l2"), 0) << slurp(d / "l2");
  size_t compared = 0;
  for (const auto& e : fs::directory_iterator(d / "r1")) {
    const auto name = e.path().filename();
    if (name == "manifest.json") continue;  // echoes the output directory
    EXPECT_EQ(slurp(e.path()), slurp(d / "r2" / name)) << name;
    ++compared;
  }
  EXPECT_GE(compared, 5u);
}
