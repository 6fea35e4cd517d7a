#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "hjlab/io.hpp"
#include "hjlab/kalman_geometry.hpp"

namespace hjlab {

/// kolmogorov2 or chain-N.
DriftBundle preset_frame(const std::string& name);

/// N/q + 1 + sum_j j n_j
double p_threshold(const KalmanFrame& frame, double q);

struct ExperimentConfig {
  std::string preset = "kolmogorov2";
  Mat A, P0;  ///< used when preset is empty
  double q = 2;
  double p = 0;  ///< 0 selects twice the threshold
  double lambda = 1;
  double Lambda = 1;
  double eps = 0;
  double h = 0;
  double delta = 0.1;
  int nodes = 48;
  double b_max = 6;
  std::vector<std::string> scenarios;
  std::string out = "hjlab_out";
  std::uint64_t seed = 1;
  int threads = 1;
};

const std::vector<std::string>& known_scenarios();

/// Strict: unknown keys, bad types and violated parameter inequalities throw ConfigError.
ExperimentConfig config_from_json(const json& j);
ExperimentConfig load_config(const std::string& path);
json config_to_json(const ExperimentConfig& c);
DriftBundle config_drift(const ExperimentConfig& c);

/// Generator for a named substream of the run seed.
std::mt19937_64 substream(std::uint64_t seed, const std::string& label);

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct RunResult {
  int exit_code = 0;
  std::string dir;
  std::vector<CheckResult> checks;
};

/// Writes manifest.json, per-scenario reports and summary.json under c.out.
RunResult run_experiment(const ExperimentConfig& c);

}  // namespace hjlab
