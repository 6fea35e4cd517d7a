#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "hjlab/hj_solver.hpp"

namespace hjlab {

struct OscillationLevel {
  double r = 1;
  double h = 0;
  double gamma = 0.5;
  double osc = 0;         ///< oscillation of the original u over Q_r
  double osc_scaled = 0;  ///< oscillation of the rescaled function over Q_1
  size_t nodes = 0;
};

struct OscillationReport {
  std::vector<OscillationLevel> levels;
  double alpha_fit = std::numeric_limits<double>::quiet_NaN();
  double theta_observed = std::numeric_limits<double>::quiet_NaN();
  double theta_target = 0.05;
  double delta = 0.1;
  bool smooth = false;   ///< all oscillations vanish
  bool partial = false;  ///< grid exhausted before the requested level
  bool monotone = true;  ///< osc nonincreasing across levels
  bool shape_ok = true;  ///< osc(Q_rho) <= delta^{-alpha} rho^alpha osc(Q_1) on intermediate rho
  double saturation = 0;
  std::vector<std::string> warnings;
};

/// max - min of u over grid points of the cylinder, with `subcell` samples
/// per cell and axis. Throws TooCoarse below 8 grid nodes.
double oscillation(const GridFunction& u, const Cylinder& cyl, int subcell = 2,
                   size_t* nodes = nullptr);

struct ImprovementSpec {
  DriftBundle drift;
  double h = 0;
  double q = 2;
  double lambda = 1;
  double eps = 0;
  std::optional<SourceField> f;
  double delta = 0.1;
  double gamma = 0;  ///< 0 selects 1/q
  double theta_target = 0.05;
  double g_in = 0;   ///< data on the inner target set
  int nodes = 64;
  double b_max = 6;
  int threads = 1;
};

/// Grid box over Q_1^h with a margin of two cells plus ten percent.
GridSpec unit_cylinder_grid(const DriftBundle& drift, double h, int nodes, int nt);

/// Solves the upper barrier with two-level data and measures
/// theta = 1 - osc over Q_delta^{h,gamma}.
OscillationReport improvement_experiment(const ImprovementSpec& spec,
                                         GridFunction* solution = nullptr);

/// Measures osc over Q_{delta^k} through the rescaled functions u_{delta^k}
/// and fits alpha from log osc_k = k alpha log(delta) + c.
OscillationReport oscillation_iteration(const GridFunction& u, double q, int levels,
                                        double delta, double alpha_spec);

struct StratumFit {
  int stratum = 0;
  double beta = std::numeric_limits<double>::quiet_NaN();
  double stderr_ = 0;
  double ci_low = 0;
  double ci_high = 0;
  double predicted = std::numeric_limits<double>::quiet_NaN();
  double deviation = std::numeric_limits<double>::quiet_NaN();  ///< beta / predicted - 1
  double decades = 0;
  int samples = 0;
  bool saturated = false;  ///< Lipschitz or better
};

struct HolderFit {
  std::vector<StratumFit> strata;
  double alpha = std::numeric_limits<double>::quiet_NaN();  ///< from beta_0
  double q = 2;
  bool decreasing = true;
  bool reliable = true;
  std::vector<std::string> warnings;
};

struct HolderOptions {
  int lag_steps = 0;       ///< s = t - lag*dt
  int samples_per_axis = 24;
  double min_cells = 4;    ///< smallest displacement in cells
  double max_fraction = 0.125;  ///< largest displacement as a fraction of the box width
};

/// Regresses log|u(s,y) - u(t,x)| on log|P_j(y - e^{-(t-s)A_h} x)| for pure
/// stratum displacements around the base node (slice k, adapted point z).
HolderFit holder_fit(const GridFunction& u, double q, int slice, const Vec& base,
                     const HolderOptions& opt = {});

/// alpha solving beta_0 = alpha / (alpha/q' + 1/q).
double alpha_from_beta0(double beta0, double q);

}  // namespace hjlab
