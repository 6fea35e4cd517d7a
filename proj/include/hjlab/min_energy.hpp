#pragma once

#include <vector>

#include "hjlab/kalman_geometry.hpp"

namespace hjlab {

/// Steer eta' = A_h eta + P0 beta from y at time s to x at time t.
struct ControlProblemSpec {
  DriftBundle drift;
  double h = 0;
  double q_conj = 2;
  double s = 0;
  double t = 1;
  Vec y;
  Vec x;
};

struct Trajectory {
  std::vector<double> times;
  Mat states;    ///< (M+1) x N
  Mat controls;  ///< M x N, piecewise constant
  double cost = 0;
};

struct CostValue {
  double J = 0;
  Vec p;                ///< dual multiplier
  double residual = 0;  ///< endpoint constraint violation
  double dual_gap = 0;
  int iterations = 0;
  bool fallback = false;
};

struct SolverOptions {
  int panels = 256;  ///< Gauss-Legendre panels (8 nodes each)
  int max_newton = 200;
};

CostValue gramian_cost_q2(const ControlProblemSpec& spec);

/// Gramian int_0^T e^{s A} P0 P0^T e^{s A^T} ds by the block-exponential method.
Mat controllability_gramian(const Mat& A, const Mat& P0, double T);

std::pair<CostValue, Trajectory> min_energy_cost(const ControlProblemSpec& spec, double tol,
                                                 const SolverOptions& opt = {});

/// Optimal control at time tau recovered from the multiplier.
Vec optimal_control(const ControlProblemSpec& spec, const CostValue& cost, double tau);

/// J-hat_h(xi): unit-interval problem with kernel e^{tau A0} + R_A(tau; h).
double jhat_reduced(const DriftBundle& drift, double h, const Vec& xi, double q_conj, double tol,
                    const SolverOptions& opt = {});

struct CostBoundRow {
  double h = 0;
  double t = 0;
  int sample = 0;
  double J = 0;
  double ratio = 0;
};

struct CostBoundsReport {
  std::vector<CostBoundRow> rows;
  double min_ratio = 0;
  double max_ratio = 0;
  bool stable = true;
};

/// ratio = J~_h(t;xi) / (t^{-q'/q} |S(t)^{-1} xi|^{q'}) over all samples.
CostBoundsReport scaled_cost_bounds_report(const DriftBundle& drift, double q,
                                           const std::vector<double>& h_list,
                                           const std::vector<double>& t_list,
                                           const std::vector<Vec>& xi_samples,
                                           double c_stability = 1e3, double tol = 1e-8);

struct HStarEstimate {
  double empirical = 0;  ///< dyadic sweep
  double formula = 0;    ///< (1/|A|) log(1 + 1/(2 |H| e^{|A|}))
  double H_norm = 0;     ///< norm of the minimal right inverse into L^{q'}
  std::vector<double> h_values;
  std::vector<double> constants;
};

HStarEstimate estimate_h_star(const DriftBundle& drift, double q, int directions = 64,
                              int levels = 10, unsigned seed = 1);

struct ExtentReport {
  double C_start = 0;  ///< bound measured from y
  double C_end = 0;    ///< bound measured toward x
  double max_lhs = 0;
  double control_norm = 0;
};

ExtentReport extent_bound_check(const ControlProblemSpec& spec, const Trajectory& traj);

}  // namespace hjlab
