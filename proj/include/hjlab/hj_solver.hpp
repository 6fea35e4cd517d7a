#pragma once

#include <functional>
#include <optional>

#include "hjlab/grid_function.hpp"

namespace hjlab {

using SpaceFunction = std::function<double(const Vec&)>;
using SpaceTimeFunction = std::function<double(double, const Vec&)>;

/// Nonnegative source with its stored L^p norm.
struct SourceField {
  SpaceTimeFunction fn;
  double p = 0;
  double lp_norm = 0;
};

/// Piecewise constant source from cell samples on the spatial grid of `spec`
/// (one value per node cell, axis 0 fastest), time independent.
SourceField cell_source(const GridSpec& spec, const DriftBundle& drift,
                        const std::vector<double>& samples, double p);

/// Extends f outside the flowed unit sphere by f(t, x / |e^{-t A_h} x|).
SourceField extend_by_projection(const SourceField& f, const DriftBundle& drift, double h);

/// x / |e^{-t A_h} x|, the point of the flowed unit sphere on the ray of x.
Vec project_to_flowed_sphere(const Mat& Ah, double t, const Vec& x);

struct HJProblem {
  DriftBundle drift;
  double h = 0;
  double q = 2;
  double lambda = 1;  ///< cost constant of the upper branch and of plain solves
  double Lambda = 1;  ///< cost constant of the lower branch
  double eps = 0;
  double constant_source = 0;
  double source_coeff = 0;
  std::optional<SourceField> f;
  SpaceFunction data;          ///< values at the bottom slice, physical x
  SpaceTimeFunction lateral;   ///< values outside `domain`, physical x
  std::optional<Cylinder> domain;
};

struct ControlSpec {
  double b_max = 0;  ///< 0 selects the default bound
  int radii = 16;
  int directions = 16;
  bool refine = true;
  int threads = 1;
};

/// 10 osc(data)^{1/q'} R / horizon.
double default_bmax(const HJProblem& problem, const GridSpec& grid);

/// Largest step count violating no per-axis characteristic bound.
int min_time_steps(const HJProblem& problem, const GridSpec& grid, double b_max);

/// Forward dynamic programming
/// u(t+dt,x) = min_b u(t, x_back(b)) + dt (|b|^{q'}/(q' lambda^{q'}) + F).
GridFunction solve_value(const HJProblem& problem, const GridSpec& grid,
                         const ControlSpec& controls);

struct BarrierResult {
  GridFunction u;
  double lateral_min = 0;  ///< min over lateral boundary nodes with t > T0
  double inner_inf = 0;    ///< inf of the data over the inner target set
  double K_empirical = 0;  ///< lambda^{q'} (lateral_min - inner_inf)
  bool bound_holds = true; ///< lateral_min >= min(1, inner_inf + K/lambda^{q'})
};

/// Upper barrier u*_g: cost constant lambda, running source eps f.
/// `inner` marks the target set where g may drop below 1.
BarrierResult barrier_upper(const HJProblem& problem, const GridSpec& grid,
                            const ControlSpec& controls,
                            const std::function<bool(const Vec&)>& inner = {});

/// Two-level data of the upper barrier: g = g_in on e^{-A_h}(2 Omega_delta^gamma), 1 outside.
SpaceFunction two_level_data(const DriftBundle& drift, double h, double delta, double gamma,
                             double g_in);
std::function<bool(const Vec&)> two_level_inner(const DriftBundle& drift, double h,
                                                double delta, double gamma);

/// Lower barrier u*_l: cost constant Lambda, running source -eps.
GridFunction barrier_lower(const HJProblem& problem, const GridSpec& grid,
                           const ControlSpec& controls);

struct ComparisonReport {
  double boundary_violation = 0;  ///< max (u_sub - u_super) on the parabolic boundary
  double interior_violation = 0;  ///< max (u_sub - u_super) inside
  size_t boundary_nodes = 0;
  size_t interior_nodes = 0;
  bool boundary_ordered = true;
  bool consistent = true;  ///< boundary order carried to the interior within tolerance
};

/// Boundary: bottom slice plus nodes within one cell of the lateral boundary
/// (cylinder if given, otherwise the box faces).
ComparisonReport comparison_check(const GridFunction& u_sub, const GridFunction& u_super,
                                  const std::optional<Cylinder>& cyl = std::nullopt,
                                  double tol = 1e-12, double grid_error = 0);

/// Points on the flowed sphere e^{t A_h}(unit sphere) for each direction.
std::vector<Vec> lateral_samples(const Cylinder& cyl, double t, const std::vector<Vec>& dirs);

/// u_r(t,z) = r^{-alpha} u(r t, r^gamma S(r) z) on the relabelled grid.
GridFunction rescale_grid_function(const GridFunction& u, const ScaleParams& params);

/// Same map resampled onto `target` by interpolation.
GridFunction rescale_onto(const GridFunction& u, const ScaleParams& params,
                          const GridSpec& target);

/// Exponent of r in ||f^{[r]}||_{L^p}.
double source_norm_exponent(const KalmanFrame& frame, double q, double p, double alpha);

}  // namespace hjlab
