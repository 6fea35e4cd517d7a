#pragma once

#include "hjlab/kalman_geometry.hpp"

namespace hjlab {

struct ScaleParams {
  double q = 2;
  double q_conj = 2;
  double alpha = 0;
  double gamma = 0.5;
  double r = 1;
  double h = 0;
};

/// Builds params with q' = q/(q-1) and gamma = 1/q + alpha/q'.
ScaleParams make_scale_params(double q, double alpha, double r = 1.0, double h = 0.0);

struct SpaceTimePoint {
  double t = 0;
  Vec x;
};

/// S(r) = sum_i r^i P_i.
Mat scale_matrix_S(const KalmanFrame& frame, double r);

/// S(r) restricted to adapted coordinates (diagonal).
Vec scale_diagonal(const KalmanFrame& frame, double r);

/// (t,x) -> (r t, r^gamma S(r) x).
SpaceTimePoint dilation_spacetime(const KalmanFrame& frame, const ScaleParams& params,
                                  const SpaceTimePoint& point);

/// Jacobian determinant of the space-time dilation.
double dilation_determinant(const KalmanFrame& frame, const ScaleParams& params);

/// (tau,zeta) o_h (t,x) = (tau + t, x + e^{t A_h} zeta).
SpaceTimePoint group_op(const DriftBundle& drift, double h, const SpaceTimePoint& lhs,
                        const SpaceTimePoint& rhs);

/// (t,x)^{-1} = (-t, -e^{-t A_h} x).
SpaceTimePoint group_inverse(const DriftBundle& drift, double h, const SpaceTimePoint& point);

enum class Membership { Inside, Boundary, Outside };

/// Q_r^{h,gamma} = {-r <= t <= 0, |S(r)^{-1} e^{-t A_h} x| < r^gamma}.
struct Cylinder {
  KalmanFrame frame;
  Mat Ah;
  double h = 0;
  double gamma = 0.5;
  double r = 1;

  /// |S(r)^{-1} e^{-t A_h} x| / r^gamma
  double spatial_ratio(double t, const Vec& x) const;
};

Cylinder make_cylinder(const DriftBundle& drift, double h, double gamma, double r);

bool cylinder_contains(const Cylinder& cyl, const SpaceTimePoint& point);

/// Three-way classification with tolerance 1e-12 on both constraints.
Membership cylinder_classify(const Cylinder& cyl, const SpaceTimePoint& point);

/// inf{rho > 0 : point in closure(Q_rho^{h,gamma})}.
double gauge_rho(const DriftBundle& drift, double h, double gamma, const SpaceTimePoint& point);

/// |t| + sum_j |P_j x|^{1/(gamma+j)}
double gauge_proxy(const KalmanFrame& frame, double gamma, const SpaceTimePoint& point);

/// omega_alpha(t,x) = |t|^alpha + sum_j |P_j x|^{alpha/(alpha/q'+1/q+j)}.
double modulus_omega(const KalmanFrame& frame, const ScaleParams& params,
                     const SpaceTimePoint& point);

/// Exponent alpha/(alpha/q'+1/q+j).
double modulus_exponent(const ScaleParams& params, int j);

}  // namespace hjlab
