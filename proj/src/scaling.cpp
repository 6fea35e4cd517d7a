#include "hjlab/scaling.hpp"

#include <cmath>

#include "hjlab/errors.hpp"

namespace hjlab {

ScaleParams make_scale_params(double q, double alpha, double r, double h) {
  if (!(q > 1)) throw InvalidExponent("q must exceed 1");
  if (alpha < 0 || alpha > 1) throw InvalidExponent("alpha must lie in [0,1]");
  ScaleParams p;
  p.q = q;
  p.q_conj = q / (q - 1);
  p.alpha = alpha;
  p.gamma = 1.0 / q + alpha / p.q_conj;
  p.r = r;
  p.h = h;
  return p;
}

Mat scale_matrix_S(const KalmanFrame& frame, double r) {
  Mat S = Mat::Zero(frame.N, frame.N);
  for (int i = 0; i <= frame.kappa; ++i) S += std::pow(r, i) * frame.P[i];
  return S;
}

Vec scale_diagonal(const KalmanFrame& frame, double r) {
  Vec d(frame.N);
  for (int k = 0; k < frame.N; ++k) d(k) = std::pow(r, frame.stratum_of(k));
  return d;
}

SpaceTimePoint dilation_spacetime(const KalmanFrame& frame, const ScaleParams& params,
                                  const SpaceTimePoint& point) {
  if (!(params.r > 0)) throw InvalidInput("dilation requires r > 0");
  return {params.r * point.t,
          std::pow(params.r, params.gamma) * (scale_matrix_S(frame, params.r) * point.x)};
}

double dilation_determinant(const KalmanFrame& frame, const ScaleParams& params) {
  return std::pow(params.r, frame.N * params.gamma + 1.0 + frame.weighted_dim());
}

SpaceTimePoint group_op(const DriftBundle& drift, double h, const SpaceTimePoint& lhs,
                        const SpaceTimePoint& rhs) {
  const Mat Ah = rescaled_drift(drift.frame, drift.A, h);
  return {lhs.t + rhs.t, rhs.x + expm(Ah * rhs.t) * lhs.x};
}

SpaceTimePoint group_inverse(const DriftBundle& drift, double h, const SpaceTimePoint& point) {
  const Mat Ah = rescaled_drift(drift.frame, drift.A, h);
  return {-point.t, -(expm(Ah * (-point.t)) * point.x)};
}

double Cylinder::spatial_ratio(double t, const Vec& x) const {
  const Vec z = frame.Q.transpose() * (expm(Ah * (-t)) * x);
  double s = 0;
  for (int k = 0; k < frame.N; ++k) {
    const double v = z(k) / std::pow(r, frame.stratum_of(k));
    s += v * v;
  }
  return std::sqrt(s) / std::pow(r, gamma);
}

Cylinder make_cylinder(const DriftBundle& drift, double h, double gamma, double r) {
  if (!(r > 0)) throw InvalidInput("cylinder radius must be positive");
  return {drift.frame, rescaled_drift(drift.frame, drift.A, h), h, gamma, r};
}

bool cylinder_contains(const Cylinder& cyl, const SpaceTimePoint& point) {
  if (point.t < -cyl.r || point.t > 0) return false;
  return cyl.spatial_ratio(point.t, point.x) < 1.0;
}

Membership cylinder_classify(const Cylinder& cyl, const SpaceTimePoint& point) {
  constexpr double tol = 1e-12;
  const double tr = point.t / cyl.r;
  if (tr < -1 - tol || tr > tol) return Membership::Outside;
  const double s = cyl.spatial_ratio(point.t, point.x);
  if (s > 1 + tol) return Membership::Outside;
  if (s >= 1 - tol || std::abs(tr + 1) <= tol || std::abs(tr) <= tol) return Membership::Boundary;
  return Membership::Inside;
}

double gauge_proxy(const KalmanFrame& frame, double gamma, const SpaceTimePoint& point) {
  double s = std::abs(point.t);
  for (int j = 0; j <= frame.kappa; ++j)
    s += std::pow((frame.P[j] * point.x).norm(), 1.0 / (gamma + j));
  return s;
}

double gauge_rho(const DriftBundle& drift, double h, double gamma, const SpaceTimePoint& point) {
  if (point.t > 0) throw InvalidInput("gauge_rho requires t <= 0");
  const KalmanFrame& f = drift.frame;
  const Mat Ah = rescaled_drift(f, drift.A, h);
  const Vec z = expm(Ah * (-point.t)) * point.x;
  std::vector<double> zn(f.kappa + 1);
  for (int j = 0; j <= f.kappa; ++j) zn[j] = (f.P[j] * z).norm();
  const double T = -point.t;
  // closed-membership predicate, monotone in rho
  auto inside = [&](double rho) {
    if (rho < T) return false;
    double s = 0;
    for (int j = 0; j <= f.kappa; ++j) {
      const double v = zn[j] / std::pow(rho, gamma + j);
      s += v * v;
    }
    return s <= 1.0;
  };
  bool zero = true;
  for (double v : zn) zero = zero && v == 0.0;
  if (zero) return T;
  double lo = T;
  if (inside(lo) && lo > 0) return lo;
  double hi = std::max(T, 1e-300);
  for (int j = 0; j <= f.kappa; ++j)
    hi = std::max(hi, std::pow(std::sqrt(f.kappa + 1.0) * zn[j], 1.0 / (gamma + j)));
  while (!inside(hi)) hi *= 2;
  for (int it = 0; it < 200 && hi - lo > 1e-17 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (inside(mid) ? hi : lo) = mid;
  }
  return hi;
}

double modulus_exponent(const ScaleParams& params, int j) {
  return params.alpha / (params.alpha / params.q_conj + 1.0 / params.q + j);
}

double modulus_omega(const KalmanFrame& frame, const ScaleParams& params,
                     const SpaceTimePoint& point) {
  if (!(params.alpha > 0 && params.alpha <= 1)) throw InvalidExponent("alpha must lie in (0,1]");
  double s = std::pow(std::abs(point.t), params.alpha);
  for (int j = 0; j <= frame.kappa; ++j)
    s += std::pow((frame.P[j] * point.x).norm(), modulus_exponent(params, j));
  return s;
}

}  // namespace hjlab
