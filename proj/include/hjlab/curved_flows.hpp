#pragma once

#include <vector>

#include "hjlab/min_energy.hpp"

namespace hjlab {

/// Linear family Phi(s,w) = int_0^s e^{(s-tau)A_h} P0 beta_tau(w) dtau with
/// beta_tau(w) = sum_i tau^{alpha_i-1} B_i w, steering 0 at s=0 to w at s=t.
struct CurvedFamily {
  DriftBundle drift;
  double h = 0;
  double t = 1;
  std::vector<double> alphas;
  Mat U0;  ///< basis of E_0 (N x n0)
  Mat G;   ///< N x n0(kappa+1)
  Mat R;   ///< same shape, for h*t
  Mat H;   ///< right inverse of G
  Mat B;   ///< n0(kappa+1) x N, block i gives B_i
  double HR_norm = 0;
  double G_min_singular = 0;
  int levels = 40;
};

/// sum_i int_0^1 (1-tau)^{alpha_i-1} M(tau) U0 b_i dtau with M = e^{tau A0}
/// (h = 0 argument ignored) or M = R_A(tau; h).
Mat curved_operator(const DriftBundle& drift, const std::vector<double>& alphas, double h,
                    bool remainder, int levels = 40);

/// alpha_i evenly spaced in (1/q + margin, min(1, (p-1-sum j n_j)/N) - margin).
std::vector<double> default_alphas(const KalmanFrame& frame, double q, double p,
                                   double margin = 0.02);

CurvedFamily build_curved_family(const DriftBundle& drift, double h, double t,
                                 const std::vector<double>& alphas, double q, double tol = 1e-12);

/// Matrix of w -> Phi(s, w).
Mat phi_matrix(const CurvedFamily& fam, double s);

/// Control beta_tau(w) (N-vector in Im P0).
Vec curved_control(const CurvedFamily& fam, double tau, const Vec& w);

/// int_0^t |beta_tau(w)|^{q'} dtau by graded quadrature.
double curved_cost(const CurvedFamily& fam, const Vec& w, double q_conj);

struct JacobianRow {
  double s = 0;
  double det = 0;        ///< |det grad Phi^{-1}(s)|
  double grad_norm = 0;  ///< |S(t)^{-1} grad Phi^{-1}(s) S(s)|
};

struct JacobianReport {
  std::vector<JacobianRow> rows;
  double fitted_exponent = 0;   ///< log det vs log(t/s)
  double bound_exponent = 0;    ///< N alpha* + sum j n_j
  double gradient_exponent = 0; ///< log grad_norm vs log(t/s)
  double alpha_star = 0;
};

JacobianReport jacobian_profile(const CurvedFamily& fam, const std::vector<double>& s_list);

struct IntegrabilityReport {
  std::vector<double> partial_sums;  ///< after each dyadic level
  double total = 0;
  double tail_after_10 = 0;          ///< relative tail beyond s = t/2^10
  double ratio = 0;                  ///< fitted term ratio over the last levels
  bool converges = false;
};

/// sum over dyadic s of |det grad Phi^{-1}(s)|^{1/(p-1)} ds.
IntegrabilityReport integrability_proxy(const CurvedFamily& fam, double p, int levels = 40);

struct PsiPath {
  Trajectory traj;
  double midpoint_gap = 0;
  double cost = 0;  ///< int |beta|^{q'} over [-1, t]
};

/// Forward family for A and backward family (built from -A) on half-horizons.
std::pair<CurvedFamily, CurvedFamily> build_psi_families(const DriftBundle& drift, double h,
                                                         double t, const std::vector<double>& alphas,
                                                         double q);

/// Psi(-1)=0, Psi((t-1)/2)=w, Psi(t)=0; t in (-1, 0].
PsiPath concatenated_psi(const CurvedFamily& fwd, const CurvedFamily& bwd, const Vec& w,
                         double t, double q_conj, int steps = 64);

struct ConeSet {
  double epsilon = 0;
  double t = 0;
  double a = 0;
  double b = 0;
  double mu = 0;
  double nu = 0;      ///< q'(b - 1/q)
  double nu_alt = 0;  ///< a(p - thr), the alternative displayed form
  double threshold = 0;
  Mat shape;          ///< eps^{ap/N} (1+t)^b S(1+t)
  double volume = 0;
  double balance_residual = 0;  ///< |q'(b-1/q) - (1 - (1+Nb+sum i n_i)/p)|
};

ConeSet cone_set(const KalmanFrame& frame, double p, double q, double epsilon, double t);

}  // namespace hjlab
