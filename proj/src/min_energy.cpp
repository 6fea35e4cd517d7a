#include "hjlab/min_energy.hpp"

#include <cmath>
#include <random>

#include "hjlab/errors.hpp"
#include "hjlab/scaling.hpp"

namespace hjlab {

namespace {

constexpr double kMinQConj = 1.1;

void validate(const ControlProblemSpec& spec) {
  if (!(spec.s < spec.t)) throw InvalidInput("control problem needs s < t");
  if (!(spec.q_conj > 1)) throw InvalidExponent("q' must exceed 1");
  if (spec.q_conj < kMinQConj) throw InvalidExponent("q' below 1.1 is not supported");
  if (spec.h < 0) throw InvalidInput("h must be non-negative");
  const int N = spec.drift.frame.N;
  if (spec.x.size() != N || spec.y.size() != N) throw InvalidInput("endpoint dimension mismatch");
}

// Discretized dual: F(p) = sum_k w_k G_k psi(G_k^T p), psi(v) = |v|^{q-2} v.
struct DualProblem {
  std::vector<double> w;
  std::vector<Mat> G;  // N x n0
  Vec xi;
  double q = 2;
};

struct DualSolution {
  Vec p;
  double J = 0;
  double dual = 0;
  double residual = 0;
  int iterations = 0;
  bool fallback = false;
};

Vec psi(const Vec& v, double q) {
  const double n = v.norm();
  if (n == 0) return Vec::Zero(v.size());
  return std::pow(n, q - 2) * v;
}

Vec eval_F(const DualProblem& P, const Vec& p) {
  Vec F = Vec::Zero(P.xi.size());
  for (size_t k = 0; k < P.w.size(); ++k) F += P.w[k] * (P.G[k] * psi(P.G[k].transpose() * p, P.q));
  return F;
}

double eval_phi(const DualProblem& P, const Vec& p) {
  double s = 0;
  for (size_t k = 0; k < P.w.size(); ++k) s += P.w[k] * std::pow((P.G[k].transpose() * p).norm(), P.q);
  return s / P.q;
}

Mat eval_H(const DualProblem& P, const Vec& p) {
  const int N = static_cast<int>(P.xi.size());
  std::vector<Vec> vs(P.w.size());
  double vmax = 0;
  for (size_t k = 0; k < P.w.size(); ++k) {
    vs[k] = P.G[k].transpose() * p;
    vmax = std::max(vmax, vs[k].norm());
  }
  const double floor = 1e-12 * vmax;
  Mat H = Mat::Zero(N, N);
  for (size_t k = 0; k < P.w.size(); ++k) {
    const Vec& v = vs[k];
    const double n = std::max(v.norm(), floor);
    if (n == 0) continue;
    Mat D = Mat::Identity(v.size(), v.size());
    if (v.norm() > 0) D += (P.q - 2) * (v / v.norm()) * (v / v.norm()).transpose();
    H += P.w[k] * std::pow(n, P.q - 2) * (P.G[k] * D * P.G[k].transpose());
  }
  return H;
}

Mat discrete_gramian(const DualProblem& P) {
  const int N = static_cast<int>(P.xi.size());
  Mat W = Mat::Zero(N, N);
  for (size_t k = 0; k < P.w.size(); ++k) W += P.w[k] * P.G[k] * P.G[k].transpose();
  return W;
}

void finish(const DualProblem& P, DualSolution& sol) {
  const double qc = P.q / (P.q - 1);
  double sq = 0;
  for (size_t k = 0; k < P.w.size(); ++k) sq += P.w[k] * std::pow((P.G[k].transpose() * sol.p).norm(), P.q);
  sol.J = sq / qc;
  sol.dual = sol.p.dot(P.xi) - sq / P.q;
  sol.residual = (eval_F(P, sol.p) - P.xi).norm();
}

// Accelerated projected gradient on the discretized primal.
DualSolution primal_fallback(const DualProblem& P, double tol) {
  const int K = static_cast<int>(P.w.size());
  const double qc = P.q / (P.q - 1);
  const Mat W = discrete_gramian(P);
  Eigen::LDLT<Mat> Wf(W);
  auto project = [&](std::vector<Vec>& b) {
    Vec L = Vec::Zero(P.xi.size());
    for (int k = 0; k < K; ++k) L += P.w[k] * P.G[k] * b[k];
    const Vec lam = Wf.solve(L - P.xi);
    for (int k = 0; k < K; ++k) b[k] -= P.G[k].transpose() * lam;
  };
  auto cost = [&](const std::vector<Vec>& b) {
    double s = 0;
    for (int k = 0; k < K; ++k) s += P.w[k] * std::pow(b[k].norm(), qc);
    return s / qc;
  };
  const int n0 = static_cast<int>(P.G[0].cols());
  std::vector<Vec> b(K, Vec::Zero(n0));
  project(b);
  std::vector<Vec> yk = b, prev = b;
  double step = 1.0, tk = 1.0, best = cost(b);
  std::vector<Vec> best_b = b;
  for (int it = 0; it < 20000; ++it) {
    std::vector<Vec> g(K);
    for (int k = 0; k < K; ++k) g[k] = psi(yk[k], qc);
    const double fy = cost(yk);
    std::vector<Vec> nb(K);
    for (;;) {
      for (int k = 0; k < K; ++k) nb[k] = yk[k] - step * g[k];
      project(nb);
      double lin = 0, quad = 0;
      for (int k = 0; k < K; ++k) {
        const Vec d = nb[k] - yk[k];
        lin += P.w[k] * g[k].dot(d);
        quad += P.w[k] * d.squaredNorm();
      }
      if (cost(nb) <= fy + lin + quad / (2 * step) || step < 1e-14) break;
      step *= 0.5;
    }
    const double tn = 0.5 * (1 + std::sqrt(1 + 4 * tk * tk));
    for (int k = 0; k < K; ++k) yk[k] = nb[k] + ((tk - 1) / tn) * (nb[k] - prev[k]);
    tk = tn;
    const double c = cost(nb);
    if (c < best) {
      const double rel = (best - c) / std::max(c, 1e-300);
      best = c;
      best_b = nb;
      if (rel < 1e-3 * tol && it > 100) break;
    }
    prev = nb;
    step *= 1.5;
  }
  DualSolution sol;
  sol.fallback = true;
  // multiplier from the first-order condition psi_q'(beta) = G^T p in least squares
  Mat M = Mat::Zero(P.xi.size(), P.xi.size());
  Vec rhs = Vec::Zero(P.xi.size());
  for (int k = 0; k < K; ++k) {
    M += P.w[k] * P.G[k] * P.G[k].transpose();
    rhs += P.w[k] * P.G[k] * psi(best_b[k], qc);
  }
  sol.p = M.ldlt().solve(rhs);
  finish(P, sol);
  sol.J = best;
  return sol;
}

DualSolution solve_dual(const DualProblem& P, double tol, int max_newton) {
  DualSolution sol;
  const int N = static_cast<int>(P.xi.size());
  const double xin = P.xi.norm();
  if (xin == 0) {
    sol.p = Vec::Zero(N);
    return sol;
  }
  // q = 2 solution rescaled along its ray as initial guess
  const Mat W = discrete_gramian(P);
  Vec p = W.ldlt().solve(P.xi);
  {
    const double num = p.dot(P.xi), den = P.q * eval_phi(P, p);
    if (num > 0 && den > 0) p *= std::pow(num / den, 1.0 / (P.q - 1));
  }
  const double target = std::max(1e-3 * tol, 1e-14) * xin;
  Vec r = eval_F(P, p) - P.xi;
  double rn = r.norm();
  int it = 0;
  bool stalled = false;
  for (; it < max_newton && rn > target; ++it) {
    const Mat H = eval_H(P, p);
    Vec d = H.ldlt().solve(-r);
    if (!d.allFinite()) {
      stalled = true;
      break;
    }
    double a = 1.0;
    Vec pn, rnew;
    double rnn = 0;
    for (;;) {
      pn = p + a * d;
      rnew = eval_F(P, pn) - P.xi;
      rnn = rnew.norm();
      if (rnn <= (1 - 1e-4 * a) * rn) break;
      a *= 0.5;
      if (a < 1e-12) break;
    }
    if (a < 1e-12) {
      stalled = rn > 1e3 * target;
      break;
    }
    p = pn;
    r = rnew;
    rn = rnn;
  }
  if (stalled || rn > 1e3 * target) {
    DualSolution fb = primal_fallback(P, tol);
    fb.iterations = it;
    if (!(fb.residual <= 1e3 * target) && !(fb.residual < rn))
      throw NoConvergence("minimum-energy solver did not converge", fb.J, fb.residual);
    if (fb.residual > std::max(1e3 * target, tol * xin))
      throw NoConvergence("minimum-energy solver did not converge", fb.J, fb.residual);
    return fb;
  }
  sol.p = p;
  sol.iterations = it;
  finish(P, sol);
  return sol;
}

DualProblem build_exponential_problem(const ControlProblemSpec& spec, const Rule& rule,
                                      const Mat& AhT, const Mat& U0, double T) {
  DualProblem P;
  P.q = spec.q_conj / (spec.q_conj - 1);
  P.w = rule.weights;
  P.G.reserve(rule.nodes.size());
  for (double tau : rule.nodes) P.G.push_back(expm(AhT * ((T - tau) / T)) * U0);
  return P;
}

}  // namespace

Mat controllability_gramian(const Mat& A, const Mat& P0, double T) {
  const Eigen::Index n = A.rows();
  Mat big = Mat::Zero(2 * n, 2 * n);
  big.topLeftCorner(n, n) = -A * T;
  big.topRightCorner(n, n) = P0 * P0.transpose() * T;
  big.bottomRightCorner(n, n) = A.transpose() * T;
  const Mat E = expm(big);
  const Mat W = E.bottomRightCorner(n, n).transpose() * E.topRightCorner(n, n);
  return 0.5 * (W + W.transpose());
}

CostValue gramian_cost_q2(const ControlProblemSpec& spec) {
  validate(spec);
  if (spec.q_conj != 2) throw InvalidExponent("gramian_cost_q2 requires q' = 2");
  const KalmanFrame& f = spec.drift.frame;
  const double T = spec.t - spec.s;
  const Mat Ah = rescaled_drift(f, spec.drift.A, spec.h);
  const Vec xi = spec.x - expm(Ah * T) * spec.y;
  // S(T)^{-1} W S(T)^{-1} = T * W_1(A_{hT})
  const Mat Wt = T * controllability_gramian(rescaled_drift(f, spec.drift.A, spec.h * T), spec.drift.P0, 1.0);
  const Mat S = scale_matrix_S(f, T);
  const Mat W = S * Wt * S;
  Eigen::JacobiSVD<Mat> svd(W);
  const Vec& sv = svd.singularValues();
  if (!(sv(sv.size() - 1) > 0) || sv(0) / sv(sv.size() - 1) > 1e14)
    throw IllConditioned("Gramian is numerically singular for this horizon");
  const Vec xit = scale_matrix_S(f, 1.0 / T) * xi;
  const Vec pt = Wt.ldlt().solve(xit);
  CostValue c;
  c.J = 0.5 * xit.dot(pt);
  c.p = scale_matrix_S(f, 1.0 / T) * pt;
  c.residual = (W * c.p - xi).norm();
  return c;
}

std::pair<CostValue, Trajectory> min_energy_cost(const ControlProblemSpec& spec, double tol,
                                                 const SolverOptions& opt) {
  validate(spec);
  if (!(tol > 0)) throw InvalidInput("tol must be positive");
  const KalmanFrame& f = spec.drift.frame;
  const int N = f.N;
  const double T = spec.t - spec.s;
  const Mat Ah = rescaled_drift(f, spec.drift.A, spec.h);
  const Mat AhT = rescaled_drift(f, spec.drift.A, spec.h * T);
  const Mat U0 = f.block(0);
  const Mat Sinv = scale_matrix_S(f, 1.0 / T);
  const Mat S = scale_matrix_S(f, T);
  const Rule rule = composite_gauss(0.0, T, opt.panels);

  DualProblem P = build_exponential_problem(spec, rule, AhT, U0, T);
  const Vec xi = spec.x - expm(Ah * T) * spec.y;
  P.xi = Sinv * xi;
  DualSolution sol = solve_dual(P, tol, opt.max_newton);

  CostValue cost;
  cost.J = sol.J;
  cost.p = Sinv * sol.p;
  cost.residual = (S * (eval_F(P, sol.p) - P.xi)).norm();
  cost.dual_gap = std::abs(sol.J - sol.dual);
  cost.iterations = sol.iterations;
  cost.fallback = sol.fallback;

  // piecewise-constant controls: panel averages of the optimal control
  const int M = opt.panels;
  const double dt = T / M;
  const int per = static_cast<int>(rule.nodes.size()) / M;
  Mat coeff(M, U0.cols());
  for (int k = 0; k < M; ++k) {
    Vec acc = Vec::Zero(U0.cols());
    for (int i = 0; i < per; ++i) {
      const int idx = k * per + i;
      acc += rule.weights[idx] * psi(P.G[idx].transpose() * sol.p, P.q);
    }
    coeff.row(k) = acc.transpose() / dt;
  }
  const auto [E, Phi1] = expm_with_integral(Ah, dt);
  const Mat B = Phi1 * U0;
  // minimal correction so the discrete endpoint is hit exactly
  {
    std::vector<Mat> Lk(M);
    Mat prop = Mat::Identity(N, N);
    for (int k = M - 1; k >= 0; --k) {
      Lk[k] = Sinv * prop * B;
      prop = prop * E;
    }
    Vec eta = spec.y;
    for (int k = 0; k < M; ++k) eta = E * eta + B * coeff.row(k).transpose();
    const Vec err = Sinv * (spec.x - eta);
    Mat LL = Mat::Zero(N, N);
    for (int k = 0; k < M; ++k) LL += Lk[k] * Lk[k].transpose();
    const Vec lam = LL.ldlt().solve(err);
    for (int k = 0; k < M; ++k) coeff.row(k) += (Lk[k].transpose() * lam).transpose();
  }
  Trajectory traj;
  traj.times.resize(M + 1);
  traj.states.resize(M + 1, N);
  traj.controls.resize(M, N);
  Vec eta = spec.y;
  traj.states.row(0) = eta.transpose();
  traj.times[0] = spec.s;
  double tc = 0;
  for (int k = 0; k < M; ++k) {
    const Vec c = coeff.row(k).transpose();
    eta = E * eta + B * c;
    traj.states.row(k + 1) = eta.transpose();
    traj.controls.row(k) = (U0 * c).transpose();
    traj.times[k + 1] = spec.s + (k + 1) * dt;
    tc += std::pow(c.norm(), spec.q_conj) * dt;
  }
  traj.times[M] = spec.t;
  traj.cost = tc / spec.q_conj;
  return {cost, traj};
}

Vec optimal_control(const ControlProblemSpec& spec, const CostValue& cost, double tau) {
  const KalmanFrame& f = spec.drift.frame;
  const Mat Ah = rescaled_drift(f, spec.drift.A, spec.h);
  const Mat U0 = f.block(0);
  const double q = spec.q_conj / (spec.q_conj - 1);
  const Vec v = U0.transpose() * (expm(Ah.transpose() * (spec.t - tau)) * cost.p);
  return U0 * psi(v, q);
}

double jhat_reduced(const DriftBundle& drift, double h, const Vec& xi, double q_conj, double tol,
                    const SolverOptions& opt) {
  if (h < 0) throw InvalidInput("h must be non-negative");
  if (!(q_conj > 1)) throw InvalidExponent("q' must exceed 1");
  if (q_conj < kMinQConj) throw InvalidExponent("q' below 1.1 is not supported");
  const KalmanFrame& f = drift.frame;
  const Mat U0 = f.block(0);
  const Rule rule = composite_gauss(0.0, 1.0, opt.panels);
  DualProblem P;
  P.q = q_conj / (q_conj - 1);
  P.w = rule.weights;
  P.xi = xi;
  for (double tau : rule.nodes)
    P.G.push_back((principal_flow(f, tau) + flow_remainder_RA(f, drift.A, tau, h)) * U0);
  return solve_dual(P, tol, opt.max_newton).J;
}

CostBoundsReport scaled_cost_bounds_report(const DriftBundle& drift, double q,
                                           const std::vector<double>& h_list,
                                           const std::vector<double>& t_list,
                                           const std::vector<Vec>& xi_samples,
                                           double c_stability, double tol) {
  CostBoundsReport rep;
  const double qc = q / (q - 1);
  rep.min_ratio = std::numeric_limits<double>::infinity();
  rep.max_ratio = 0;
  for (double h : h_list)
    for (double t : t_list)
      for (size_t i = 0; i < xi_samples.size(); ++i) {
        ControlProblemSpec spec{drift, h, qc, 0.0, t, Vec::Zero(drift.frame.N), xi_samples[i]};
        const double J = min_energy_cost(spec, tol).first.J;
        const double scale = std::pow(t, -qc / q) *
                             std::pow((scale_matrix_S(drift.frame, 1.0 / t) * xi_samples[i]).norm(), qc);
        CostBoundRow row{h, t, static_cast<int>(i), J, J / scale};
        rep.rows.push_back(row);
        rep.min_ratio = std::min(rep.min_ratio, row.ratio);
        rep.max_ratio = std::max(rep.max_ratio, row.ratio);
      }
  if (rep.rows.empty()) {
    rep.min_ratio = rep.max_ratio = 0;
    return rep;
  }
  rep.stable = rep.max_ratio / rep.min_ratio <= c_stability;
  return rep;
}

HStarEstimate estimate_h_star(const DriftBundle& drift, double q, int directions, int levels,
                              unsigned seed) {
  const KalmanFrame& f = drift.frame;
  const int N = f.N;
  const double qc = q / (q - 1);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<Vec> dirs;
  for (int i = 0; i < directions; ++i) {
    Vec v(N);
    for (int k = 0; k < N; ++k) v(k) = g(rng);
    dirs.push_back(v.normalized());
  }
  HStarEstimate est;
  // minimal L^2 right inverse of xi = int_0^1 e^{tau A0} P0 beta
  const Rule rule = composite_gauss(0.0, 1.0, 64);
  const Mat W0 = controllability_gramian(f.A0, drift.P0, 1.0);
  Eigen::LDLT<Mat> W0f(W0);
  for (const Vec& d : dirs) {
    const Vec lam = W0f.solve(d);
    double s = 0;
    for (size_t k = 0; k < rule.nodes.size(); ++k)
      s += rule.weights[k] * std::pow((drift.P0 * principal_flow(f, rule.nodes[k]).transpose() * lam).norm(), qc);
    est.H_norm = std::max(est.H_norm, std::pow(s, 1.0 / qc));
  }
  const double a = norm2(drift.A);
  est.formula = a > 0 ? std::log(1 + 1 / (2 * est.H_norm * std::exp(a))) / a
                      : std::numeric_limits<double>::infinity();
  auto constant = [&](double h) {
    double lo = std::numeric_limits<double>::infinity(), hi = 0;
    for (const Vec& d : dirs) {
      const double J = jhat_reduced(drift, h, d, qc, 1e-8, SolverOptions{64, 200});
      lo = std::min(lo, J);
      hi = std::max(hi, J);
    }
    return std::max(hi, 1 / lo);
  };
  const double c0 = constant(0.0);
  est.h_values.push_back(0.0);
  est.constants.push_back(c0);
  double h = 1.0;
  for (int l = 0; l < levels; ++l, h *= 0.5) {
    const double c = constant(h);
    est.h_values.push_back(h);
    est.constants.push_back(c);
    if (c <= 2 * c0) {
      est.empirical = h;
      break;
    }
  }
  return est;
}

ExtentReport extent_bound_check(const ControlProblemSpec& spec, const Trajectory& traj) {
  const KalmanFrame& f = spec.drift.frame;
  const double T = spec.t - spec.s;
  const double q = spec.q_conj / (spec.q_conj - 1);
  const Mat Ah = rescaled_drift(f, spec.drift.A, spec.h);
  const Mat Sinv = scale_matrix_S(f, 1.0 / T);
  const Vec ystar = expm(Ah * T) * spec.y;
  ExtentReport rep;
  double norm = 0;
  for (int k = 0; k + 1 < static_cast<int>(traj.times.size()); ++k)
    norm += std::pow(traj.controls.row(k).norm(), spec.q_conj) * (traj.times[k + 1] - traj.times[k]);
  rep.control_norm = std::pow(norm, 1.0 / spec.q_conj);
  double m1 = 0, m2 = 0;
  for (size_t k = 0; k < traj.times.size(); ++k) {
    const Vec fwd = expm(Ah * (spec.t - traj.times[k])) * traj.states.row(k).transpose();
    m1 = std::max(m1, std::pow(T, -1 / q) * (Sinv * (fwd - ystar)).norm());
    m2 = std::max(m2, std::pow(T, -1 / q) * (Sinv * (fwd - spec.x)).norm());
  }
  rep.max_lhs = std::max(m1, m2);
  if (rep.control_norm > 0) {
    rep.C_start = m1 / rep.control_norm;
    rep.C_end = m2 / rep.control_norm;
  }
  return rep;
}

}  // namespace hjlab
