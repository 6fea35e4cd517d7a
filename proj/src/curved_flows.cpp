#include "hjlab/curved_flows.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hjlab/errors.hpp"
#include "hjlab/scaling.hpp"

namespace hjlab {

namespace {

Vec block_powers(const CurvedFamily& fam, double s) {
  const int n0 = static_cast<int>(fam.U0.cols());
  Vec d(n0 * fam.alphas.size());
  for (size_t i = 0; i < fam.alphas.size(); ++i)
    d.segment(i * n0, n0).setConstant(std::pow(s, fam.alphas[i]));
  return d;
}

}  // namespace

Mat curved_operator(const DriftBundle& drift, const std::vector<double>& alphas, double h,
                    bool remainder, int levels) {
  const KalmanFrame& f = drift.frame;
  const Mat U0 = f.block(0);
  const int n0 = static_cast<int>(U0.cols());
  const int m = static_cast<int>(alphas.size());
  Mat out = Mat::Zero(f.N, n0 * m);
  if (remainder && h == 0.0) return out;
  auto kernel = [&](double tau) -> Mat {
    return remainder ? Mat(flow_remainder_RA(f, drift.A, tau, h) * U0) : Mat(principal_flow(f, tau) * U0);
  };
  const Rule rule = graded_gauss(0.0, 1.0, levels);
  for (size_t k = 0; k < rule.nodes.size(); ++k) {
    const Mat K = kernel(rule.nodes[k]);
    const double om = 1.0 - rule.nodes[k];
    for (int i = 0; i < m; ++i) out.middleCols(i * n0, n0) += rule.weights[k] * std::pow(om, alphas[i] - 1) * K;
  }
  // uncovered tail [1-L, 1]: kernel frozen at tau = 1
  const double L = std::ldexp(1.0, -levels);
  const Mat K1 = kernel(1.0);
  for (int i = 0; i < m; ++i) out.middleCols(i * n0, n0) += std::pow(L, alphas[i]) / alphas[i] * K1;
  return out;
}

std::vector<double> default_alphas(const KalmanFrame& frame, double q, double p, double margin) {
  const double lo = 1.0 / q + margin;
  const double hi = std::min(1.0, (p - 1.0 - frame.weighted_dim()) / frame.N) - margin;
  const int m = frame.kappa + 1;
  if (!(hi > lo + 1e-3 * (m - 1)))
    throw InvalidExponent("p too small for an admissible range of alpha");
  std::vector<double> a(m);
  if (m == 1) {
    a[0] = 0.5 * (lo + hi);
    return a;
  }
  for (int i = 0; i < m; ++i) a[i] = lo + (hi - lo) * i / (m - 1);
  return a;
}

CurvedFamily build_curved_family(const DriftBundle& drift, double h, double t,
                                 const std::vector<double>& alphas, double q, double tol) {
  (void)tol;
  const KalmanFrame& f = drift.frame;
  if (!(t > 0)) throw InvalidInput("horizon must be positive");
  if (static_cast<int>(alphas.size()) != f.kappa + 1) throw InvalidInput("need kappa+1 exponents");
  for (size_t i = 0; i < alphas.size(); ++i) {
    if (!(alphas[i] > 1.0 / q && alphas[i] < 1.0)) throw InvalidExponent("alpha_i must lie in (1/q, 1)");
    for (size_t j = 0; j < i; ++j)
      if (std::abs(alphas[i] - alphas[j]) < 1e-3) throw InvalidExponent("alpha_i must be distinct");
  }
  CurvedFamily fam;
  fam.drift = drift;
  fam.h = h;
  fam.t = t;
  fam.alphas = alphas;
  fam.U0 = f.block(0);
  fam.G = curved_operator(drift, alphas, 0.0, false, fam.levels);
  fam.R = curved_operator(drift, alphas, h * t, true, fam.levels);
  Eigen::JacobiSVD<Mat> svd(fam.G, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec& sv = svd.singularValues();
  fam.G_min_singular = sv(sv.size() - 1);
  if (!(fam.G_min_singular > 1e-8)) throw IllConditioned("curved operator is not surjective");
  Vec inv = Vec::Zero(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > 1e-12 * sv(0)) inv(i) = 1.0 / sv(i);
  fam.H = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
  const Mat HR = fam.H * fam.R;
  fam.HR_norm = norm2(HR);
  if (fam.HR_norm > 0.5) throw HTooLarge("|H R_{ht}| exceeds 1/2; reduce h*t");
  const Mat I = Mat::Identity(HR.rows(), HR.cols());
  const Vec dinv = block_powers(fam, t).cwiseInverse();
  fam.B = dinv.asDiagonal() * (I + HR).lu().solve(fam.H * scale_matrix_S(f, 1.0 / t));
  return fam;
}

Mat phi_matrix(const CurvedFamily& fam, double s) {
  const KalmanFrame& f = fam.drift.frame;
  if (s == 0.0) return Mat::Zero(f.N, f.N);
  const Mat Rs = s == fam.t ? fam.R : curved_operator(fam.drift, fam.alphas, fam.h * s, true, fam.levels);
  return scale_matrix_S(f, s) * (fam.G + Rs) * block_powers(fam, s).asDiagonal() * fam.B;
}

Vec curved_control(const CurvedFamily& fam, double tau, const Vec& w) {
  const int n0 = static_cast<int>(fam.U0.cols());
  const Vec c = fam.B * w;
  Vec b = Vec::Zero(n0);
  for (size_t i = 0; i < fam.alphas.size(); ++i) b += std::pow(tau, fam.alphas[i] - 1) * c.segment(i * n0, n0);
  return fam.U0 * b;
}

double curved_cost(const CurvedFamily& fam, const Vec& w, double q_conj) {
  const auto it = std::min_element(fam.alphas.begin(), fam.alphas.end());
  const double e = (*it - 1) * q_conj;
  if (!(e > -1)) throw InvalidExponent("control is not q'-integrable for these exponents");
  // refine until the neglected tail is below 1e-16 relative
  const int levels = std::min(1000, static_cast<int>(std::ceil(16 * std::log2(10.0) / (e + 1))) + 8);
  double s = 0;
  for (int k = 0; k < levels; ++k) {
    const Rule rule = composite_gauss(fam.t * std::ldexp(1.0, -k - 1), fam.t * std::ldexp(1.0, -k), 1);
    for (size_t j = 0; j < rule.nodes.size(); ++j)
      s += rule.weights[j] * std::pow(curved_control(fam, rule.nodes[j], w).norm(), q_conj);
  }
  const int i = static_cast<int>(it - fam.alphas.begin());
  const int n0 = static_cast<int>(fam.U0.cols());
  const double c = (fam.B * w).segment(i * n0, n0).norm();
  const double L = fam.t * std::ldexp(1.0, -levels);
  s += std::pow(c, q_conj) * std::pow(L, e + 1) / (e + 1);
  return s;
}

JacobianReport jacobian_profile(const CurvedFamily& fam, const std::vector<double>& s_list) {
  const KalmanFrame& f = fam.drift.frame;
  JacobianReport rep;
  rep.alpha_star = *std::max_element(fam.alphas.begin(), fam.alphas.end());
  rep.bound_exponent = f.N * rep.alpha_star + f.weighted_dim();
  std::vector<double> lx, ld, lg;
  const Mat St_inv = scale_matrix_S(f, 1.0 / fam.t);
  for (double s : s_list) {
    if (!(s > 0 && s <= fam.t)) throw InvalidInput("jacobian_profile needs 0 < s <= t");
    const Mat inv = phi_matrix(fam, s).inverse();
    JacobianRow row{s, std::abs(inv.determinant()), norm2(St_inv * inv * scale_matrix_S(f, s))};
    rep.rows.push_back(row);
    if (s < fam.t) {
      lx.push_back(std::log(fam.t / s));
      ld.push_back(std::log(row.det));
      lg.push_back(std::log(row.grad_norm));
    }
  }
  rep.fitted_exponent = fit_line(lx, ld).slope;
  rep.gradient_exponent = fit_line(lx, lg).slope;
  return rep;
}

IntegrabilityReport integrability_proxy(const CurvedFamily& fam, double p, int levels) {
  IntegrabilityReport rep;
  std::vector<double> terms;
  double s = fam.t, acc = 0;
  auto add_level = [&] {
    const double det = std::abs(phi_matrix(fam, s).inverse().determinant());
    const double term = std::pow(det, 1.0 / (p - 1)) * 0.5 * s;
    terms.push_back(term);
    acc += term;
    rep.partial_sums.push_back(acc);
    s *= 0.5;
  };
  // geometric rate of the last terms; the remainder past the last level is extrapolated
  auto rate = [&]() -> double {
    const int n = static_cast<int>(terms.size()), m = std::min(10, n);
    if (m < 3) return std::numeric_limits<double>::quiet_NaN();
    std::vector<double> lx, ly;
    for (int k = n - m; k < n; ++k) {
      if (!(terms[k] > 0)) return std::numeric_limits<double>::quiet_NaN();
      lx.push_back(k);
      ly.push_back(std::log(terms[k]));
    }
    return std::exp(fit_line(lx, ly).slope);
  };
  auto remainder = [&](double ratio) { return terms.back() * ratio / (1 - ratio); };
  for (int k = 0; k < levels; ++k) add_level();
  // slow geometric decay gets extra levels before the verdict
  for (int k = levels; k < 4 * levels; ++k) {
    const double r = rate();
    if (!(r < 1) || remainder(r) < 1e-3 * acc) break;
    add_level();
  }
  rep.total = acc;
  double tail = 0;
  for (size_t k = 11; k < terms.size(); ++k) tail += terms[k];
  rep.tail_after_10 = acc > 0 ? tail / acc : 0;
  rep.ratio = rate();
  if (rep.ratio < 1) rep.converges = remainder(rep.ratio) < 1e-3 * acc;
  return rep;
}

std::pair<CurvedFamily, CurvedFamily> build_psi_families(const DriftBundle& drift, double h,
                                                         double t, const std::vector<double>& alphas,
                                                         double q) {
  if (!(t > -1 && t <= 0)) throw InvalidInput("psi families need t in (-1, 0]");
  const double T = 0.5 * (1 + t);
  DriftBundle back = make_bundle(-drift.A, drift.P0);
  return {build_curved_family(drift, h, T, alphas, q), build_curved_family(back, h, T, alphas, q)};
}

namespace {

// average of beta over [a,b]; the powers integrate in closed form
Vec averaged_control(const CurvedFamily& fam, double a, double b, const Vec& w) {
  const int n0 = static_cast<int>(fam.U0.cols());
  const Vec c = fam.B * w;
  Vec out = Vec::Zero(n0);
  for (size_t i = 0; i < fam.alphas.size(); ++i) {
    const double al = fam.alphas[i];
    out += (std::pow(b, al) - std::pow(a, al)) / al / (b - a) * c.segment(i * n0, n0);
  }
  return fam.U0 * out;
}

}  // namespace

PsiPath concatenated_psi(const CurvedFamily& fwd, const CurvedFamily& bwd, const Vec& w, double t,
                         double q_conj, int steps) {
  const int N = fwd.drift.frame.N;
  const double T = 0.5 * (1 + t);
  if (std::abs(fwd.t - T) > 1e-14 || std::abs(bwd.t - T) > 1e-14)
    throw InvalidInput("family horizons do not match (1+t)/2");
  if (std::abs(fwd.h - bwd.h) > 0) throw InvalidInput("families must share h");
  const double mid = 0.5 * (t - 1);
  PsiPath out;
  Trajectory& tr = out.traj;
  tr.times.resize(2 * steps + 1);
  tr.states.resize(2 * steps + 1, N);
  tr.controls.resize(2 * steps, N);
  const double dt = T / steps;
  for (int k = 0; k <= steps; ++k) {
    const double sigma = k * dt;
    tr.times[k] = -1 + sigma;
    tr.states.row(k) = (phi_matrix(fwd, sigma) * w).transpose();
    if (k < steps) tr.controls.row(k) = averaged_control(fwd, sigma, sigma + dt, w).transpose();
  }
  const Vec at_mid_f = tr.states.row(steps).transpose();
  for (int k = 1; k <= steps; ++k) {
    const double sigma = T - k * dt;  // time to go
    tr.times[steps + k] = mid + k * dt;
    tr.states.row(steps + k) = (phi_matrix(bwd, std::max(sigma, 0.0)) * w).transpose();
    tr.controls.row(steps + k - 1) =
        -averaged_control(bwd, std::max(sigma, 0.0), sigma + dt, w).transpose();
  }
  tr.times[0] = -1;
  tr.times[steps] = mid;
  tr.times[2 * steps] = t;
  const Vec at_mid_b = phi_matrix(bwd, T) * w;
  out.midpoint_gap = std::max((at_mid_f - w).norm(), (at_mid_b - w).norm());
  if (out.midpoint_gap > 1e-8 * (1 + w.norm())) throw InternalConsistency("psi construction mismatch at midpoint");
  out.cost = curved_cost(fwd, w, q_conj) + curved_cost(bwd, w, q_conj);
  double c = 0;
  for (int k = 0; k < 2 * steps; ++k) c += std::pow(tr.controls.row(k).norm(), q_conj) * (tr.times[k + 1] - tr.times[k]);
  tr.cost = c / q_conj;
  return out;
}

ConeSet cone_set(const KalmanFrame& frame, double p, double q, double epsilon, double t) {
  const int N = frame.N;
  const double qc = q / (q - 1);
  const double sum = frame.weighted_dim();
  const double thr = 1.0 + N / q + sum;
  if (!(p > thr)) throw InvalidExponent("p must exceed N/q + 1 + sum j n_j");
  if (!(epsilon > 0)) throw InvalidInput("epsilon must be positive");
  if (!(t > -1 && t <= 0)) throw InvalidInput("cone time must lie in (-1, 0]");
  ConeSet c;
  c.epsilon = epsilon;
  c.t = t;
  c.threshold = thr;
  c.a = N / (N + p * qc);
  c.b = 1.0 / q + (p - thr) / (N + p * qc);
  c.mu = p * qc / (N + p * qc);
  c.nu = qc * (c.b - 1.0 / q);
  c.nu_alt = c.a * (p - thr);
  c.balance_residual = std::abs(c.nu - (1.0 - (1.0 + N * c.b + sum) / p));
  c.shape = std::pow(epsilon, c.a * p / N) * std::pow(1 + t, c.b) * scale_matrix_S(frame, 1 + t);
  const double ball = std::pow(M_PI, 0.5 * N) / std::tgamma(0.5 * N + 1);
  c.volume = ball * std::abs(c.shape.determinant());
  return c;
}

}  // namespace hjlab
