#include "hjlab/regularity.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "hjlab/errors.hpp"

namespace hjlab {

namespace {

// Visits every lattice point of step `step/sub` inside [lo_idx, hi_idx] per axis.
template <class Fn>
void for_each_lattice(const std::vector<long>& lo, const std::vector<long>& hi, Fn&& fn) {
  const size_t d = lo.size();
  std::vector<long> idx(lo);
  for (size_t k = 0; k < d; ++k)
    if (lo[k] > hi[k]) return;
  for (;;) {
    fn(idx);
    size_t k = 0;
    while (k < d) {
      if (++idx[k] <= hi[k]) break;
      idx[k] = lo[k];
      ++k;
    }
    if (k == d) return;
  }
}

}  // namespace

double oscillation(const GridFunction& u, const Cylinder& cyl, int subcell, size_t* nodes_out) {
  if (subcell < 1) throw InvalidInput("subcell sampling must be at least 1");
  const int N = u.dim();
  const GridSpec& g = u.spec();
  const double tol = 1e-9 * std::max(1.0, cyl.r);
  const double rg = std::pow(cyl.r, cyl.gamma);
  double lo_v = std::numeric_limits<double>::infinity(), hi_v = -lo_v;
  size_t nodes = 0;
  const int tsub = subcell;
  for (int k = 0; k < u.slices(); ++k) {
    for (int m = 0; m < tsub; ++m) {
      if (m > 0 && k == u.slices() - 1) break;
      const double t = u.time(k) + m * u.dt() / tsub;
      if (t < -cyl.r - tol || t > tol) continue;
      const Mat M = cylinder_ratio_matrix(cyl, t);
      const Mat Minv = M.inverse();
      std::vector<long> lo(N), hi(N);
      for (int a = 0; a < N; ++a) {
        const double ext = rg * Minv.row(a).norm();
        if (-ext < g.lo(a) - 1e-9 * ext || ext > g.hi(a) + 1e-9 * ext)
          throw DomainMismatch("cylinder leaves the grid box");
        const double h = u.step()(a) / subcell;
        lo[a] = static_cast<long>(std::ceil((-ext - g.lo(a)) / h - 1e-9));
        hi[a] = static_cast<long>(std::floor((ext - g.lo(a)) / h + 1e-9));
      }
      Vec z(N);
      for_each_lattice(lo, hi, [&](const std::vector<long>& idx) {
        bool node = m == 0;
        for (int a = 0; a < N; ++a) {
          z(a) = g.lo(a) + idx[a] * u.step()(a) / subcell;
          if (idx[a] % subcell) node = false;
        }
        if ((M * z).norm() >= rg) return;
        const double v = m == 0 ? u.interp_slice(k, z) : u.eval_adapted(t, z);
        lo_v = std::min(lo_v, v);
        hi_v = std::max(hi_v, v);
        if (node) ++nodes;
      });
    }
  }
  if (nodes_out) *nodes_out = nodes;
  if (nodes < 8) throw TooCoarse("cylinder contains " + std::to_string(nodes) + " grid nodes");
  return hi_v - lo_v;
}

GridSpec unit_cylinder_grid(const DriftBundle& drift, double h, int nodes, int nt) {
  const KalmanFrame& f = drift.frame;
  const Mat Ah = rescaled_drift(f, drift.A, h);
  Vec ext = Vec::Zero(f.N);
  for (int i = 0; i <= 64; ++i) {
    const double t = -i / 64.0;
    const Mat F = f.Q.transpose() * expm(Ah * t) * f.Q;
    for (int a = 0; a < f.N; ++a) ext(a) = std::max(ext(a), F.row(a).norm());
  }
  GridSpec s;
  s.lo.resize(f.N);
  s.hi.resize(f.N);
  s.n.assign(f.N, nodes);
  for (int a = 0; a < f.N; ++a) {
    const double e = 1.1 * ext(a) * (1 + 4.0 / (nodes - 1));
    s.lo(a) = -e;
    s.hi(a) = e;
  }
  s.t0 = -1;
  s.t1 = 0;
  s.nt = nt;
  return s;
}

OscillationReport improvement_experiment(const ImprovementSpec& sp, GridFunction* solution) {
  const double gamma = sp.gamma > 0 ? sp.gamma : 1.0 / sp.q;
  if (!(sp.delta > 0 && sp.delta < 1)) throw InvalidInput("delta must lie in (0,1)");
  HJProblem pb;
  pb.drift = sp.drift;
  pb.h = sp.h;
  pb.q = sp.q;
  pb.lambda = sp.lambda;
  pb.eps = sp.eps;
  pb.f = sp.f;
  pb.data = two_level_data(sp.drift, sp.h, sp.delta, gamma, sp.g_in);
  ControlSpec cs;
  cs.b_max = sp.b_max;
  cs.threads = sp.threads;
  GridSpec grid = unit_cylinder_grid(sp.drift, sp.h, sp.nodes, 1);
  grid.nt = min_time_steps(pb, grid, sp.b_max);
  BarrierResult br = barrier_upper(pb, grid, cs, two_level_inner(sp.drift, sp.h, sp.delta, gamma));

  OscillationReport rep;
  rep.delta = sp.delta;
  rep.theta_target = sp.theta_target;
  rep.saturation = br.u.saturation_fraction;
  rep.warnings = br.u.warnings;
  for (double r : {1.0, sp.delta}) {
    OscillationLevel lv;
    lv.r = r;
    lv.h = sp.h;
    lv.gamma = gamma;
    lv.osc = oscillation(br.u, make_cylinder(sp.drift, sp.h, gamma, r), 2, &lv.nodes);
    lv.osc_scaled = lv.osc;
    rep.levels.push_back(lv);
  }
  rep.monotone = rep.levels[1].osc <= rep.levels[0].osc + 1e-12;
  rep.theta_observed = 1 - rep.levels[1].osc;
  if (!(rep.theta_observed > 0)) rep.warnings.push_back("no improvement of oscillation observed");
  else if (rep.theta_observed < sp.theta_target) rep.warnings.push_back("theta below target");
  if (!br.bound_holds) rep.warnings.push_back("lateral lower bound of the barrier not observed");
  if (solution) *solution = std::move(br.u);
  return rep;
}

OscillationReport oscillation_iteration(const GridFunction& u, double q, int levels, double delta,
                                        double alpha_spec) {
  if (levels < 0 || levels > 6) throw InvalidInput("levels must lie in [0,6]");
  if (!(delta > 0 && delta < 1)) throw InvalidInput("delta must lie in (0,1)");
  const ScaleParams base = make_scale_params(q, alpha_spec);
  OscillationReport rep;
  rep.delta = delta;
  for (int k = 0; k <= levels; ++k) {
    const double r = std::pow(delta, k);
    const GridFunction uk = k == 0 ? u : rescale_grid_function(u, make_scale_params(q, alpha_spec, r));
    OscillationLevel lv;
    lv.r = r;
    lv.h = uk.h;
    lv.gamma = base.gamma;
    // resolvable: the unit cylinder spans at least four cells on every axis
    const Cylinder c1 = make_cylinder(u.drift(), uk.h, base.gamma, 1.0);
    const Mat Minv = cylinder_ratio_matrix(c1, 0.0).inverse();
    bool resolved = true;
    for (int a = 0; a < uk.dim(); ++a)
      if (2 * Minv.row(a).norm() < 4 * uk.step()(a)) resolved = false;
    if (!resolved) {
      rep.partial = true;
      rep.warnings.push_back("grid exhausted at level " + std::to_string(k) +
                             ": cylinder narrower than four cells");
      break;
    }
    try {
      lv.osc_scaled = oscillation(uk, make_cylinder(u.drift(), uk.h, base.gamma, 1.0), 2, &lv.nodes);
    } catch (const TooCoarse& e) {
      rep.partial = true;
      rep.warnings.push_back("grid exhausted at level " + std::to_string(k) + ": " + e.what());
      break;
    }
    lv.osc = std::pow(r, alpha_spec) * lv.osc_scaled;
    rep.levels.push_back(lv);
  }
  if (rep.levels.empty()) throw TooCoarse("the unit cylinder is not resolved");
  for (size_t k = 1; k < rep.levels.size(); ++k)
    if (rep.levels[k].osc > rep.levels[k - 1].osc * (1 + 1e-9) + 1e-14) rep.monotone = false;

  const double top = rep.levels.front().osc;
  std::vector<double> x, y;
  for (size_t k = 0; k < rep.levels.size(); ++k)
    if (rep.levels[k].osc > 1e-13 * std::max(1.0, top)) {
      x.push_back(double(k));
      y.push_back(std::log(rep.levels[k].osc));
    }
  if (x.empty()) {
    rep.smooth = true;
    rep.alpha_fit = std::numeric_limits<double>::infinity();
    rep.warnings.push_back("oscillation vanishes on every level");
    return rep;
  }
  if (x.size() < 2) {
    rep.warnings.push_back("fewer than two resolved levels; alpha not fitted");
    return rep;
  }
  rep.alpha_fit = fit_line(x, y).slope / std::log(delta);

  // osc(Q_rho) <= delta^{-alpha} rho^alpha osc(Q_1) between the levels
  for (size_t k = 0; k + 1 < rep.levels.size(); ++k) {
    const double rho = std::pow(delta, k + 0.5);
    try {
      const double o = oscillation(u, make_cylinder(u.drift(), u.h, base.gamma, rho));
      const double bound = std::pow(delta, -rep.alpha_fit) * std::pow(rho, rep.alpha_fit) * top;
      if (o > bound * (1 + 1e-9)) rep.shape_ok = false;
    } catch (const TooCoarse&) {
      break;
    }
  }
  return rep;
}

double alpha_from_beta0(double beta0, double q) {
  const double qc = q / (q - 1);
  if (!(beta0 > 0) || !(beta0 < qc)) return std::numeric_limits<double>::quiet_NaN();
  return (beta0 / q) / (1 - beta0 / qc);
}

HolderFit holder_fit(const GridFunction& u, double q, int slice, const Vec& base,
                     const HolderOptions& opt) {
  const KalmanFrame& f = u.drift().frame;
  if (slice < 0 || slice >= u.slices()) throw InvalidInput("slice out of range");
  const int s_slice = slice - opt.lag_steps;
  if (opt.lag_steps < 0 || s_slice < 0) throw InvalidInput("time lag leaves the grid");
  if (!u.inside_box(base, opt.min_cells)) throw InvalidInput("base point is not interior");

  HolderFit fit;
  fit.q = q;
  const Mat At = f.Q.transpose() * rescaled_drift(f, u.drift().A, u.h) * f.Q;
  const Vec y0 = expm(At * (-(opt.lag_steps * u.dt()))) * base;
  const double u0 = u.interp_slice(slice, base);

  for (int j = 0; j <= f.kappa; ++j) {
    StratumFit sf;
    sf.stratum = j;
    std::vector<double> lx, ly;
    double dmin = std::numeric_limits<double>::infinity(), dmax = 0;
    int zeros = 0;
    for (int a = f.offset[j]; a < f.offset[j] + f.n[j]; ++a) {
      const double step = u.step()(a);
      const double lo = opt.min_cells * step;
      const double hi = opt.max_fraction * (u.spec().hi(a) - u.spec().lo(a));
      if (!(hi > lo)) continue;
      std::set<long> cells;
      std::vector<double> disp;
      for (int m = 0; m < opt.samples_per_axis; ++m) {
        const double d = lo * std::pow(hi / lo, double(m) / (opt.samples_per_axis - 1));
        if (opt.lag_steps == 0) {
          const long c = std::lround(d / step);
          if (cells.insert(c).second) disp.push_back(c * step);
        } else {
          disp.push_back(d);
        }
      }
      for (double d : disp)
        for (int sg = -1; sg <= 1; sg += 2) {
          Vec y = y0;
          y(a) += sg * d;
          if (!u.inside_box(y)) continue;
          const double inc = std::abs(u.interp_slice(s_slice, y) - u0);
          if (!(inc > 0)) {
            ++zeros;
            continue;
          }
          lx.push_back(std::log(d));
          ly.push_back(std::log(inc));
          dmin = std::min(dmin, d);
          dmax = std::max(dmax, d);
        }
    }
    sf.samples = static_cast<int>(lx.size());
    if (sf.samples >= 3) {
      const LineFit lf = fit_line(lx, ly);
      sf.beta = lf.slope;
      sf.stderr_ = lf.slope_stderr;
      sf.ci_low = lf.slope - 1.96 * lf.slope_stderr;
      sf.ci_high = lf.slope + 1.96 * lf.slope_stderr;
      sf.decades = std::log10(dmax / dmin);
      sf.saturated = sf.beta >= 0.9;
      if (sf.decades < 1.5) {
        fit.reliable = false;
        fit.warnings.push_back("stratum " + std::to_string(j) + ": dynamic range " +
                               std::to_string(sf.decades) + " decades; fit unreliable");
      }
      if (sf.saturated)
        fit.warnings.push_back("stratum " + std::to_string(j) + ": Lipschitz saturation");
    } else {
      fit.reliable = false;
      fit.warnings.push_back("stratum " + std::to_string(j) + ": too few nonzero increments (" +
                             std::to_string(zeros) + " zero)");
    }
    fit.strata.push_back(sf);
  }
  if (!fit.strata.empty()) fit.alpha = alpha_from_beta0(fit.strata[0].beta, q);
  const double qc = q / (q - 1);
  for (auto& sf : fit.strata) {
    if (std::isfinite(fit.alpha)) {
      sf.predicted = fit.alpha / (fit.alpha / qc + 1 / q + sf.stratum);
      sf.deviation = sf.beta / sf.predicted - 1;
    }
  }
  for (size_t j = 1; j < fit.strata.size(); ++j)
    if (!(fit.strata[j].beta < fit.strata[j - 1].beta) &&
        !(fit.strata[j].saturated && fit.strata[j - 1].saturated))
      fit.decreasing = false;
  return fit;
}

}  // namespace hjlab
