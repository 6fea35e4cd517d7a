#include "hjlab/hj_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <thread>

#include "hjlab/errors.hpp"

namespace hjlab {

namespace {

constexpr double kPi = 3.14159265358979323846;

double conj(double q) {
  if (!(q > 1)) throw InvalidExponent("q must exceed 1");
  return q / (q - 1);
}

std::vector<Vec> control_directions(int n0, int per_plane) {
  std::vector<Vec> dirs;
  if (n0 == 1) {
    dirs.push_back(Vec::Constant(1, 1.0));
    dirs.push_back(Vec::Constant(1, -1.0));
  } else if (n0 == 2) {
    for (int i = 0; i < per_plane; ++i) {
      Vec d(2);
      d << std::cos(2 * kPi * i / per_plane), std::sin(2 * kPi * i / per_plane);
      dirs.push_back(d);
    }
  } else if (n0 == 3) {
    // Fibonacci sphere
    const int m = per_plane * per_plane / 2;
    const double golden = kPi * (3 - std::sqrt(5.0));
    for (int i = 0; i < m; ++i) {
      const double y = 1 - 2 * (i + 0.5) / m;
      const double rad = std::sqrt(1 - y * y);
      Vec d(3);
      d << rad * std::cos(golden * i), y, rad * std::sin(golden * i);
      dirs.push_back(d);
    }
  } else {
    std::mt19937_64 rng(0x5eed);
    std::normal_distribution<double> g;
    const int m = per_plane * per_plane;
    for (int i = 0; i < m; ++i) {
      Vec d(n0);
      for (int k = 0; k < n0; ++k) d(k) = g(rng);
      dirs.push_back(d.normalized());
    }
    for (int k = 0; k < n0; ++k) {
      dirs.push_back(Vec::Unit(n0, k));
      dirs.push_back(-Vec::Unit(n0, k));
    }
  }
  return dirs;
}

struct Dynamics {
  Mat E;   // e^{-dt A~}
  Mat G;   // e^{-dt A~} int_0^dt e^{s A~} ds restricted to control columns
  Mat At;  // A~ in adapted coordinates
  int n0 = 0;
};

Dynamics adapted_dynamics(const HJProblem& pb, double dt) {
  const KalmanFrame& f = pb.drift.frame;
  Dynamics d;
  d.At = f.Q.transpose() * rescaled_drift(f, pb.drift.A, pb.h) * f.Q;
  auto [F, I] = expm_with_integral(d.At, dt);
  d.E = F.inverse();
  d.n0 = f.n[0];
  d.G = (d.E * I).leftCols(d.n0);
  return d;
}

double max_abs_coord(const GridSpec& g, int k) {
  return std::max(std::abs(g.lo(k)), std::abs(g.hi(k)));
}

double box_radius(const GridSpec& g) {
  double s = 0;
  for (int k = 0; k < g.lo.size(); ++k) s += std::pow(max_abs_coord(g, k), 2);
  return std::sqrt(s);
}

double max_dt(const Mat& At, int n0, const GridSpec& grid, double b_max) {
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < At.rows(); ++k) {
    const double step = (grid.hi(k) - grid.lo(k)) / (grid.n[k] - 1);
    double speed = k < n0 ? b_max : 0.0;
    for (int l = 0; l < At.cols(); ++l) speed += std::abs(At(k, l)) * max_abs_coord(grid, l);
    if (speed > 0) best = std::min(best, step / speed);
  }
  return best;
}

template <class Fn>
void parallel_for(size_t n, int threads, Fn&& fn) {
  if (threads <= 1 || n < 4096) {
    fn(size_t{0}, n, 0);
    return;
  }
  std::vector<std::thread> pool;
  const size_t chunk = (n + threads - 1) / threads;
  for (int i = 0; i < threads; ++i) {
    const size_t a = i * chunk, b = std::min(n, a + chunk);
    if (a >= b) break;
    pool.emplace_back([&fn, a, b, i] { fn(a, b, i); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace

Vec project_to_flowed_sphere(const Mat& Ah, double t, const Vec& x) {
  const double n = (expm(Ah * (-t)) * x).norm();
  return n > 0 ? Vec(x / n) : x;
}

SourceField cell_source(const GridSpec& spec, const DriftBundle& drift,
                        const std::vector<double>& samples, double p) {
  const int d = static_cast<int>(spec.n.size());
  size_t cells = 1;
  std::vector<size_t> stride(d);
  double vol = spec.t1 - spec.t0;
  for (int k = 0; k < d; ++k) {
    stride[k] = cells;
    cells *= spec.n[k] - 1;
    vol *= (spec.hi(k) - spec.lo(k)) / (spec.n[k] - 1);
  }
  if (samples.size() != cells) throw InvalidInput("source needs one sample per grid cell");
  if (!(p >= 1)) throw InvalidExponent("source exponent p must be at least 1");
  double acc = 0;
  for (double v : samples) {
    if (!(v >= 0) || !std::isfinite(v)) throw InvalidInput("source samples must be finite and nonnegative");
    acc += std::pow(v, p) * vol;
  }
  SourceField f;
  f.p = p;
  f.lp_norm = std::pow(acc, 1.0 / p);
  const Mat Qt = drift.frame.Q.transpose();
  f.fn = [spec, stride, samples, Qt](double, const Vec& x) {
    const Vec z = Qt * x;
    size_t idx = 0;
    for (int k = 0; k < z.size(); ++k) {
      const double s = (z(k) - spec.lo(k)) / (spec.hi(k) - spec.lo(k)) * (spec.n[k] - 1);
      if (s < 0 || s > spec.n[k] - 1) return 0.0;
      const int i = std::min(static_cast<int>(s), spec.n[k] - 2);
      idx += i * stride[k];
    }
    return samples[idx];
  };
  return f;
}

SourceField extend_by_projection(const SourceField& f, const DriftBundle& drift, double h) {
  SourceField g = f;
  const Mat Ah = rescaled_drift(drift.frame, drift.A, h);
  auto inner = f.fn;
  g.fn = [inner, Ah](double t, const Vec& x) {
    const double n = (expm(Ah * (-t)) * x).norm();
    return n > 1 ? inner(t, Vec(x / n)) : inner(t, x);
  };
  return g;
}

double default_bmax(const HJProblem& problem, const GridSpec& grid) {
  GridFunction probe(grid, problem.drift, problem.h);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (size_t i = 0; i < probe.slice_size(); ++i) {
    const double v = problem.data(probe.physical(probe.node(i)));
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double horizon = grid.t1 - grid.t0;
  const double osc = std::max(hi - lo, 1e-3);
  return 10 * std::pow(osc, 1.0 / conj(problem.q)) * box_radius(grid) / horizon;
}

int min_time_steps(const HJProblem& problem, const GridSpec& grid, double b_max) {
  const KalmanFrame& f = problem.drift.frame;
  const Mat At = f.Q.transpose() * rescaled_drift(f, problem.drift.A, problem.h) * f.Q;
  const double dt = max_dt(At, f.n[0], grid, b_max);
  return std::max(1, static_cast<int>(std::ceil((grid.t1 - grid.t0) / dt * (1 - 1e-12))));
}

GridFunction solve_value(const HJProblem& pb, const GridSpec& grid, const ControlSpec& cs) {
  if (!pb.data) throw InvalidInput("initial data is required");
  if (!(pb.lambda > 0)) throw InvalidInput("lambda must be positive");
  const double qc = conj(pb.q);
  GridFunction u(grid, pb.drift, pb.h);
  const double b_max = cs.b_max > 0 ? cs.b_max : default_bmax(pb, grid);
  const double dt = u.dt();
  const Dynamics dyn = adapted_dynamics(pb, dt);
  const double dt_cap = max_dt(dyn.At, dyn.n0, grid, b_max);
  if (dt > dt_cap * (1 + 1e-12))
    throw GridSpecError("time step " + std::to_string(dt) + " exceeds the characteristic bound " +
                        std::to_string(dt_cap) + "; use at least " +
                        std::to_string(min_time_steps(pb, grid, b_max)) + " steps");
  if (pb.f) u.source_p = pb.f->p;

  const int N = u.dim(), n0 = dyn.n0;
  const double cost_scale = dt / (qc * std::pow(pb.lambda, qc));
  auto cost = [&](double mag) { return cost_scale * std::pow(mag, qc); };

  // control samples: zero plus geometric radii times directions
  const double r_min = std::min(std::pow(dt, 1.0 / (qc - 1)), b_max * 1e-3);
  std::vector<Vec> samples{Vec::Zero(n0)};
  const auto dirs = control_directions(n0, cs.directions);
  for (int i = 0; i < cs.radii; ++i) {
    const double rad = cs.radii == 1 ? b_max : r_min * std::pow(b_max / r_min, double(i) / (cs.radii - 1));
    for (const Vec& d : dirs) samples.push_back(rad * d);
  }
  const size_t S = samples.size();
  Mat offsets(N, S);
  std::vector<double> costs(S);
  for (size_t s = 0; s < S; ++s) {
    offsets.col(s) = dyn.G * samples[s];
    costs[s] = cost(samples[s].norm());
  }

  // bottom slice
  for (size_t i = 0; i < u.slice_size(); ++i) u.at(0, i) = pb.data(u.physical(u.node(i)));

  std::optional<Cylinder> dom = pb.domain;
  const bool clamp_lateral = dom.has_value() && static_cast<bool>(pb.lateral);
  auto apply_lateral = [&](int k) {
    if (!clamp_lateral) return;
    const Mat M = cylinder_ratio_matrix(*dom, u.time(k));
    const double rg = std::pow(dom->r, dom->gamma);
    for (size_t i = 0; i < u.slice_size(); ++i) {
      const Vec z = u.node(i);
      if ((M * z).norm() / rg >= 1) u.at(k, i) = pb.lateral(u.time(k), u.physical(z));
    }
  };
  apply_lateral(0);

  const bool has_f = pb.f.has_value() && pb.source_coeff != 0;
  const int threads = std::max(1, cs.threads);
  std::vector<size_t> sat(threads), counted(threads);
  size_t sat_total = 0, counted_total = 0;

  for (int k = 0; k < grid.nt; ++k) {
    const double* prev = u.slice(k);
    double* next = u.slice(k + 1);
    const double t = u.time(k);
    std::fill(sat.begin(), sat.end(), 0);
    std::fill(counted.begin(), counted.end(), 0);
    parallel_for(u.slice_size(), threads, [&](size_t a, size_t b, int tid) {
      Vec z(N), ez(N), y(N), c(n0), cand(n0);
      for (size_t i = a; i < b; ++i) {
        z = u.node(i);
        ez.noalias() = dyn.E * z;
        double best = std::numeric_limits<double>::infinity();
        size_t arg = 0;
        for (size_t s = 0; s < S; ++s) {
          y = ez - offsets.col(s);
          const double v = u.interp_slice(prev, y.data()) + costs[s];
          if (v < best) {
            best = v;
            arg = s;
          }
        }
        c = samples[arg];
        if (cs.refine) {
          double step = std::max(r_min, 0.25 * c.norm());
          const double stop = 1e-3 * std::max(r_min, c.norm());
          int evals = 0;
          while (step > stop && evals < 64) {
            bool improved = false;
            for (int ax = 0; ax < n0 && !improved; ++ax)
              for (int sg = -1; sg <= 1 && !improved; sg += 2) {
                cand = c;
                cand(ax) += sg * step;
                const double m = cand.norm();
                if (m > b_max) cand *= b_max / m;
                const double cc = cost(cand.norm());
                ++evals;
                y.noalias() = ez - dyn.G * cand;
                const double v = u.interp_slice(prev, y.data()) + cc;
                if (v < best) {
                  best = v;
                  c = cand;
                  improved = true;
                }
              }
            if (!improved) step *= 0.5;
          }
        }
        double src = pb.constant_source;
        if (has_f) src += pb.source_coeff * pb.f->fn(t, u.physical(z));
        next[i] = best + dt * src;
        if (u.inside_box(ez, 1.0)) {
          ++counted[tid];
          if (c.norm() >= b_max * (1 - 1e-9)) ++sat[tid];
        }
      }
    });
    for (int i = 0; i < threads; ++i) {
      sat_total += sat[i];
      counted_total += counted[i];
    }
    apply_lateral(k + 1);
  }
  u.saturation_fraction = counted_total ? double(sat_total) / counted_total : 0.0;
  if (u.saturation_fraction > 0.01) {
    u.saturated = true;
    u.warnings.push_back("control bound saturated by " +
                         std::to_string(100 * u.saturation_fraction) +
                         "% of minimizers; increase b_max");
  }
  return u;
}

SpaceFunction two_level_data(const DriftBundle& drift, double h, double delta, double gamma,
                             double g_in) {
  auto inner = two_level_inner(drift, h, delta, gamma);
  return [inner, g_in](const Vec& x) { return inner(x) ? g_in : 1.0; };
}

std::function<bool(const Vec&)> two_level_inner(const DriftBundle& drift, double h,
                                                double delta, double gamma) {
  const KalmanFrame& f = drift.frame;
  Mat M = f.Q.transpose() * expm(rescaled_drift(f, drift.A, h));
  for (int k = 0; k < f.N; ++k) M.row(k) /= std::pow(delta, f.stratum_of(k));
  const double rad = 2 * std::pow(delta, gamma);
  return [M, rad](const Vec& x) { return (M * x).norm() < rad; };
}

BarrierResult barrier_upper(const HJProblem& problem, const GridSpec& grid,
                            const ControlSpec& controls,
                            const std::function<bool(const Vec&)>& inner) {
  HJProblem pb = problem;
  pb.constant_source = 0;
  pb.source_coeff = problem.eps;
  BarrierResult res{solve_value(pb, grid, controls)};
  const GridFunction& u = res.u;
  const double qc = conj(problem.q);

  res.inner_inf = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < u.slice_size(); ++i) {
    const Vec x = u.physical(u.node(i));
    if (!inner || inner(x)) res.inner_inf = std::min(res.inner_inf, u.at(0, i));
  }
  const Cylinder cyl = problem.domain ? *problem.domain
                                      : make_cylinder(problem.drift, problem.h, 1.0 / problem.q, 1.0);
  res.lateral_min = std::numeric_limits<double>::infinity();
  const double band = 2 * u.step().maxCoeff();
  for (int k = 1; k < u.slices(); ++k) {
    const double t = u.time(k);
    if (t < -cyl.r || t > 0) continue;
    const Mat M = cylinder_ratio_matrix(cyl, t);
    const double rg = std::pow(cyl.r, cyl.gamma);
    for (size_t i = 0; i < u.slice_size(); ++i) {
      const double ratio = (M * u.node(i)).norm() / rg;
      if (ratio <= 1 && ratio >= 1 - band) res.lateral_min = std::min(res.lateral_min, u.at(k, i));
    }
  }
  if (!std::isfinite(res.lateral_min)) res.lateral_min = res.inner_inf;
  res.K_empirical = std::pow(problem.lambda, qc) * (res.lateral_min - res.inner_inf);
  res.bound_holds = res.lateral_min >= 1 - 1e-9 || res.K_empirical > 0;
  return res;
}

GridFunction barrier_lower(const HJProblem& problem, const GridSpec& grid,
                           const ControlSpec& controls) {
  HJProblem pb = problem;
  pb.lambda = problem.Lambda;
  pb.constant_source = -problem.eps;
  pb.source_coeff = 0;
  return solve_value(pb, grid, controls);
}

ComparisonReport comparison_check(const GridFunction& a, const GridFunction& b,
                                  const std::optional<Cylinder>& cyl, double tol,
                                  double grid_error) {
  if (a.values().size() != b.values().size() || a.dim() != b.dim())
    throw DomainMismatch("comparison requires a shared grid");
  ComparisonReport rep;
  rep.boundary_violation = -std::numeric_limits<double>::infinity();
  rep.interior_violation = -std::numeric_limits<double>::infinity();
  const double band = 2 * a.step().maxCoeff();
  for (int k = 0; k < a.slices(); ++k) {
    Mat M;
    double rg = 1;
    const double t = a.time(k);
    if (cyl) {
      if (t < -cyl->r - 1e-12 || t > 1e-12) continue;
      M = cylinder_ratio_matrix(*cyl, t);
      rg = std::pow(cyl->r, cyl->gamma);
    }
    for (size_t i = 0; i < a.slice_size(); ++i) {
      bool boundary = false;
      if (cyl) {
        const double ratio = (M * a.node(i)).norm() / rg;
        if (ratio > 1) continue;
        boundary = k == 0 || ratio >= 1 - band;
      } else {
        boundary = k == 0;
        const auto idx = a.index(i);
        for (int d = 0; d < a.dim(); ++d)
          if (idx[d] == 0 || idx[d] == a.spec().n[d] - 1) boundary = true;
      }
      const double v = a.at(k, i) - b.at(k, i);
      if (boundary) {
        rep.boundary_violation = std::max(rep.boundary_violation, v);
        ++rep.boundary_nodes;
      } else {
        rep.interior_violation = std::max(rep.interior_violation, v);
        ++rep.interior_nodes;
      }
    }
  }
  rep.boundary_violation = std::max(rep.boundary_violation, 0.0);
  rep.interior_violation = std::max(rep.interior_violation, 0.0);
  rep.boundary_ordered = rep.boundary_violation <= tol;
  rep.consistent = !rep.boundary_ordered || rep.interior_violation <= tol + grid_error;
  return rep;
}

std::vector<Vec> lateral_samples(const Cylinder& cyl, double t, const std::vector<Vec>& dirs) {
  const Mat F = expm(cyl.Ah * t) * scale_matrix_S(cyl.frame, cyl.r);
  const double rg = std::pow(cyl.r, cyl.gamma);
  std::vector<Vec> out;
  for (const Vec& d : dirs) out.push_back(rg * (F * d.normalized()));
  return out;
}

double source_norm_exponent(const KalmanFrame& frame, double q, double p, double alpha) {
  const double N = frame.N, qc = conj(q);
  return 1 - (N / q + 1 + frame.weighted_dim()) / p - alpha * (1 + N / (p * qc));
}

GridFunction rescale_grid_function(const GridFunction& u, const ScaleParams& prm) {
  if (!(prm.r > 0)) throw DomainMismatch("rescaling needs r > 0");
  const KalmanFrame& f = u.drift().frame;
  GridSpec s = u.spec();
  s.t0 /= prm.r;
  s.t1 /= prm.r;
  for (int k = 0; k < f.N; ++k) {
    const double m = std::pow(prm.r, prm.gamma + f.stratum_of(k));
    s.lo(k) /= m;
    s.hi(k) /= m;
  }
  GridFunction out(s, u.drift(), u.h * prm.r);
  const double w = std::pow(prm.r, -prm.alpha);
  for (size_t i = 0; i < u.values().size(); ++i) out.values()[i] = w * u.values()[i];
  out.source_p = u.source_p;
  out.lp_multiplier = u.lp_multiplier;
  if (u.source_p > 0)
    out.lp_multiplier *= std::pow(prm.r, source_norm_exponent(f, prm.q, u.source_p, prm.alpha));
  return out;
}

GridFunction rescale_onto(const GridFunction& u, const ScaleParams& prm, const GridSpec& target) {
  if (!(prm.r > 0)) throw DomainMismatch("rescaling needs r > 0");
  const KalmanFrame& f = u.drift().frame;
  GridFunction out(target, u.drift(), u.h * prm.r);
  const Vec sc = std::pow(prm.r, prm.gamma) * scale_diagonal(f, prm.r);
  const double w = std::pow(prm.r, -prm.alpha);
  const double tol = 1e-9;
  for (int k = 0; k < out.slices(); ++k) {
    const double ts = prm.r * out.time(k);
    if (ts < u.spec().t0 - tol || ts > u.spec().t1 + tol)
      throw DomainMismatch("target time range leaves the rescaled source domain");
    for (size_t i = 0; i < out.slice_size(); ++i) {
      const Vec zs = sc.cwiseProduct(out.node(i));
      for (int d = 0; d < f.N; ++d)
        if (zs(d) < u.spec().lo(d) - tol || zs(d) > u.spec().hi(d) + tol)
          throw DomainMismatch("target grid leaves the rescaled source domain");
      out.at(k, i) = w * u.eval_adapted(ts, zs);
    }
  }
  out.source_p = u.source_p;
  out.lp_multiplier = u.lp_multiplier;
  if (u.source_p > 0)
    out.lp_multiplier *= std::pow(prm.r, source_norm_exponent(f, prm.q, u.source_p, prm.alpha));
  return out;
}

}  // namespace hjlab
