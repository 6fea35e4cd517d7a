#include <gtest/gtest.h>

#include <cmath>

#include "hjlab/errors.hpp"
#include "hjlab/regularity.hpp"
#include "test_support.hpp"

using namespace hjlab;
using namespace hjlab::testing;

namespace {

DriftBundle kolmogorov() { return make_bundle(kolmogorov_A(), kolmogorov_P0()); }

GridFunction sampled(const DriftBundle& b, const GridSpec& g,
                     const std::function<double(double, const Vec&)>& fn) {
  GridFunction u(g, b, 0.0);
  for (int k = 0; k < u.slices(); ++k)
    for (size_t i = 0; i < u.slice_size(); ++i) u.at(k, i) = fn(u.time(k), u.physical(u.node(i)));
  return u;
}

GridFunction planted_modulus(const DriftBundle& b, double alpha, int nodes, int nt) {
  const ScaleParams sp = make_scale_params(2, alpha);
  return sampled(b, unit_cylinder_grid(b, 0, nodes, nt),
                 [&](double t, const Vec& x) { return modulus_omega(b.frame, sp, {t, x}); });
}

GridSpec square(int n) {
  GridSpec g;
  g.lo = Vec::Constant(2, -1);
  g.hi = Vec::Constant(2, 1);
  g.n = {n, n};
  g.t0 = 0;
  g.t1 = 1;
  g.nt = 1;
  return g;
}

}  // namespace

TEST(Oscillation, ConstantAndLinear) {
  const DriftBundle kb = kolmogorov();
  GridSpec g = unit_cylinder_grid(kb, 0, 65, 16);
  GridFunction c = sampled(kb, g, [](double, const Vec&) { return 3.0; });
  EXPECT_EQ(oscillation(c, make_cylinder(kb, 0, 0.5, 1.0)), 0.0);
  GridFunction l = sampled(kb, g, [](double, const Vec& x) { return x(0); });
  const double o = oscillation(l, make_cylinder(kb, 0, 0.5, 1.0));
  EXPECT_LE(o, 2.0);
  EXPECT_GE(o, 2.0 - 2 * g.hi(0) / 64);
  // set inclusion
  for (double r : {0.8, 0.5, 0.3}) {
    GridFunction w = sampled(kb, g, [](double t, const Vec& x) { return std::sin(3 * x(0) + x(1) + t); });
    EXPECT_LE(oscillation(w, make_cylinder(kb, 0, 0.5, r)), oscillation(w, make_cylinder(kb, 0, 0.5, 1.0)));
  }
}

TEST(Oscillation, Errors) {
  const DriftBundle kb = kolmogorov();
  GridFunction c = sampled(kb, unit_cylinder_grid(kb, 0, 17, 4), [](double, const Vec&) { return 0.0; });
  EXPECT_THROW(oscillation(c, make_cylinder(kb, 0, 0.5, 1e-3)), TooCoarse);
  GridSpec g = square(9);
  g.lo *= 0.5;
  g.hi *= 0.5;
  GridFunction small = sampled(kb, g, [](double, const Vec&) { return 0.0; });
  EXPECT_THROW(oscillation(small, make_cylinder(kb, 0, 0.5, 1.0)), DomainMismatch);
}

TEST(Oscillation, RescaleThenOscEqualsOscThenScale) {
  const DriftBundle kb = kolmogorov();
  const double alpha = 0.4, delta = 0.5;
  const ScaleParams sp = make_scale_params(2, alpha, delta);
  GridFunction u = sampled(kb, unit_cylinder_grid(kb, 0, 129, 32),
                           [](double t, const Vec& x) { return std::sin(2 * x(0)) * std::cos(x(1)) + t * t; });
  GridFunction ud = rescale_grid_function(u, sp);
  const double lhs = oscillation(u, make_cylinder(kb, 0, sp.gamma, delta));
  const double rhs = std::pow(delta, alpha) * oscillation(ud, make_cylinder(kb, ud.h, sp.gamma, 1.0));
  EXPECT_NEAR(lhs, rhs, 1e-3 * lhs);
}

TEST(Improvement, ConstantDataGivesFullImprovement) {
  ImprovementSpec sp;
  sp.drift = kolmogorov();
  sp.g_in = 1;
  sp.nodes = 33;
  OscillationReport r = improvement_experiment(sp);
  EXPECT_DOUBLE_EQ(r.theta_observed, 1.0);
}

TEST(Improvement, KolmogorovDeskScenario) {
  ImprovementSpec sp;
  sp.drift = kolmogorov();
  sp.delta = 0.1;
  sp.nodes = 48;
  GridFunction u;
  OscillationReport r = improvement_experiment(sp, &u);
  EXPECT_GT(r.theta_observed, 0);
  EXPECT_TRUE(r.monotone);
  EXPECT_LE(r.levels[0].osc, 1 + 1e-12);
  EXPECT_LT(r.saturation, 0.01);
  // the iteration on the same solution
  OscillationReport it = oscillation_iteration(u, 2, 4, 0.5, 0.0);
  EXPECT_GT(it.alpha_fit, 0);
  EXPECT_TRUE(it.monotone);
}

TEST(Improvement, LargeSourceIsFlaggedNotAsserted) {
  ImprovementSpec sp;
  sp.drift = kolmogorov();
  sp.nodes = 33;
  sp.eps = 5;
  GridSpec g = unit_cylinder_grid(sp.drift, 0, 33, 1);
  std::vector<double> cells(32 * 32, 1.0);  // uniform source covering the cylinder
  SourceField f = cell_source(g, sp.drift, cells, 4);
  for (double& v : cells) v /= f.lp_norm;
  sp.f = cell_source(g, sp.drift, cells, 4);
  OscillationReport r = improvement_experiment(sp);
  if (!(r.theta_observed > 0)) EXPECT_FALSE(r.warnings.empty());
  SUCCEED();
}

TEST(Iteration, HomogeneousModulusRecoversAlpha) {
  const DriftBundle kb = kolmogorov();
  for (double a0 : {0.3, 0.5, 0.8}) {
    OscillationReport r = oscillation_iteration(planted_modulus(kb, a0, 257, 64), 2, 4, 0.5, a0);
    EXPECT_NEAR(r.alpha_fit, a0, 0.05) << a0;
    EXPECT_TRUE(r.monotone);
    EXPECT_TRUE(r.shape_ok);
    EXPECT_GE(r.levels.size(), 3u);
  }
}

TEST(Iteration, InvariantUnderDoubling) {
  const DriftBundle kb = kolmogorov();
  const double a0 = 0.5;
  const double coarse = oscillation_iteration(planted_modulus(kb, a0, 129, 32), 2, 3, 0.5, a0).alpha_fit;
  const double fine = oscillation_iteration(planted_modulus(kb, a0, 257, 32), 2, 3, 0.5, a0).alpha_fit;
  EXPECT_NEAR(coarse, fine, 0.05);
}

TEST(Iteration, ConstantIsSmooth) {
  const DriftBundle kb = kolmogorov();
  GridFunction c = sampled(kb, unit_cylinder_grid(kb, 0, 65, 16), [](double, const Vec&) { return 1.0; });
  OscillationReport r = oscillation_iteration(c, 2, 2, 0.5, 0.2);
  EXPECT_TRUE(r.smooth);
  EXPECT_TRUE(std::isinf(r.alpha_fit));
  for (const auto& l : r.levels) EXPECT_LE(l.osc, 1e-12);
}

TEST(Iteration, PartialWhenGridExhausted) {
  const DriftBundle kb = kolmogorov();
  OscillationReport r = oscillation_iteration(planted_modulus(kb, 0.5, 33, 8), 2, 6, 0.5, 0.5);
  EXPECT_TRUE(r.partial);
  EXPECT_LT(r.levels.size(), 7u);
  EXPECT_FALSE(r.warnings.empty());
}

TEST(Holder, AlphaFromBeta0) {
  EXPECT_NEAR(alpha_from_beta0(2.0 / 3, 2), 0.5, 1e-15);
  for (double a : {0.1, 0.4, 0.9}) {
    const double q = 3, qc = 1.5;
    EXPECT_NEAR(alpha_from_beta0(a / (a / qc + 1 / q), q), a, 1e-14);
  }
}

TEST(Holder, PowerOfFirstStratum) {
  const DriftBundle kb = kolmogorov();
  GridFunction u = sampled(kb, square(1025), [&](double, const Vec& x) {
    return std::pow((kb.frame.P[0] * x).norm(), 2.0 / 3);
  });
  HolderFit f = holder_fit(u, 2, 1, Vec::Zero(2));
  EXPECT_NEAR(f.strata[0].beta, 2.0 / 3, 0.03);
  EXPECT_NEAR(f.alpha, 0.5, 0.05);
}

TEST(Holder, SmoothSaturates) {
  const DriftBundle kb = kolmogorov();
  GridFunction u = sampled(kb, square(1025), [](double, const Vec& x) { return x.squaredNorm() + x(0) + x(1); });
  HolderFit f = holder_fit(u, 2, 1, Vec::Zero(2));
  for (const auto& s : f.strata) {
    EXPECT_NEAR(s.beta, 1.0, 0.1);
    EXPECT_TRUE(s.saturated);
  }
  bool noted = false;
  for (const auto& w : f.warnings) noted |= w.find("saturation") != std::string::npos;
  EXPECT_TRUE(noted);
}

TEST(Holder, PlantedModulusPerStratum) {
  const DriftBundle kb = kolmogorov();
  for (double a : {0.3, 0.5, 0.8}) {
    const ScaleParams sp = make_scale_params(2, a);
    GridFunction u = sampled(kb, square(1025), [&](double, const Vec& x) { return modulus_omega(kb.frame, sp, {0, x}); });
    HolderFit f = holder_fit(u, 2, 1, Vec::Zero(2));
    for (int j = 0; j <= 1; ++j)
      EXPECT_NEAR(f.strata[j].beta / modulus_exponent(sp, j), 1.0, 0.05);
    EXPECT_TRUE(f.decreasing);
    EXPECT_TRUE(f.reliable);
  }
}

TEST(Holder, ShortRangeIsUnreliable) {
  const DriftBundle kb = kolmogorov();
  const ScaleParams sp = make_scale_params(2, 0.5);
  GridFunction u = sampled(kb, square(129), [&](double, const Vec& x) { return modulus_omega(kb.frame, sp, {0, x}); });
  HolderFit f = holder_fit(u, 2, 1, Vec::Zero(2));
  EXPECT_FALSE(f.reliable);
  EXPECT_FALSE(f.warnings.empty());
}

TEST(Holder, SolvedPlantedKolmogorov) {
  const DriftBundle kb = kolmogorov();
  const ScaleParams sp = make_scale_params(2, 0.5);
  HJProblem pb;
  pb.drift = kb;
  pb.data = [&](const Vec& x) { return modulus_omega(kb.frame, sp, {0, x}); };
  GridSpec g = square(1025);
  ControlSpec cs;
  cs.b_max = 4;
  g.t1 = 1.0 / min_time_steps(pb, g, cs.b_max);
  GridFunction u = solve_value(pb, g, cs);
  HolderFit f = holder_fit(u, 2, 1, Vec::Zero(2));
  const double ratio = f.strata[1].beta / f.strata[0].beta;
  const double predicted = (f.alpha / 2 + 0.5) / (f.alpha / 2 + 0.5 + 1);
  EXPECT_NEAR(ratio / predicted, 1.0, 0.2);
}
