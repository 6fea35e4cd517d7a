#include "hjlab/experiment.hpp"

#include <Eigen/Core>
#include <boost/version.hpp>
#include <cmath>
#include <filesystem>
#include <optional>
#include <set>
#include <sstream>

#include "hjlab/curved_flows.hpp"
#include "hjlab/errors.hpp"
#include "hjlab/min_energy.hpp"
#include "hjlab/regularity.hpp"

namespace hjlab {

namespace fs = std::filesystem;

DriftBundle preset_frame(const std::string& name) {
  if (name == "kolmogorov2") {
    Mat A(2, 2), P(2, 2);
    A << 0, 0, 1, 0;
    P << 1, 0, 0, 0;
    return make_bundle(A, P);
  }
  if (name.rfind("chain-", 0) == 0) {
    int N = 0;
    try {
      size_t used = 0;
      N = std::stoi(name.substr(6), &used);
      if (used != name.size() - 6) N = 0;
    } catch (const std::exception&) {
      N = 0;
    }
    if (N < 2 || N > 12) throw UnknownPreset("chain presets need 2 <= N <= 12: " + name);
    Mat A = Mat::Zero(N, N), P = Mat::Zero(N, N);
    for (int i = 0; i + 1 < N; ++i) A(i + 1, i) = 1;
    P(0, 0) = 1;
    return make_bundle(A, P);
  }
  throw UnknownPreset("unknown preset: " + name);
}

double p_threshold(const KalmanFrame& frame, double q) {
  return frame.N / q + 1 + frame.weighted_dim();
}

const std::vector<std::string>& known_scenarios() {
  static const std::vector<std::string> s{"flow-identity", "cost-scaling", "curved",
                                          "improvement",   "iteration",    "holder"};
  return s;
}

namespace {

template <class T>
T get_as(const json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> keys{"preset", "A", "P0", "q", "p", "lambda", "Lambda",
                                          "eps", "h", "delta", "grid", "scenarios", "out",
                                          "seed", "threads"};
  ExperimentConfig c;
  bool explicit_matrix = false;
  for (const auto& [k, v] : j.items()) {
    if (!keys.count(k)) throw ConfigError("unknown config key '" + k + "'");
    if (k == "preset") c.preset = get_as<std::string>(v, k);
    else if (k == "A" || k == "P0") {
      try {
        (k == "A" ? c.A : c.P0) = matrix_from_json(v);
      } catch (const Error& e) {
        throw ConfigError("config key '" + k + "': " + e.what());
      }
      explicit_matrix = true;
    } else if (k == "q") c.q = get_as<double>(v, k);
    else if (k == "p") c.p = get_as<double>(v, k);
    else if (k == "lambda") c.lambda = get_as<double>(v, k);
    else if (k == "Lambda") c.Lambda = get_as<double>(v, k);
    else if (k == "eps") c.eps = get_as<double>(v, k);
    else if (k == "h") c.h = get_as<double>(v, k);
    else if (k == "delta") c.delta = get_as<double>(v, k);
    else if (k == "out") c.out = get_as<std::string>(v, k);
    else if (k == "seed") c.seed = get_as<std::uint64_t>(v, k);
    else if (k == "threads") c.threads = get_as<int>(v, k);
    else if (k == "scenarios") c.scenarios = get_as<std::vector<std::string>>(v, k);
    else if (k == "grid") {
      if (!v.is_object()) throw ConfigError("config key 'grid' must be an object");
      for (const auto& [gk, gv] : v.items()) {
        if (gk == "nodes") c.nodes = get_as<int>(gv, "grid." + gk);
        else if (gk == "b_max") c.b_max = get_as<double>(gv, "grid." + gk);
        else throw ConfigError("unknown config key 'grid." + gk + "'");
      }
    }
  }
  if (explicit_matrix) {
    if (j.contains("preset")) throw ConfigError("give either 'preset' or 'A'/'P0', not both");
    if (c.A.size() == 0 || c.P0.size() == 0) throw ConfigError("'A' and 'P0' must both be given");
    c.preset.clear();
  }
  if (!(c.q > 1)) throw ConfigError("q > 1 violated");
  if (!(c.lambda > 0)) throw ConfigError("lambda > 0 violated");
  if (!(c.lambda <= c.Lambda)) throw ConfigError("lambda <= Lambda violated");
  if (!(c.eps >= 0)) throw ConfigError("eps >= 0 violated");
  if (!(c.h >= 0)) throw ConfigError("h >= 0 violated");
  if (!(c.delta > 0 && c.delta < 1)) throw ConfigError("0 < delta < 1 violated");
  if (c.nodes < 9 || c.nodes > 4097) throw ConfigError("grid.nodes must lie in [9, 4097]");
  if (!(c.b_max > 0)) throw ConfigError("grid.b_max > 0 violated");
  if (c.threads < 1) throw ConfigError("threads >= 1 violated");
  for (const auto& s : c.scenarios)
    if (std::find(known_scenarios().begin(), known_scenarios().end(), s) == known_scenarios().end())
      throw ConfigError("unknown scenario '" + s + "'");
  DriftBundle d;
  try {
    d = config_drift(c);
  } catch (const UnknownPreset& e) {
    throw ConfigError(e.what());
  } catch (const Error& e) {
    throw ConfigError(std::string("frame: ") + e.what());
  }
  const double thr = p_threshold(d.frame, c.q);
  if (c.p == 0) c.p = 2 * thr;
  if (!(c.p > thr)) {
    std::ostringstream m;
    m << "p > N/q + 1 + sum_j j n_j violated: p = " << c.p << ", threshold = " << thr;
    throw ConfigError(m.str());
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  return config_from_json(j);
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  if (!c.preset.empty()) j["preset"] = c.preset;
  else {
    j["A"] = matrix_to_json(c.A);
    j["P0"] = matrix_to_json(c.P0);
  }
  j["q"] = c.q;
  j["p"] = c.p;
  j["lambda"] = c.lambda;
  j["Lambda"] = c.Lambda;
  j["eps"] = c.eps;
  j["h"] = c.h;
  j["delta"] = c.delta;
  j["grid"] = {{"nodes", c.nodes}, {"b_max", c.b_max}};
  j["scenarios"] = c.scenarios;
  j["out"] = c.out;
  j["seed"] = c.seed;
  return j;
}

DriftBundle config_drift(const ExperimentConfig& c) {
  if (!c.preset.empty()) return preset_frame(c.preset);
  return make_bundle(c.A, c.P0);
}

std::mt19937_64 substream(std::uint64_t seed, const std::string& label) {
  std::uint64_t hsh = 1469598103934665603ull;
  for (unsigned char ch : label) {
    hsh ^= ch;
    hsh *= 1099511628211ull;
  }
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(hsh), static_cast<std::uint32_t>(hsh >> 32)};
  return std::mt19937_64(seq);
}

namespace {

struct Context {
  const ExperimentConfig& c;
  DriftBundle drift;
  fs::path dir;
  std::optional<GridFunction> improvement_u;
};

void write_json(const fs::path& p, const json& j) { write_text(p.string(), j.dump(2) + "\n"); }

DriftBundle random_controllable(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::uniform_int_distribution<int> dn(2, 6);
  for (;;) {
    const int N = dn(rng);
    std::uniform_int_distribution<int> dk(1, std::min(3, N - 1));
    const int k = dk(rng);
    const int n0 = (N + k) / (k + 1);
    Mat A(N, N), B(N, n0);
    for (int i = 0; i < N; ++i)
      for (int l = 0; l < N; ++l) A(i, l) = g(rng);
    for (int i = 0; i < N; ++i)
      for (int l = 0; l < n0; ++l) B(i, l) = g(rng);
    Eigen::HouseholderQR<Mat> qr(B);
    const Mat U = qr.householderQ() * Mat::Identity(N, n0);
    try {
      DriftBundle b = make_bundle(A, U * U.transpose());
      if (b.frame.kappa <= 3) return b;
    } catch (const Error&) {
    }
  }
}

CheckResult scenario_flow_identity(Context& cx) {
  auto rng = substream(cx.c.seed, "flow-identity");
  std::uniform_real_distribution<double> ur(0.1, 2.0), ut(0.0, 1.0);
  std::ostringstream csv;
  csv << "sample,N,kappa,r,tau,h,deviation\n";
  double worst = 0;
  for (int i = 0; i < 100; ++i) {
    const DriftBundle b = random_controllable(rng);
    const double r = ur(rng), tau = ut(rng);
    const double h = ut(rng) / r;  // |h r| <= 1
    const double dev = flow_identity_deviation(b.frame, b.A, r, tau, h);
    worst = std::max(worst, dev);
    csv << i << "," << b.frame.N << "," << b.frame.kappa << "," << fmt(r) << "," << fmt(tau) << ","
        << fmt(h) << "," << fmt(dev) << "\n";
  }
  write_text((cx.dir / "flow_identity.csv").string(), csv.str());
  return {"flow-identity", worst <= 1e-8, "max deviation " + fmt(worst)};
}

CheckResult scenario_cost_scaling(Context& cx) {
  const KalmanFrame& f = cx.drift.frame;
  const double q = cx.c.q, qc = q / (q - 1);
  std::vector<double> ts;
  for (int i = 0; i <= 8; ++i) ts.push_back(std::pow(10.0, -2 + 0.25 * i));
  std::ostringstream csv;
  csv << "stratum,t,J,ratio\n";
  json fits = json::array();
  bool ok = true;
  double span_all = 1;
  for (int j = 0; j <= f.kappa; ++j) {
    const Vec xi = f.block(j).col(0);
    std::vector<double> lx, ly;
    double lo = std::numeric_limits<double>::infinity(), hi = 0;
    for (double t : ts) {
      ControlProblemSpec sp{cx.drift, cx.c.h, qc, 0.0, t, Vec::Zero(f.N), xi};
      const double J = min_energy_cost(sp, 1e-10).first.J;
      const double ratio = J / (std::pow(t, -qc / q) * std::pow((scale_matrix_S(f, 1 / t) * xi).norm(), qc));
      lo = std::min(lo, ratio);
      hi = std::max(hi, ratio);
      lx.push_back(std::log(t));
      ly.push_back(std::log(J));
      csv << j << "," << fmt(t) << "," << fmt(J) << "," << fmt(ratio) << "\n";
    }
    const LineFit lf = fit_line(lx, ly);
    const double expected = -qc / q - qc * j;
    const bool pass = std::abs(lf.slope / expected - 1) <= 0.05 && hi / lo < 10;
    ok = ok && pass;
    span_all = std::max(span_all, hi / lo);
    fits.push_back({{"stratum", j}, {"slope", lf.slope}, {"expected", expected},
                    {"ratio_min", lo}, {"ratio_max", hi}, {"pass", pass}});
    write_loglog_svg((cx.dir / ("cost_scaling_" + std::to_string(j) + ".svg")).string(),
                     "log J vs log t, stratum " + std::to_string(j), ts,
                     [&] {
                       std::vector<double> y;
                       for (double v : ly) y.push_back(std::exp(v));
                       return y;
                     }(),
                     lf.slope, lf.intercept, true);
  }
  write_text((cx.dir / "cost_scaling.csv").string(), csv.str());
  write_json(cx.dir / "cost_scaling.json", {{"q", q}, {"fits", fits}});
  return {"cost-scaling", ok, "largest ratio span " + fmt(span_all)};
}

CheckResult scenario_curved(Context& cx) {
  const KalmanFrame& f = cx.drift.frame;
  const auto alphas = default_alphas(f, cx.c.q, cx.c.p);
  const CurvedFamily fam = build_curved_family(cx.drift, cx.c.h, 1.0, alphas, cx.c.q);
  const double endpoint = (phi_matrix(fam, 1.0) - Mat::Identity(f.N, f.N)).norm();
  std::vector<double> s;
  for (int k = 0; k <= 12; ++k) s.push_back(std::ldexp(1.0, -k));
  const JacobianReport jr = jacobian_profile(fam, s);
  const IntegrabilityReport ir = integrability_proxy(fam, cx.c.p);
  std::ostringstream csv;
  csv << "s,det,gradient_norm\n";
  for (const auto& r : jr.rows) csv << fmt(r.s) << "," << fmt(r.det) << "," << fmt(r.grad_norm) << "\n";
  write_text((cx.dir / "curved.csv").string(), csv.str());
  const bool pass = endpoint <= 1e-7 && jr.fitted_exponent <= jr.bound_exponent + 0.1 && ir.converges;
  write_json(cx.dir / "curved.json",
             {{"alphas", alphas},
              {"endpoint_error", endpoint},
              {"fitted_exponent", jr.fitted_exponent},
              {"bound_exponent", jr.bound_exponent},
              {"gradient_exponent", jr.gradient_exponent},
              {"alpha_star", jr.alpha_star},
              {"integrability_total", ir.total},
              {"integrability_converges", ir.converges},
              {"pass", pass}});
  return {"curved", pass, "fitted " + fmt(jr.fitted_exponent) + " vs bound " + fmt(jr.bound_exponent)};
}

json report_json(const OscillationReport& r) {
  json lv = json::array();
  for (const auto& l : r.levels)
    lv.push_back({{"r", l.r}, {"h", l.h}, {"gamma", l.gamma}, {"osc", l.osc},
                  {"osc_scaled", l.osc_scaled}, {"nodes", l.nodes}});
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(std::isinf(v) ? "inf" : "nan"); };
  return {{"levels", lv},
          {"alpha_fit", num(r.alpha_fit)},
          {"theta_observed", num(r.theta_observed)},
          {"theta_target", r.theta_target},
          {"delta", r.delta},
          {"smooth", r.smooth},
          {"partial", r.partial},
          {"monotone", r.monotone},
          {"shape_ok", r.shape_ok},
          {"saturation", r.saturation},
          {"warnings", r.warnings}};
}

void write_levels_csv(const fs::path& p, const OscillationReport& r) {
  std::ostringstream csv;
  csv << "level,r,osc,osc_scaled,nodes\n";
  for (size_t k = 0; k < r.levels.size(); ++k)
    csv << k << "," << fmt(r.levels[k].r) << "," << fmt(r.levels[k].osc) << ","
        << fmt(r.levels[k].osc_scaled) << "," << r.levels[k].nodes << "\n";
  write_text(p.string(), csv.str());
}

ImprovementSpec improvement_spec(const Context& cx) {
  ImprovementSpec sp;
  sp.drift = cx.drift;
  sp.h = cx.c.h;
  sp.q = cx.c.q;
  sp.lambda = cx.c.lambda;
  sp.eps = cx.c.eps;
  sp.delta = cx.c.delta;
  sp.nodes = cx.c.nodes;
  sp.b_max = cx.c.b_max;
  sp.threads = cx.c.threads;
  return sp;
}

CheckResult scenario_improvement(Context& cx) {
  GridFunction u;
  const OscillationReport r = improvement_experiment(improvement_spec(cx), &u);
  cx.improvement_u = std::move(u);
  write_json(cx.dir / "improvement.json", report_json(r));
  write_levels_csv(cx.dir / "improvement.csv", r);
  return {"improvement", r.theta_observed > 0, "theta " + fmt(r.theta_observed)};
}

CheckResult scenario_iteration(Context& cx) {
  if (!cx.improvement_u) {
    GridFunction u;
    improvement_experiment(improvement_spec(cx), &u);
    cx.improvement_u = std::move(u);
  }
  const OscillationReport r = oscillation_iteration(*cx.improvement_u, cx.c.q, 4, 0.5, 0.0);
  write_json(cx.dir / "iteration.json", report_json(r));
  write_levels_csv(cx.dir / "iteration.csv", r);
  std::vector<double> x, y;
  for (const auto& l : r.levels) {
    x.push_back(l.r);
    y.push_back(l.osc);
  }
  write_loglog_svg((cx.dir / "iteration.svg").string(), "osc vs r", x, y);
  const bool pass = (r.alpha_fit > 0 || r.smooth) && r.monotone;
  return {"iteration", pass, "alpha_fit " + fmt(r.alpha_fit)};
}

CheckResult scenario_holder(Context& cx) {
  const KalmanFrame& f = cx.drift.frame;
  const double alpha = 0.5;
  const ScaleParams sp = make_scale_params(cx.c.q, alpha);
  const int nodes = f.N == 2 ? 1025 : (f.N == 3 ? 129 : 17);
  GridSpec g;
  g.lo = Vec::Constant(f.N, -1);
  g.hi = Vec::Constant(f.N, 1);
  g.n.assign(f.N, nodes);
  g.t0 = 0;
  g.t1 = 1;
  g.nt = 1;
  GridFunction u(g, cx.drift, 0.0);
  for (size_t i = 0; i < u.slice_size(); ++i) {
    const double v = modulus_omega(f, sp, {0.0, u.physical(u.node(i))});
    u.at(0, i) = v;
    u.at(1, i) = v;
  }
  const HolderFit fit = holder_fit(u, cx.c.q, 1, Vec::Zero(f.N));
  std::ostringstream csv;
  csv << "stratum,beta,planted,ci_low,ci_high,decades,samples\n";
  bool pass = true;
  json strata = json::array();
  for (const auto& s : fit.strata) {
    const double planted = modulus_exponent(sp, s.stratum);
    const bool ok = std::abs(s.beta / planted - 1) <= 0.05;
    pass = pass && ok;
    csv << s.stratum << "," << fmt(s.beta) << "," << fmt(planted) << "," << fmt(s.ci_low) << ","
        << fmt(s.ci_high) << "," << fmt(s.decades) << "," << s.samples << "\n";
    strata.push_back({{"stratum", s.stratum}, {"beta", s.beta}, {"planted", planted}, {"pass", ok}});
  }
  write_text((cx.dir / "holder.csv").string(), csv.str());
  write_json(cx.dir / "holder.json", {{"alpha_planted", alpha},
                                      {"alpha_from_beta0", fit.alpha},
                                      {"strata", strata},
                                      {"reliable", fit.reliable},
                                      {"warnings", fit.warnings}});
  return {"holder", pass, "alpha from beta0 " + fmt(fit.alpha)};
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& c) {
  RunResult res;
  Context cx{c, config_drift(c), fs::path(c.out), std::nullopt};
  std::error_code ec;
  fs::create_directories(cx.dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + c.out);
  res.dir = c.out;

  json manifest;
  manifest["config"] = config_to_json(c);
  manifest["frame"] = frame_to_json(cx.drift.frame);
  manifest["p_threshold"] = p_threshold(cx.drift.frame, c.q);
  manifest["versions"] = {{"hjlab", "0.1.0"},
                          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                        std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                        std::to_string(EIGEN_MINOR_VERSION)},
                          {"boost", BOOST_LIB_VERSION},
                          {"compiler", __VERSION__}};
  write_json(cx.dir / "manifest.json", manifest);

  for (const auto& name : c.scenarios) {
    CheckResult cr{name, false, ""};
    try {
      if (name == "flow-identity") cr = scenario_flow_identity(cx);
      else if (name == "cost-scaling") cr = scenario_cost_scaling(cx);
      else if (name == "curved") cr = scenario_curved(cx);
      else if (name == "improvement") cr = scenario_improvement(cx);
      else if (name == "iteration") cr = scenario_iteration(cx);
      else if (name == "holder") cr = scenario_holder(cx);
    } catch (const std::exception& e) {
      cr.pass = false;
      cr.detail = std::string("error: ") + e.what();
    }
    res.checks.push_back(cr);
  }
  json checks = json::array();
  bool all = true;
  for (const auto& cr : res.checks) {
    checks.push_back({{"name", cr.name}, {"pass", cr.pass}, {"detail", cr.detail}});
    all = all && cr.pass;
  }
  write_json(cx.dir / "summary.json", {{"checks", checks}, {"all_pass", all}});
  res.exit_code = all ? 0 : 3;
  return res;
}

}  // namespace hjlab
