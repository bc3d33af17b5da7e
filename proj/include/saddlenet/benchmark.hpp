#pragma once

// Resource-allocation benchmark
//
//   min  sum_i c_i w_i   s.t.  -sum_i d_i log(1 + w_i) <= -b,  w_i in [0, 1]
//
// with a centralized reference solver, the end-to-end experiment runner and
// log-log slope fitting.

#include <saddlenet/analysis.hpp>
#include <saddlenet/common.hpp>
#include <saddlenet/copt.hpp>
#include <saddlenet/dynamics.hpp>
#include <saddlenet/graph.hpp>
#include <saddlenet/schedule.hpp>

#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace saddlenet {

struct BenchmarkInstance {
  Vector c;        // costs
  Vector d;        // constraint weights, all > 0
  double b = 0.0;  // offset, split as b/N per agent

  int size() const { return static_cast<int>(c.size()); }

  void validate() const {
    require(c.size() >= 1 && c.size() == d.size(), "benchmark needs matching c and d of positive length");
    require((c.array() >= 0.0).all(), "costs must be nonnegative");
    require((d.array() > 0.0).all(), "constraint weights must be positive");
    require(std::isfinite(b), "offset b must be finite");
  }

  /// sum_i d_i log 2 - b, the constraint slack at the all-ones point.
  double slater_margin() const { return d.sum() * std::numbers::ln2 - b; }
};

/// c, d ~ U[0,1] from the seed, b = N/10 unless given. The draw is repeated
/// until d > 0 and sum_i d_i log 2 > b.
inline BenchmarkInstance make_benchmark(int n, std::uint64_t seed, std::optional<double> b = std::nullopt) {
  require(n >= 1, "benchmark needs at least one agent");
  const double offset = b.value_or(n / 10.0);
  require(std::isfinite(offset), "offset b must be finite");
  std::mt19937_64 gen(seed);
  for (int attempt = 0; attempt < 10'000; ++attempt) {
    BenchmarkInstance inst{Vector(n), Vector(n), offset};
    for (int i = 0; i < n; ++i) {
      inst.c(i) = uniform01(gen);
      inst.d(i) = uniform01(gen);
    }
    if ((inst.d.array() > 0.0).all() && inst.slater_margin() > 0.0) return inst;
  }
  throw RuntimeFailure("could not draw a benchmark instance satisfying the Slater condition");
}

/// argmin over [0,1] of c w - z d log(1 + w).
inline double benchmark_inner_argmin(double c, double d, double z) {
  if (c <= 0.0) return z * d > 0.0 ? 1.0 : 0.0;
  return std::clamp(z * d / c - 1.0, 0.0, 1.0);
}

/// q(z) = sum_i min_w (c_i w - z d_i log(1 + w)) + z b.
inline double benchmark_dual(const BenchmarkInstance& inst, double z) {
  double q = z * inst.b;
  for (int i = 0; i < inst.size(); ++i) {
    const double w = benchmark_inner_argmin(inst.c(i), inst.d(i), z);
    q += inst.c(i) * w - z * inst.d(i) * std::log1p(w);
  }
  return q;
}

/// Constraint value -sum_i d_i log(1 + w_i) + b.
inline double benchmark_constraint(const BenchmarkInstance& inst, const Vector& w) {
  return -(inst.d.array() * w.array().log1p()).sum() + inst.b;
}

/// N max c / (log 2 sum d - b): the dual radius the protocol certifies
/// before its safety factor.
inline double benchmark_radius_formula(const BenchmarkInstance& inst) {
  return inst.size() * inst.c.maxCoeff() / inst.slater_margin();
}

inline SeparableProblem benchmark_separable(const BenchmarkInstance& inst) {
  inst.validate();
  const int n = inst.size();
  const double share = inst.b / n;
  SeparableProblem sep;
  sep.m = 1;
  sep.d = 0;
  sep.global_set = ConvexSet::full(0);
  for (int i = 0; i < n; ++i) {
    const double c = inst.c(i), d = inst.d(i);
    AgentFunctions a;
    a.dim = 1;
    a.set = ConvexSet::box(1, 0.0, 1.0);
    a.f = [c](const Vector& w, const Vector&) { return c * w(0); };
    a.f_grad_w = [c](const Vector&, const Vector&) { return Vector::Constant(1, c); };
    a.f_grad_D = [](const Vector&, const Vector&) { return Vector(0); };
    a.g = [d, share](const Vector& w, const Vector&) { return Vector::Constant(1, -d * std::log1p(w(0)) + share); };
    a.g_jac_w = [d](const Vector& w, const Vector&) { return Matrix::Constant(1, 1, -d / (1.0 + w(0))); };
    a.g_jac_D = [](const Vector&, const Vector&) { return Matrix(1, 0); };
    a.slater_point = [] { return Vector::Constant(1, 1.0); };
    a.dual_value = [c, d, share](const Vector& z) {
      const double w = benchmark_inner_argmin(c, d, z(0));
      return c * w - z(0) * d * std::log1p(w) + z(0) * share;
    };
    a.constraint_sup_norm = [d, share] {
      return std::max(std::abs(share), std::abs(share - d * std::numbers::ln2));
    };
    sep.agents.push_back(std::move(a));
  }
  return sep;
}

inline SubgradientBounds benchmark_subgradient_bounds(const BenchmarkInstance& inst) {
  SubgradientBounds h;
  h.f_w = inst.c.maxCoeff();
  h.g_w = inst.d.maxCoeff();
  return h;
}

// ---------------------------------------------------------------------------
// Reference solver

struct OracleResult {
  Vector w;                      // primal recovery w(z*)
  double z = 0.0;                // optimal multiplier
  double value = 0.0;            // sum_i c_i w_i*
  double dual_value = 0.0;       // q(z*)
  double stationarity = 0.0;     // |q'(z*)| when z* > 0
  double primal_violation = 0.0; // max(0, constraint at w*)
  double complementarity = 0.0;  // |z* * constraint at w*|
  bool constraint_active = true;
  int iterations = 0;
};

/// Maximizes the concave dual over [0, z_hi] by golden-section search down
/// to an interval of width tol. z_hi defaults to twice the protocol radius
/// formula.
inline OracleResult oracle_solve(const BenchmarkInstance& inst, double tol = 1e-8, double z_hi = 0.0,
                                 int max_iter = 200) {
  inst.validate();
  require(tol > 0.0, "oracle tolerance must be positive");
  require(inst.slater_margin() > 0.0, "Slater condition fails for this instance");
  OracleResult out;
  auto finish = [&](double z) {
    out.z = z;
    out.w.resize(inst.size());
    for (int i = 0; i < inst.size(); ++i) out.w(i) = benchmark_inner_argmin(inst.c(i), inst.d(i), z);
    out.value = inst.c.dot(out.w);
    out.dual_value = benchmark_dual(inst, z);
    const double g = benchmark_constraint(inst, out.w);
    out.stationarity = z > 0.0 ? std::abs(g) : 0.0;
    out.primal_violation = std::max(0.0, g);
    out.complementarity = std::abs(z * g);
    return out;
  };

  // q'(0) = b: with b <= 0 the origin is feasible and optimal.
  if (inst.b <= 0.0 || inst.c.maxCoeff() <= 0.0) {
    out.constraint_active = false;
    return finish(0.0);
  }
  if (z_hi <= 0.0) z_hi = 2.0 * benchmark_radius_formula(inst);

  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = 0.0, hi = z_hi;
  double x1 = hi - inv_phi * (hi - lo), x2 = lo + inv_phi * (hi - lo);
  double f1 = benchmark_dual(inst, x1), f2 = benchmark_dual(inst, x2);
  int it = 0;
  while (hi - lo > tol && it < max_iter) {
    ++it;
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = benchmark_dual(inst, x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = benchmark_dual(inst, x1);
    }
  }
  out.iterations = it;
  // q is differentiable with q'(z) = constraint at w(z), nonincreasing in z.
  // Bisecting its sign inside the final bracket pins z* to rounding level.
  auto slope = [&inst](double z) {
    double g = inst.b;
    for (int i = 0; i < inst.size(); ++i) g -= inst.d(i) * std::log1p(benchmark_inner_argmin(inst.c(i), inst.d(i), z));
    return g;
  };
  // Below ~sqrt(eps) golden-section comparisons are rounding noise and the
  // bracket can drift off z*, so widen it until the slope changes sign.
  for (double width = std::max(hi - lo, tol); slope(lo) <= 0.0 && lo > 0.0; width *= 2.0) lo = std::max(0.0, lo - width);
  for (double width = std::max(hi - lo, tol); slope(hi) > 0.0 && hi < z_hi; width *= 2.0) hi = std::min(z_hi, hi + width);
  if (slope(lo) > 0.0 && slope(hi) <= 0.0) {
    for (int k = 0; k < 200; ++k) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      (slope(mid) > 0.0 ? lo : hi) = mid;
    }
  }
  // hi has q'(hi) = constraint(w(hi)) <= 0: the recovered primal is feasible.
  const double z = hi;
  if (z_hi - z <= tol) throw RuntimeFailure("oracle: maximizer at the search bound; enlarge z_hi");
  return finish(z);
}

// ---------------------------------------------------------------------------
// Slope fitting

/// Least-squares slope of log(err) against log(t) for t in [t_min, t_max].
inline double fit_loglog_slope(const std::vector<double>& t, const std::vector<double>& err, double t_min,
                               double t_max) {
  require(t.size() == err.size(), "series lengths differ");
  require(t_min > 0.0 && t_min < t_max, "invalid slope window");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (t[k] < t_min || t[k] > t_max) continue;
    if (!(err[k] > 0.0)) throw ValidationError("nonpositive value in slope window at t = " + std::to_string(t[k]));
    const double x = std::log(t[k]), y = std::log(err[k]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  require(n >= 10, "slope window holds fewer than 10 points");
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

/// Indices of the records nearest to `points` log-spaced targets in
/// [t_min, t_max], without repeats.
inline std::vector<std::size_t> log_spaced_subset(const std::vector<double>& t, double t_min, double t_max,
                                                  int points) {
  require(points >= 2 && t_min > 0.0 && t_min < t_max, "invalid log-spaced subset request");
  std::vector<std::size_t> out;
  for (int k = 0; k < points; ++k) {
    const double target = t_min * std::pow(t_max / t_min, static_cast<double>(k) / (points - 1));
    const auto it = std::lower_bound(t.begin(), t.end(), target);
    std::size_t idx = static_cast<std::size_t>(it - t.begin());
    if (idx == t.size() || (idx > 0 && target - t[idx - 1] < t[idx] - target)) --idx;
    if (t[idx] < t_min || t[idx] > t_max) continue;
    if (out.empty() || out.back() != idx) out.push_back(idx);
  }
  return out;
}

/// Slope over log-spaced samples of a (t, err) series.
inline double fit_loglog_slope_logspaced(const std::vector<double>& t, const std::vector<double>& err,
                                         double t_min, double t_max, int points = 50) {
  std::vector<double> ts, es;
  for (auto k : log_spaced_subset(t, t_min, t_max, points)) {
    ts.push_back(t[k]);
    es.push_back(err[k]);
  }
  return fit_loglog_slope(ts, es, t_min, t_max);
}

// ---------------------------------------------------------------------------
// Experiment runner

struct GraphSpec {
  std::string kind = "small_world";  // small_world | complete | explicit
  int k = 4;                         // lattice degree for small_world
  double p = 0.1;                    // rewiring probability
  std::shared_ptr<const DigraphSequence> sequence;  // for explicit
};

struct ExperimentConfig {
  int agents = 50;
  std::uint64_t seed = 1;
  std::optional<double> b;
  std::optional<Vector> c, d;  // explicit instance instead of a seeded draw
  GraphSpec graph;
  double sigma = 0.2475;
  double delta_tilde_prime = 0.84;
  bool allow_sigma_outside_window = false;
  Schedule schedule = schedules::DoublingTrick{};
  long long T = 100'000;
  long long stride = 10;
  std::optional<double> r;  // dual radius; computed by the protocol when absent
  double gamma_safety = 0.99;
  double oracle_tol = 1e-8;
  bool keep_history = false;

  void validate() const {
    require(agents >= 1, "agents must be >= 1");
    require(T >= 1, "T must be >= 1");
    require(stride >= 1, "stride must be >= 1");
    require(sigma >= 0.0 && std::isfinite(sigma), "sigma must be nonnegative");
    require(delta_tilde_prime > 0.0 && delta_tilde_prime < 1.0, "delta_tilde_prime must lie in (0,1)");
    require(!r || *r > 0.0, "dual radius must be positive");
    require(c.has_value() == d.has_value(), "explicit instances need both c and d");
    require(!c || c->size() == agents, "explicit c must have one entry per agent");
    require(graph.kind == "small_world" || graph.kind == "complete" || graph.kind == "explicit",
            "unknown graph kind '" + graph.kind + "'");
    require(graph.kind != "explicit" || graph.sequence, "explicit graph kind needs a sequence");
    saddlenet::validate(schedule);
  }
};

/// Complete graph with weights 1/(n-1).
inline WeightedDigraph complete_graph(int n) {
  require(n >= 1, "graph needs at least one node");
  Matrix a = Matrix::Zero(n, n);
  if (n > 1) a.setConstant(1.0 / (n - 1));
  a.diagonal().setZero();
  return WeightedDigraph(a);
}

/// Small-world graph with lattice degree k; falls back to the complete
/// graph when n <= k.
inline DigraphSequence make_graphs(const GraphSpec& spec, int n, std::uint64_t seed) {
  if (spec.kind == "explicit") {
    require(spec.sequence->agents() == n, "explicit graph sequence has the wrong agent count");
    return *spec.sequence;
  }
  if (spec.kind == "complete" || n <= spec.k) return DigraphSequence::fixed(complete_graph(n));
  return DigraphSequence::fixed(watts_strogatz(n, spec.k, spec.p, seed));
}

inline BenchmarkInstance make_instance(const ExperimentConfig& cfg) {
  if (cfg.c) {
    BenchmarkInstance inst{*cfg.c, *cfg.d, cfg.b.value_or(cfg.agents / 10.0)};
    inst.validate();
    if (!(inst.slater_margin() > 0.0)) throw ValidationError("explicit instance violates the Slater condition");
    return inst;
  }
  return make_benchmark(cfg.agents, cfg.seed, cfg.b);
}

struct BenchmarkResult {
  BenchmarkInstance instance;
  std::shared_ptr<const DigraphSequence> graphs;
  OracleResult oracle;
  std::optional<DualBoundRun> protocol;
  double r = 0.0;
  SaddleProblem problem;
  RunTrace trace;
  std::optional<BoundConstants> constants;
  std::optional<Envelope> envelope;
  std::optional<IssReport> iss;
  std::optional<BoundCheck> dominance;
};

/// Draws the instance, bounds the dual set with the distributed protocol,
/// solves the reference problem and runs C-SP-SG from w = 0, z = 0.
inline BenchmarkResult run_benchmark(const ExperimentConfig& cfg) {
  cfg.validate();
  BenchmarkResult res;
  res.instance = make_instance(cfg);
  const int n = res.instance.size();
  res.graphs = std::make_shared<const DigraphSequence>(make_graphs(cfg.graph, n, cfg.seed));
  const SeparableProblem sep = benchmark_separable(res.instance);

  if (cfg.r) {
    res.r = *cfg.r;
  } else {
    res.protocol = run_dual_bound_protocol(sep, *res.graphs, cfg.sigma, {Vector(), 1'000'000, cfg.gamma_safety});
    res.r = res.protocol->r;
  }
  res.oracle = oracle_solve(res.instance, cfg.oracle_tol, 2.0 * std::max(res.r, benchmark_radius_formula(res.instance)));
  res.problem = build_lagrangian_saddle(sep, res.r);

  const BenchmarkInstance inst = res.instance;
  const double opt_value = res.oracle.value;
  RunOptions opt;
  opt.T = cfg.T;
  opt.stride = cfg.stride;
  opt.keep_history = cfg.keep_history;
  opt.reference_value = opt_value;
  opt.delta_tilde_prime = cfg.delta_tilde_prime;
  opt.allow_sigma_outside_window = cfg.allow_sigma_outside_window;
  opt.probe = [inst, opt_value](const NetworkState& s, TraceRecord& r) {
    r.cost_err = std::abs(inst.c.dot(s.average.w) - opt_value);
    r.constraint_violation = benchmark_constraint(inst, s.average.w);
  };
  res.trace = run(res.problem, *res.graphs, cfg.sigma, cfg.schedule,
                  NetworkState::initial(Iterate::zeros(res.problem.dims)), opt);

  if (n >= 2) {
    const auto net = network_constants(*res.graphs, cfg.sigma, cfg.delta_tilde_prime);
    res.constants = corollary_constants(sep, res.r, net, benchmark_subgradient_bounds(inst));
    res.envelope = cdoubling(*res.constants);
    res.iss = check_iss_bounds(res.trace, net);
    res.dominance = check_theorem_dominance(res.trace, *res.envelope);
  }
  return res;
}

/// (t, value) columns of a trace for slope fitting.
struct Series {
  std::vector<double> t;
  std::vector<double> v;
};

inline Series series_of(const RunTrace& trace, double TraceRecord::*field) {
  Series s;
  for (const auto& r : trace.records) {
    s.t.push_back(static_cast<double>(r.t));
    s.v.push_back(r.*field);
  }
  return s;
}

}  // namespace saddlenet
