#pragma once

// Separable constrained optimization
//
//   min  sum_i f^i(w^i, D)   s.t.  sum_i g^i(w^i, D) <= 0,  w^i in W_i, D in D
//
// solved through its Lagrangian with per-agent multiplier copies z^i that
// are driven to agreement (C-SP-SG), plus the distributed protocol that
// bounds the optimal dual set.

#include <saddlenet/common.hpp>
#include <saddlenet/dynamics.hpp>
#include <saddlenet/graph.hpp>
#include <saddlenet/projection.hpp>

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace saddlenet {

/// Local data of one agent. Every function takes (w^i, D); D is empty when
/// the problem has no global decision vector. g^i maps to R^m and its
/// Jacobians hold one subgradient per row.
struct AgentFunctions {
  int dim = 1;
  std::function<double(const Vector&, const Vector&)> f;
  std::function<Vector(const Vector&, const Vector&)> f_grad_w;
  std::function<Vector(const Vector&, const Vector&)> f_grad_D;
  std::function<Vector(const Vector&, const Vector&)> g;
  std::function<Matrix(const Vector&, const Vector&)> g_jac_w;
  std::function<Matrix(const Vector&, const Vector&)> g_jac_D;
  ConvexSet set = ConvexSet::full(0);

  // Optional closed forms. When absent the generic inner solver is used.
  std::function<Vector()> slater_point;                 // argmin of g^i over W_i
  std::function<double(const Vector&)> dual_value;      // q^i(zbar)
  std::function<double()> constraint_sup_norm;          // sup ||g^i|| over W_i
};

struct SeparableProblem {
  int m = 1;  // number of coupled constraints
  int d = 0;  // dimension of the global decision vector
  ConvexSet global_set = ConvexSet::full(0);
  std::vector<AgentFunctions> agents;

  int size() const { return static_cast<int>(agents.size()); }

  int total_w() const {
    int s = 0;
    for (const auto& a : agents) s += a.dim;
    return s;
  }

  std::vector<int> offsets() const {
    std::vector<int> off(agents.size() + 1, 0);
    for (std::size_t i = 0; i < agents.size(); ++i) off[i + 1] = off[i] + agents[i].dim;
    return off;
  }

  void validate() const {
    require(!agents.empty(), "separable problem has no agents");
    require(m >= 1, "need at least one coupled constraint");
    require(d >= 0, "negative global dimension");
    require(global_set.dim() == d, "global set dimension mismatch");
    for (const auto& a : agents) {
      require(a.dim >= 0, "negative local dimension");
      require(a.set.dim() == a.dim, "local set dimension mismatch");
      require(a.f && a.g && a.f_grad_w && a.g_jac_w, "agent is missing an oracle");
      require(d == 0 || (a.f_grad_D && a.g_jac_D), "agent is missing a D-subgradient oracle");
    }
  }
};

// ---------------------------------------------------------------------------
// Lagrangian saddle problem

/// phi(w, D, z) = sum_i f^i(w^i, D^i) + (z^i)^T g^i(w^i, D^i) on
/// prod W_i x D^N x (R^m_{>=0} n B(0, r))^N. The mu block is empty.
inline SaddleProblem build_lagrangian_saddle(const SeparableProblem& sep, double r) {
  require(r > 0.0, "dual radius r must be positive");
  sep.validate();
  auto sp = std::make_shared<const SeparableProblem>(sep);
  const auto off = std::make_shared<const std::vector<int>>(sep.offsets());
  const int n = sep.size(), m = sep.m, d = sep.d;

  SaddleProblem p;
  p.dims = {n, sep.total_w(), d, 0, m};
  std::vector<ConvexSet> ws;
  for (const auto& a : sep.agents) ws.push_back(a.set);
  p.w_set = ConvexSet::product(std::move(ws));
  p.d_set = sep.global_set;
  p.mu_set = ConvexSet::full(0);
  p.z_set = ConvexSet::orthant_ball(m, r);

  p.value = [sp, off, n, m, d](const Iterate& x) {
    double v = 0.0;
    for (int i = 0; i < n; ++i) {
      const auto& a = sp->agents[i];
      const Vector wi = x.w.segment((*off)[i], a.dim);
      const Vector Di = x.D.segment(i * d, d);
      v += a.f(wi, Di) + x.z.segment(i * m, m).dot(a.g(wi, Di));
    }
    return v;
  };
  p.grad_w = [sp, off, n, m, d](const Iterate& x) {
    Vector out(x.w.size());
    for (int i = 0; i < n; ++i) {
      const auto& a = sp->agents[i];
      const Vector wi = x.w.segment((*off)[i], a.dim);
      const Vector Di = x.D.segment(i * d, d);
      out.segment((*off)[i], a.dim) =
          a.f_grad_w(wi, Di) + a.g_jac_w(wi, Di).transpose() * x.z.segment(i * m, m);
    }
    return out;
  };
  if (d > 0) {
    p.grad_D = [sp, off, n, m, d](const Iterate& x) {
      Vector out(x.D.size());
      for (int i = 0; i < n; ++i) {
        const auto& a = sp->agents[i];
        const Vector wi = x.w.segment((*off)[i], a.dim);
        const Vector Di = x.D.segment(i * d, d);
        out.segment(i * d, d) = a.f_grad_D(wi, Di) + a.g_jac_D(wi, Di).transpose() * x.z.segment(i * m, m);
      }
      return out;
    };
  }
  p.grad_z = [sp, off, n, m, d](const Iterate& x) {
    Vector out(x.z.size());
    for (int i = 0; i < n; ++i) {
      const auto& a = sp->agents[i];
      out.segment(i * m, m) = a.g(x.w.segment((*off)[i], a.dim), x.D.segment(i * d, d));
    }
    return out;
  };
  return p;
}

/// One C-SP-SG iteration written agent by agent: every agent combines its
/// own subgradients with sigma * sum_j a_ij (x^j - x^i) from its
/// out-neighbors, then projects onto W_i, D and R^m_{>=0} n B(0, r).
inline NetworkState cspsg_step(const SeparableProblem& sep, double r, const NetworkState& state,
                               const WeightedDigraph& graph, double sigma, double eta) {
  require(r > 0.0, "dual radius r must be positive");
  require(eta >= 0.0, "learning rate must be nonnegative");
  const int n = sep.size(), m = sep.m, d = sep.d;
  require(graph.size() == n, "graph and problem disagree on agent count");
  const auto off = sep.offsets();
  const auto& x = state.x;
  const Matrix& a = graph.adjacency();
  const ConvexSet zset = ConvexSet::orthant_ball(m, r);

  NetworkState next;
  next.x = x;
  for (int i = 0; i < n; ++i) {
    const auto& ag = sep.agents[i];
    const Vector wi = x.w.segment(off[i], ag.dim);
    const Vector Di = x.D.segment(i * d, d);
    const Vector zi = x.z.segment(i * m, m);

    Vector mix_D = Vector::Zero(d);
    Vector mix_z = Vector::Zero(m);
    for (int j = 0; j < n; ++j) {
      if (a(i, j) == 0.0) continue;
      mix_D += a(i, j) * (x.D.segment(j * d, d) - Di);
      mix_z += a(i, j) * (x.z.segment(j * m, m) - zi);
    }

    const Vector gw = ag.f_grad_w(wi, Di) + ag.g_jac_w(wi, Di).transpose() * zi;
    const Vector gz = ag.g(wi, Di);
    if (!gw.allFinite() || !gz.allFinite())
      throw RuntimeFailure("oracle returned non-finite value at step " + std::to_string(state.t) +
                           " (agent " + std::to_string(i) + ")");
    next.x.w.segment(off[i], ag.dim) = ag.set.project(wi - eta * gw);
    if (d > 0) {
      const Vector gD = ag.f_grad_D(wi, Di) + ag.g_jac_D(wi, Di).transpose() * zi;
      if (!gD.allFinite())
        throw RuntimeFailure("oracle returned non-finite value at step " + std::to_string(state.t));
      next.x.D.segment(i * d, d) = sep.global_set.project(Di + sigma * mix_D - eta * gD);
    }
    next.x.z.segment(i * m, m) = zset.project(zi + sigma * mix_z + eta * gz);
  }
  next.t = state.t + 1;
  next.average = update_running_average(state.average, next.x, next.t);
  return next;
}

// ---------------------------------------------------------------------------
// Inner solver used when an agent supplies no closed form.

struct InnerSolveResult {
  Vector argmin;
  double value;
  int iterations;
};

/// Projected subgradient descent with normalized steps diam/sqrt(k+1),
/// keeping the best point. Stops after max_iter iterations or once a step
/// moves the iterate by less than tol.
inline InnerSolveResult minimize_over(const ConvexSet& set, const std::function<double(const Vector&)>& fn,
                                      const std::function<Vector(const Vector&)>& subgrad,
                                      int max_iter = 10'000, double tol = 1e-8) {
  Vector x = set.anchor();
  double scale = set.diameter();
  if (!std::isfinite(scale) || scale <= 0.0) scale = 1.0;
  InnerSolveResult best{x, fn(x), 0};
  for (int k = 0; k < max_iter; ++k) {
    const Vector g = subgrad(x);
    const double gn = g.norm();
    if (gn == 0.0) break;
    const Vector nx = set.project(x - (scale / std::sqrt(k + 1.0)) * (g / gn));
    const double moved = (nx - x).norm();
    x = nx;
    const double v = fn(x);
    if (v < best.value) best = {x, v, k + 1};
    if (moved < tol) break;
  }
  return best;
}

/// Largest coordinate of g^i, the objective used to seek a Slater point
/// when no closed form is given.
inline InnerSolveResult minimize_max_constraint(const AgentFunctions& a) {
  const Vector none(0);
  auto fn = [&a, &none](const Vector& w) { return a.g(w, none).maxCoeff(); };
  auto sg = [&a, &none](const Vector& w) -> Vector {
    const Vector gv = a.g(w, none);
    Eigen::Index l;
    gv.maxCoeff(&l);
    return a.g_jac_w(w, none).row(l).transpose();
  };
  return minimize_over(a.set, fn, sg);
}

/// q^i(zbar) = min over W_i of f^i + zbar^T g^i.
inline double local_dual_value(const AgentFunctions& a, const Vector& zbar) {
  if (a.dual_value) return a.dual_value(zbar);
  const Vector none(0);
  auto fn = [&](const Vector& w) { return a.f(w, none) + zbar.dot(a.g(w, none)); };
  auto sg = [&](const Vector& w) -> Vector {
    return a.f_grad_w(w, none) + a.g_jac_w(w, none).transpose() * zbar;
  };
  return minimize_over(a.set, fn, sg).value;
}

/// Per-agent components of a Slater vector; throws unless sum_i g^i(w~^i) < 0
/// in every coordinate.
inline std::vector<Vector> slater_components(const SeparableProblem& sep) {
  sep.validate();
  require(sep.d == 0, "Slater components require a problem without agreement variables");
  std::vector<Vector> out;
  Vector total = Vector::Zero(sep.m);
  const Vector none(0);
  for (const auto& a : sep.agents) {
    Vector w = a.slater_point ? a.slater_point() : minimize_max_constraint(a).argmin;
    require(w.size() == a.dim, "Slater point has wrong dimension");
    total += a.g(w, none);
    out.push_back(std::move(w));
  }
  if (!(total.array() < 0.0).all()) throw RuntimeFailure("Slater condition not certified");
  return out;
}

// ---------------------------------------------------------------------------
// Distributed bound on the optimal dual set

/// One round of y^i <- min{ y^j : j in N_out(i) u {i} }, coordinatewise.
/// Rows of `values` are agents.
inline Matrix min_agreement_round(const Matrix& values, const WeightedDigraph& graph) {
  require(values.rows() == graph.size(), "one row per agent expected");
  const Matrix& a = graph.adjacency();
  Matrix out = values;
  for (int i = 0; i < graph.size(); ++i)
    for (int j = 0; j < graph.size(); ++j)
      if (a(i, j) > 0.0) out.row(i) = out.row(i).cwiseMin(values.row(j));
  return out;
}

struct DualBoundOptions {
  Vector zbar;                       // empty means 0
  long long max_rounds = 1'000'000;  // cap on consensus rounds in stage (ii)
  double gamma_safety = 0.99;        // gamma_lower is scaled by this factor
};

/// Everything the protocol computed, per agent where applicable.
struct DualBoundRun {
  std::vector<Vector> slater;      // w~^i
  Matrix y0;                       // rows g^i(w~^i)
  Vector f_tilde;                  // f^i(w~^i)
  Vector q_bar;                    // q^i(zbar)
  Matrix y_final;                  // rows y^i(k**)
  Vector s_final;                  // sign trackers at k**
  std::vector<long long> k_star;   // first round with N s_i <= -(N-1)
  long long k_star_max = 0;        // k**: first round where all agents hold N s_i <= -(N-1)
  long long wait_rounds = 0;       // idle rounds to reach a block boundary
  long long agreement_rounds = 0;  // rounds until all agents held the same minima
  long long rounds_total = 0;
  Matrix y_hat;                    // rows N * max_j y^j(k**), per agent
  Vector gamma_lower;              // per agent
  Vector r_agents;                 // per agent
  double gamma = 0.0;              // common value
  double r = 0.0;                  // common value
};

namespace detail {
/// -1 when every coordinate is strictly negative, +1 otherwise (sign(0) = +1).
inline double vector_sign(const Eigen::Ref<const Eigen::RowVectorXd>& y) {
  return (y.array() < 0.0).all() ? -1.0 : 1.0;
}
}  // namespace detail

/// Stage (i): Slater components and q^i(zbar). Stage (ii): Laplacian
/// consensus on y^i(0) = g^i(w~^i) together with a dynamic-average tracker
/// of the agents' signs, until every agent sees N s_i <= -(N-1); then
/// finite-time agreement on max_j y^j. Stage (iii): min/max agreement on f^i(w~^i)
/// and q^i(zbar), giving r = N (max f - min q) / gamma_lower.
inline DualBoundRun run_dual_bound_protocol(const SeparableProblem& sep, const DigraphSequence& graphs,
                                            double sigma, const DualBoundOptions& opt = {}) {
  const int n = sep.size(), m = sep.m;
  require(graphs.agents() == n, "graph and problem disagree on agent count");
  require(sigma > 0.0, "consensus stepsize must be positive");
  require(opt.gamma_safety > 0.0 && opt.gamma_safety <= 1.0, "gamma safety factor must lie in (0,1]");
  const Vector zbar = opt.zbar.size() == 0 ? Vector::Zero(m) : opt.zbar;
  require(zbar.size() == m && (zbar.array() >= 0.0).all(), "zbar must be a nonnegative m-vector");

  DualBoundRun run;
  const Vector none(0);

  // Stage (i)
  run.slater = slater_components(sep);
  run.y0.resize(n, m);
  run.f_tilde.resize(n);
  run.q_bar.resize(n);
  for (int i = 0; i < n; ++i) {
    const auto& a = sep.agents[i];
    run.y0.row(i) = a.g(run.slater[i], none).transpose();
    run.f_tilde(i) = a.f(run.slater[i], none);
    run.q_bar(i) = local_dual_value(a, zbar);
  }

  // Stage (ii): consensus with sign tracking
  Matrix y = run.y0;
  Vector sgn(n);
  for (int i = 0; i < n; ++i) sgn(i) = detail::vector_sign(y.row(i));
  Vector s = sgn;
  run.k_star.assign(n, -1);
  const double threshold = -(n - 1.0);
  for (long long k = 0;; ++k) {
    // Stop only when every tracker is below the threshold in the same round.
    // Then sum s = sum sgn <= -(N-1) forces every sign to be -1. First hits
    // alone are not enough: signs can flip back after an agent's hit.
    int below = 0;
    for (int i = 0; i < n; ++i) {
      const bool hit = n * s(i) <= threshold;
      below += hit;
      if (hit && run.k_star[i] < 0) run.k_star[i] = k;
    }
    if (below == n) {
      run.k_star_max = k;
      break;
    }
    const int remaining = n - below;
    if (k >= opt.max_rounds)
      throw RuntimeFailure("dual bound protocol: stage (ii) did not terminate within " +
                           std::to_string(opt.max_rounds) + " rounds (" + std::to_string(remaining) +
                           " agents pending, min tracker " + std::to_string(s.minCoeff()) + ")");
    const Matrix& L = graphs.laplacian_at(k + 1);
    y = y - sigma * (L * y);
    Vector sgn_next(n);
    for (int i = 0; i < n; ++i) sgn_next(i) = detail::vector_sign(y.row(i));
    s = s - sigma * (L * s) + (sgn_next - sgn);
    sgn = std::move(sgn_next);
  }
  run.y_final = y;
  run.s_final = s;

  // Min-agreement phase starts on a block boundary so that (N-1) full
  // windows of B graphs fit into (N-1)B rounds.
  const int B = graphs.window();
  long long t0 = run.k_star_max + 1;
  while (t0 % B != 0) ++t0;
  run.wait_rounds = t0 - (run.k_star_max + 1);

  // Every column is agreed on by min-rounds: -y and -f~ give maxima, q a minimum.
  Matrix vals(n, m + 2);
  vals.leftCols(m) = -y;
  vals.col(m) = -run.f_tilde;
  vals.col(m + 1) = run.q_bar;
  const long long rounds = static_cast<long long>(n - 1) * B;
  auto agreed = [](const Matrix& v) {
    for (Eigen::Index i = 1; i < v.rows(); ++i)
      if (v.row(i) != v.row(0)) return false;
    return true;
  };
  run.agreement_rounds = agreed(vals) ? 0 : -1;
  for (long long k = 0; k < rounds; ++k) {
    vals = min_agreement_round(vals, graphs.at(t0 + k));
    if (run.agreement_rounds < 0 && agreed(vals)) run.agreement_rounds = k + 1;
  }
  run.rounds_total = t0 - 1 + rounds;
  if (run.agreement_rounds < 0)
    throw RuntimeFailure("dual bound protocol: min-agreement incomplete after (N-1)B rounds");

  // N max_j y^j >= sum_j y^j(0) because consensus keeps the mean.
  run.y_hat = -static_cast<double>(n) * vals.leftCols(m);
  run.gamma_lower.resize(n);
  run.r_agents.resize(n);
  for (int i = 0; i < n; ++i) {
    const double g = opt.gamma_safety * (-run.y_hat.row(i)).minCoeff();
    if (!(g > 0.0)) throw RuntimeFailure("protocol produced non-positive gamma");
    run.gamma_lower(i) = g;
    const double fmax = -vals(i, m);
    const double qmin = vals(i, m + 1);
    run.r_agents(i) = static_cast<double>(n) * (fmax - qmin) / g;
  }
  run.gamma = run.gamma_lower(0);
  run.r = run.r_agents(0);
  return run;
}

}  // namespace saddlenet
