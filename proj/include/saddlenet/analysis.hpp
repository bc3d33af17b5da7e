#pragma once

// Constants of the convergence envelope and run-time checks of the
// disagreement and cumulative-error bounds.

#include <saddlenet/common.hpp>
#include <saddlenet/copt.hpp>
#include <saddlenet/dynamics.hpp>
#include <saddlenet/graph.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace saddlenet {

/// 1 - delta_tilde / (4 N^2), the per-window contraction factor of the
/// disagreement dynamics.
inline double contraction_rate(double delta_tilde, int n) {
  require(delta_tilde > 0.0 && delta_tilde < 1.0, "delta_tilde must lie in (0,1)");
  require(n >= 2, "need at least two agents");
  return 1.0 - delta_tilde / (4.0 * n * n);
}

/// ISS gain (32/9) / (1 - rho^(1/B)).
inline double c_u(double delta_tilde, int n, int window) {
  require(window >= 1, "window B must be >= 1");
  contraction_rate(delta_tilde, n);
  // 1 - rho^(1/B) without cancellation
  const double denom = -std::expm1(std::log1p(-delta_tilde / (4.0 * n * n)) / window);
  return (32.0 / 9.0) / denom;
}

struct NetworkConstants {
  double sigma = 0.0;
  double lambda_bar = 0.0;
  double delta_tilde = 0.0;
  int agents = 2;
  int window = 1;
};

/// Network constants for a sequence: delta_tilde from the stepsize window
/// built with the sequence's min weight and weighted max out-degree.
inline NetworkConstants network_constants(const DigraphSequence& graphs, double sigma,
                                          double delta_tilde_prime = 0.84) {
  const auto w = consensus_stepsize_interval(graphs.min_weight(), graphs.d_max(), delta_tilde_prime);
  return {sigma, graphs.lambda_bar(), w.delta_tilde, graphs.agents(), graphs.window()};
}

struct BoundConstants {
  double B_w = 0, B_D = 0, B_mu = 0, B_z = 0;
  double H_w = 0, H_D = 0, H_mu = 0, H_z = 0;
  NetworkConstants net;

  double rho() const { return contraction_rate(net.delta_tilde, net.agents); }
  double gain() const { return c_u(net.delta_tilde, net.agents, net.window); }
};

struct Envelope {
  double C_wD = 0, Cbar_wD = 0;
  double C_muz = 0, Cbar_muz = 0;
  double total() const { return Cbar_wD + Cbar_muz; }
};

inline Envelope cdoubling(const BoundConstants& k) {
  const double cu = k.gain();
  const double mix = 3.0 + k.net.sigma * k.net.lambda_bar;
  const double factor = std::sqrt(2.0) / (std::sqrt(2.0) - 1.0);
  auto one = [&](double Bn, double Ba, double Hn, double Ha) {
    return 4.0 * (Bn * Bn + Ba * Ba) + 6.0 * (Hn * Hn + Ha * Ha) + Ha * mix * cu * (Ba + 2.0 * Ha);
  };
  Envelope e;
  e.C_wD = one(k.B_w, k.B_D, k.H_w, k.H_D);
  e.C_muz = one(k.B_mu, k.B_z, k.H_mu, k.H_z);
  e.Cbar_wD = factor * e.C_wD;
  e.Cbar_muz = factor * e.C_muz;
  return e;
}

/// (Cbar_wD + Cbar_muz) / (2 sqrt(t - 1)): envelope on |phi(av) - phi*|
/// where av is the mean of the first t - 1 iterates.
inline double theorem_bound(long long t, const Envelope& e) {
  require(t >= 2, "theorem bound needs t >= 2");
  return e.total() / (2.0 * std::sqrt(static_cast<double>(t - 1)));
}

inline double theorem_bound(long long t, const BoundConstants& k) { return theorem_bound(t, cdoubling(k)); }

/// Lipschitz-type bounds on the local oracles.
struct SubgradientBounds {
  double f_w = 0.0;  // sup ||df^i/dw^i||
  double f_D = 0.0;  // sup ||df^i/dD||
  double g_w = 0.0;  // sup ||dg^i_l/dw^i|| over l
  double g_D = 0.0;  // sup ||dg^i_l/dD|| over l
};

namespace detail {

/// sup over the set of ||g^i||, bounded by sqrt(sum_l max(sup g_l, -inf g_l)^2).
/// Convex g_l attain their sup at a vertex of a box; the inf comes from the
/// inner solver.
inline double constraint_sup_norm(const AgentFunctions& a, const SeparableProblem& sep) {
  if (a.constraint_sup_norm) return a.constraint_sup_norm();
  const sets::Box* wb = a.set.as_box();
  const sets::Box* db = sep.d > 0 ? sep.global_set.as_box() : nullptr;
  require(wb != nullptr && (sep.d == 0 || db != nullptr),
          "constraint norm bound needs box sets or a closed form");
  const int nw = a.dim, nd = sep.d, nv = nw + nd;
  require(nv <= 20, "too many box vertices to enumerate");
  Vector lo(nv), hi(nv);
  lo << wb->lower, (db ? db->lower : Vector(0));
  hi << wb->upper, (db ? db->upper : Vector(0));

  Vector sup = Vector::Constant(sep.m, -std::numeric_limits<double>::infinity());
  for (unsigned long mask = 0; mask < (1UL << nv); ++mask) {
    Vector v(nv);
    for (int k = 0; k < nv; ++k) v(k) = (mask >> k) & 1UL ? hi(k) : lo(k);
    sup = sup.cwiseMax(a.g(v.head(nw), v.tail(nd)));
  }
  const ConvexSet joint = ConvexSet::box(lo, hi);
  double sq = 0.0;
  for (int l = 0; l < sep.m; ++l) {
    auto fn = [&](const Vector& v) { return a.g(v.head(nw), v.tail(nd))(l); };
    auto sg = [&](const Vector& v) -> Vector {
      Vector out(nv);
      out.head(nw) = a.g_jac_w(v.head(nw), v.tail(nd)).row(l).transpose();
      if (nd > 0) out.tail(nd) = a.g_jac_D(v.head(nw), v.tail(nd)).row(l).transpose();
      return out;
    };
    const double inf = minimize_over(joint, fn, sg).value;
    const double mag = std::max(std::abs(sup(l)), std::abs(inf));
    sq += mag * mag;
  }
  return std::sqrt(sq);
}

}  // namespace detail

/// Constants for the Lagrangian of a separable problem with dual radius r.
inline BoundConstants corollary_constants(const SeparableProblem& sep, double r, const NetworkConstants& net,
                                          const SubgradientBounds& h) {
  sep.validate();
  require(r > 0.0, "dual radius r must be positive");
  require(h.f_w >= 0 && h.f_D >= 0 && h.g_w >= 0 && h.g_D >= 0, "subgradient bounds must be nonnegative");
  const int n = sep.size();
  BoundConstants k;
  k.net = net;
  double bw2 = 0.0;
  for (const auto& a : sep.agents) {
    const double dm = a.set.diameter();
    if (!std::isfinite(dm)) throw ValidationError("unbounded local set: corollary constants need compact sets");
    bw2 += dm * dm;
  }
  k.B_w = std::sqrt(bw2);
  if (sep.d > 0) {
    const double dm = sep.global_set.diameter();
    if (!std::isfinite(dm)) throw ValidationError("unbounded global set: corollary constants need compact sets");
    k.B_D = std::sqrt(static_cast<double>(n)) * dm;
    k.H_D = std::sqrt(n * std::pow(h.f_D + r * std::sqrt(static_cast<double>(sep.m)) * h.g_D, 2));
  }
  k.B_mu = k.H_mu = 0.0;
  k.B_z = std::sqrt(static_cast<double>(n)) * r;
  k.H_w = std::sqrt(n * std::pow(h.f_w + r * std::sqrt(static_cast<double>(sep.m)) * h.g_w, 2));
  double hz2 = 0.0;
  for (const auto& a : sep.agents) {
    const double s = detail::constraint_sup_norm(a, sep);
    hz2 += s * s;
  }
  k.H_z = std::sqrt(hz2);
  return k;
}

/// Constants read off a run: largest observed iterate and subgradient norms.
inline BoundConstants observed_constants(const RunTrace& trace, const NetworkConstants& net) {
  BoundConstants k;
  k.net = net;
  const auto& o = trace.observed;
  k.B_w = o.iterate[0];
  k.B_D = o.iterate[1];
  k.B_mu = o.iterate[2];
  k.B_z = o.iterate[3];
  k.H_w = o.subgradient[0];
  k.H_D = o.subgradient[1];
  k.H_mu = o.subgradient[2];
  k.H_z = o.subgradient[3];
  return k;
}

// ---------------------------------------------------------------------------
// Run-time checks. All of them report; none aborts.

/// Partial sums of ||L_K D_t|| and ||L_K z_t|| at the recorded steps.
struct CumulativeSeries {
  std::vector<long long> t;
  std::vector<double> D;
  std::vector<double> z;
};

inline CumulativeSeries cumulative_disagreement(const RunTrace& trace) {
  CumulativeSeries s;
  for (const auto& r : trace.records) {
    s.t.push_back(r.t);
    s.D.push_back(r.cum_disagreement_D);
    s.z.push_back(r.cum_disagreement_z);
  }
  return s;
}

struct BoundCheck {
  bool ok = true;
  long long checked = 0;
  long long first_violation = -1;
  double min_slack = std::numeric_limits<double>::infinity();  // bound / measured

  void add(long long t, double measured, double bound) {
    ++checked;
    if (measured > 0.0) min_slack = std::min(min_slack, bound / measured);
    if (!(measured <= bound)) {
      if (ok) first_violation = t;
      ok = false;
    }
  }
};

struct IssReport {
  BoundCheck pointwise_D, cumulative_D, pointwise_z, cumulative_z;
  bool ok() const { return pointwise_D.ok && cumulative_D.ok && pointwise_z.ok && cumulative_z.ok; }
};

/// Pointwise and cumulative disagreement bounds at every recorded step,
/// with inputs u_s = eta_s g_s for the D and z blocks.
inline IssReport check_iss_bounds(const RunTrace& trace, const NetworkConstants& net) {
  require(trace.agents >= 2, "disagreement bounds need at least two agents");
  const double rho = contraction_rate(net.delta_tilde, net.agents);
  const double cu = c_u(net.delta_tilde, net.agents, net.window);
  IssReport rep;
  for (const auto& r : trace.records) {
    const double expo = std::ceil(static_cast<double>(r.t - 1) / net.window);
    const double transient = std::pow(rho, expo) * 16.0 / 9.0;
    if (trace.d_dim > 0) {
      rep.pointwise_D.add(r.t, r.disagreement_D, transient * trace.norm_D1 + cu * r.max_input_D);
      rep.cumulative_D.add(r.t, r.cum_disagreement_D, cu * (trace.norm_D1 / 2.0 + r.cum_input_D));
    }
    if (trace.z_dim > 0) {
      rep.pointwise_z.add(r.t, r.disagreement_z, transient * trace.norm_z1 + cu * r.max_input_z);
      rep.cumulative_z.add(r.t, r.cum_disagreement_z, cu * (trace.norm_z1 / 2.0 + r.cum_input_z));
    }
  }
  return rep;
}

/// |phi(av_t) - phi*| against the envelope at every record. A record at t
/// holds the mean of x_1..x_t, which the envelope indexes as t + 1.
inline BoundCheck check_theorem_dominance(const RunTrace& trace, const Envelope& env) {
  BoundCheck c;
  for (const auto& r : trace.records) {
    require(!std::isnan(r.saddle_gap), "trace has no saddle gap (run without a reference value)");
    c.add(r.t, r.saddle_gap, theorem_bound(r.t + 1, env));
  }
  return c;
}

// Cumulative evaluation error ----------------------------------------------

enum class Side { Convex, Concave };

/// u(t, a_p, b_p) for the (w, D) side or the (mu, z) side, evaluated from a
/// stored history x_1..x_t.
inline double cumulative_error_bound(const History& h, const SaddleDims& dims, Side side, const Vector& a_p,
                                     const Vector& b_p, long long t, double sigma, double lambda_bar) {
  require(t >= 1 && t <= static_cast<long long>(h.iterates.size()), "t outside the stored history");
  const int n = dims.agents;
  const int d = side == Side::Convex ? dims.d : dims.z;
  const int ia = side == Side::Convex ? 0 : 2;
  const int ib = side == Side::Convex ? 1 : 3;
  auto block_a = [&](const Iterate& x) -> const Vector& { return side == Side::Convex ? x.w : x.mu; };
  auto block_b = [&](const Iterate& x) -> const Vector& { return side == Side::Convex ? x.D : x.z; };

  double u = 0.0;
  for (long long s = 2; s <= t; ++s) {
    const auto& x = h.iterates[s - 1];
    const Vector mean_b = stack_copies(block_mean(block_b(x), n, d), n);
    const double diff = 1.0 / h.etas[s - 1] - 1.0 / h.etas[s - 2];
    u += ((block_a(x) - a_p).squaredNorm() + (mean_b - b_p).squaredNorm()) * diff;
  }
  const auto& x1 = h.iterates[0];
  u += (2.0 / h.etas[0]) *
       (block_a(x1).squaredNorm() + a_p.squaredNorm() + block_b(x1).squaredNorm() + b_p.squaredNorm());
  double sq = 0.0, cross = 0.0, sum_gb = 0.0;
  for (long long s = 1; s <= t; ++s) {
    const auto& gn = h.grad_norms[s - 1];
    sq += h.etas[s - 1] * (gn[ia] * gn[ia] + gn[ib] * gn[ib]);
    cross += gn[ib] * disagreement(block_b(h.iterates[s - 1]), n, d);
    sum_gb += gn[ib];
  }
  u += 6.0 * sq + 2.0 * (2.0 + sigma * lambda_bar) * cross + 2.0 * disagreement(b_p, n, d) * sum_gb;
  return u;
}

struct IterateErrorRow {
  long long t = 0;
  double upper_lhs = 0, upper_bound = 0;  // sum phi(x_s) - t phi(w_p, D_p, mu_av, z_av) <= u/2
  double lower_lhs = 0, lower_bound = 0;  // sum phi(x_s) - t phi(w_av, D_av, mu_p, z_p) >= -u/2
  bool ok() const { return upper_lhs <= upper_bound && lower_lhs >= lower_bound; }
};

struct IterateErrorReport {
  std::vector<IterateErrorRow> rows;
  bool ok() const {
    for (const auto& r : rows)
      if (!r.ok()) return false;
    return true;
  }
};

/// Cumulative-error inequalities at the requested t, for a fixed feasible
/// probe or, when none is given, the running averages at each t.
inline IterateErrorReport check_iterate_error_bounds(const RunTrace& trace, const SaddleProblem& problem,
                                   const std::optional<Iterate>& probe, const std::vector<long long>& ts,
                                   double tol = 1e-9) {
  require(trace.history.has_value(), "cumulative-error check needs a run with keep_history");
  const auto& h = *trace.history;
  if (probe) {
    problem.check_shape(*probe);
    require(problem.infeasibility(*probe) <= tol, "probe point is infeasible");
  }
  IterateErrorReport rep;
  std::vector<long long> sorted = ts;
  std::sort(sorted.begin(), sorted.end());
  double sum_phi = 0.0;
  Iterate avg;
  long long s = 0;
  for (long long t : sorted) {
    require(t >= 1 && t <= static_cast<long long>(h.iterates.size()), "t outside the stored history");
    while (s < t) {
      ++s;
      const auto& x = h.iterates[s - 1];
      sum_phi += problem.value(x);
      avg = update_running_average(avg, x, s);
    }
    const Iterate p = probe ? *probe : avg;
    const double td = static_cast<double>(t);
    IterateErrorRow row;
    row.t = t;
    row.upper_lhs = sum_phi - td * problem.value({p.w, p.D, avg.mu, avg.z});
    row.upper_bound =
        cumulative_error_bound(h, problem.dims, Side::Convex, p.w, p.D, t, trace.sigma, trace.lambda_bar) / 2.0;
    row.lower_lhs = sum_phi - td * problem.value({avg.w, avg.D, p.mu, p.z});
    row.lower_bound =
        -cumulative_error_bound(h, problem.dims, Side::Concave, p.mu, p.z, t, trace.sigma, trace.lambda_bar) / 2.0;
    rep.rows.push_back(row);
  }
  return rep;
}

struct SaddleRelationRow {
  long long t = 0;
  double lower = 0, value = 0, upper = 0;  // -u(mu*, z*)/2 <= sum phi(x_s) - t phi* <= u(w*, D*)/2
  bool ok() const { return lower <= value && value <= upper; }
};

/// Bracket of sum_s phi(x_s) - t phi(x*) for a saddle point x*.
inline std::vector<SaddleRelationRow> check_saddle_relation(const RunTrace& trace, const SaddleProblem& problem,
                                                            const Iterate& saddle,
                                                            const std::vector<long long>& ts) {
  require(trace.history.has_value(), "saddle relation check needs a run with keep_history");
  problem.check_shape(saddle);
  const auto& h = *trace.history;
  const double phi_star = problem.value(saddle);
  std::vector<long long> sorted = ts;
  std::sort(sorted.begin(), sorted.end());
  std::vector<SaddleRelationRow> out;
  double sum_phi = 0.0;
  long long s = 0;
  for (long long t : sorted) {
    require(t >= 1 && t <= static_cast<long long>(h.iterates.size()), "t outside the stored history");
    while (s < t) sum_phi += problem.value(h.iterates[s++]);
    SaddleRelationRow row;
    row.t = t;
    row.value = sum_phi - static_cast<double>(t) * phi_star;
    row.upper = cumulative_error_bound(h, problem.dims, Side::Convex, saddle.w, saddle.D, t, trace.sigma,
                                       trace.lambda_bar) / 2.0;
    row.lower = -cumulative_error_bound(h, problem.dims, Side::Concave, saddle.mu, saddle.z, t, trace.sigma,
                                        trace.lambda_bar) / 2.0;
    out.push_back(row);
  }
  return out;
}

}  // namespace saddlenet
