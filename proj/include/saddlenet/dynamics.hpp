#pragma once

// Projected saddle-point subgradient dynamics with Laplacian averaging:
//
//   w+ = P_W (w - eta g_w)
//   D+ = P_D^N (D - sigma (L_t x I) D - eta g_D)
//   mu+ = P_M (mu + eta g_mu)
//   z+ = P_Z^N (z - sigma (L_t x I) z + eta g_z)
//
// with all subgradients taken at the pre-step state.

#include <saddlenet/common.hpp>
#include <saddlenet/graph.hpp>
#include <saddlenet/projection.hpp>
#include <saddlenet/schedule.hpp>

#include <array>
#include <functional>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace saddlenet {

// ---------------------------------------------------------------------------
// Stacked network vectors: N agent blocks of size d, agent i at [i*d, (i+1)*d).

/// (L x I_d) X for a stacked vector X.
inline Vector apply_laplacian(const Matrix& L, const Vector& stacked, int d) {
  const auto n = L.rows();
  require(stacked.size() == n * d, "stacked vector does not match N*d");
  if (d == 0) return Vector(0);
  Eigen::Map<const Matrix> xm(stacked.data(), d, n);
  Matrix out = xm * L.transpose();
  return Eigen::Map<const Vector>(out.data(), out.size());
}

/// Average of the N blocks, as a d-vector.
inline Vector block_mean(const Vector& stacked, int n, int d) {
  require(n > 0 && stacked.size() == static_cast<Eigen::Index>(n) * d, "stacked vector does not match N*d");
  if (d == 0) return Vector(0);
  Eigen::Map<const Matrix> xm(stacked.data(), d, n);
  return xm.rowwise().mean();
}

/// N copies of a d-vector.
inline Vector stack_copies(const Vector& v, int n) { return v.replicate(n, 1); }

/// ||(L_K x I_d) X|| = ||X - 1 x mean(X)||, L_K = I - 11^T/N.
inline double disagreement(const Vector& stacked, int n, int d) {
  if (d == 0) return 0.0;
  const Vector m = block_mean(stacked, n, d);
  Eigen::Map<const Matrix> xm(stacked.data(), d, n);
  return (xm.colwise() - m).norm();
}

// ---------------------------------------------------------------------------

struct SaddleDims {
  int agents = 1;  // N
  int w = 0;       // total dimension of the local primal block
  int d = 0;       // per-agent dimension of the convex agreement variable D^i
  int mu = 0;      // dimension of the concave non-agreement block
  int z = 0;       // per-agent dimension of the concave agreement variable z^i
};

/// One point (w, D, mu, z); D and z are stacked over agents.
struct Iterate {
  Vector w;
  Vector D;
  Vector mu;
  Vector z;

  static Iterate zeros(const SaddleDims& dims) {
    return {Vector::Zero(dims.w), Vector::Zero(dims.agents * dims.d), Vector::Zero(dims.mu),
            Vector::Zero(dims.agents * dims.z)};
  }
};

using Subgradients = Iterate;

/// phi(w, D, mu, z), convex in (w, D) and concave in (mu, z), with one
/// subgradient oracle per block and the constraint sets W, D (one copy),
/// M and Z (one copy).
struct SaddleProblem {
  SaddleDims dims;
  std::function<double(const Iterate&)> value;
  std::function<Vector(const Iterate&)> grad_w;
  std::function<Vector(const Iterate&)> grad_D;
  std::function<Vector(const Iterate&)> grad_mu;
  std::function<Vector(const Iterate&)> grad_z;
  ConvexSet w_set = ConvexSet::full(0);
  ConvexSet d_set = ConvexSet::full(0);
  ConvexSet mu_set = ConvexSet::full(0);
  ConvexSet z_set = ConvexSet::full(0);

  void validate() const {
    require(dims.agents >= 1, "need at least one agent");
    require(dims.w >= 0 && dims.d >= 0 && dims.mu >= 0 && dims.z >= 0, "negative block dimension");
    require(static_cast<bool>(value), "value oracle missing");
    require(w_set.dim() == dims.w, "W set dimension mismatch");
    require(d_set.dim() == dims.d, "D set dimension mismatch");
    require(mu_set.dim() == dims.mu, "M set dimension mismatch");
    require(z_set.dim() == dims.z, "Z set dimension mismatch");
  }

  void check_shape(const Iterate& x) const {
    require(x.w.size() == dims.w && x.D.size() == dims.agents * dims.d && x.mu.size() == dims.mu &&
                x.z.size() == dims.agents * dims.z,
            "iterate does not match problem dimensions");
  }

  Subgradients subgradients(const Iterate& x) const {
    auto eval = [&x](const std::function<Vector(const Iterate&)>& f, Eigen::Index expect,
                     const char* name) -> Vector {
      if (expect == 0 && !f) return Vector(0);
      require(static_cast<bool>(f), std::string("subgradient oracle missing for block ") + name);
      Vector g = f(x);
      if (g.size() != expect)
        throw ValidationError(std::string("subgradient oracle returned wrong size for block ") + name);
      if (!g.allFinite())
        throw RuntimeFailure(std::string("oracle returned non-finite value (block ") + name + ")");
      return g;
    };
    return {eval(grad_w, dims.w, "w"), eval(grad_D, dims.agents * dims.d, "D"),
            eval(grad_mu, dims.mu, "mu"), eval(grad_z, dims.agents * dims.z, "z")};
  }

  Iterate project(const Iterate& x) const {
    Iterate out;
    out.w = w_set.project(x.w);
    out.D = project_copies(d_set, x.D);
    out.mu = mu_set.project(x.mu);
    out.z = project_copies(z_set, x.z);
    return out;
  }

  /// Largest distance of any block to its set.
  double infeasibility(const Iterate& x) const {
    const Iterate p = project(x);
    return std::max({(p.w - x.w).norm(), (p.D - x.D).norm(), (p.mu - x.mu).norm(), (p.z - x.z).norm()});
  }

 private:
  Vector project_copies(const ConvexSet& s, const Vector& stacked) const {
    const int d = s.dim();
    Vector out(stacked.size());
    for (int i = 0; i < dims.agents; ++i) out.segment(i * d, d) = s.project(stacked.segment(i * d, d));
    return out;
  }
};

/// Current iterate x_t, the running average of x_1..x_t, and t.
struct NetworkState {
  Iterate x;
  Iterate average;
  long long t = 1;

  static NetworkState initial(Iterate x1) {
    NetworkState s{x1, x1, 1};
    return s;
  }
};

/// Mean of x_1..x_t given the mean of x_1..x_{t-1}.
inline Vector update_running_average(const Vector& avg, const Vector& x, long long t) {
  require(t >= 1, "running average index must be >= 1");
  if (t == 1) return x;
  const double td = static_cast<double>(t);
  return ((td - 1.0) / td) * avg + (1.0 / td) * x;
}

inline Iterate update_running_average(const Iterate& avg, const Iterate& x, long long t) {
  return {update_running_average(avg.w, x.w, t), update_running_average(avg.D, x.D, t),
          update_running_average(avg.mu, x.mu, t), update_running_average(avg.z, x.z, t)};
}

/// Pre-projection points and subgradients of one step, for audits.
struct StepInfo {
  Subgradients g;
  Iterate hat;
};

/// One iteration from x_t to x_{t+1}; advances the running average.
inline NetworkState step(const SaddleProblem& problem, const NetworkState& state, const Matrix& L,
                         double sigma, double eta, StepInfo* info = nullptr) {
  require(eta >= 0.0, "learning rate must be nonnegative");
  require(L.rows() == problem.dims.agents && L.cols() == problem.dims.agents, "Laplacian size mismatch");
  const auto& x = state.x;
  const auto& d = problem.dims;
  Subgradients g;
  try {
    g = problem.subgradients(x);
  } catch (const RuntimeFailure& e) {
    throw RuntimeFailure(std::string(e.what()) + " at step " + std::to_string(state.t));
  }

  Iterate hat;
  hat.w = x.w - eta * g.w;
  hat.D = x.D - sigma * apply_laplacian(L, x.D, d.d) - eta * g.D;
  hat.mu = x.mu + eta * g.mu;
  hat.z = x.z - sigma * apply_laplacian(L, x.z, d.z) + eta * g.z;

  NetworkState next;
  next.x = problem.project(hat);
  next.t = state.t + 1;
  next.average = update_running_average(state.average, next.x, next.t);
  if (info != nullptr) *info = {std::move(g), std::move(hat)};
  return next;
}

// ---------------------------------------------------------------------------
// Trace recording

struct TraceRecord {
  static constexpr double nan = std::numeric_limits<double>::quiet_NaN();

  long long t = 0;
  double eta = nan;                // learning rate used from t to t+1
  double phi_at_avg = nan;         // phi at the mean of x_1..x_t
  double saddle_gap = nan;         // |phi_at_avg - reference|
  double disagreement_D = nan;     // ||L_K D_t||
  double disagreement_z = nan;     // ||L_K z_t||
  double cost_err = nan;           // filled by problem-specific probes
  double constraint_violation = nan;
  double cum_disagreement_D = nan; // sum_{s<=t} ||L_K D_s||
  double cum_disagreement_z = nan;
  double max_input_D = nan;        // max_{s<=t-1} eta_s ||g_{D_s}||
  double max_input_z = nan;
  double cum_input_D = nan;        // sum_{s<=t-1} eta_s ||g_{D_s}||
  double cum_input_z = nan;
};

struct Snapshot {
  long long t;
  Iterate x;
  Iterate average;
};

/// Largest block norms seen along a run, for checking the boundedness
/// hypotheses of the convergence bound.
struct ObservedNorms {
  std::array<double, 4> iterate{0, 0, 0, 0};     // w, D, mu, z
  std::array<double, 4> subgradient{0, 0, 0, 0}; // w, D, mu, z
};

/// Full per-step history (only with keep_history).
struct History {
  std::vector<Iterate> iterates;                 // x_1..x_T
  std::vector<std::array<double, 4>> grad_norms; // ||g|| per block at x_1..x_T
  std::vector<double> etas;                      // eta_1..eta_T
};

struct RunTrace {
  int agents = 0;
  int d_dim = 0;
  int z_dim = 0;
  double sigma = 0.0;
  double lambda_bar = 0.0;
  double norm_D1 = 0.0;
  double norm_z1 = 0.0;
  std::vector<TraceRecord> records;
  std::vector<Snapshot> snapshots;
  ObservedNorms observed;
  std::optional<History> history;
  NetworkState final_state;
};

struct RunOptions {
  long long T = 1;
  long long stride = 1;
  bool keep_history = false;
  std::optional<double> reference_value;
  double delta_tilde_prime = 0.84;
  bool allow_sigma_outside_window = false;
  std::function<void(const NetworkState&, TraceRecord&)> probe;
};

namespace detail {
inline bool is_snapshot_time(long long t, long long T) {
  return t == T || (t & (t - 1)) == 0;
}
inline std::array<double, 4> norms(const Iterate& x) {
  return {x.w.norm(), x.D.norm(), x.mu.norm(), x.z.norm()};
}
}  // namespace detail

/// Runs the dynamics for iterates x_1..x_T (T-1 steps) over the periodic
/// graph sequence and records every `stride`-th step (plus t = 1 and t = T).
inline RunTrace run(const SaddleProblem& problem, const DigraphSequence& graphs, double sigma,
                    const Schedule& schedule, const NetworkState& initial, const RunOptions& opt) {
  problem.validate();
  problem.check_shape(initial.x);
  validate(schedule);
  require(opt.T >= 1, "horizon T must be >= 1");
  require(opt.stride >= 1, "trace stride must be >= 1");
  require(graphs.agents() == problem.dims.agents, "graph and problem disagree on agent count");
  require(initial.t == 1, "runs start from t = 1");

  if (graphs.agents() > 1) {
    const auto window = consensus_stepsize_interval(graphs.min_weight(), graphs.d_max(), opt.delta_tilde_prime);
    if (!window.contains(sigma)) {
      const std::string msg = "consensus stepsize " + std::to_string(sigma) + " outside [" +
                              std::to_string(window.lo) + ", " + std::to_string(window.hi) + "]";
      if (!opt.allow_sigma_outside_window) throw ValidationError(msg);
      std::cerr << "warning: " << msg << "\n";
    }
  }

  const auto& dims = problem.dims;
  RunTrace trace;
  trace.agents = dims.agents;
  trace.d_dim = dims.d;
  trace.z_dim = dims.z;
  trace.sigma = sigma;
  trace.lambda_bar = graphs.lambda_bar();
  trace.norm_D1 = initial.x.D.norm();
  trace.norm_z1 = initial.x.z.norm();
  if (opt.keep_history) trace.history.emplace();

  double cum_dis_D = 0.0, cum_dis_z = 0.0;
  double max_u_D = 0.0, max_u_z = 0.0, cum_u_D = 0.0, cum_u_z = 0.0;

  NetworkState state = initial;
  auto observe_iterate = [&trace](const Iterate& x) {
    const auto n = detail::norms(x);
    for (int k = 0; k < 4; ++k) trace.observed.iterate[k] = std::max(trace.observed.iterate[k], n[k]);
  };
  observe_iterate(state.x);

  for (long long t = 1; t <= opt.T; ++t) {
    const double eta = rate(schedule, t);
    const double dis_D = disagreement(state.x.D, dims.agents, dims.d);
    const double dis_z = disagreement(state.x.z, dims.agents, dims.z);
    cum_dis_D += dis_D;
    cum_dis_z += dis_z;

    const bool record = t == 1 || t == opt.T || t % opt.stride == 0;
    if (record) {
      TraceRecord r;
      r.t = t;
      r.eta = eta;
      r.phi_at_avg = problem.value(state.average);
      if (opt.reference_value) r.saddle_gap = std::abs(r.phi_at_avg - *opt.reference_value);
      r.disagreement_D = dis_D;
      r.disagreement_z = dis_z;
      r.cum_disagreement_D = cum_dis_D;
      r.cum_disagreement_z = cum_dis_z;
      r.max_input_D = max_u_D;
      r.max_input_z = max_u_z;
      r.cum_input_D = cum_u_D;
      r.cum_input_z = cum_u_z;
      if (opt.probe) opt.probe(state, r);
      trace.records.push_back(r);
    }
    if (detail::is_snapshot_time(t, opt.T)) trace.snapshots.push_back({t, state.x, state.average});

    if (t == opt.T) {
      if (trace.history) {
        const auto g = problem.subgradients(state.x);
        trace.history->iterates.push_back(state.x);
        trace.history->grad_norms.push_back(detail::norms(g));
        trace.history->etas.push_back(eta);
      }
      break;
    }

    StepInfo info;
    NetworkState next = step(problem, state, graphs.laplacian_at(t), sigma, eta, &info);
    const auto gn = detail::norms(info.g);
    for (int k = 0; k < 4; ++k) trace.observed.subgradient[k] = std::max(trace.observed.subgradient[k], gn[k]);
    max_u_D = std::max(max_u_D, eta * gn[1]);
    max_u_z = std::max(max_u_z, eta * gn[3]);
    cum_u_D += eta * gn[1];
    cum_u_z += eta * gn[3];
    if (trace.history) {
      trace.history->iterates.push_back(state.x);
      trace.history->grad_norms.push_back(gn);
      trace.history->etas.push_back(eta);
    }
    state = std::move(next);
    observe_iterate(state.x);
  }
  trace.final_state = state;
  return trace;
}

}  // namespace saddlenet
