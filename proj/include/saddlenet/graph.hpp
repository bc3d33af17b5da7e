#pragma once

// Weighted digraphs, time-varying sequences of them, and the connectivity
// and degree quantities that parametrize Laplacian averaging.

#include <saddlenet/common.hpp>

#include <algorithm>
#include <numeric>
#include <random>
#include <span>
#include <tuple>
#include <utility>
#include <vector>

namespace saddlenet {

struct Edge {
  int from;  // agent i, the one applying the weight
  int to;    // agent j, whose state flows into i
  double weight;
};

/// Digraph on agents 0..n-1. Entry (i, j) of the adjacency is the weight
/// agent i assigns to the state of agent j; a positive entry means (i, j)
/// is an edge and j is an out-neighbor of i.
class WeightedDigraph {
 public:
  WeightedDigraph() = default;

  explicit WeightedDigraph(Matrix adjacency) : adjacency_(std::move(adjacency)) {
    require(adjacency_.rows() > 0 && adjacency_.rows() == adjacency_.cols(),
            "adjacency must be a nonempty square matrix");
    require(adjacency_.allFinite(), "adjacency has non-finite entries");
    require((adjacency_.array() >= 0.0).all(), "adjacency entries must be nonnegative");
    require(adjacency_.diagonal().isZero(0.0), "adjacency diagonal must be zero");
  }

  static WeightedDigraph from_edges(int n, std::span<const Edge> edges) {
    require(n > 0, "graph needs at least one agent");
    Matrix a = Matrix::Zero(n, n);
    for (const auto& e : edges) {
      require(e.from >= 0 && e.from < n && e.to >= 0 && e.to < n, "edge index out of range");
      require(e.from != e.to, "self loops are not allowed");
      require(e.weight >= 0.0, "edge weight must be nonnegative");
      a(e.from, e.to) += e.weight;
    }
    return WeightedDigraph(std::move(a));
  }

  /// Undirected edge {i, j} with the same weight in both directions.
  static WeightedDigraph from_undirected(int n, std::span<const Edge> edges) {
    std::vector<Edge> both;
    both.reserve(2 * edges.size());
    for (const auto& e : edges) {
      both.push_back(e);
      both.push_back({e.to, e.from, e.weight});
    }
    return from_edges(n, both);
  }

  int size() const { return static_cast<int>(adjacency_.rows()); }
  const Matrix& adjacency() const { return adjacency_; }

  double out_degree(int i) const { return adjacency_.row(i).sum(); }
  double in_degree(int i) const { return adjacency_.col(i).sum(); }

  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    for (int i = 0; i < size(); ++i)
      for (int j = 0; j < size(); ++j)
        if (adjacency_(i, j) > 0.0) out.push_back({i, j, adjacency_(i, j)});
    return out;
  }

  bool has_edges() const { return (adjacency_.array() > 0.0).any(); }

 private:
  Matrix adjacency_;
};

/// L = diag(A 1) - A. Rows sum to zero by construction.
inline Matrix laplacian(const WeightedDigraph& g) {
  const Matrix& a = g.adjacency();
  Matrix l = -a;
  for (int i = 0; i < g.size(); ++i) {
    // Summing the off-diagonal row entries of -A keeps L 1 = 0 bit-exact.
    double s = 0.0;
    for (int j = 0; j < g.size(); ++j) s += a(i, j);
    l(i, i) = s;
  }
  return l;
}

/// Out-degree equals in-degree at every node (1^T L = 0).
inline bool is_weight_balanced(const WeightedDigraph& g, double tol = 1e-12) {
  for (int i = 0; i < g.size(); ++i)
    if (std::abs(g.out_degree(i) - g.in_degree(i)) > tol) return false;
  return true;
}

namespace detail {

inline std::vector<bool> reachable_from(const Matrix& a, int root, bool reverse) {
  const int n = static_cast<int>(a.rows());
  std::vector<bool> seen(n, false);
  std::vector<int> stack{root};
  seen[root] = true;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    for (int v = 0; v < n; ++v) {
      const double w = reverse ? a(v, u) : a(u, v);
      if (w > 0.0 && !seen[v]) {
        seen[v] = true;
        stack.push_back(v);
      }
    }
  }
  return seen;
}

}  // namespace detail

inline bool is_strongly_connected(const WeightedDigraph& g) {
  if (g.size() == 1) return true;
  const auto fwd = detail::reachable_from(g.adjacency(), 0, false);
  const auto bwd = detail::reachable_from(g.adjacency(), 0, true);
  return std::all_of(fwd.begin(), fwd.end(), [](bool b) { return b; }) &&
         std::all_of(bwd.begin(), bwd.end(), [](bool b) { return b; });
}

/// Union of digraphs on a common vertex set: adjacency matrices add.
inline WeightedDigraph graph_union(std::span<const WeightedDigraph> graphs) {
  require(!graphs.empty(), "union of an empty list");
  Matrix a = graphs.front().adjacency();
  for (std::size_t k = 1; k < graphs.size(); ++k) {
    require(graphs[k].size() == graphs.front().size(), "graphs differ in agent count");
    a += graphs[k].adjacency();
  }
  return WeightedDigraph(std::move(a));
}

/// Graph active at time t >= 1 when `graphs` is repeated periodically.
inline const WeightedDigraph& periodic_at(std::span<const WeightedDigraph> graphs, long long t) {
  const auto p = static_cast<long long>(graphs.size());
  return graphs[static_cast<std::size_t>((t - 1) % p)];
}

/// True iff every block G_{kB} u ... u G_{(k+1)B-1}, k >= 1, of the periodic
/// extension of `graphs` is strongly connected. One full period of block
/// phases is examined.
inline bool check_joint_connectivity(std::span<const WeightedDigraph> graphs, int B) {
  require(B >= 1, "joint connectivity window B must be positive");
  require(!graphs.empty(), "graph sequence is empty");
  const long long p = static_cast<long long>(graphs.size());
  const long long blocks = std::lcm(p, static_cast<long long>(B)) / B;
  std::vector<WeightedDigraph> window;
  for (long long k = 1; k <= blocks; ++k) {
    window.clear();
    for (long long t = k * B; t < (k + 1) * B; ++t) window.push_back(periodic_at(graphs, t));
    if (!is_strongly_connected(graph_union(window))) return false;
  }
  return true;
}

/// Smallest positive weight in the sequence. A nondegeneracy constant must be
/// chosen strictly below this value.
inline double nondegeneracy_delta(std::span<const WeightedDigraph> graphs) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& g : graphs)
    for (double w : g.adjacency().reshaped())
      if (w > 0.0) best = std::min(best, w);
  if (!std::isfinite(best)) throw ValidationError("no edges");
  return best;
}

/// Largest weighted out-degree over all graphs and agents.
inline double max_out_degree(std::span<const WeightedDigraph> graphs) {
  double best = 0.0;
  bool any = false;
  for (const auto& g : graphs) {
    any = any || g.has_edges();
    best = std::max(best, g.adjacency().rowwise().sum().maxCoeff());
  }
  if (!any) throw ValidationError("no edges");
  return best;
}

/// Largest singular value of m by power iteration on m^T m. Iterates until
/// the eigen-residual of m^T m drops below rel_tol times the estimate.
inline double sigma_max(const Matrix& m, double rel_tol = 1e-10, int max_iter = 1'000'000) {
  const Matrix g = m.transpose() * m;
  const int n = static_cast<int>(g.rows());
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = 1.0 + std::sin(1.0 + 1.7 * i);
  if (v.norm() == 0.0) v.setOnes();
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Vector gv = g * v;
    lambda = v.dot(gv);
    const double nrm = gv.norm();
    if (nrm == 0.0) return 0.0;
    if ((gv - lambda * v).norm() <= rel_tol * std::abs(lambda)) break;
    v = gv / nrm;
  }
  return std::sqrt(std::max(lambda, 0.0));
}

/// Upper bound on sigma_max(L_t) over the sequence (power-method estimate
/// inflated by a relative 1e-9 so it dominates the true value).
inline double sigma_max_bound(std::span<const WeightedDigraph> graphs) {
  double best = 0.0;
  bool any = false;
  for (const auto& g : graphs) {
    any = any || g.has_edges();
    best = std::max(best, sigma_max(laplacian(g)));
  }
  if (!any) throw ValidationError("no edges");
  return best * (1.0 + 1e-9);
}

struct StepsizeWindow {
  double delta_tilde;
  double lo;
  double hi;
  bool contains(double sigma) const { return sigma >= lo && sigma <= hi; }
};

/// Admissible consensus stepsizes [delta~/delta, (1-delta~)/d_max] with
/// delta~ = min{delta~', (1-delta~') delta/d_max}.
inline StepsizeWindow consensus_stepsize_interval(double delta, double d_max,
                                                  double delta_tilde_prime) {
  require(delta > 0.0 && delta <= d_max, "need 0 < delta <= d_max");
  require(delta_tilde_prime > 0.0 && delta_tilde_prime < 1.0, "delta_tilde_prime must lie in (0,1)");
  const double dt = std::min(delta_tilde_prime, (1.0 - delta_tilde_prime) * delta / d_max);
  StepsizeWindow w{dt, dt / delta, (1.0 - dt) / d_max};
  if (w.lo > w.hi) throw ValidationError("infeasible stepsize window");
  return w;
}

/// Connected small-world graph: ring lattice with k/2 neighbors per side,
/// then each lattice edge is, with probability p, rewired by a
/// degree-preserving double-edge swap. The result is k-regular, so with
/// weights 1/k it is weight-balanced with unit weighted degree. Draws are
/// repeated until the graph is connected.
inline WeightedDigraph watts_strogatz(int n, int k, double p, std::uint64_t seed) {
  require(k >= 2 && k % 2 == 0, "k must be an even integer >= 2");
  require(n > k, "need n > k");
  require(p >= 0.0 && p <= 1.0, "rewiring probability must lie in [0,1]");
  std::mt19937_64 gen(seed);

  for (int attempt = 0; attempt < 10'000; ++attempt) {
    std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < n; ++i)
      for (int j = 1; j <= k / 2; ++j) {
        const int v = (i + j) % n;
        adj[i][v] = adj[v][i] = true;
        edges.emplace_back(i, v);
      }
    const std::vector<std::pair<int, int>> lattice = edges;
    for (const auto& [a, b] : lattice) {
      if (uniform01(gen) >= p) continue;
      if (!adj[a][b]) continue;  // already swapped away
      auto self = std::find(edges.begin(), edges.end(), std::make_pair(a, b));
      if (self == edges.end()) self = std::find(edges.begin(), edges.end(), std::make_pair(b, a));
      if (self == edges.end()) continue;
      for (int tries = 0; tries < 16; ++tries) {
        const std::size_t idx = uniform_index(gen, edges.size());
        auto [c, d] = edges[idx];
        if (uniform01(gen) < 0.5) std::swap(c, d);
        // (a,b),(c,d) -> (a,d),(c,b)
        if (a == d || c == b || a == c || b == d) continue;
        if (adj[a][d] || adj[c][b]) continue;
        adj[a][b] = adj[b][a] = false;
        adj[c][d] = adj[d][c] = false;
        adj[a][d] = adj[d][a] = true;
        adj[c][b] = adj[b][c] = true;
        *self = {a, d};
        edges[idx] = {c, b};
        break;
      }
    }
    int max_deg = 0;
    for (int i = 0; i < n; ++i)
      max_deg = std::max(max_deg, static_cast<int>(std::count(adj[i].begin(), adj[i].end(), true)));
    Matrix a = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (adj[i][j]) a(i, j) = 1.0 / max_deg;
    WeightedDigraph g(std::move(a));
    if (is_strongly_connected(g)) return g;
  }
  throw RuntimeFailure("watts_strogatz: could not draw a connected graph");
}

/// Time-varying digraphs G_1, G_2, ... given by a finite list repeated
/// periodically, with its joint-connectivity window and the derived
/// constants used by the convergence analysis.
class DigraphSequence {
 public:
  DigraphSequence(std::vector<WeightedDigraph> graphs, int B) : graphs_(std::move(graphs)), B_(B) {
    require(!graphs_.empty(), "graph sequence is empty");
    require(B >= 1, "joint connectivity window B must be positive");
    for (const auto& g : graphs_)
      require(g.size() == graphs_.front().size(), "graphs differ in agent count");
    if (!check_joint_connectivity(graphs_, B_))
      throw ValidationError("graph sequence is not B-jointly connected");
    // A single agent has nothing to agree with; the degree data stays 0.
    if (agents() > 1) {
      min_weight_ = nondegeneracy_delta(graphs_);
      d_max_ = max_out_degree(graphs_);
      lambda_bar_ = sigma_max_bound(graphs_);
    }
    laplacians_.reserve(graphs_.size());
    for (const auto& g : graphs_) laplacians_.push_back(laplacian(g));
  }

  static DigraphSequence fixed(WeightedDigraph g) { return DigraphSequence({std::move(g)}, 1); }

  int agents() const { return graphs_.front().size(); }
  int window() const { return B_; }
  std::size_t period() const { return graphs_.size(); }
  const std::vector<WeightedDigraph>& graphs() const { return graphs_; }

  /// Smallest positive weight; any nondegeneracy constant lies strictly below.
  double min_weight() const { return min_weight_; }
  double d_max() const { return d_max_; }
  double lambda_bar() const { return lambda_bar_; }

  const WeightedDigraph& at(long long t) const { return periodic_at(graphs_, t); }
  const Matrix& laplacian_at(long long t) const {
    return laplacians_[static_cast<std::size_t>((t - 1) % static_cast<long long>(graphs_.size()))];
  }

  bool weight_balanced(double tol = 1e-12) const {
    return std::all_of(graphs_.begin(), graphs_.end(),
                       [tol](const WeightedDigraph& g) { return is_weight_balanced(g, tol); });
  }

 private:
  std::vector<WeightedDigraph> graphs_;
  int B_;
  double min_weight_ = 0.0;
  double d_max_ = 0.0;
  double lambda_bar_ = 0.0;
  std::vector<Matrix> laplacians_;
};

}  // namespace saddlenet
