#include "problems.hpp"

#include <saddlenet/benchmark.hpp>
#include <saddlenet/copt.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <numbers>
#include <numeric>
#include <random>

using namespace saddlenet;
using namespace problems;

namespace {

Vector v1(double x) { return Vector::Constant(1, x); }

SeparableProblem single_linear(double lo, double hi) {
  SeparableProblem sep;
  sep.m = 1;
  sep.agents.push_back(linear_agent(1.0, 1.0, -1.0, lo, hi));  // f = w, g = w - 1
  return sep;
}

WeightedDigraph undirected(int n, std::vector<Edge> e) { return WeightedDigraph::from_undirected(n, e); }

/// Exact gamma = min_l -sum_i g^i_l(w~^i).
double exact_gamma(const SeparableProblem& sep, const std::vector<Vector>& slater) {
  Vector total = Vector::Zero(sep.m);
  for (int i = 0; i < sep.size(); ++i) total += sep.agents[i].g(slater[i], Vector(0));
  return (-total).minCoeff();
}

}  // namespace

TEST(Lagrangian, ValueExamples) {
  const auto p = build_lagrangian_saddle(single_linear(0.0, 2.0), 5.0);
  EXPECT_DOUBLE_EQ(p.value({v1(0.5), Vector(0), Vector(0), v1(2.0)}), -0.5);

  std::mt19937_64 gen(1);
  const auto sep = random_separable(4, 2, 2, gen);
  const auto q = build_lagrangian_saddle(sep, 3.0);
  Iterate x = Iterate::zeros(q.dims);
  x.w = rand_vec(q.dims.w, gen);
  x.D = rand_vec(q.dims.agents * q.dims.d, gen);
  double f = 0.0;
  const auto off = sep.offsets();
  for (int i = 0; i < 4; ++i) f += sep.agents[i].f(x.w.segment(off[i], sep.agents[i].dim), x.D.segment(2 * i, 2));
  EXPECT_NEAR(q.value(x), f, 1e-14);
}

TEST(Lagrangian, AgreementEvaluationMatchesCentralLagrangian) {
  std::mt19937_64 gen(2);
  const auto sep = random_separable(3, 2, 2, gen);
  const auto q = build_lagrangian_saddle(sep, 3.0);
  const Vector D = rand_vec(2, gen), z = rand_vec(2, gen, 0.0, 1.0);
  Iterate x{rand_vec(q.dims.w, gen), stack_copies(D, 3), Vector(0), stack_copies(z, 3)};
  double L = 0.0;
  Vector gsum = Vector::Zero(2);
  const auto off = sep.offsets();
  for (int i = 0; i < 3; ++i) {
    const Vector wi = x.w.segment(off[i], sep.agents[i].dim);
    L += sep.agents[i].f(wi, D);
    gsum += sep.agents[i].g(wi, D);
  }
  L += z.dot(gsum);
  EXPECT_NEAR(q.value(x), L, 1e-13);
}

TEST(Lagrangian, DescriptorsAndValidation) {
  std::mt19937_64 gen(3);
  const auto sep = random_separable(3, 2, 1, gen);
  const auto q = build_lagrangian_saddle(sep, 2.5);
  EXPECT_EQ(q.dims.mu, 0);
  EXPECT_EQ(q.dims.z, 2);
  EXPECT_EQ(q.dims.w, sep.total_w());
  EXPECT_DOUBLE_EQ(q.z_set.diameter(), 2.5 * std::sqrt(2.0));
  EXPECT_THROW(build_lagrangian_saddle(sep, 0.0), ValidationError);
}

TEST(Lagrangian, ConvexConcaveSpotChecks) {
  std::mt19937_64 gen(4);
  for (int rep = 0; rep < 30; ++rep) {
    const auto sep = random_separable(3, 2, 1, gen);
    const auto q = build_lagrangian_saddle(sep, 3.0);
    auto rnd = [&] {
      return Iterate{rand_vec(q.dims.w, gen), rand_vec(3, gen), Vector(0), rand_vec(6, gen, 0.0, 1.0)};
    };
    const Iterate a = rnd(), b = rnd();
    Iterate xb = a, xm = a;
    xb.w = b.w;
    xb.D = b.D;
    xm.w = 0.5 * (a.w + b.w);
    xm.D = 0.5 * (a.D + b.D);
    EXPECT_LE(q.value(xm), 0.5 * (q.value(a) + q.value(xb)) + 1e-12);
    const auto g = q.subgradients(a);
    EXPECT_GE(q.value(xb), q.value(a) + g.w.dot(b.w - a.w) + g.D.dot(b.D - a.D) - 1e-12);
    Iterate yb = a;
    yb.z = b.z;
    // linear in z: the subgradient inequality is an equality
    EXPECT_NEAR(q.value(yb), q.value(a) + g.z.dot(b.z - a.z), 1e-12);
  }
}

TEST(CspsgStep, SingleAgentByHand) {
  const auto sep = single_linear(0.0, 2.0);
  const Iterate x{v1(1.0), Vector(0), Vector(0), v1(1.0)};
  const auto next = cspsg_step(sep, 5.0, NetworkState::initial(x), WeightedDigraph(Matrix::Zero(1, 1)), 0.0, 0.1);
  EXPECT_DOUBLE_EQ(next.x.w(0), 0.8);
  EXPECT_DOUBLE_EQ(next.x.z(0), 1.0);
}

TEST(CspsgStep, ZeroStepsLeaveStateUnchanged) {
  std::mt19937_64 gen(5);
  const auto sep = random_separable(4, 2, 2, gen);
  const auto q = build_lagrangian_saddle(sep, 2.0);
  const Iterate x = q.project({rand_vec(q.dims.w, gen), rand_vec(8, gen), Vector(0), rand_vec(8, gen, 0.0, 1.0)});
  const auto g = watts_strogatz(4, 2, 0.0, 1);
  EXPECT_EQ(cspsg_step(sep, 2.0, NetworkState::initial(x), g, 0.0, 0.0).x.z, x.z);
  Iterate agree = x;
  agree.D = stack_copies(x.D.head(2), 4);
  agree.z = stack_copies(x.z.head(2), 4);
  const auto n2 = cspsg_step(sep, 2.0, NetworkState::initial(agree), g, 0.4, 0.0);
  EXPECT_EQ(n2.x.D, agree.D);
  EXPECT_EQ(n2.x.z, agree.z);
}

double max_abs_diff(const Vector& a, const Vector& b) {
  return a.size() == 0 ? 0.0 : (a - b).cwiseAbs().maxCoeff();
}

TEST(CspsgStep, EquivalentToGenericStep) {
  std::mt19937_64 gen(6);
  for (int rep = 0; rep < 40; ++rep) {
    const int n = 2 + rep % 4, m = 1 + rep % 3, d = rep % 3;
    const auto sep = random_separable(n, m, d, gen);
    const double r = 0.5 + 2.0 * uniform01(gen);
    const auto q = build_lagrangian_saddle(sep, r);
    Matrix a = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (i != j && uniform01(gen) < 0.6) a(i, j) = 0.1 + 0.3 * uniform01(gen);
    const WeightedDigraph graph(a);
    NetworkState s = NetworkState::initial(
        q.project({rand_vec(q.dims.w, gen), rand_vec(n * d, gen), Vector(0), rand_vec(n * m, gen, 0.0, 2.0)}));
    for (int k = 0; k < 5; ++k) {
      const double sigma = 0.3 * uniform01(gen), eta = uniform01(gen);
      const auto x1 = cspsg_step(sep, r, s, graph, sigma, eta);
      const auto x2 = step(q, s, laplacian(graph), sigma, eta);
      EXPECT_LE(max_abs_diff(x1.x.w, x2.x.w), 1e-12);
      EXPECT_LE(max_abs_diff(x1.x.D, x2.x.D), 1e-12);
      EXPECT_LE(max_abs_diff(x1.x.z, x2.x.z), 1e-12);
      EXPECT_LE(max_abs_diff(x1.average.z, x2.average.z), 1e-12);
      s = x2;
    }
  }
}

TEST(Slater, Examples) {
  auto inst = BenchmarkInstance{Vector::Ones(2), Vector::Ones(2), 0.2};
  const auto sep = benchmark_separable(inst);
  const auto w = slater_components(sep);
  EXPECT_EQ(w[0](0), 1.0);
  EXPECT_EQ(w[1](0), 1.0);
  Vector total = Vector::Zero(1);
  for (int i = 0; i < 2; ++i) total += sep.agents[i].g(w[i], Vector(0));
  EXPECT_NEAR(total(0), -2.0 * std::numbers::ln2 + 0.2, 1e-15);
  EXPECT_NEAR(total(0), -1.18629, 1e-5);

  // g(w) = w on [-1, 1] through the generic inner solver
  SeparableProblem lin;
  lin.m = 1;
  lin.agents.push_back(linear_agent(0.0, 1.0, 0.0, -1.0, 1.0));
  EXPECT_NEAR(slater_components(lin)[0](0), -1.0, 1e-8);

  // the log constraint without the closed-form hook
  auto bare = sep;
  for (auto& a : bare.agents) a.slater_point = nullptr;
  EXPECT_NEAR(slater_components(bare)[0](0), 1.0, 1e-8);
}

TEST(Slater, NotCertified) {
  SeparableProblem sep;
  sep.m = 1;
  sep.agents.push_back(linear_agent(1.0, 1.0, 0.5, 0.0, 1.0));  // g >= 0.5 on [0, 1]
  EXPECT_THROW(slater_components(sep), RuntimeFailure);
  std::mt19937_64 gen(7);
  EXPECT_THROW(slater_components(random_separable(2, 1, 1, gen)), ValidationError);
}

TEST(MinAgreement, Examples) {
  const auto path = undirected(3, {{0, 1, 1.0}, {1, 2, 1.0}});
  Matrix v(3, 1);
  v << 3, 1, 2;
  EXPECT_EQ(min_agreement_round(v, path), Matrix::Ones(3, 1));
  Matrix same = Matrix::Constant(3, 2, 4.0);
  EXPECT_EQ(min_agreement_round(same, path), same);
  std::mt19937_64 gen(8);
  Matrix r = rand_mat(6, 3, gen);
  Matrix a = Matrix::Ones(6, 6);
  a.diagonal().setZero();
  const Matrix out = min_agreement_round(r, WeightedDigraph(a));
  for (int i = 0; i < 6; ++i) EXPECT_EQ(out.row(i), r.colwise().minCoeff());
}

TEST(MinAgreement, WithinNMinusOneTimesBRounds) {
  std::mt19937_64 gen(9);
  for (int rep = 0; rep < 200; ++rep) {
    const int n = 2 + rep % 6, B = 1 + rep % 3;
    // B graphs, each a random subset of a random spanning cycle's edges, plus noise
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen);
    std::vector<Matrix> adj(B, Matrix::Zero(n, n));
    for (int k = 0; k < n; ++k) {
      const int i = perm[k], j = perm[(k + 1) % n];
      if (i == j) continue;
      adj[uniform_index(gen, B)](i, j) = 0.5;
      adj[uniform_index(gen, B)](j, i) = 0.5;
    }
    std::vector<WeightedDigraph> graphs;
    for (auto& m : adj) graphs.emplace_back(m);
    if (!check_joint_connectivity(graphs, B)) continue;
    Matrix v = rand_mat(n, 2, gen);
    const Matrix target = v.colwise().minCoeff();
    for (long long k = 0; k < static_cast<long long>(n - 1) * B; ++k) v = min_agreement_round(v, graphs[(B + k) % B]);
    for (int i = 0; i < n; ++i) EXPECT_EQ(v.row(i), target) << "n=" << n << " B=" << B;
  }
}

TEST(DualBound, TwoAgentExample) {
  const auto inst = BenchmarkInstance{Vector::Ones(2), Vector::Ones(2), 0.2};
  const auto sep = benchmark_separable(inst);
  const auto seq = DigraphSequence::fixed(undirected(2, {{0, 1, 0.5}}));
  const auto run = run_dual_bound_protocol(sep, seq, 0.5);
  const double gamma = 2.0 * std::numbers::ln2 - 0.2;
  EXPECT_LE(run.gamma, gamma);
  EXPECT_GE(run.r, 2.0 * 1.0 / gamma);
  EXPECT_NEAR(2.0 / gamma, 1.6859, 1e-4);
  EXPECT_DOUBLE_EQ(run.f_tilde.maxCoeff(), 1.0);
  EXPECT_DOUBLE_EQ(run.q_bar.minCoeff(), 0.0);
  EXPECT_GE(run.r, oracle_solve(inst).z);
}

TEST(DualBound, ImmediateTermination) {
  const auto inst = BenchmarkInstance{Vector::Ones(3), Vector::Ones(3), 0.3};
  const auto run = run_dual_bound_protocol(benchmark_separable(inst), DigraphSequence::fixed(complete_graph(3)), 0.3);
  EXPECT_EQ(run.k_star, (std::vector<long long>{0, 0, 0}));
  EXPECT_EQ(run.k_star_max, 0);
}

TEST(DualBound, TerminationCapAndSafetyFactor) {
  // one agent with a positive constraint value delays termination
  SeparableProblem sep;
  sep.m = 1;
  sep.agents.push_back(linear_agent(1.0, 1.0, 0.5, 0.0, 1.0));
  sep.agents.push_back(linear_agent(1.0, 1.0, -3.0, 0.0, 1.0));
  sep.agents.push_back(linear_agent(1.0, 1.0, -3.0, 0.0, 1.0));
  const auto seq = DigraphSequence::fixed(undirected(3, {{0, 1, 0.5}, {1, 2, 0.5}}));
  DualBoundOptions opt;
  opt.max_rounds = 0;
  EXPECT_THROW(run_dual_bound_protocol(sep, seq, 0.5, opt), RuntimeFailure);
  opt.max_rounds = 1000;
  const auto run = run_dual_bound_protocol(sep, seq, 0.5, opt);
  EXPECT_GT(run.k_star_max, 0);
  EXPECT_LE(run.gamma, exact_gamma(sep, run.slater));
  opt.gamma_safety = 1.5;
  EXPECT_THROW(run_dual_bound_protocol(sep, seq, 0.5, opt), ValidationError);
}

TEST(DualBound, SoundAndAgreedOnRandomInstances) {
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    const int n = 2 + static_cast<int>(seed % 5);
    const auto inst = make_benchmark(n, seed);
    const auto sep = benchmark_separable(inst);
    const auto seq = DigraphSequence::fixed(n > 4 ? watts_strogatz(n, 4, 0.0, seed) : complete_graph(n));
    const auto w = consensus_stepsize_interval(seq.min_weight(), seq.d_max(), 0.84);
    const auto run = run_dual_bound_protocol(sep, seq, w.hi);
    EXPECT_GE(run.r, oracle_solve(inst).z) << "seed " << seed;
    EXPECT_LE(run.gamma, exact_gamma(sep, run.slater));
    for (int i = 0; i < n; ++i) {
      EXPECT_EQ(run.r_agents(i), run.r);
      EXPECT_EQ(run.gamma_lower(i), run.gamma);
      EXPECT_EQ(run.y_hat.row(i), run.y_hat.row(0));
      EXPECT_GE(run.k_star[i], 0);
    }
    EXPECT_GE(run.agreement_rounds, 0);
    EXPECT_LE(run.agreement_rounds, (n - 1) * seq.window());
  }
}

TEST(DualBound, SignsThatFlipAfterAFirstHit) {
  // Two agents with sigma near the top of the window: the consensus step
  // overshoots and the signs swap, so agent 0 hits the threshold a round after
  // agent 1 while agent 1 is positive again.
  Vector c(2), d(2);
  c << 0.673065, 0.225289;
  d << 0.0384946, 0.675932;
  const BenchmarkInstance inst{c, d, 0.2};
  const auto seq = DigraphSequence::fixed(complete_graph(2));
  const auto run = run_dual_bound_protocol(benchmark_separable(inst), seq, 0.84);
  EXPECT_GT(run.gamma, 0.0);
  EXPECT_TRUE((run.y_final.array() < 0.0).all());
  EXPECT_GE(run.k_star_max, *std::max_element(run.k_star.begin(), run.k_star.end()));
  EXPECT_GE(run.r, oracle_solve(inst).z);
}

TEST(DualBound, ConsensusKeepsTheMean) {
  const auto inst = make_benchmark(12, 3);
  const auto sep = benchmark_separable(inst);
  const auto seq = DigraphSequence::fixed(watts_strogatz(12, 4, 0.2, 3));
  const auto run = run_dual_bound_protocol(sep, seq, 0.2475);
  EXPECT_NEAR(run.y_final.sum(), run.y0.sum(), 1e-12);
  // the tracker is an average of signs: it keeps sum s = sum sgn(y)
  double sgn_sum = 0.0;
  for (int i = 0; i < 12; ++i) sgn_sum += (run.y_final.row(i).array() < 0.0).all() ? -1.0 : 1.0;
  EXPECT_NEAR(run.s_final.sum(), sgn_sum, 1e-9);
}

TEST(DualBound, TimeVaryingSequence) {
  const auto inst = make_benchmark(4, 11);
  const std::vector<WeightedDigraph> graphs{undirected(4, {{0, 1, 0.5}, {2, 3, 0.5}}), undirected(4, {{1, 2, 0.5}})};
  const DigraphSequence seq(graphs, 2);
  const auto run = run_dual_bound_protocol(benchmark_separable(inst), seq, 0.5);
  EXPECT_GE(run.r, oracle_solve(inst).z);
  EXPECT_LE(run.agreement_rounds, 3 * 2);
}

TEST(DualBound, BenchmarkRadiusFormula) {
  BenchmarkInstance inst{Vector::Ones(50), Vector::Constant(50, 0.5), 5.0};
  EXPECT_NEAR(benchmark_radius_formula(inst), 50.0 / (25.0 * std::numbers::ln2 - 5.0), 1e-12);
  EXPECT_NEAR(benchmark_radius_formula(inst), 4.056, 1e-3);
}
