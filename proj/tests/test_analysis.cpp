#include "problems.hpp"

#include <saddlenet/analysis.hpp>
#include <saddlenet/benchmark.hpp>

#include <gtest/gtest.h>

#include <random>

using namespace saddlenet;
using namespace problems;

namespace {

WeightedDigraph undirected(int n, std::vector<Edge> e) { return WeightedDigraph::from_undirected(n, e); }

double grid_sup_norm(const AgentFunctions& a, int per_axis) {
  const auto* box = a.set.as_box();
  double best = 0.0;
  Vector w(a.dim);
  std::vector<int> idx(a.dim, 0);
  while (true) {
    for (int k = 0; k < a.dim; ++k) w(k) = box->lower(k) + (box->upper(k) - box->lower(k)) * idx[k] / per_axis;
    best = std::max(best, a.g(w, Vector(0)).norm());
    int k = 0;
    while (k < a.dim && ++idx[k] > per_axis) idx[k++] = 0;
    if (k == a.dim) break;
  }
  return best;
}

}  // namespace

TEST(Cu, Examples) {
  EXPECT_NEAR(c_u(0.01, 50, 1), 3.5556e6, 0.0001e6);
  // with B = 1 the denominator is delta_tilde / (4 N^2) exactly
  EXPECT_NEAR(c_u(0.01, 50, 1), (32.0 / 9.0) * 4.0 * 2500.0 / 0.01, 1e-3);
  EXPECT_NEAR(c_u(0.5, 2, 1), (32.0 / 9.0) / 0.03125, 1e-10);
  EXPECT_NEAR(c_u(0.5, 2, 1), 113.78, 0.01);
  EXPECT_THROW(c_u(0.0, 5, 1), ValidationError);
  EXPECT_THROW(c_u(1.0, 5, 1), ValidationError);
  EXPECT_THROW(c_u(0.5, 1, 1), ValidationError);
  EXPECT_THROW(c_u(0.5, 5, 0), ValidationError);
}

TEST(Cu, Monotonicity) {
  std::mt19937_64 gen(1);
  for (int rep = 0; rep < 500; ++rep) {
    const double dt = 0.01 + 0.9 * uniform01(gen);
    const int n = 2 + static_cast<int>(uniform_index(gen, 100));
    const int B = 1 + static_cast<int>(uniform_index(gen, 10));
    EXPECT_GT(c_u(dt, n, B), c_u(std::min(0.99, dt * 1.05), n, B));
    EXPECT_LT(c_u(dt, n, B), c_u(dt, n + 1, B));
    EXPECT_LT(c_u(dt, n, B), c_u(dt, n, B + 1));
  }
  // long windows: 1 - rho^(1/B) ~ -log(rho) / B
  const double asym = (32.0 / 9.0) * 1e6 / -std::log(1.0 - 0.5 / 36.0);
  EXPECT_NEAR(c_u(0.5, 3, 1'000'000), asym, 1e-6 * asym);
}

TEST(Cu, ContractionRateInUnitInterval) {
  EXPECT_DOUBLE_EQ(contraction_rate(0.01, 50), 1.0 - 0.01 / 10000.0);
  EXPECT_GT(contraction_rate(0.99, 2), 0.0);
}

TEST(CorollaryConstants, Examples) {
  NetworkConstants net{0.25, 1.0, 0.01, 4, 1};
  SeparableProblem sep;
  sep.m = 1;
  for (int i = 0; i < 4; ++i) sep.agents.push_back(linear_agent(1.0, 1.0, -0.5, 0.0, 1.0));
  const auto k = corollary_constants(sep, 2.0, net, {1.0, 0.0, 1.0, 0.0});
  EXPECT_DOUBLE_EQ(k.B_z, 4.0);
  EXPECT_DOUBLE_EQ(k.B_w, 2.0);
  EXPECT_EQ(k.B_D, 0.0);
  EXPECT_EQ(k.H_D, 0.0);
  EXPECT_EQ(k.B_mu, 0.0);
  EXPECT_EQ(k.H_mu, 0.0);
  EXPECT_DOUBLE_EQ(k.H_w, std::sqrt(4.0 * 9.0));  // sqrt(N (1 + 2 * 1 * 1)^2)
  EXPECT_NEAR(k.H_z, std::sqrt(4.0 * 0.25), 1e-8);  // |w - 0.5| <= 0.5

  const auto inst = make_benchmark(50, 1);
  NetworkConstants net50{0.2475, 1.0, 0.01, 50, 1};
  const auto kb = corollary_constants(benchmark_separable(inst), 3.0, net50, benchmark_subgradient_bounds(inst));
  EXPECT_NEAR(kb.B_w, std::sqrt(50.0), 1e-12);
  EXPECT_NEAR(kb.B_z, std::sqrt(50.0) * 3.0, 1e-12);
}

TEST(CorollaryConstants, GlobalBlockAndRejections) {
  std::mt19937_64 gen(2);
  auto sep = random_separable(3, 2, 2, gen);
  NetworkConstants net{0.25, 1.0, 0.01, 3, 1};
  sep.global_set = ConvexSet::box(2, -1.0, 1.0);
  const auto k = corollary_constants(sep, 1.5, net, {1.0, 2.0, 3.0, 4.0});
  EXPECT_NEAR(k.B_D, std::sqrt(3.0) * std::sqrt(8.0), 1e-12);
  EXPECT_NEAR(k.H_D, std::sqrt(3.0) * (2.0 + 1.5 * std::sqrt(2.0) * 4.0), 1e-12);
  sep.global_set = ConvexSet::full(2);
  EXPECT_THROW(corollary_constants(sep, 1.5, net, {}), ValidationError);
  EXPECT_THROW(corollary_constants(sep, 0.0, net, {}), ValidationError);
}

TEST(CorollaryConstants, ConstraintNormBoundDominatesGrid) {
  std::mt19937_64 gen(3);
  for (int rep = 0; rep < 20; ++rep) {
    SeparableProblem sep;
    sep.m = 1;
    sep.agents.push_back(smooth_agent(1 + rep % 2, 1, 0, gen));
    const double hz = detail::constraint_sup_norm(sep.agents[0], sep);
    const double grid = grid_sup_norm(sep.agents[0], rep % 2 ? 400 : 20000);
    EXPECT_GE(hz, grid - 1e-12);
    EXPECT_LE(hz, grid + 5e-3);
  }
  const auto inst = make_benchmark(5, 4);
  const auto sep = benchmark_separable(inst);
  for (const auto& a : sep.agents) {
    auto bare = a;
    bare.constraint_sup_norm = nullptr;
    EXPECT_NEAR(detail::constraint_sup_norm(bare, sep), a.constraint_sup_norm(), 1e-7);
    EXPECT_NEAR(a.constraint_sup_norm(), grid_sup_norm(a, 10000), 1e-12);
  }
}

TEST(Cdoubling, Structure) {
  BoundConstants zero;
  zero.net = {0.25, 1.0, 0.01, 50, 1};
  const auto e0 = cdoubling(zero);
  EXPECT_EQ(e0.total(), 0.0);

  BoundConstants k;
  k.net = {0.2, 1.5, 0.1, 5, 2};
  k.B_w = 1.0;
  k.B_D = 2.0;
  k.H_w = 3.0;
  const auto e1 = cdoubling(k);
  EXPECT_DOUBLE_EQ(e1.C_wD, 4.0 * (1.0 + 4.0) + 6.0 * 9.0);
  EXPECT_DOUBLE_EQ(e1.Cbar_wD, e1.C_wD * std::sqrt(2.0) / (std::sqrt(2.0) - 1.0));

  k.H_D = 0.5;
  k.B_z = 1.0;
  k.H_z = 2.0;
  const double cu = c_u(0.1, 5, 2);
  const auto e2 = cdoubling(k);
  EXPECT_NEAR(e2.C_wD, 4.0 * 5.0 + 6.0 * 9.25 + 0.5 * (3.0 + 0.3) * cu * (2.0 + 1.0), 1e-9 * e2.C_wD);
  EXPECT_NEAR(e2.C_muz, 4.0 + 24.0 + 2.0 * 3.3 * cu * 5.0, 1e-9 * e2.C_muz);
}

TEST(TheoremBound, Examples) {
  Envelope e;
  e.Cbar_wD = 1.5;
  e.Cbar_muz = 0.5;
  EXPECT_DOUBLE_EQ(theorem_bound(2, e), 1.0);
  for (long long t : {2LL, 10LL, 1000LL, 123456LL})
    EXPECT_NEAR(theorem_bound(2 * t - 1, e) / theorem_bound(t, e), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_THROW(theorem_bound(1, e), ValidationError);
}

TEST(TheoremBound, BenchmarkOrderOfMagnitude) {
  // Constants of the 50-agent benchmark with the radius formula and the
  // stepsize window of a degree-4 graph with weights 1/4 read as d_max = 4.
  const auto inst = make_benchmark(50, 1);
  const NetworkConstants net{0.2475, 1.34, 0.01, 50, 1};
  const auto k = corollary_constants(benchmark_separable(inst), benchmark_radius_formula(inst), net,
                                     benchmark_subgradient_bounds(inst));
  const double total = cdoubling(k).total();
  EXPECT_GT(total, 1e8);
  EXPECT_LT(total, 1e11);
}

TEST(Disagreement, CumulativeSeriesAndTriangleInequality) {
  std::mt19937_64 gen(5);
  std::vector<Vector> xs;
  Vector avg;
  double sum = 0.0;
  for (int t = 1; t <= 50; ++t) {
    xs.push_back(rand_vec(12, gen));
    avg = update_running_average(avg, xs.back(), t);
    sum += disagreement(xs.back(), 4, 3);
    EXPECT_LE(disagreement(avg, 4, 3), sum / t + 1e-12);
  }
}

TEST(Iss, ZeroInputAndBenchmarkRuns) {
  const auto seq = DigraphSequence::fixed(undirected(3, {{0, 1, 0.5}, {1, 2, 0.5}}));
  SaddleProblem p;
  p.dims = {3, 0, 1, 0, 1};
  p.value = [](const Iterate&) { return 0.0; };
  p.grad_D = [](const Iterate&) -> Vector { return Vector::Zero(3); };
  p.grad_z = [](const Iterate&) -> Vector { return Vector::Zero(3); };
  p.d_set = ConvexSet::full(1);
  p.z_set = ConvexSet::full(1);
  Iterate x0 = Iterate::zeros(p.dims);
  x0.D << 1.0, -2.0, 5.0;
  x0.z << 0.0, 0.0, 1.0;
  RunOptions opt;
  opt.T = 500;
  opt.delta_tilde_prime = 0.5;
  const double sigma = consensus_stepsize_interval(seq.min_weight(), seq.d_max(), 0.5).hi;
  const auto trace = run(p, seq, sigma, schedules::DoublingTrick{}, NetworkState::initial(x0), opt);
  const auto rep = check_iss_bounds(trace, network_constants(seq, sigma, 0.5));
  EXPECT_TRUE(rep.ok());
  EXPECT_EQ(rep.pointwise_D.checked, 500);
  EXPECT_EQ(trace.records.back().max_input_D, 0.0);

  ExperimentConfig cfg;
  cfg.agents = 10;
  cfg.T = 3000;
  cfg.stride = 1;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    cfg.seed = seed;
    const auto res = run_benchmark(cfg);
    EXPECT_TRUE(res.iss->ok()) << "seed " << seed;
    EXPECT_TRUE(res.dominance->ok) << "seed " << seed;
    EXPECT_GE(res.iss->pointwise_z.min_slack, 1.0);
  }
}

TEST(Iss, SingleAgentRejected) {
  RunTrace t;
  t.agents = 1;
  EXPECT_THROW(check_iss_bounds(t, {}), ValidationError);
}

TEST(BoundCheck, Bookkeeping) {
  BoundCheck c;
  c.add(1, 1.0, 4.0);
  c.add(2, 0.0, 1.0);
  EXPECT_TRUE(c.ok);
  EXPECT_DOUBLE_EQ(c.min_slack, 4.0);
  c.add(3, 2.0, 1.0);
  c.add(4, 3.0, 1.0);
  EXPECT_FALSE(c.ok);
  EXPECT_EQ(c.first_violation, 3);
  EXPECT_EQ(c.checked, 4);
  c.add(5, std::nan(""), 1.0);
  EXPECT_FALSE(c.ok);
}

TEST(IterateErrorBounds, StationarySaddleTrace) {
  // phi(w, z) = w z, the origin is a saddle point and a fixed point.
  SaddleProblem p;
  p.dims = {2, 1, 0, 0, 1};
  p.value = [](const Iterate& x) { return x.w(0) * x.z.sum(); };
  p.grad_w = [](const Iterate& x) -> Vector { return Vector::Constant(1, x.z.sum()); };
  p.grad_z = [](const Iterate& x) -> Vector { return Vector::Constant(2, x.w(0)); };
  p.w_set = ConvexSet::box(1, -1, 1);
  p.z_set = ConvexSet::box(1, -1, 1);
  const auto seq = DigraphSequence::fixed(undirected(2, {{0, 1, 0.5}}));
  RunOptions opt;
  opt.T = 50;
  opt.keep_history = true;
  opt.delta_tilde_prime = 0.5;
  const auto trace = run(p, seq, 1.0, schedules::DoublingTrick{}, NetworkState::initial(Iterate::zeros(p.dims)), opt);
  const auto rep = check_iterate_error_bounds(trace, p, Iterate::zeros(p.dims), {1, 10, 50});
  ASSERT_TRUE(rep.ok());
  for (const auto& r : rep.rows) {
    EXPECT_EQ(r.upper_lhs, 0.0);
    EXPECT_GE(r.upper_bound, 0.0);
  }
}

TEST(IterateErrorBounds, BenchmarkProbes) {
  ExperimentConfig cfg;
  cfg.agents = 6;
  cfg.seed = 3;
  cfg.T = 4000;
  cfg.stride = 100;
  cfg.keep_history = true;
  const auto res = run_benchmark(cfg);
  const std::vector<long long> ts{1, 2, 10, 100, 1000, 4000};

  // probe = a saddle point of the truncated Lagrangian: (w*, z* copies)
  Iterate saddle = Iterate::zeros(res.problem.dims);
  saddle.w = res.oracle.w;
  saddle.z = Vector::Constant(6, res.oracle.z);
  ASSERT_LE(res.oracle.z, res.r);
  EXPECT_TRUE(check_iterate_error_bounds(res.trace, res.problem, saddle, ts).ok());
  for (const auto& row : check_saddle_relation(res.trace, res.problem, saddle, ts)) EXPECT_TRUE(row.ok()) << row.t;

  // probe = running averages
  EXPECT_TRUE(check_iterate_error_bounds(res.trace, res.problem, std::nullopt, ts).ok());

  // an infeasible probe is rejected
  Iterate bad = saddle;
  bad.w(0) = 3.0;
  EXPECT_THROW(check_iterate_error_bounds(res.trace, res.problem, bad, ts), ValidationError);
}

TEST(ObservedConstants, WithinCorollaryConstants) {
  ExperimentConfig cfg;
  cfg.agents = 8;
  cfg.T = 2000;
  const auto res = run_benchmark(cfg);
  const auto obs = observed_constants(res.trace, res.constants->net);
  EXPECT_LE(obs.B_w, res.constants->B_w + 1e-12);
  EXPECT_LE(obs.B_z, res.constants->B_z + 1e-12);
  EXPECT_LE(obs.H_w, res.constants->H_w + 1e-12);
  EXPECT_LE(obs.H_z, res.constants->H_z + 1e-12);
  EXPECT_LE(cdoubling(obs).total(), res.envelope->total());
}
