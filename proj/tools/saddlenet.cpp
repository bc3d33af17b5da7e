// Command-line front end: run, bench, dualbound, bound, check, oracle.

#include <saddlenet/io.hpp>
#include <saddlenet/saddlenet.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace saddlenet;
using io::json;

namespace {

struct Flags {
  std::string config;
  std::string trace;
  std::string out = "results";
  std::optional<std::uint64_t> seed;
  std::optional<long long> stride;
  std::optional<long long> T;
};

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json check_json(const BoundCheck& c) {
  return {{"ok", c.ok}, {"checked", c.checked}, {"first_violation", c.first_violation},
          {"min_slack", number_or_null(c.min_slack)}};
}

json iss_json(const IssReport& r) {
  return {{"ok", r.ok()},
          {"pointwise_D", check_json(r.pointwise_D)},
          {"cumulative_D", check_json(r.cumulative_D)},
          {"pointwise_z", check_json(r.pointwise_z)},
          {"cumulative_z", check_json(r.cumulative_z)}};
}

json constants_json(const BoundConstants& k) {
  const Envelope e = cdoubling(k);
  return {{"B_w", k.B_w},         {"B_D", k.B_D},           {"B_mu", k.B_mu},       {"B_z", k.B_z},
          {"H_w", k.H_w},         {"H_D", k.H_D},           {"H_mu", k.H_mu},       {"H_z", k.H_z},
          {"sigma", k.net.sigma}, {"lambda_bar", k.net.lambda_bar}, {"delta_tilde", k.net.delta_tilde},
          {"N", k.net.agents},    {"B", k.net.window},      {"rho", k.rho()},       {"C_u", k.gain()},
          {"C_wD", e.C_wD},       {"Cbar_wD", e.Cbar_wD},   {"C_muz", e.C_muz},     {"Cbar_muz", e.Cbar_muz},
          {"envelope_numerator", e.total() / 2.0}};
}

json protocol_json(const DualBoundRun& d) {
  return {{"r", d.r},
          {"gamma_lower", d.gamma},
          {"k_star", d.k_star},
          {"k_star_max", d.k_star_max},
          {"wait_rounds", d.wait_rounds},
          {"agreement_rounds", d.agreement_rounds},
          {"rounds_total", d.rounds_total},
          {"y_hat", io::from_vector(d.y_hat.row(0).transpose())},
          {"f_tilde", io::from_vector(d.f_tilde)},
          {"q_bar", io::from_vector(d.q_bar)}};
}

json oracle_json(const OracleResult& o) {
  return {{"w", io::from_vector(o.w)},
          {"z", o.z},
          {"value", o.value},
          {"dual_value", o.dual_value},
          {"constraint_active", o.constraint_active},
          {"kkt", {{"stationarity", o.stationarity},
                   {"primal_violation", o.primal_violation},
                   {"complementarity", o.complementarity}}},
          {"iterations", o.iterations}};
}

std::optional<double> try_slope(const RunTrace& trace, double TraceRecord::*field, double lo, double hi) {
  if (trace.records.empty() || trace.records.back().t < hi) return std::nullopt;
  const Series s = series_of(trace, field);
  try {
    return fit_loglog_slope(s.t, s.v, lo, hi);
  } catch (const ValidationError&) {
    return std::nullopt;
  }
}

json require_config(const Flags& f) {
  if (f.config.empty()) throw ValidationError("missing --config");
  return io::read_json_file(f.config);
}

ExperimentConfig bench_config(const Flags& f) {
  json j = f.config.empty() ? json::object() : io::read_json_file(f.config);
  if (f.seed) j["seed"] = *f.seed;
  if (f.T) j["T"] = *f.T;
  if (f.stride) j["stride"] = *f.stride;
  return io::config_from_json(j);
}

void emit(const json& j) { std::cout << j.dump(2) << "\n"; }

// ---------------------------------------------------------------------------

int cmd_bench(const Flags& f) {
  const ExperimentConfig cfg = bench_config(f);
  const BenchmarkResult res = run_benchmark(cfg);

  json meta = io::trace_meta(res.trace);
  meta["config"] = io::config_to_json(cfg);
  if (res.constants) {
    meta["delta_tilde"] = res.constants->net.delta_tilde;
    meta["window"] = res.constants->net.window;
    meta["envelope_total"] = res.envelope->total();
  }

  json report = {{"instance", io::instance_to_json(res.instance)},
                 {"oracle", oracle_json(res.oracle)},
                 {"r", res.r},
                 {"final", {{"t", res.trace.records.back().t},
                            {"saddle_gap", res.trace.records.back().saddle_gap},
                            {"cost_err", res.trace.records.back().cost_err},
                            {"constraint_violation", res.trace.records.back().constraint_violation}}}};
  if (res.protocol) report["protocol"] = protocol_json(*res.protocol);
  if (res.constants) {
    report["constants"] = constants_json(*res.constants);
    report["iss"] = iss_json(*res.iss);
    report["theorem_dominance"] = check_json(*res.dominance);
  }
  json slopes = json::object();
  if (auto s = try_slope(res.trace, &TraceRecord::saddle_gap, 1e2, 1e4)) slopes["saddle_gap_1e2_1e4"] = *s;
  if (auto s = try_slope(res.trace, &TraceRecord::cost_err, 1e2, 1e4)) slopes["cost_err_1e2_1e4"] = *s;
  report["slopes"] = slopes;

  const fs::path out(f.out);
  io::write_atomic(out / "trace.csv", io::trace_to_csv(res.trace, meta));
  io::write_atomic(out / "report.json", report.dump(2) + "\n");
  emit(report);
  return 0;
}

/// {"problem": separable or {"quadratic": ...}, "graph", "sigma", "schedule",
///  "T", "stride", "r", "seed", "delta_tilde_prime", "allow_sigma_outside_window"}
int cmd_run(const Flags& f) {
  const json j = require_config(f);
  io::check_keys(j,
                 {"problem", "graph", "sigma", "schedule", "T", "stride", "r", "seed", "delta_tilde_prime",
                  "allow_sigma_outside_window", "initial"},
                 "run config");
  const std::string where = "run config";
  const json& pj = io::get<json>(j, "problem", where);
  const auto seed = f.seed.value_or(io::get_or<std::uint64_t>(j, "seed", 1, where));
  const double sigma = io::get_or<double>(j, "sigma", 0.2475, where);
  const Schedule schedule = j.contains("schedule") ? io::schedule_from_json(j.at("schedule")) : Schedule{};
  RunOptions opt;
  opt.T = f.T.value_or(io::get_or<long long>(j, "T", 1000, where));
  opt.stride = f.stride.value_or(io::get_or<long long>(j, "stride", 1, where));
  opt.delta_tilde_prime = io::get_or<double>(j, "delta_tilde_prime", 0.84, where);
  opt.allow_sigma_outside_window = io::get_or<bool>(j, "allow_sigma_outside_window", false, where);

  SaddleProblem problem;
  int agents = 0;
  std::optional<SeparableProblem> sep;
  if (pj.contains("quadratic")) {
    const json& q = pj.at("quadratic");
    io::check_keys(q, {"agents", "w", "d", "mu", "z", "P", "K", "Q", "p", "q", "sets"}, "quadratic");
    SaddleDims dims{io::get<int>(q, "agents", "quadratic"), io::get_or<int>(q, "w", 0, "quadratic"),
                    io::get_or<int>(q, "d", 0, "quadratic"), io::get_or<int>(q, "mu", 0, "quadratic"),
                    io::get_or<int>(q, "z", 0, "quadratic")};
    const int nx = dims.w + dims.agents * dims.d, ny = dims.mu + dims.agents * dims.z;
    auto mat = [&](const char* k, int r, int c) {
      return q.contains(k) ? io::to_matrix(q.at(k), k) : Matrix(Matrix::Zero(r, c));
    };
    auto vec = [&](const char* k, int n) { return q.contains(k) ? io::to_vector(q.at(k), k) : Vector(Vector::Zero(n)); };
    const json sets = q.contains("sets") ? q.at("sets") : json::object();
    auto set = [&](const char* k, int dim) {
      return sets.contains(k) ? io::set_from_json(sets.at(k)) : ConvexSet::full(dim);
    };
    problem = make_quadratic_saddle(dims, {mat("P", nx, nx), mat("K", nx, ny), mat("Q", ny, ny), vec("p", nx), vec("q", ny)},
                                    set("w", dims.w), set("D", dims.d), set("mu", dims.mu), set("z", dims.z));
    agents = dims.agents;
  } else {
    sep = io::separable_from_json(pj);
    agents = sep->size();
  }

  GraphSpec gspec;
  if (j.contains("graph")) gspec = io::graph_spec_from_json(j.at("graph"));
  const DigraphSequence graphs = make_graphs(gspec, agents, seed);

  json report = json::object();
  if (sep) {
    double r = 0.0;
    if (j.contains("r")) {
      r = io::get<double>(j, "r", where);
    } else {
      require(sep->d == 0, "problems with a global variable need an explicit dual radius \"r\"");
      const DualBoundRun d = run_dual_bound_protocol(*sep, graphs, sigma);
      report["protocol"] = protocol_json(d);
      r = d.r;
    }
    report["r"] = r;
    problem = build_lagrangian_saddle(*sep, r);
  }
  Iterate x0 = Iterate::zeros(problem.dims);
  if (j.contains("initial")) {
    const json& ij = j.at("initial");
    io::check_keys(ij, {"w", "D", "mu", "z"}, "initial");
    if (ij.contains("w")) x0.w = io::to_vector(ij.at("w"), "initial.w");
    if (ij.contains("D")) x0.D = io::to_vector(ij.at("D"), "initial.D");
    if (ij.contains("mu")) x0.mu = io::to_vector(ij.at("mu"), "initial.mu");
    if (ij.contains("z")) x0.z = io::to_vector(ij.at("z"), "initial.z");
    problem.check_shape(x0);
  }
  x0 = problem.project(x0);

  const RunTrace trace = run(problem, graphs, sigma, schedule, NetworkState::initial(x0), opt);
  json meta = io::trace_meta(trace);
  meta["config"] = j;
  meta["seed"] = seed;
  if (agents >= 2) {
    const auto net = network_constants(graphs, sigma, opt.delta_tilde_prime);
    meta["delta_tilde"] = net.delta_tilde;
    meta["window"] = net.window;
    report["iss"] = iss_json(check_iss_bounds(trace, net));
  }
  const auto& last = trace.records.back();
  report["final"] = {{"t", last.t}, {"phi_at_avg", last.phi_at_avg}, {"disagreement_D", last.disagreement_D},
                     {"disagreement_z", last.disagreement_z}};
  report["average"] = {{"w", io::from_vector(trace.final_state.average.w)},
                       {"D", io::from_vector(trace.final_state.average.D)},
                       {"mu", io::from_vector(trace.final_state.average.mu)},
                       {"z", io::from_vector(trace.final_state.average.z)}};

  const fs::path out(f.out);
  io::write_atomic(out / "trace.csv", io::trace_to_csv(trace, meta));
  io::write_atomic(out / "report.json", report.dump(2) + "\n");
  emit(report);
  return 0;
}

/// A separable problem JSON, optionally wrapped as {"problem", "graph",
/// "sigma", "zbar", "seed", "max_rounds", "gamma_safety"}.
int cmd_dualbound(const Flags& f) {
  const json j = require_config(f);
  const bool wrapped = j.contains("problem");
  const std::string where = "dualbound config";
  if (wrapped)
    io::check_keys(j, {"problem", "graph", "sigma", "zbar", "seed", "max_rounds", "gamma_safety"}, where);
  const SeparableProblem sep = io::separable_from_json(wrapped ? j.at("problem") : j);
  GraphSpec gspec;
  if (wrapped && j.contains("graph")) gspec = io::graph_spec_from_json(j.at("graph"));
  const auto seed = f.seed.value_or(wrapped ? io::get_or<std::uint64_t>(j, "seed", 1, where) : 1);
  const DigraphSequence graphs = make_graphs(gspec, sep.size(), seed);
  DualBoundOptions opt;
  if (wrapped) {
    if (j.contains("zbar")) opt.zbar = io::to_vector(j.at("zbar"), "zbar");
    opt.max_rounds = io::get_or<long long>(j, "max_rounds", opt.max_rounds, where);
    opt.gamma_safety = io::get_or<double>(j, "gamma_safety", opt.gamma_safety, where);
  }
  const double sigma = wrapped ? io::get_or<double>(j, "sigma", 0.2475, where) : 0.2475;
  const DualBoundRun d = run_dual_bound_protocol(sep, graphs, sigma, opt);
  emit(protocol_json(d));
  return 0;
}

int cmd_bound(const Flags& f) {
  const ExperimentConfig cfg = bench_config(f);
  const BenchmarkInstance inst = make_instance(cfg);
  require(inst.size() >= 2, "bound constants need at least two agents");
  const DigraphSequence graphs = make_graphs(cfg.graph, inst.size(), cfg.seed);
  const SeparableProblem sep = benchmark_separable(inst);
  json out = json::object();
  double r = 0.0;
  if (cfg.r) {
    r = *cfg.r;
  } else {
    const DualBoundRun d = run_dual_bound_protocol(sep, graphs, cfg.sigma, {Vector(), 1'000'000, cfg.gamma_safety});
    out["protocol"] = protocol_json(d);
    r = d.r;
  }
  const auto net = network_constants(graphs, cfg.sigma, cfg.delta_tilde_prime);
  const BoundConstants k = corollary_constants(sep, r, net, benchmark_subgradient_bounds(inst));
  out["r"] = r;
  out["constants"] = constants_json(k);
  out["envelope"] = {{"T", cfg.T}, {"bound_at_T", cfg.T >= 2 ? json(theorem_bound(cfg.T, k)) : json(nullptr)}};
  emit(out);
  return 0;
}

int cmd_check(const Flags& f) {
  if (f.trace.empty()) throw ValidationError("missing --trace");
  const io::LoadedTrace lt = io::read_trace_csv(f.trace);
  json out = json::object();
  bool pass = true;
  if (lt.trace.agents >= 2) {
    NetworkConstants net;
    net.sigma = lt.trace.sigma;
    net.lambda_bar = lt.trace.lambda_bar;
    net.delta_tilde = io::get<double>(lt.meta, "delta_tilde", "trace meta");
    net.window = io::get<int>(lt.meta, "window", "trace meta");
    net.agents = lt.trace.agents;
    const IssReport iss = check_iss_bounds(lt.trace, net);
    out["iss"] = iss_json(iss);
    pass = pass && iss.ok();
  }
  if (lt.meta.contains("envelope_total")) {
    Envelope e;
    e.Cbar_muz = lt.meta.at("envelope_total").get<double>();
    const BoundCheck dom = check_theorem_dominance(lt.trace, e);
    out["theorem_dominance"] = check_json(dom);
    pass = pass && dom.ok;
  }
  out["records"] = lt.trace.records.size();
  out["pass"] = pass;
  emit(out);
  return 0;
}

/// {"c", "d", "b"} or a bench config.
int cmd_oracle(const Flags& f) {
  json j = require_config(f);
  BenchmarkInstance inst;
  if (j.contains("c") && !j.contains("instance")) {
    inst = io::instance_from_json(j);
  } else {
    if (f.seed) j["seed"] = *f.seed;
    inst = make_instance(io::config_from_json(j));
  }
  const OracleResult o = oracle_solve(inst, 1e-8);
  emit(oracle_json(o));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed saddle-point subgradient dynamics with Laplacian averaging"};
  app.require_subcommand(1);
  Flags f;
  auto common = [&f](CLI::App* sub, bool run_flags) {
    sub->add_option("--config", f.config, "JSON config file");
    if (run_flags) {
      sub->add_option("--seed", f.seed, "random seed");
      sub->add_option("--out", f.out, "output directory")->capture_default_str();
      sub->add_option("--stride", f.stride, "trace stride");
      sub->add_option("--T", f.T, "number of iterates");
    }
  };
  auto* run_cmd = app.add_subcommand("run", "run the dynamics on a problem from JSON");
  common(run_cmd, true);
  auto* bench = app.add_subcommand("bench", "resource-allocation benchmark");
  common(bench, true);
  auto* dual = app.add_subcommand("dualbound", "distributed bound on the optimal dual set");
  common(dual, false);
  dual->add_option("--seed", f.seed, "seed for random graphs");
  auto* bound = app.add_subcommand("bound", "print bound constants and envelope");
  common(bound, false);
  bound->add_option("--seed", f.seed, "random seed");
  bound->add_option("--T", f.T, "horizon for the envelope value");
  auto* check = app.add_subcommand("check", "check a trace CSV against the disagreement and envelope bounds");
  check->add_option("--trace", f.trace, "trace CSV");
  check->add_option("--config", f.config, "unused; accepted for symmetry");
  auto* oracle = app.add_subcommand("oracle", "centralized reference solution of a benchmark instance");
  common(oracle, false);
  oracle->add_option("--seed", f.seed, "random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (run_cmd->parsed()) return cmd_run(f);
    if (bench->parsed()) return cmd_bench(f);
    if (dual->parsed()) return cmd_dualbound(f);
    if (bound->parsed()) return cmd_bound(f);
    if (check->parsed()) return cmd_check(f);
    if (oracle->parsed()) return cmd_oracle(f);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
