#pragma once

// JSON formats for graphs, sets, problems and experiment configs; CSV
// traces; atomic file output.

#include <saddlenet/benchmark.hpp>
#include <saddlenet/common.hpp>
#include <saddlenet/copt.hpp>
#include <saddlenet/dynamics.hpp>
#include <saddlenet/graph.hpp>
#include <saddlenet/projection.hpp>
#include <saddlenet/quadratic.hpp>
#include <saddlenet/schedule.hpp>

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <memory>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

namespace saddlenet::io {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Helpers

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  require(j.is_object(), where + ": expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ValidationError(where + ": unknown key '" + key + "'");
  }
}

template <class T>
T get(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ValidationError(where + ": missing key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(where + ": bad value for '" + key + "': " + e.what());
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return get<T>(j, key, where);
}

inline Vector to_vector(const json& j, const std::string& where) {
  require(j.is_array(), where + ": expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) {
    require(j[k].is_number(), where + ": expected an array of numbers");
    v(static_cast<Eigen::Index>(k)) = j[k].get<double>();
  }
  return v;
}

inline Matrix to_matrix(const json& j, const std::string& where) {
  require(j.is_array(), where + ": expected an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows == 0 ? 0 : static_cast<Eigen::Index>(j[0].size());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Vector row = to_vector(j[r], where);
    require(row.size() == cols, where + ": ragged matrix");
    m.row(r) = row.transpose();
  }
  return m;
}

inline json from_vector(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

inline json from_matrix(const Matrix& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(from_vector(m.row(r).transpose()));
  return out;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("'" + path + "' is not valid JSON: " + e.what());
  }
}

/// Writes to a temporary file in the same directory, then renames it over
/// the target.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeFailure("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw RuntimeFailure("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Graphs

inline json graph_to_json(const WeightedDigraph& g) {
  json edges = json::array();
  for (const auto& e : g.edges()) edges.push_back({e.from, e.to, e.weight});
  return {{"n", g.size()}, {"edges", edges}};
}

inline WeightedDigraph graph_from_json(const json& j) {
  const std::string where = "graph";
  check_keys(j, {"n", "edges"}, where);
  const int n = get<int>(j, "n", where);
  require(n >= 1, where + ": n must be positive");
  std::vector<Edge> edges;
  for (const auto& e : get<json>(j, "edges", where)) {
    require(e.is_array() && e.size() == 3, where + ": each edge is [i, j, weight]");
    edges.push_back({e[0].get<int>(), e[1].get<int>(), e[2].get<double>()});
  }
  return WeightedDigraph::from_edges(n, edges);
}

inline json sequence_to_json(const DigraphSequence& s) {
  json graphs = json::array();
  for (const auto& g : s.graphs()) graphs.push_back(graph_to_json(g));
  return {{"B", s.window()}, {"graphs", graphs}};
}

inline DigraphSequence sequence_from_json(const json& j) {
  const std::string where = "graph sequence";
  check_keys(j, {"B", "graphs"}, where);
  std::vector<WeightedDigraph> graphs;
  for (const auto& g : get<json>(j, "graphs", where)) graphs.push_back(graph_from_json(g));
  return DigraphSequence(std::move(graphs), get<int>(j, "B", where));
}

// ---------------------------------------------------------------------------
// Sets

inline ConvexSet set_from_json(const json& j) {
  const std::string where = "set";
  require(j.is_object(), where + ": expected an object");
  const auto type = get<std::string>(j, "type", where);
  auto radius = [&] {
    if (j.contains("r")) return get<double>(j, "r", where);
    return get<double>(j, "radius", where);
  };
  if (type == "full") {
    check_keys(j, {"type", "dim"}, where);
    return ConvexSet::full(get<int>(j, "dim", where));
  }
  if (type == "orthant") {
    check_keys(j, {"type", "dim"}, where);
    return ConvexSet::orthant(get<int>(j, "dim", where));
  }
  if (type == "ball") {
    check_keys(j, {"type", "dim", "r", "radius"}, where);
    return ConvexSet::ball(get_or<int>(j, "dim", 1, where), radius());
  }
  if (type == "orthant_ball") {
    check_keys(j, {"type", "dim", "r", "radius"}, where);
    return ConvexSet::orthant_ball(get_or<int>(j, "dim", 1, where), radius());
  }
  if (type == "box") {
    check_keys(j, {"type", "dim", "lower", "upper"}, where);
    const json& lo = j.at("lower");
    const json& hi = j.at("upper");
    if (lo.is_number() && hi.is_number())
      return ConvexSet::box(get_or<int>(j, "dim", 1, where), lo.get<double>(), hi.get<double>());
    return ConvexSet::box(to_vector(lo, where), to_vector(hi, where));
  }
  if (type == "product") {
    check_keys(j, {"type", "parts"}, where);
    std::vector<ConvexSet> parts;
    for (const auto& p : get<json>(j, "parts", where)) parts.push_back(set_from_json(p));
    return ConvexSet::product(std::move(parts));
  }
  throw ValidationError(where + ": unknown type '" + type + "'");
}

inline json set_to_json(const ConvexSet& s) {
  return std::visit(
      [](const auto& v) -> json {
        using S = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<S, sets::FullSpace>) return {{"type", "full"}, {"dim", v.dim}};
        else if constexpr (std::is_same_v<S, sets::NonnegOrthant>) return {{"type", "orthant"}, {"dim", v.dim}};
        else if constexpr (std::is_same_v<S, sets::CenteredBall>)
          return {{"type", "ball"}, {"dim", v.dim}, {"r", v.radius}};
        else if constexpr (std::is_same_v<S, sets::OrthantBall>)
          return {{"type", "orthant_ball"}, {"dim", v.dim}, {"r", v.radius}};
        else if constexpr (std::is_same_v<S, sets::Box>)
          return {{"type", "box"}, {"lower", from_vector(v.lower)}, {"upper", from_vector(v.upper)}};
        else {
          json parts = json::array();
          for (const auto& p : v.parts) parts.push_back(set_to_json(p));
          return {{"type", "product"}, {"parts", parts}};
        }
      },
      s.variant());
}

// ---------------------------------------------------------------------------
// Schedules

inline Schedule schedule_from_json(const json& j) {
  const std::string where = "schedule";
  if (j.is_string()) return schedule_from_json(json{{"type", j.get<std::string>()}});
  const auto type = get<std::string>(j, "type", where);
  Schedule s;
  if (type == "doubling") {
    check_keys(j, {"type"}, where);
    s = schedules::DoublingTrick{};
  } else if (type == "constant") {
    check_keys(j, {"type", "eta"}, where);
    s = schedules::Constant{get<double>(j, "eta", where)};
  } else if (type == "inv_sqrt") {
    check_keys(j, {"type", "c"}, where);
    s = schedules::InvSqrt{get<double>(j, "c", where)};
  } else if (type == "harmonic") {
    check_keys(j, {"type", "c"}, where);
    s = schedules::Harmonic{get<double>(j, "c", where)};
  } else {
    throw ValidationError(where + ": unknown type '" + type + "'");
  }
  validate(s);
  return s;
}

inline json schedule_to_json(const Schedule& s) {
  return std::visit(
      [](const auto& v) -> json {
        using S = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<S, schedules::DoublingTrick>) return {{"type", "doubling"}};
        else if constexpr (std::is_same_v<S, schedules::Constant>) return {{"type", "constant"}, {"eta", v.eta}};
        else if constexpr (std::is_same_v<S, schedules::InvSqrt>) return {{"type", "inv_sqrt"}, {"c", v.c}};
        else return {{"type", "harmonic"}, {"c", v.c}};
      },
      s);
}

// ---------------------------------------------------------------------------
// Separable problems. Local functions act on x = (w^i, D).

namespace detail {

struct QuadForm {
  Matrix Q;  // may be empty for linear
  Vector a;
  double offset = 0.0;

  double value(const Vector& x) const {
    double v = a.dot(x) + offset;
    if (Q.size() > 0) v += 0.5 * x.dot(Q * x);
    return v;
  }
  Vector grad(const Vector& x) const { return Q.size() > 0 ? Vector(Q * x + a) : a; }
};

inline QuadForm quad_from_json(const json& j, int nx, bool quadratic, const std::string& where) {
  QuadForm f;
  const char* lin = j.contains("c") ? "c" : "a";
  f.a = j.contains(lin) ? to_vector(j.at(lin), where) : Vector::Zero(nx);
  require(f.a.size() == nx, where + ": linear term must have dim + d entries");
  f.offset = get_or<double>(j, "offset", 0.0, where);
  if (quadratic) {
    f.Q = to_matrix(get<json>(j, "Q", where), where);
    require(f.Q.rows() == nx && f.Q.cols() == nx, where + ": Q must be (dim + d) square");
    require((f.Q - f.Q.transpose()).norm() <= 1e-12 * (1.0 + f.Q.norm()), where + ": Q must be symmetric");
    require(Eigen::SelfAdjointEigenSolver<Matrix>(f.Q).eigenvalues().minCoeff() >= -1e-10,
            where + ": Q must be positive semidefinite");
  }
  return f;
}

inline Vector join(const Vector& w, const Vector& D) {
  Vector x(w.size() + D.size());
  x << w, D;
  return x;
}

}  // namespace detail

/// Parses {"m", "d", "global_set", "agents": [{"dim", "set", "objective",
/// "constraints"}]}, or {"benchmark": {"c", "d", "b"}}.
inline SeparableProblem separable_from_json(const json& j) {
  const std::string where = "problem";
  if (j.contains("benchmark")) {
    check_keys(j, {"benchmark"}, where);
    const json& bj = j.at("benchmark");
    check_keys(bj, {"c", "d", "b"}, "benchmark");
    BenchmarkInstance inst{to_vector(bj.at("c"), "benchmark.c"), to_vector(bj.at("d"), "benchmark.d"),
                           get<double>(bj, "b", "benchmark")};
    inst.validate();
    return benchmark_separable(inst);
  }
  check_keys(j, {"m", "d", "global_set", "agents"}, where);
  SeparableProblem sep;
  sep.m = get<int>(j, "m", where);
  sep.d = get_or<int>(j, "d", 0, where);
  sep.global_set = j.contains("global_set") ? set_from_json(j.at("global_set")) : ConvexSet::full(sep.d);
  const int m = sep.m, nd = sep.d;
  int idx = 0;
  for (const auto& aj : get<json>(j, "agents", where)) {
    const std::string aw = "agent " + std::to_string(idx++);
    check_keys(aj, {"dim", "set", "objective", "constraints"}, aw);
    AgentFunctions a;
    a.dim = get<int>(aj, "dim", aw);
    a.set = set_from_json(get<json>(aj, "set", aw));
    const int nw = a.dim, nx = nw + nd;

    const json& oj = get<json>(aj, "objective", aw);
    const auto otype = get<std::string>(oj, "type", aw + ".objective");
    require(otype == "linear" || otype == "quadratic", aw + ": objective type must be linear or quadratic");
    check_keys(oj, {"type", "c", "Q", "offset"}, aw + ".objective");
    auto obj = std::make_shared<detail::QuadForm>(
        detail::quad_from_json(oj, nx, otype == "quadratic", aw + ".objective"));
    a.f = [obj](const Vector& w, const Vector& D) { return obj->value(detail::join(w, D)); };
    a.f_grad_w = [obj, nw](const Vector& w, const Vector& D) -> Vector {
      return obj->grad(detail::join(w, D)).head(nw);
    };
    a.f_grad_D = [obj, nd](const Vector& w, const Vector& D) -> Vector {
      return obj->grad(detail::join(w, D)).tail(nd);
    };

    const json& cj = get<json>(aj, "constraints", aw);
    require(cj.is_array() && static_cast<int>(cj.size()) == m, aw + ": need exactly m constraints");
    std::vector<std::function<double(const Vector&)>> gv;
    std::vector<std::function<Vector(const Vector&)>> gg;
    for (std::size_t l = 0; l < cj.size(); ++l) {
      const std::string cw = aw + ".constraints[" + std::to_string(l) + "]";
      const auto ctype = get<std::string>(cj[l], "type", cw);
      if (ctype == "linear" || ctype == "quadratic") {
        check_keys(cj[l], {"type", "a", "Q", "offset"}, cw);
        auto q = std::make_shared<detail::QuadForm>(detail::quad_from_json(cj[l], nx, ctype == "quadratic", cw));
        gv.push_back([q](const Vector& x) { return q->value(x); });
        gg.push_back([q](const Vector& x) { return q->grad(x); });
      } else if (ctype == "log") {
        // -sum_k d_k log(1 + w_k) + offset
        check_keys(cj[l], {"type", "d", "offset"}, cw);
        const json& dj = cj[l].at("d");
        const Vector dv = dj.is_number() ? Vector::Constant(nw, dj.get<double>()) : to_vector(dj, cw);
        require(dv.size() == nw && (dv.array() >= 0.0).all(), cw + ": d must be nonnegative with dim entries");
        const sets::Box* box = a.set.as_box();
        require(box != nullptr && (box->lower.array() > -1.0).all(), cw + ": log constraint needs a box with lower > -1");
        const double off = get_or<double>(cj[l], "offset", 0.0, cw);
        gv.push_back([dv, off, nw](const Vector& x) { return -(dv.array() * x.head(nw).array().log1p()).sum() + off; });
        gg.push_back([dv, nw, nx](const Vector& x) -> Vector {
          Vector g = Vector::Zero(nx);
          g.head(nw) = -(dv.array() / (1.0 + x.head(nw).array())).matrix();
          return g;
        });
      } else {
        throw ValidationError(cw + ": unknown constraint type '" + ctype + "'");
      }
    }
    auto gvals = std::make_shared<decltype(gv)>(std::move(gv));
    auto ggrads = std::make_shared<decltype(gg)>(std::move(gg));
    a.g = [gvals, m](const Vector& w, const Vector& D) -> Vector {
      const Vector x = detail::join(w, D);
      Vector out(m);
      for (int l = 0; l < m; ++l) out(l) = (*gvals)[l](x);
      return out;
    };
    a.g_jac_w = [ggrads, m, nw](const Vector& w, const Vector& D) -> Matrix {
      const Vector x = detail::join(w, D);
      Matrix out(m, nw);
      for (int l = 0; l < m; ++l) out.row(l) = (*ggrads)[l](x).head(nw).transpose();
      return out;
    };
    a.g_jac_D = [ggrads, m, nd](const Vector& w, const Vector& D) -> Matrix {
      const Vector x = detail::join(w, D);
      Matrix out(m, nd);
      for (int l = 0; l < m; ++l) out.row(l) = (*ggrads)[l](x).tail(nd).transpose();
      return out;
    };
    sep.agents.push_back(std::move(a));
  }
  sep.validate();
  return sep;
}

// ---------------------------------------------------------------------------
// Benchmark instances and experiment configs

inline BenchmarkInstance instance_from_json(const json& j) {
  const std::string where = "instance";
  check_keys(j, {"c", "d", "b"}, where);
  BenchmarkInstance inst{to_vector(get<json>(j, "c", where), where + ".c"),
                         to_vector(get<json>(j, "d", where), where + ".d"), get<double>(j, "b", where)};
  inst.validate();
  return inst;
}

inline json instance_to_json(const BenchmarkInstance& inst) {
  return {{"c", from_vector(inst.c)}, {"d", from_vector(inst.d)}, {"b", inst.b}};
}

inline GraphSpec graph_spec_from_json(const json& j) {
  const std::string where = "graph";
  GraphSpec g;
  const auto type = get<std::string>(j, "type", where);
  if (type == "small_world") {
    check_keys(j, {"type", "k", "p"}, where);
    g.kind = "small_world";
    g.k = get_or<int>(j, "k", 4, where);
    g.p = get_or<double>(j, "p", 0.1, where);
  } else if (type == "complete") {
    check_keys(j, {"type"}, where);
    g.kind = "complete";
  } else if (type == "sequence") {
    check_keys(j, {"type", "B", "graphs"}, where);
    g.kind = "explicit";
    json body = j;
    body.erase("type");
    g.sequence = std::make_shared<const DigraphSequence>(sequence_from_json(body));
  } else {
    throw ValidationError(where + ": unknown type '" + type + "'");
  }
  return g;
}

inline json graph_spec_to_json(const GraphSpec& g) {
  if (g.kind == "small_world") return {{"type", "small_world"}, {"k", g.k}, {"p", g.p}};
  if (g.kind == "complete") return {{"type", "complete"}};
  json j = sequence_to_json(*g.sequence);
  j["type"] = "sequence";
  return j;
}

inline ExperimentConfig config_from_json(const json& j) {
  const std::string where = "config";
  check_keys(j,
             {"agents", "seed", "b", "instance", "graph", "sigma", "delta_tilde_prime", "allow_sigma_outside_window",
              "schedule", "T", "stride", "r", "gamma_safety", "oracle_tol"},
             where);
  ExperimentConfig cfg;
  cfg.agents = get_or<int>(j, "agents", cfg.agents, where);
  cfg.seed = get_or<std::uint64_t>(j, "seed", cfg.seed, where);
  if (j.contains("b") && !j.at("b").is_null()) cfg.b = get<double>(j, "b", where);
  if (j.contains("instance")) {
    const auto inst = instance_from_json(j.at("instance"));
    cfg.c = inst.c;
    cfg.d = inst.d;
    cfg.b = inst.b;
    cfg.agents = inst.size();
  }
  if (j.contains("graph")) cfg.graph = graph_spec_from_json(j.at("graph"));
  cfg.sigma = get_or<double>(j, "sigma", cfg.sigma, where);
  cfg.delta_tilde_prime = get_or<double>(j, "delta_tilde_prime", cfg.delta_tilde_prime, where);
  cfg.allow_sigma_outside_window = get_or<bool>(j, "allow_sigma_outside_window", false, where);
  if (j.contains("schedule")) cfg.schedule = schedule_from_json(j.at("schedule"));
  cfg.T = get_or<long long>(j, "T", cfg.T, where);
  cfg.stride = get_or<long long>(j, "stride", cfg.stride, where);
  if (j.contains("r") && !j.at("r").is_null()) cfg.r = get<double>(j, "r", where);
  cfg.gamma_safety = get_or<double>(j, "gamma_safety", cfg.gamma_safety, where);
  cfg.oracle_tol = get_or<double>(j, "oracle_tol", cfg.oracle_tol, where);
  cfg.validate();
  return cfg;
}

inline json config_to_json(const ExperimentConfig& cfg) {
  json j = {{"agents", cfg.agents},
            {"seed", cfg.seed},
            {"graph", graph_spec_to_json(cfg.graph)},
            {"sigma", cfg.sigma},
            {"delta_tilde_prime", cfg.delta_tilde_prime},
            {"allow_sigma_outside_window", cfg.allow_sigma_outside_window},
            {"schedule", schedule_to_json(cfg.schedule)},
            {"T", cfg.T},
            {"stride", cfg.stride},
            {"gamma_safety", cfg.gamma_safety},
            {"oracle_tol", cfg.oracle_tol}};
  j["b"] = cfg.b ? json(*cfg.b) : json(nullptr);
  j["r"] = cfg.r ? json(*cfg.r) : json(nullptr);
  if (cfg.c) j["instance"] = {{"c", from_vector(*cfg.c)}, {"d", from_vector(*cfg.d)}, {"b", cfg.b.value_or(cfg.agents / 10.0)}};
  return j;
}

// ---------------------------------------------------------------------------
// Trace CSV

inline constexpr const char* kTraceSchema = "# saddlenet-trace v1";
inline constexpr const char* kTraceHeader =
    "t,eta,phi_at_avg,saddle_gap,disagreement_D,disagreement_z,cost_err,constraint_violation,"
    "cum_disagreement_D,cum_disagreement_z,max_input_D,max_input_z,cum_input_D,cum_input_z";

namespace detail {
inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
inline double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) throw ValidationError("trace CSV: bad number '" + s + "'");
  return v;
}
}  // namespace detail

/// Run-level data that the offline checks need, stored on the second line.
inline json trace_meta(const RunTrace& trace) {
  return {{"agents", trace.agents},       {"d_dim", trace.d_dim},     {"z_dim", trace.z_dim},
          {"sigma", trace.sigma},         {"lambda_bar", trace.lambda_bar},
          {"norm_D1", trace.norm_D1},     {"norm_z1", trace.norm_z1}};
}

inline std::string trace_to_csv(const RunTrace& trace, const json& meta) {
  std::ostringstream os;
  os << kTraceSchema << "\n# meta: " << meta.dump() << "\n" << kTraceHeader << "\n";
  for (const auto& r : trace.records) {
    os << r.t;
    for (double v : {r.eta, r.phi_at_avg, r.saddle_gap, r.disagreement_D, r.disagreement_z, r.cost_err,
                     r.constraint_violation, r.cum_disagreement_D, r.cum_disagreement_z, r.max_input_D,
                     r.max_input_z, r.cum_input_D, r.cum_input_z})
      os << ',' << detail::fmt(v);
    os << '\n';
  }
  return os.str();
}

struct LoadedTrace {
  json meta;
  RunTrace trace;
};

inline LoadedTrace trace_from_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kTraceSchema) throw ValidationError("trace CSV: missing schema line");
  if (!std::getline(in, line) || line.rfind("# meta: ", 0) != 0) throw ValidationError("trace CSV: missing meta line");
  LoadedTrace out;
  try {
    out.meta = json::parse(line.substr(8));
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("trace CSV: bad meta JSON: ") + e.what());
  }
  if (!std::getline(in, line) || line != kTraceHeader) throw ValidationError("trace CSV: unexpected header");
  auto& tr = out.trace;
  tr.agents = get<int>(out.meta, "agents", "trace meta");
  tr.d_dim = get<int>(out.meta, "d_dim", "trace meta");
  tr.z_dim = get<int>(out.meta, "z_dim", "trace meta");
  tr.sigma = get<double>(out.meta, "sigma", "trace meta");
  tr.lambda_bar = get<double>(out.meta, "lambda_bar", "trace meta");
  tr.norm_D1 = get<double>(out.meta, "norm_D1", "trace meta");
  tr.norm_z1 = get<double>(out.meta, "norm_z1", "trace meta");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 14) throw ValidationError("trace CSV: expected 14 columns, got " + std::to_string(cells.size()));
    TraceRecord r;
    r.t = static_cast<long long>(detail::parse_double(cells[0]));
    double* fields[] = {&r.eta,          &r.phi_at_avg,        &r.saddle_gap,         &r.disagreement_D,
                        &r.disagreement_z, &r.cost_err,        &r.constraint_violation, &r.cum_disagreement_D,
                        &r.cum_disagreement_z, &r.max_input_D, &r.max_input_z,        &r.cum_input_D,
                        &r.cum_input_z};
    for (int k = 0; k < 13; ++k) *fields[k] = detail::parse_double(cells[k + 1]);
    tr.records.push_back(r);
  }
  return out;
}

inline LoadedTrace read_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  return trace_from_csv(in);
}

}  // namespace saddlenet::io
