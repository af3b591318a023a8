#include "iqcsync/scenario.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

namespace iqcsync {

using nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // Translate the byte offset into a line number for the diagnostic.
    const std::size_t upto = std::min(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    throw ConfigError("", "JSON syntax error near line " + std::to_string(line) + ": " + e.what());
  }
}

void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items())
    if (!ok.count(key)) throw ConfigError(path.empty() ? key : path + "." + key, "unknown field");
}

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

const json& require(const json& j, const std::string& path, const char* key) {
  if (!j.contains(key)) throw ConfigError(join(path, key), "missing required field");
  return j.at(key);
}

double get_number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(path, "must be finite");
  return v;
}

double number_or(const json& j, const std::string& path, const char* key, double fallback) {
  return j.contains(key) ? get_number(j.at(key), join(path, key)) : fallback;
}

int get_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ConfigError(path, "expected an integer");
  return j.get<int>();
}

std::string get_string(const json& j, const std::string& path) {
  if (!j.is_string()) throw ConfigError(path, "expected a string");
  return j.get<std::string>();
}

Vector get_vector(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path, "expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k)
    v(static_cast<Eigen::Index>(k)) = get_number(j[k], path + "[" + std::to_string(k) + "]");
  return v;
}

// Row-major array of rows.
Matrix get_matrix(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw ConfigError(path, "expected a nonempty array of rows");
  const std::size_t rows = j.size();
  if (!j[0].is_array() || j[0].empty()) throw ConfigError(path + "[0]", "expected a nonempty row");
  const std::size_t cols = j[0].size();
  Matrix M(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::string rp = path + "[" + std::to_string(r) + "]";
    if (!j[r].is_array() || j[r].size() != cols) throw ConfigError(rp, "rows must all have " + std::to_string(cols) + " entries");
    for (std::size_t c = 0; c < cols; ++c)
      M(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = get_number(j[r][c], rp + "[" + std::to_string(c) + "]");
  }
  return M;
}

json matrix_json(const Matrix& M) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
    rows.push_back(row);
  }
  return rows;
}

std::vector<Edge> get_edges(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path, "expected an array of [i, j] pairs");
  std::vector<Edge> edges;
  for (std::size_t k = 0; k < j.size(); ++k) {
    const std::string ep = path + "[" + std::to_string(k) + "]";
    if (!j[k].is_array() || j[k].size() != 2) throw ConfigError(ep, "expected a pair [i, j]");
    edges.emplace_back(get_int(j[k][0], ep + "[0]"), get_int(j[k][1], ep + "[1]"));
  }
  return edges;
}

std::vector<int> get_ints(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path, "expected an array of integers");
  std::vector<int> v;
  for (std::size_t k = 0; k < j.size(); ++k) v.push_back(get_int(j[k], path + "[" + std::to_string(k) + "]"));
  return v;
}

// Runs a library validation and reattributes its message to a config field.
template <class F>
void validated(const std::string& path, F&& f) {
  try {
    f();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path, e.what());
  }
}

struct ModelBlock {
  SystemModel model;
  std::optional<double> pendulum_length;
};

ModelBlock parse_model(const json& j) {
  const std::string path = "model";
  ModelBlock out;
  if (j.contains("preset")) {
    check_keys(j, path, {"preset", "params"});
    const std::string preset = get_string(j.at("preset"), "model.preset");
    if (preset != "pendulum") throw ConfigError("model.preset", "unknown preset '" + preset + "'");
    PendulumParams prm;
    if (j.contains("params")) {
      const json& p = j.at("params");
      check_keys(p, "model.params", {"mass", "length", "gravity", "k1", "k2"});
      prm.mass = number_or(p, "model.params", "mass", prm.mass);
      prm.length = number_or(p, "model.params", "length", prm.length);
      prm.gravity = number_or(p, "model.params", "gravity", prm.gravity);
      prm.k1 = number_or(p, "model.params", "k1", prm.k1);
      prm.k2 = number_or(p, "model.params", "k2", prm.k2);
    }
    if (!(prm.mass > 0.0) || !(prm.length > 0.0)) throw ConfigError("model.params", "mass and length must be positive");
    out.model = pendulum_model(prm);
    out.pendulum_length = prm.length;
  } else {
    check_keys(j, path, {"A", "B1", "B2", "C", "Q", "R"});
    SystemModel& m = out.model;
    m.A = get_matrix(require(j, path, "A"), "model.A");
    m.B1 = get_matrix(require(j, path, "B1"), "model.B1");
    m.B2 = get_matrix(require(j, path, "B2"), "model.B2");
    m.C = get_matrix(require(j, path, "C"), "model.C");
    m.Q = get_matrix(require(j, path, "Q"), "model.Q");
    m.R = get_matrix(require(j, path, "R"), "model.R");
    for (const auto& [M, field] : {std::pair{&m.Q, "model.Q"}, std::pair{&m.R, "model.R"}})
      if (M->rows() == M->cols() && (!is_symmetric(*M, 1e-12) || !is_positive_definite(*M)))
        throw ConfigError(field, "must be symmetric positive definite");
  }
  validated(path, [&] { out.model.validate(); });
  return out;
}

Topology parse_topology(const json& j) {
  const std::string path = "topology";
  Topology t;
  if (j.contains("preset")) {
    check_keys(j, path, {"preset"});
    const std::string preset = get_string(j.at("preset"), "topology.preset");
    if (preset != "pendulum") throw ConfigError("topology.preset", "unknown preset '" + preset + "'");
    t = pendulum_topology();
  } else {
    check_keys(j, path, {"N", "control_edges", "phys_edges", "g", "d"});
    t.N = get_int(require(j, path, "N"), "topology.N");
    if (t.N < 1) throw ConfigError("topology.N", "must be at least 1");
    t.control_edges = j.contains("control_edges") ? get_edges(j.at("control_edges"), "topology.control_edges")
                                                   : std::vector<Edge>{};
    t.phys_edges =
        j.contains("phys_edges") ? get_edges(j.at("phys_edges"), "topology.phys_edges") : std::vector<Edge>{};
    t.g = get_ints(require(j, path, "g"), "topology.g");
    t.d = j.contains("d") ? get_ints(j.at("d"), "topology.d") : std::vector<int>(static_cast<std::size_t>(t.N), 0);
  }
  validated(path, [&] { t.validate(); });
  return t;
}

UncertaintyOp parse_op(const json& j, const std::string& path, const SystemModel& model,
                       std::optional<double> pendulum_length, std::initializer_list<const char*> extra_keys) {
  std::vector<const char*> keys = {"kind", "C", "schedule", "tau", "a"};
  keys.insert(keys.end(), extra_keys.begin(), extra_keys.end());
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  for (const auto& [key, value] : j.items())
    if (std::find_if(keys.begin(), keys.end(), [&](const char* k) { return key == k; }) == keys.end())
      throw ConfigError(join(path, key), "unknown field");

  const Matrix C = j.contains("C") ? get_matrix(j.at("C"), join(path, "C")) : model.C;
  const int m = model.m();
  const std::string kind = get_string(require(j, path, "kind"), join(path, "kind"));
  if (kind == "none") return UncertaintyOp::norm_bounded(C, DeltaSchedule::constant(Matrix::Zero(m, C.rows())));
  if (kind == "input_delay") return UncertaintyOp::input_delay(C, get_number(require(j, path, "tau"), join(path, "tau")));
  if (kind == "first_order_lag") return UncertaintyOp::first_order_lag(C, get_number(require(j, path, "a"), join(path, "a")));
  if (kind != "norm_bounded")
    throw ConfigError(join(path, "kind"), "expected none, norm_bounded, input_delay or first_order_lag");

  const std::string sp = join(path, "schedule");
  const json& s = require(j, path, "schedule");
  const std::string type = get_string(require(s, sp, "type"), join(sp, "type"));
  if (type == "constant") {
    check_keys(s, sp, {"type", "delta"});
    return UncertaintyOp::norm_bounded(C, DeltaSchedule::constant(get_matrix(require(s, sp, "delta"), join(sp, "delta"))));
  }
  if (type == "pendulum") {
    check_keys(s, sp, {"type", "a0", "a1", "length"});
    double length = 0.0;
    if (s.contains("length")) {
      length = get_number(s.at("length"), join(sp, "length"));
    } else if (pendulum_length) {
      length = *pendulum_length;
    } else {
      throw ConfigError(join(sp, "length"), "required unless the model is the pendulum preset");
    }
    if (!(length > 0.0)) throw ConfigError(join(sp, "length"), "must be positive");
    if (m != C.rows()) throw ConfigError(sp, "a scalar schedule needs rows(C) equal to the columns of B2");
    return UncertaintyOp::norm_bounded(
        C, DeltaSchedule::pendulum(get_number(require(s, sp, "a0"), join(sp, "a0")),
                                   get_number(require(s, sp, "a1"), join(sp, "a1")), length, m));
  }
  if (type == "table") {
    check_keys(s, sp, {"type", "times", "values"});
    const Vector times = get_vector(require(s, sp, "times"), join(sp, "times"));
    const Vector values = get_vector(require(s, sp, "values"), join(sp, "values"));
    if (m != C.rows()) throw ConfigError(sp, "a scalar schedule needs rows(C) equal to the columns of B2");
    std::vector<double> tv(times.data(), times.data() + times.size());
    std::vector<double> vv(values.data(), values.data() + values.size());
    DeltaSchedule sched;
    validated(sp, [&] { sched = DeltaSchedule::table(std::move(tv), std::move(vv), m); });
    return UncertaintyOp::norm_bounded(C, std::move(sched));
  }
  throw ConfigError(join(sp, "type"), "expected constant, pendulum or table");
}

void parse_uncertainty(const json& j, ScenarioConfig& cfg, std::optional<double> pendulum_length) {
  const std::string path = "uncertainty";
  const auto check_op = [&](const UncertaintyOp& op, const std::string& p) {
    validated(p, [&] { op.validate(cfg.T); });
    if (op.input_dim() != cfg.model.n()) throw ConfigError(p + ".C", "must have n columns");
    if (op.output_dim() != cfg.model.m()) throw ConfigError(p, "output dimension must equal the columns of B2");
  };
  if (j.contains("edges")) {
    check_keys(j, path, {"edges"});
    const json& edges = j.at("edges");
    if (!edges.is_array()) throw ConfigError("uncertainty.edges", "expected an array");
    for (std::size_t k = 0; k < edges.size(); ++k) {
      const std::string ep = "uncertainty.edges[" + std::to_string(k) + "]";
      const int node = get_int(require(edges[k], ep, "node"), ep + ".node");
      const int neighbor = get_int(require(edges[k], ep, "neighbor"), ep + ".neighbor");
      if (node < 0 || node > cfg.topo.N || neighbor < 0 || neighbor > cfg.topo.N)
        throw ConfigError(ep, "node label out of range");
      if (cfg.couplings.contains(node, neighbor)) throw ConfigError(ep, "direction listed twice");
      UncertaintyOp op = parse_op(edges[k], ep, cfg.model, pendulum_length, {"node", "neighbor"});
      check_op(op, ep);
      validated(ep, [&] { cfg.couplings.set(node, neighbor, std::move(op)); });
    }
    validated(path, [&] { check_couplings(cfg.couplings, cfg.topo); });
    return;
  }
  UncertaintyOp op = parse_op(j, path, cfg.model, pendulum_length, {});
  check_op(op, path);
  cfg.couplings = EdgeCouplingSet::uniform(cfg.topo.phys_edges, cfg.topo.d, op);
  cfg.uniform_op = std::move(op);
}

Objective objective_from_string(const std::string& s, const std::string& path) {
  if (s == "feasible") return Objective::Feasibility;
  if (s == "gamma") return Objective::Gamma;
  if (s == "trace") return Objective::Trace;
  throw ConfigError(path, "expected feasible, gamma or trace");
}

sdp::Status status_from_string(const std::string& s) {
  for (auto st : {sdp::Status::Feasible, sdp::Status::Optimal, sdp::Status::Infeasible, sdp::Status::Unbounded,
                  sdp::Status::NumericalFailure})
    if (sdp::to_string(st) == s) return st;
  throw ConfigError("status", "unknown status '" + s + "'");
}

}  // namespace

ScenarioConfig parse_config(const std::string& json_text) {
  const json j = parse_json(json_text);
  check_keys(j, "", {"name", "model", "topology", "uncertainty", "synthesis", "simulation", "consensus"});
  ScenarioConfig cfg;
  cfg.name = j.contains("name") ? get_string(j.at("name"), "name") : "scenario";

  const ModelBlock mb = parse_model(require(j, "", "model"));
  cfg.model = mb.model;
  cfg.topo = parse_topology(require(j, "", "topology"));
  const int n = cfg.model.n(), N = cfg.topo.N;

  if (j.contains("simulation")) {
    const json& s = j.at("simulation");
    const std::string sp = "simulation";
    check_keys(s, sp, {"T", "h", "seed", "leader", "followers", "csv_stride"});
    cfg.T = number_or(s, sp, "T", cfg.T);
    cfg.h = number_or(s, sp, "h", cfg.h);
    if (!(cfg.T > 0.0) || !(cfg.h > 0.0) || cfg.h > cfg.T) throw ConfigError(sp, "need 0 < h <= T");
    const double steps = cfg.T / cfg.h;
    if (std::abs(steps - std::round(steps)) > 1e-9 * steps) throw ConfigError("simulation.h", "must divide T");
    if (s.contains("seed")) {
      if (!s.at("seed").is_number_unsigned()) throw ConfigError("simulation.seed", "expected a nonnegative integer");
      cfg.seed = s.at("seed").get<std::uint64_t>();
    }
    if (s.contains("csv_stride")) {
      cfg.csv_stride = get_int(s.at("csv_stride"), "simulation.csv_stride");
      if (cfg.csv_stride < 1) throw ConfigError("simulation.csv_stride", "must be at least 1");
    }
    if (s.contains("leader")) {
      cfg.leader_state = get_vector(s.at("leader"), "simulation.leader");
      if (cfg.leader_state.size() != n) throw ConfigError("simulation.leader", "must have n entries");
    }
    if (s.contains("followers")) {
      const json& f = s.at("followers");
      if (!f.is_array() || static_cast<int>(f.size()) != N)
        throw ConfigError("simulation.followers", "expected N state vectors");
      std::vector<Vector> states;
      for (std::size_t k = 0; k < f.size(); ++k) {
        const std::string fp = "simulation.followers[" + std::to_string(k) + "]";
        states.push_back(get_vector(f[k], fp));
        if (states.back().size() != n) throw ConfigError(fp, "must have n entries");
      }
      cfg.follower_states = std::move(states);
    }
  }
  if (cfg.leader_state.size() == 0) {
    cfg.leader_state = Vector::Zero(n);
    cfg.leader_state(0) = 0.3;
  }

  parse_uncertainty(require(j, "", "uncertainty"), cfg, mb.pendulum_length);

  if (j.contains("synthesis")) {
    const json& s = j.at("synthesis");
    const std::string sp = "synthesis";
    check_keys(s, sp, {"method", "objective", "e0", "Mcov", "margin_scale", "tolerance", "max_iterations"});
    if (s.contains("method")) {
      try {
        cfg.method = method_from_string(get_string(s.at("method"), "synthesis.method"));
      } catch (const std::invalid_argument& e) {
        throw ConfigError("synthesis.method", e.what());
      }
    }
    if (s.contains("objective"))
      cfg.objective = objective_from_string(get_string(s.at("objective"), "synthesis.objective"), "synthesis.objective");
    if (s.contains("e0")) {
      cfg.e0 = get_vector(s.at("e0"), "synthesis.e0");
      if (cfg.e0->size() != static_cast<Eigen::Index>(N) * n) throw ConfigError("synthesis.e0", "must have N n entries");
    }
    if (s.contains("Mcov")) {
      cfg.Mcov = get_matrix(s.at("Mcov"), "synthesis.Mcov");
      if (cfg.Mcov->rows() != n || cfg.Mcov->cols() != n) throw ConfigError("synthesis.Mcov", "must be n x n");
      if (!is_symmetric(*cfg.Mcov, 1e-12 * (1.0 + cfg.Mcov->norm())) || !is_positive_definite(*cfg.Mcov))
        throw ConfigError("synthesis.Mcov", "must be symmetric positive definite");
    }
    cfg.synthesis.margin_scale = number_or(s, sp, "margin_scale", cfg.synthesis.margin_scale);
    cfg.synthesis.solver.tolerance = number_or(s, sp, "tolerance", cfg.synthesis.solver.tolerance);
    if (s.contains("max_iterations"))
      cfg.synthesis.solver.max_iterations = get_int(s.at("max_iterations"), "synthesis.max_iterations");
  }
  if (cfg.objective == Objective::Trace && !cfg.Mcov)
    throw ConfigError("synthesis.Mcov", "required by the trace objective");

  if (j.contains("consensus")) {
    const json& c = j.at("consensus");
    const std::string cp = "consensus";
    check_keys(c, cp, {"beta_fraction", "beta", "tol", "max_iterations"});
    cfg.beta_fraction = number_or(c, cp, "beta_fraction", cfg.beta_fraction);
    if (c.contains("beta")) cfg.beta = get_number(c.at("beta"), "consensus.beta");
    cfg.consensus_tol = number_or(c, cp, "tol", cfg.consensus_tol);
    if (c.contains("max_iterations"))
      cfg.consensus_max_iterations = get_int(c.at("max_iterations"), "consensus.max_iterations");
    if (!(cfg.consensus_tol > 0.0)) throw ConfigError("consensus.tol", "must be positive");
  }
  return cfg;
}

ScenarioConfig load_config(const std::string& path) { return parse_config(read_file(path)); }

Vector initial_state(const ScenarioConfig& cfg) {
  const int n = cfg.model.n(), N = cfg.topo.N;
  std::vector<Vector> followers;
  if (cfg.follower_states) {
    followers = *cfg.follower_states;
  } else if (cfg.e0) {
    for (int i = 0; i < N; ++i) followers.push_back(cfg.leader_state - cfg.e0->segment(static_cast<Eigen::Index>(i) * n, n));
  } else {
    std::mt19937_64 rng(cfg.seed);
    for (int i = 0; i < N; ++i) {
      Vector x = Vector::Zero(n);
      x(0) = static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5;
      followers.push_back(x);
    }
  }
  return stack_states(cfg.leader_state, followers);
}

Vector initial_errors(const ScenarioConfig& cfg) {
  if (cfg.e0 && !cfg.follower_states) return *cfg.e0;
  const int n = cfg.model.n(), N = cfg.topo.N;
  const Vector x = initial_state(cfg);
  Vector e(static_cast<Eigen::Index>(N) * n);
  for (int i = 0; i < N; ++i) e.segment(i * n, n) = x.head(n) - x.segment((i + 1) * n, n);
  return e;
}

Certificate run_synthesis(const ScenarioConfig& cfg) {
  const SpectralData sd = spectral(cfg.topo);
  const EdgeCouplingSet* couplings = &cfg.couplings;
  switch (cfg.objective) {
    case Objective::Gamma:
      return optimize_bound(cfg.method, cfg.model, cfg.topo, sd, initial_errors(cfg), couplings, cfg.synthesis);
    case Objective::Trace:
      return optimize_trace(cfg.method, cfg.model, cfg.topo, sd, *cfg.Mcov, couplings, cfg.synthesis);
    case Objective::Feasibility:
      break;
  }
  const Vector e0 = initial_errors(cfg);
  switch (cfg.method) {
    case Method::Thm1: return synth_thm1(cfg.model, cfg.topo, sd, e0, cfg.synthesis);
    case Method::Thm2: return synth_thm2(cfg.model, cfg.topo, sd, e0, cfg.synthesis);
    case Method::Thm3: return synth_thm3(cfg.model, cfg.topo, sd, e0, cfg.synthesis);
    case Method::Thm4: return synth_thm4(cfg.model, cfg.topo, sd, cfg.couplings, e0, cfg.synthesis);
    case Method::Cor1: return synth_cor1(cfg.model, cfg.topo, sd, e0, cfg.synthesis);
  }
  throw std::logic_error("unhandled method");
}

std::string certificate_to_json(const Certificate& cert, const ScenarioConfig& cfg) {
  ojson j;
  j["format"] = "iqcsync-certificate";
  j["version"] = 1;
  j["scenario"] = cfg.name;
  j["method"] = to_string(cert.method);
  j["objective"] = to_string(cert.objective);
  j["status"] = sdp::to_string(cert.status);
  j["shape"] = {{"N", cfg.topo.N}, {"n", cfg.model.n()}, {"p", cfg.model.p()}, {"m", cfg.model.m()}};
  j["K"] = matrix_json(cert.K);
  j["Y"] = matrix_json(cert.Y);
  if (cert.F) j["F"] = matrix_json(*cert.F);
  ojson mult = ojson::object();
  for (const auto& [name, value] : cert.multipliers) mult[name] = value;
  j["multipliers"] = mult;
  j["bound"] = cert.bound;
  j["gamma"] = cert.gamma ? ojson(*cert.gamma) : ojson(nullptr);
  j["margin"] = cert.margin;
  j["iterations"] = cert.iterations;
  j["message"] = cert.message;
  return j.dump(2) + "\n";
}

void save_certificate(const Certificate& cert, const ScenarioConfig& cfg, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << certificate_to_json(cert, cfg);
}

StoredCertificate certificate_from_json(const std::string& json_text) {
  const json j = parse_json(json_text);
  check_keys(j, "", {"format", "version", "scenario", "method", "objective", "status", "shape", "K", "Y", "F",
                     "multipliers", "bound", "gamma", "margin", "iterations", "message"});
  if (get_string(require(j, "", "format"), "format") != "iqcsync-certificate")
    throw ConfigError("format", "not a certificate file");
  StoredCertificate out;
  Certificate& c = out.certificate;
  if (j.contains("scenario")) out.scenario = get_string(j.at("scenario"), "scenario");
  try {
    c.method = method_from_string(get_string(require(j, "", "method"), "method"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("method", e.what());
  }
  if (j.contains("objective")) c.objective = objective_from_string(get_string(j.at("objective"), "objective"), "objective");
  c.status = status_from_string(get_string(require(j, "", "status"), "status"));
  c.K = get_matrix(require(j, "", "K"), "K");
  c.Y = get_matrix(require(j, "", "Y"), "Y");
  if (j.contains("F")) c.F = get_matrix(j.at("F"), "F");
  if (j.contains("multipliers")) {
    const json& m = j.at("multipliers");
    if (!m.is_object()) throw ConfigError("multipliers", "expected an object");
    for (const auto& [name, value] : m.items()) c.multipliers[name] = get_number(value, "multipliers." + name);
  }
  c.bound = number_or(j, "", "bound", 0.0);
  if (j.contains("gamma") && !j.at("gamma").is_null()) c.gamma = get_number(j.at("gamma"), "gamma");
  c.margin = number_or(j, "", "margin", 0.0);
  if (j.contains("iterations")) c.iterations = get_int(j.at("iterations"), "iterations");
  if (j.contains("message")) c.message = get_string(j.at("message"), "message");
  if (j.contains("shape")) {
    const json& s = j.at("shape");
    check_keys(s, "shape", {"N", "n", "p", "m"});
    out.N = get_int(require(s, "shape", "N"), "shape.N");
    out.n = get_int(require(s, "shape", "n"), "shape.n");
    out.p = get_int(require(s, "shape", "p"), "shape.p");
    out.m = get_int(require(s, "shape", "m"), "shape.m");
  }
  return out;
}

StoredCertificate load_certificate(const std::string& path) { return certificate_from_json(read_file(path)); }

void check_certificate(const Certificate& cert, const ScenarioConfig& cfg) {
  const int n = cfg.model.n(), p = cfg.model.p();
  if (cert.K.rows() != p || cert.K.cols() != n)
    throw std::invalid_argument("certificate gain is " + std::to_string(cert.K.rows()) + "x" +
                                std::to_string(cert.K.cols()) + " but the model needs " + std::to_string(p) + "x" +
                                std::to_string(n));
  if (cert.Y.rows() != n || cert.Y.cols() != n) throw std::invalid_argument("certificate Y does not match the model");
  if (!all_finite(cert.K) || !all_finite(cert.Y)) throw std::invalid_argument("certificate holds non-finite entries");
}

void check_certificate(const StoredCertificate& stored, const ScenarioConfig& cfg) {
  check_certificate(stored.certificate, cfg);
  if (stored.N == 0) return;
  if (stored.N != cfg.topo.N || stored.n != cfg.model.n() || stored.p != cfg.model.p() || stored.m != cfg.model.m())
    throw std::invalid_argument("certificate was produced for N=" + std::to_string(stored.N) + ", n=" +
                                std::to_string(stored.n) + ", p=" + std::to_string(stored.p) + ", m=" +
                                std::to_string(stored.m) + ", which does not match the scenario");
}

ScenarioRun run_simulation(const ScenarioConfig& cfg, const Certificate& cert) {
  check_certificate(cert, cfg);
  const SpectralData sd = spectral(cfg.topo);
  const Vector x0 = initial_state(cfg);
  ScenarioRun run{simulate(cfg.model, cfg.topo, cert.K, cfg.couplings, x0, cfg.T, cfg.h), {}};
  const Trajectory& tr = run.trajectory;
  const CostReport cost = evaluate_cost(tr, cfg.topo, cfg.model.Q, cfg.model.R, &sd);

  SimulationSummary& s = run.summary;
  s.scenario = cfg.name;
  s.method = to_string(cert.method);
  s.uncertainty = cfg.uniform_op ? cfg.uniform_op->name() : "per-edge";
  s.final_cost = cost.edge_form;
  const Vector e0 = tr.errors(0);
  // The guarantee holds for every initial error, so the bound is evaluated
  // at the simulated one rather than read from the file.
  s.bound = cert.Y.rows() > 0 && is_positive_definite(cert.Y) ? bound_formula(cert.method, cert.Y, e0, sd)
                                                                : std::numeric_limits<double>::infinity();
  s.bound_satisfied = s.final_cost <= s.bound;
  for (const auto& a : tr.audits) s.max_audit_ratio = std::max(s.max_audit_ratio, a.ratio());
  s.tail_fraction = cost.tail_fraction;
  const double e0n = e0.norm();
  s.final_error_ratio = e0n > 0.0 ? tr.errors(tr.samples() - 1).norm() / e0n : 0.0;
  return run;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::scientific, 16);
  return std::string(buf, res.ptr);
}

void write_csv(const Trajectory& traj, std::ostream& os, int stride) {
  if (stride < 1) throw std::invalid_argument("csv stride must be at least 1");
  const int N = traj.N, n = traj.n, p = traj.p;
  os << "t";
  for (int c = 0; c < n; ++c) os << ",x0_" << c + 1;
  for (int i = 1; i <= N; ++i) {
    for (int c = 0; c < n; ++c) os << ",x" << i << "_" << c + 1;
    for (int c = 0; c < p; ++c) os << ",u" << i << "_" << c + 1;
    os << ",e" << i << "_norm";
  }
  os << ",cost\n";
  const int last = traj.samples() - 1;
  for (int k = 0; k <= last; k = (k == last) ? last + 1 : std::min(k + stride, last)) {
    os << format_double(traj.t(k));
    for (int c = 0; c < n; ++c) os << ',' << format_double(traj.x(c, k));
    for (int i = 1; i <= N; ++i) {
      for (int c = 0; c < n; ++c) os << ',' << format_double(traj.x(i * n + c, k));
      for (int c = 0; c < p; ++c) os << ',' << format_double(traj.u((i - 1) * p + c, k));
      os << ',' << format_double((traj.x.col(k).head(n) - traj.x.col(k).segment(i * n, n)).norm());
    }
    os << ',' << format_double(traj.running_cost(k)) << '\n';
  }
}

std::string summary_to_json(const SimulationSummary& s) {
  ojson j;
  j["scenario"] = s.scenario;
  j["method"] = s.method;
  j["uncertainty"] = s.uncertainty;
  j["final_cost"] = s.final_cost;
  j["bound"] = std::isfinite(s.bound) ? ojson(s.bound) : ojson(nullptr);
  j["bound_satisfied"] = s.bound_satisfied ? "yes" : "no";
  j["max_iqc_audit_ratio"] = s.max_audit_ratio;
  j["cost_tail_fraction"] = s.tail_fraction;
  j["final_error_ratio"] = s.final_error_ratio;
  return j.dump(2) + "\n";
}

double consensus_beta(const ScenarioConfig& cfg) {
  return cfg.beta ? *cfg.beta : cfg.beta_fraction * max_step_size(cfg.topo);
}

AgreementResult run_consensus(const ScenarioConfig& cfg) {
  const SpectralData sd = spectral(cfg.topo);
  const double beta = consensus_beta(cfg);
  const double limit = max_step_size(cfg.topo);
  if (!(beta > 0.0 && beta < limit))
    throw std::invalid_argument("consensus step " + format_double(beta) + " outside (0, " + format_double(limit) + ")");
  auto states = seed_states(cfg.model, cfg.topo, sd, cfg.seed, cfg.synthesis);
  return run_to_agreement(std::move(states), cfg.topo, beta, cfg.consensus_tol, cfg.model, sd,
                          cfg.consensus_max_iterations);
}

std::string agreement_to_json(const AgreementResult& r, double beta, std::uint64_t seed) {
  ojson j;
  j["seed"] = seed;
  j["beta"] = beta;
  j["iterations"] = r.iterations;
  j["deviation_history"] = r.deviation_history;
  j["Y"] = matrix_json(r.Y);
  j["pi"] = r.pi;
  j["theta"] = r.theta;
  j["K"] = matrix_json(r.K);
  j["lmi_max_eigenvalue"] = r.lmi_max_eigenvalue;
  j["feasible"] = r.lmi_max_eigenvalue < 0.0;
  return j.dump(2) + "\n";
}

std::vector<TableRow> run_table(const ScenarioConfig& cfg) {
  std::vector<TableRow> rows;
  for (Method m : {Method::Thm1, Method::Thm2, Method::Thm3}) {
    ScenarioConfig sub = cfg;
    sub.method = m;
    sub.objective = Objective::Gamma;
    TableRow row;
    row.method = m;
    row.certificate = run_synthesis(sub);
    if (!row.certificate.feasible())
      throw std::runtime_error(to_string(m) + ": synthesis returned " + sdp::to_string(row.certificate.status) +
                               (row.certificate.message.empty() ? "" : " (" + row.certificate.message + ")"));
    try {
      row.summary = run_simulation(sub, row.certificate).summary;
    } catch (const std::exception& e) {
      throw std::runtime_error(to_string(m) + ": simulation failed: " + e.what());
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_table(const std::vector<TableRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(8) << "Method" << std::setw(34) << "Control Gain" << std::setw(20)
     << "Predicted Bound" << std::setw(22) << "Computed Performance" << "Holds\n";
  for (const auto& r : rows) {
    std::ostringstream gain;
    const Matrix& K = r.certificate.K;
    gain << std::setprecision(6) << "[";
    for (Eigen::Index i = 0; i < K.rows(); ++i)
      for (Eigen::Index c = 0; c < K.cols(); ++c) gain << (c ? ", " : (i ? "; " : "")) << K(i, c);
    gain << "]";
    std::ostringstream pb, cp;
    pb << std::setprecision(8) << r.summary.bound;
    cp << std::setprecision(8) << r.summary.final_cost;
    os << std::setw(8) << to_string(r.method) << std::setw(34) << gain.str() << std::setw(20) << pb.str()
       << std::setw(22) << cp.str() << (r.summary.bound_satisfied ? "yes" : "no") << "\n";
  }
  return os.str();
}

}  // namespace iqcsync
