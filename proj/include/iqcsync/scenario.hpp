#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "iqcsync/consensus.hpp"
#include "iqcsync/graph.hpp"
#include "iqcsync/model.hpp"
#include "iqcsync/sim.hpp"
#include "iqcsync/synthesis.hpp"

namespace iqcsync {

// Schema violation in a scenario or certificate file. `field` is a dotted
// path such as "model.R" or "topology.control_edges[3]".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : std::runtime_error(field.empty() ? what : field + ": " + what), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct ScenarioConfig {
  std::string name;
  SystemModel model;
  Topology topo;
  EdgeCouplingSet couplings;
  std::optional<UncertaintyOp> uniform_op;  // set when one operator drives every direction

  Method method = Method::Thm1;
  Objective objective = Objective::Gamma;
  std::optional<Vector> e0;    // explicit initial errors; otherwise taken from the initial state
  std::optional<Matrix> Mcov;  // required by the trace objective

  double T = 30.0;
  double h = 1e-3;
  std::uint64_t seed = 0;
  Vector leader_state;                 // x_0(0)
  std::optional<std::vector<Vector>> follower_states;
  int csv_stride = 10;

  double beta_fraction = 0.45;  // step size as a fraction of 1 / max h_i
  std::optional<double> beta;   // absolute step size, overrides the fraction
  double consensus_tol = 1e-6;
  int consensus_max_iterations = 0;

  SynthesisOptions synthesis;
};

// Parses and validates a JSON scenario. Throws ConfigError.
ScenarioConfig parse_config(const std::string& json_text);
ScenarioConfig load_config(const std::string& path);

// Stacked x_0, x_1, ..., x_N. Unless given explicitly, follower angles are
// drawn uniformly from [-0.5, 0.5) by a 64-bit Mersenne twister seeded with
// `seed`, with every other state component zero.
Vector initial_state(const ScenarioConfig& cfg);
// e_i = x_0 - x_i from the explicit e0 or from initial_state.
Vector initial_errors(const ScenarioConfig& cfg);

// Runs the configured method and objective.
Certificate run_synthesis(const ScenarioConfig& cfg);

std::string certificate_to_json(const Certificate& cert, const ScenarioConfig& cfg);
void save_certificate(const Certificate& cert, const ScenarioConfig& cfg, const std::string& path);
// A certificate file also records the scenario it was produced for.
struct StoredCertificate {
  Certificate certificate;
  std::string scenario;
  int N = 0, n = 0, p = 0, m = 0;  // zero when the file carries no shape
};

StoredCertificate certificate_from_json(const std::string& json_text);
StoredCertificate load_certificate(const std::string& path);
// Throw std::invalid_argument if K, Y or the stored shape do not fit cfg.
void check_certificate(const Certificate& cert, const ScenarioConfig& cfg);
void check_certificate(const StoredCertificate& stored, const ScenarioConfig& cfg);

struct SimulationSummary {
  std::string scenario;
  std::string method;
  std::string uncertainty;
  double final_cost = 0.0;
  double bound = 0.0;
  bool bound_satisfied = false;
  double max_audit_ratio = 0.0;
  double tail_fraction = 0.0;
  double final_error_ratio = 0.0;  // |e(T)| / |e(0)|, zero when e(0) = 0
};

struct ScenarioRun {
  Trajectory trajectory;
  SimulationSummary summary;
};

ScenarioRun run_simulation(const ScenarioConfig& cfg, const Certificate& cert);

// t, x0_*, then per follower x{i}_*, u{i}_*, e{i}_norm, and the running cost.
// Every `stride`-th sample plus the last one.
void write_csv(const Trajectory& traj, std::ostream& os, int stride);
std::string summary_to_json(const SimulationSummary& s);

// Fixed 17-significant-digit scientific form, independent of the locale.
std::string format_double(double v);

double consensus_beta(const ScenarioConfig& cfg);
AgreementResult run_consensus(const ScenarioConfig& cfg);
std::string agreement_to_json(const AgreementResult& r, double beta, std::uint64_t seed);

struct TableRow {
  Method method = Method::Thm1;
  Certificate certificate;
  SimulationSummary summary;
};

// Gamma-optimal THM1, THM2 and THM3 certificates simulated on the scenario.
// Throws std::runtime_error naming the failing method.
std::vector<TableRow> run_table(const ScenarioConfig& cfg);
std::string format_table(const std::vector<TableRow>& rows);

}  // namespace iqcsync
