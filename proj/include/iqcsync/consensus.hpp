#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "iqcsync/graph.hpp"
#include "iqcsync/model.hpp"
#include "iqcsync/synthesis.hpp"

namespace iqcsync {

// Local copy of the shared-LMI variables held by one follower. The
// multipliers are stored as reciprocals, which is the coordinate the
// averaging acts on. theta_inv is unused when N = 1.
struct NodeState {
  int id = 0;
  Matrix Y;
  double pi_inv = 0.0;
  double theta_inv = 0.0;
  int k = 0;
};

// Upper limit 1 / max_i h_i for the step size (h_i: control-graph degree).
double max_step_size(const Topology& topo);

// Default iteration cap 10 N / (beta lambda_2) with lambda_2 the algebraic
// connectivity of the control graph.
int default_iteration_cap(const Topology& topo, double beta);

// One synchronous round of x_i += beta * sum_{j in S^c_i} (x_j - x_i).
// Throws std::invalid_argument if beta is outside (0, 1/max h_i) and
// std::runtime_error if some Y_i stops being positive definite.
std::vector<NodeState> consensus_step(const std::vector<NodeState>& states, const Topology& topo, double beta);

// Largest pairwise difference: Frobenius norm for Y, absolute for the scalars.
double max_deviation(const std::vector<NodeState>& states);

struct AgreementResult {
  Matrix Y;
  double pi = 0.0;
  double theta = 0.0;
  Matrix K;
  int iterations = 0;
  std::vector<double> deviation_history;  // before each round, then the final value
  double lmi_max_eigenvalue = 0.0;        // of the shared LMI at the limit
  Certificate certificate;
};

class ConsensusNotConverged : public std::runtime_error {
 public:
  ConsensusNotConverged(const std::string& what, std::vector<double> history)
      : std::runtime_error(what), history_(std::move(history)) {}
  const std::vector<double>& history() const { return history_; }

 private:
  std::vector<double> history_;
};

// Iterates until max_deviation < tol, then returns the node average (equal
// to the initial average, since the update preserves sums) together with
// the common gain and a recheck of the shared LMI at that point.
// max_iterations <= 0 selects default_iteration_cap.
AgreementResult run_to_agreement(std::vector<NodeState> states, const Topology& topo, double beta, double tol,
                                 const SystemModel& model, const SpectralData& sd, int max_iterations = 0);

// Each node solves the shared LMI with its own random positive objective
// (terms scaled by their maxima over the feasible set).
// Throws std::runtime_error if some node finds no feasible point.
std::vector<NodeState> seed_states(const SystemModel& model, const Topology& topo, const SpectralData& sd,
                                   std::uint64_t seed, const SynthesisOptions& opts = {});

}  // namespace iqcsync
