#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "iqcsync/graph.hpp"
#include "iqcsync/model.hpp"

namespace iqcsync {

// Raised when the state becomes non-finite or exceeds 1e12 in norm.
class SimulationDiverged : public std::runtime_error {
 public:
  SimulationDiverged(const std::string& what, double time) : std::runtime_error(what), time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

// Realised energy of one coupling channel on [0, T].
struct ChannelAudit {
  std::string label;
  double output_energy = 0.0;  // int |phi|^2
  double bound_energy = 0.0;   // int |C y|^2
  double ratio() const { return bound_energy > 0.0 ? output_energy / bound_energy : 0.0; }
};

struct Trajectory {
  int N = 0;
  int n = 0;
  int p = 0;
  double h = 0.0;
  Vector t;                // uniform grid 0, h, ..., T
  Matrix x;                // (N+1) n x samples, leader block first
  Matrix u;                // N p x samples
  Vector running_cost;     // cumulative edge-form cost
  std::vector<ChannelAudit> audits;

  int samples() const { return static_cast<int>(t.size()); }
  double final_cost() const { return running_cost.size() ? running_cost(running_cost.size() - 1) : 0.0; }
  // Stacked tracking errors e_i = x_0 - x_i (N n) at sample k.
  Vector errors(int k) const;
  Matrix error_matrix() const;  // N n x samples
};

// Closed loop of the followers under u_i = -K (sum_{j in S^c_i} (x_j - x_i) + g_i (x_0 - x_i)),
// the leader uncontrolled, every physical coupling direction driven by its
// operator in `couplings`. x_init stacks x_0, x_1, ..., x_N.
Trajectory simulate(const SystemModel& model, const Topology& topo, const Matrix& K, const EdgeCouplingSet& couplings,
                    const Vector& x_init, double T, double h);
// Same operator on every coupling direction.
Trajectory simulate(const SystemModel& model, const Topology& topo, const Matrix& K, const UncertaintyOp& op,
                    const Vector& x_init, double T, double h);

// Integrand of the edge-sum cost for errors e (N n) and inputs u (N p).
double cost_integrand_edges(const Topology& topo, const Matrix& Q, const Matrix& R, const Vector& e, const Vector& u);
// The same value as e' ((L^c + G) (x) Q) e + u' (I (x) R) u.
double cost_integrand_kron(const Topology& topo, const Matrix& Q, const Matrix& R, const Vector& e, const Vector& u);
// Modal form sum_i lambda_i eps_i' Q eps_i + uhat_i' R uhat_i with eps = (T' (x) I) e, uhat = (T' (x) I) u.
double cost_integrand_modal(const SpectralData& sd, const Matrix& Q, const Matrix& R, const Vector& e,
                            const Vector& u);

struct CostReport {
  double edge_form = 0.0;
  double kron_form = 0.0;
  double modal_form = 0.0;      // only when spectral data is supplied
  double tail_fraction = 0.0;   // share of the cost accrued in the last 10% of the horizon
  bool tail_converged = false;  // tail_fraction < 1e-3
};

// Trapezoidal quadrature of the cost along the trajectory in the edge and
// Kronecker forms; throws std::logic_error if they disagree beyond 1e-9
// relative. Prints a warning to stderr when the tail has not converged.
CostReport evaluate_cost(const Trajectory& traj, const Topology& topo, const Matrix& Q, const Matrix& R,
                         const SpectralData* sd = nullptr);

// Integrates the error dynamics and the modal dynamics separately from
// matching initial conditions and returns max_t |eps(t) - (T' (x) I) e(t)|.
double verify_transformation(const SystemModel& model, const Topology& topo, const SpectralData& sd,
                             const Matrix& K, const UncertaintyOp& op, const Vector& e0, double T, double h);

// Stacked initial state (x_0, x_1, ..., x_N) from the leader state and the
// follower states.
Vector stack_states(const Vector& leader, const std::vector<Vector>& followers);

}  // namespace iqcsync
