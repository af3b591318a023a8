#pragma once

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "iqcsync/linalg.hpp"

namespace iqcsync {

// Plant and cost data shared by every subsystem:
//   dx_i/dt = A x_i + B1 u_i + B2 * sum_j phi(t, x_j - x_i)
// with cost weights Q (relative states) and R (inputs).
struct SystemModel {
  Matrix A, B1, B2, C, Q, R;

  int n() const { return static_cast<int>(A.rows()); }
  int p() const { return static_cast<int>(B1.cols()); }
  int m() const { return static_cast<int>(B2.cols()); }
  int r() const { return static_cast<int>(C.rows()); }

  // Throws std::invalid_argument on inconsistent dimensions, non-finite
  // entries, or weights that are not symmetric positive definite.
  void validate() const;
};

struct PendulumParams {
  double mass = 1.0;
  double length = 1.0;
  double gravity = 9.8;
  double k1 = 0.5;  // spring constant
  double k2 = 0.5;  // damping coefficient
};

// Coupled pendulums linearised about the hanging equilibrium, state
// (angle, angular velocity), with Q = diag(1, 0.1) and R = 0.01.
SystemModel pendulum_model(const PendulumParams& params = {});

// Time-varying gain Delta(t) of a norm-bounded coupling. The description
// is informational and travels into reports.
struct DeltaSchedule {
  std::function<Matrix(double)> at;
  std::string description;

  static DeltaSchedule constant(const Matrix& delta);
  // delta(t) * I_dim
  static DeltaSchedule scalar(std::function<double(double)> delta, int dim, std::string description);
  // ((a0 + a1 sin t) / l)^2 * I_dim, the spring position schedule of the pendulum rig.
  static DeltaSchedule pendulum(double a0, double a1, double length, int dim);
  // Piecewise-linear interpolation of scalar gains, held constant outside the table.
  static DeltaSchedule table(std::vector<double> times, std::vector<double> values, int dim);
};

struct NormBounded {
  DeltaSchedule schedule;
};
struct InputDelay {
  double tau = 0.0;
};
struct FirstOrderLag {
  double a = 1.0;
};

// A linear causal coupling operator phi(t, y|[0,t]) bounded by the
// channel matrix C. Output dimension is rows(Delta) for norm-bounded
// operators and rows(C) for the delay and lag families.
class UncertaintyOp {
 public:
  using Kind = std::variant<NormBounded, InputDelay, FirstOrderLag>;

  static UncertaintyOp norm_bounded(Matrix C, DeltaSchedule schedule);
  static UncertaintyOp input_delay(Matrix C, double tau);
  static UncertaintyOp first_order_lag(Matrix C, double a);

  const Kind& kind() const { return kind_; }
  const Matrix& C() const { return C_; }
  int input_dim() const { return static_cast<int>(C_.cols()); }
  int channel_dim() const { return static_cast<int>(C_.rows()); }
  int output_dim() const;
  std::string name() const;

  // Structural checks; for NormBounded also samples Delta(t)'Delta(t) <= I
  // on [0, horizon]. Throws std::invalid_argument.
  void validate(double horizon = 10.0, double sample_step = 1e-2) const;

  // Whether the operator is known to satisfy the unit IQC against C.
  // The lag has L2 gain 1/a, so only a >= 1 qualifies.
  bool is_iqc_admissible() const;

  UncertaintyOp with_C(Matrix C) const;

 private:
  UncertaintyOp(Kind kind, Matrix C) : kind_(std::move(kind)), C_(std::move(C)) {}
  Kind kind_;
  Matrix C_;
};

// A signal sampled on the uniform grid t_k = k * step, one column per sample.
struct SampledSignal {
  Matrix values;
  double step = 0.0;

  int samples() const { return static_cast<int>(values.cols()); }
  double duration() const { return step * (samples() - 1); }
  // Linear interpolation; zero before t = 0.
  Vector at(double t) const;
};

// phi(t, y|[0,t]) for the operator family. The lag is integrated exactly
// for the piecewise-linear interpolant of the samples.
Vector apply_uncertainty(const UncertaintyOp& op, const SampledSignal& y, double t);

// Outputs at every grid point, one column per sample.
Matrix apply_uncertainty_series(const UncertaintyOp& op, const SampledSignal& y);

// (int_0^T |phi|^2 dt) / (int_0^T |C y|^2 dt), trapezoidal on the grid.
double iqc_audit(const UncertaintyOp& op, const SampledSignal& y, double horizon);

// Per-direction coupling operators for nonidentical interconnections.
// Key (i, j) is the operator acting on x_j - x_i in node i's dynamics;
// node 0 is the leader.
class EdgeCouplingSet {
 public:
  void set(int i, int j, UncertaintyOp op);
  bool contains(int i, int j) const;
  const UncertaintyOp& at(int i, int j) const;
  const std::map<std::pair<int, int>, UncertaintyOp>& entries() const { return entries_; }

  // Same operator (with bound matrix C) on every direction of every edge.
  static EdgeCouplingSet uniform(const std::vector<std::pair<int, int>>& phys_edges,
                                 const std::vector<int>& d, const UncertaintyOp& op);

 private:
  std::map<std::pair<int, int>, UncertaintyOp> entries_;
};

}  // namespace iqcsync
