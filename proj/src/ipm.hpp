#pragma once

#include <functional>
#include <vector>

#include "iqcsync/linalg.hpp"

namespace iqcsync::sdp::detail {

// min c'x  s.t.  S_b(x) = constant_b + sum_k x_k A_kb >= 0 for every block b.
struct ConicBlock {
  Matrix constant;
  std::vector<std::pair<int, Matrix>> terms;
  int size() const { return static_cast<int>(constant.rows()); }
};

struct ConicProblem {
  int num_vars = 0;
  std::vector<ConicBlock> blocks;
  Vector c;
};

struct IpmOptions {
  int max_iterations = 150;
  double tolerance = 1e-9;
  double step_fraction = 0.95;
  // Checked after every iteration with the current (primal feasible) x.
  std::function<bool(const Vector&)> early_stop;
  bool verbose = false;
};

enum class IpmOutcome { Converged, EarlyStop, MaxIterations, Stalled };

struct IpmResult {
  IpmOutcome outcome = IpmOutcome::MaxIterations;
  Vector x;
  std::vector<Matrix> S;
  std::vector<Matrix> Z;
  double primal_objective = 0.0;
  double dual_objective = 0.0;
  double primal_infeasibility = 0.0;
  double dual_infeasibility = 0.0;
  double relative_gap = 0.0;
  int iterations = 0;
};

Matrix evaluate_block(const ConicBlock& block, const Vector& x);

// Infeasible-start primal-dual path following (HKM direction, Mehrotra
// predictor-corrector). Starting from an x with every S_b(x) > 0 keeps the
// primal iterates exactly feasible.
IpmResult solve_conic(const ConicProblem& problem, const Vector& x0, const IpmOptions& options);

}  // namespace iqcsync::sdp::detail
