#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "iqcsync/linalg.hpp"

namespace iqcsync::sdp {

// Raised when an expression would be quadratic in the decision variables.
class NonAffineError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A rows x cols matrix that is affine in the scalar decision variables:
//   constant + sum_k x_k * terms[k].
class AffineMatrix {
 public:
  AffineMatrix() = default;
  AffineMatrix(int rows, int cols);
  AffineMatrix(Matrix constant);  // NOLINT: constants convert implicitly

  static AffineMatrix term(int index, Matrix coefficient);
  static AffineMatrix zero(int rows, int cols) { return AffineMatrix(rows, cols); }

  int rows() const { return static_cast<int>(constant_.rows()); }
  int cols() const { return static_cast<int>(constant_.cols()); }
  const Matrix& constant() const { return constant_; }
  const std::map<int, Matrix>& terms() const { return terms_; }
  bool is_constant() const { return terms_.empty(); }

  AffineMatrix transpose() const;
  Matrix evaluate(const Vector& x) const;

  AffineMatrix& operator+=(const AffineMatrix& other);
  AffineMatrix& operator-=(const AffineMatrix& other);
  AffineMatrix& operator*=(double s);

 private:
  Matrix constant_;
  std::map<int, Matrix> terms_;
};

AffineMatrix operator+(AffineMatrix a, const AffineMatrix& b);
AffineMatrix operator-(AffineMatrix a, const AffineMatrix& b);
AffineMatrix operator-(const AffineMatrix& a);
AffineMatrix operator*(double s, AffineMatrix a);
AffineMatrix operator*(const Matrix& L, const AffineMatrix& a);
AffineMatrix operator*(const AffineMatrix& a, const Matrix& R);
// Throws NonAffineError unless one side is constant.
AffineMatrix operator*(const AffineMatrix& a, const AffineMatrix& b);

// Dense block grid; every row/column of blocks must agree in size.
AffineMatrix block_matrix(const std::vector<std::vector<AffineMatrix>>& blocks);
AffineMatrix block_diag(const std::vector<AffineMatrix>& blocks);
// Symmetric block matrix from its lower triangle: blocks[i][j] for j <= i.
// Missing (empty) entries become zero blocks of the sizes in `sizes`.
AffineMatrix symmetric_blocks(const std::vector<int>& sizes,
                              const std::vector<std::vector<AffineMatrix>>& lower);
AffineMatrix kron(const Matrix& A, const AffineMatrix& X);
// Vertical stack of `count` copies.
AffineMatrix repeat_rows(const AffineMatrix& X, int count);

enum class VarKind { Symmetric, Rectangular, Scalar };

struct Variable {
  std::string name;
  VarKind kind = VarKind::Scalar;
  int rows = 0;
  int cols = 0;
  int first = 0;  // index of the first scalar
  int count = 0;  // scalars used
};

enum class Sense { NegativeDefinite, PositiveDefinite, NegativeSemidefinite, PositiveSemidefinite };

struct Constraint {
  std::string label;
  AffineMatrix expr;
  Sense sense = Sense::NegativeDefinite;
  double margin = 0.0;  // required distance from the boundary; 0 for semidefinite
};

enum class Status { Feasible, Optimal, Infeasible, Unbounded, NumericalFailure };
std::string to_string(Status s);

struct ConstraintCheck {
  std::string label;
  // Signed depth inside the constraint: -lambda_max for "< 0",
  // lambda_min for "> 0".
  double depth = 0.0;
  double margin = 0.0;
  bool satisfied = false;
};

class LmiProblem {
 public:
  // Strict constraints are tightened to depth margin_scale * (1 + ||constant block||_2).
  explicit LmiProblem(double margin_scale = 1e-7) : margin_scale_(margin_scale) {}

  AffineMatrix add_symmetric(const std::string& name, int n);
  AffineMatrix add_rectangular(const std::string& name, int rows, int cols);
  // A positive scalar also gets the strict constraint x > 0.
  AffineMatrix add_scalar(const std::string& name, bool positive = true);

  void add_constraint(const AffineMatrix& expr, Sense sense, const std::string& label);
  void minimize(const AffineMatrix& objective);

  int num_scalars() const { return num_scalars_; }
  double margin_scale() const { return margin_scale_; }
  const std::vector<Variable>& variables() const { return variables_; }
  const std::vector<Constraint>& constraints() const { return constraints_; }
  const std::optional<AffineMatrix>& objective() const { return objective_; }

  const Variable& variable(const std::string& name) const;
  bool has_variable(const std::string& name) const;
  // The affine expression returned when the variable was declared.
  AffineMatrix variable_expr(const std::string& name) const;
  Matrix value(const std::string& name, const Vector& x) const;
  // Scalar vector for the given variable values (unlisted variables are 0).
  Vector pack(const std::map<std::string, Matrix>& values) const;

  // Eigenvalue check of every constraint at x. A strict constraint passes
  // when its depth is at least margin_fraction * margin; a semidefinite
  // one when its depth is at least -tol * (1 + ||G(x)||).
  std::vector<ConstraintCheck> check(const Vector& x, double margin_fraction = 0.5, double tol = 1e-9) const;

 private:
  double margin_scale_;
  int num_scalars_ = 0;
  std::vector<Variable> variables_;
  std::vector<Constraint> constraints_;
  std::optional<AffineMatrix> objective_;
};

struct SolverOptions {
  int max_iterations = 150;  // per phase
  double tolerance = 1e-9;
  double radius = 1e6;       // feasibility radius on the scalar vector
  bool verbose = false;
};

struct LmiSolution {
  Status status = Status::NumericalFailure;
  Vector x;
  std::optional<double> objective;
  double worst_depth = 0.0;  // min over constraints of depth / margin-normalised report
  double phase1_depth = 0.0;  // best uniform slack found while seeking feasibility (negative = infeasible)
  std::vector<ConstraintCheck> checks;
  int iterations = 0;
  std::string backend;
  std::string message;

  bool ok() const { return status == Status::Feasible || status == Status::Optimal; }
};

// Two-phase solve: a feasibility phase that maximises the uniform slack of
// every constraint, then (when an objective is set) an optimisation phase
// started from that strictly feasible point. Every reported success is
// re-verified by dense eigendecomposition of each constraint.
LmiSolution solve(const LmiProblem& problem, const SolverOptions& options = {});

// Backend chosen from IQCSYNC_SOLVER ("ipm" or unset selects the bundled
// interior-point method).
std::string backend_name();

}  // namespace iqcsync::sdp
