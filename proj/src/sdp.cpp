#include "iqcsync/sdp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <mutex>

#include "ipm.hpp"

namespace {

// Plain matrix product, kept outside iqcsync::sdp so that the implicit
// Matrix -> AffineMatrix conversion does not enter overload resolution.
iqcsync::Matrix product(const iqcsync::Matrix& a, const iqcsync::Matrix& b) { return a * b; }

}  // namespace

namespace iqcsync::sdp {

// ---------------------------------------------------------------------------
// AffineMatrix

AffineMatrix::AffineMatrix(int rows, int cols) : constant_(Matrix::Zero(rows, cols)) {}

AffineMatrix::AffineMatrix(Matrix constant) : constant_(std::move(constant)) {}

AffineMatrix AffineMatrix::term(int index, Matrix coefficient) {
  AffineMatrix a(static_cast<int>(coefficient.rows()), static_cast<int>(coefficient.cols()));
  a.terms_.emplace(index, std::move(coefficient));
  return a;
}

AffineMatrix AffineMatrix::transpose() const {
  AffineMatrix t(constant_.transpose());
  for (const auto& [k, T] : terms_) t.terms_.emplace(k, T.transpose());
  return t;
}

Matrix AffineMatrix::evaluate(const Vector& x) const {
  Matrix v = constant_;
  for (const auto& [k, T] : terms_) {
    if (k >= x.size()) throw std::out_of_range("AffineMatrix::evaluate: variable index out of range");
    v.noalias() += x(k) * T;
  }
  return v;
}

namespace {

void require_same_shape(const AffineMatrix& a, const AffineMatrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string("AffineMatrix ") + op + ": shape mismatch (" + std::to_string(a.rows()) +
                                "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
}

}  // namespace

AffineMatrix& AffineMatrix::operator+=(const AffineMatrix& other) {
  require_same_shape(*this, other, "+");
  constant_ += other.constant_;
  for (const auto& [k, T] : other.terms_) {
    auto it = terms_.find(k);
    if (it == terms_.end())
      terms_.emplace(k, T);
    else
      it->second += T;
  }
  return *this;
}

AffineMatrix& AffineMatrix::operator-=(const AffineMatrix& other) { return *this += -other; }

AffineMatrix& AffineMatrix::operator*=(double s) {
  constant_ *= s;
  for (auto& [k, T] : terms_) T *= s;
  return *this;
}

AffineMatrix operator+(AffineMatrix a, const AffineMatrix& b) { return a += b; }
AffineMatrix operator-(AffineMatrix a, const AffineMatrix& b) { return a -= b; }
AffineMatrix operator-(const AffineMatrix& a) { return -1.0 * a; }
AffineMatrix operator*(double s, AffineMatrix a) { return a *= s; }

AffineMatrix operator*(const Matrix& L, const AffineMatrix& a) {
  if (L.cols() != a.rows()) throw std::invalid_argument("Matrix * AffineMatrix: inner dimension mismatch");
  AffineMatrix r(product(L, a.constant()));
  for (const auto& [k, T] : a.terms()) r += AffineMatrix::term(k, product(L, T));
  return r;
}

AffineMatrix operator*(const AffineMatrix& a, const Matrix& R) {
  if (a.cols() != R.rows()) throw std::invalid_argument("AffineMatrix * Matrix: inner dimension mismatch");
  AffineMatrix r(product(a.constant(), R));
  for (const auto& [k, T] : a.terms()) r += AffineMatrix::term(k, product(T, R));
  return r;
}

AffineMatrix operator*(const AffineMatrix& a, const AffineMatrix& b) {
  if (a.is_constant()) return a.constant() * b;
  if (b.is_constant()) return a * b.constant();
  throw NonAffineError("product of two variable expressions is not affine");
}

AffineMatrix block_matrix(const std::vector<std::vector<AffineMatrix>>& blocks) {
  if (blocks.empty() || blocks.front().empty()) throw std::invalid_argument("block_matrix: empty grid");
  const std::size_t nr = blocks.size(), nc = blocks.front().size();
  std::vector<int> heights(nr), widths(nc);
  for (std::size_t i = 0; i < nr; ++i) {
    if (blocks[i].size() != nc) throw std::invalid_argument("block_matrix: ragged grid");
    heights[i] = blocks[i][0].rows();
  }
  for (std::size_t j = 0; j < nc; ++j) widths[j] = blocks[0][j].cols();
  int total_r = 0, total_c = 0;
  for (int h : heights) total_r += h;
  for (int w : widths) total_c += w;

  Matrix constant = Matrix::Zero(total_r, total_c);
  std::map<int, Matrix> terms;
  int r0 = 0;
  for (std::size_t i = 0; i < nr; ++i) {
    int c0 = 0;
    for (std::size_t j = 0; j < nc; ++j) {
      const AffineMatrix& b = blocks[i][j];
      if (b.rows() != heights[i] || b.cols() != widths[j])
        throw std::invalid_argument("block_matrix: block (" + std::to_string(i) + "," + std::to_string(j) +
                                    ") has inconsistent size");
      constant.block(r0, c0, heights[i], widths[j]) = b.constant();
      for (const auto& [k, T] : b.terms()) {
        auto it = terms.find(k);
        if (it == terms.end()) it = terms.emplace(k, Matrix::Zero(total_r, total_c)).first;
        it->second.block(r0, c0, heights[i], widths[j]) = T;
      }
      c0 += widths[j];
    }
    r0 += heights[i];
  }
  AffineMatrix out(std::move(constant));
  for (auto& [k, T] : terms) out += AffineMatrix::term(k, std::move(T));
  return out;
}

AffineMatrix block_diag(const std::vector<AffineMatrix>& blocks) {
  const std::size_t n = blocks.size();
  std::vector<std::vector<AffineMatrix>> grid(n, std::vector<AffineMatrix>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      grid[i][j] = i == j ? blocks[i] : AffineMatrix::zero(blocks[i].rows(), blocks[j].cols());
  return block_matrix(grid);
}

AffineMatrix symmetric_blocks(const std::vector<int>& sizes, const std::vector<std::vector<AffineMatrix>>& lower) {
  const std::size_t n = sizes.size();
  if (lower.size() > n) throw std::invalid_argument("symmetric_blocks: more block rows than sizes");
  auto entry = [&](std::size_t i, std::size_t j) -> const AffineMatrix* {
    if (i >= lower.size() || j >= lower[i].size()) return nullptr;
    const AffineMatrix& b = lower[i][j];
    return (b.rows() == 0 && b.cols() == 0) ? nullptr : &b;
  };
  std::vector<std::vector<AffineMatrix>> grid(n, std::vector<AffineMatrix>(n));
  for (std::size_t i = 0; i < n; ++i) {
    if (i < lower.size() && lower[i].size() > i + 1)
      throw std::invalid_argument("symmetric_blocks: row " + std::to_string(i) + " extends past the diagonal");
    for (std::size_t j = 0; j <= i; ++j) {
      const AffineMatrix* b = entry(i, j);
      if (!b) {
        grid[i][j] = AffineMatrix::zero(sizes[i], sizes[j]);
      } else {
        if (b->rows() != sizes[i] || b->cols() != sizes[j])
          throw std::invalid_argument("symmetric_blocks: block (" + std::to_string(i) + "," + std::to_string(j) +
                                      ") has inconsistent size");
        grid[i][j] = *b;
      }
      if (j < i) grid[j][i] = grid[i][j].transpose();
    }
  }
  return block_matrix(grid);
}

AffineMatrix kron(const Matrix& A, const AffineMatrix& X) {
  AffineMatrix out(iqcsync::kron(A, X.constant()));
  for (const auto& [k, T] : X.terms()) out += AffineMatrix::term(k, iqcsync::kron(A, T));
  return out;
}

AffineMatrix repeat_rows(const AffineMatrix& X, int count) {
  if (count <= 0) throw std::invalid_argument("repeat_rows: count must be positive");
  return kron(Matrix::Ones(count, 1), X);
}

std::string to_string(Status s) {
  switch (s) {
    case Status::Feasible: return "FEASIBLE";
    case Status::Optimal: return "OPTIMAL";
    case Status::Infeasible: return "INFEASIBLE";
    case Status::Unbounded: return "UNBOUNDED";
    case Status::NumericalFailure: return "NUMERICAL_FAILURE";
  }
  return "UNKNOWN";
}

// ---------------------------------------------------------------------------
// LmiProblem

AffineMatrix LmiProblem::add_symmetric(const std::string& name, int n) {
  if (n <= 0) throw std::invalid_argument("add_symmetric: size must be positive");
  if (has_variable(name)) throw std::invalid_argument("duplicate variable '" + name + "'");
  variables_.push_back({name, VarKind::Symmetric, n, n, num_scalars_, n * (n + 1) / 2});
  num_scalars_ += variables_.back().count;
  return variable_expr(name);
}

AffineMatrix LmiProblem::add_rectangular(const std::string& name, int rows, int cols) {
  if (rows <= 0 || cols <= 0) throw std::invalid_argument("add_rectangular: sizes must be positive");
  if (has_variable(name)) throw std::invalid_argument("duplicate variable '" + name + "'");
  variables_.push_back({name, VarKind::Rectangular, rows, cols, num_scalars_, rows * cols});
  num_scalars_ += variables_.back().count;
  return variable_expr(name);
}

AffineMatrix LmiProblem::add_scalar(const std::string& name, bool positive) {
  if (has_variable(name)) throw std::invalid_argument("duplicate variable '" + name + "'");
  Variable v{name, VarKind::Scalar, 1, 1, num_scalars_, 1};
  AffineMatrix expr = AffineMatrix::term(num_scalars_, Matrix::Ones(1, 1));
  ++num_scalars_;
  variables_.push_back(v);
  if (positive) add_constraint(expr, Sense::PositiveDefinite, name + " > 0");
  return expr;
}

void LmiProblem::add_constraint(const AffineMatrix& expr, Sense sense, const std::string& label) {
  if (expr.rows() != expr.cols() || expr.rows() == 0)
    throw std::invalid_argument("constraint '" + label + "' is not a nonempty square matrix");
  const double scale = 1.0 + expr.constant().norm();
  if (!is_symmetric(expr.constant(), 1e-10 * scale))
    throw std::invalid_argument("constraint '" + label + "' has a non-symmetric constant part");
  for (const auto& [k, T] : expr.terms()) {
    if (k >= num_scalars_) throw std::invalid_argument("constraint '" + label + "' uses an undeclared variable");
    if (!is_symmetric(T, 1e-10 * (1.0 + T.norm())))
      throw std::invalid_argument("constraint '" + label + "' is not symmetric in the variables");
  }
  Constraint c{label, expr, sense, 0.0};
  if (sense == Sense::NegativeDefinite || sense == Sense::PositiveDefinite) {
    const double spectral_norm = expr.constant().jacobiSvd().singularValues()(0);
    c.margin = margin_scale_ * (1.0 + spectral_norm);
  }
  constraints_.push_back(std::move(c));
}

void LmiProblem::minimize(const AffineMatrix& objective) {
  if (objective.rows() != 1 || objective.cols() != 1) throw std::invalid_argument("objective must be 1x1");
  objective_ = objective;
}

const Variable& LmiProblem::variable(const std::string& name) const {
  for (const auto& v : variables_)
    if (v.name == name) return v;
  throw std::out_of_range("unknown variable '" + name + "'");
}

bool LmiProblem::has_variable(const std::string& name) const {
  return std::any_of(variables_.begin(), variables_.end(), [&](const Variable& v) { return v.name == name; });
}

AffineMatrix LmiProblem::variable_expr(const std::string& name) const {
  const Variable& v = variable(name);
  AffineMatrix expr(v.rows, v.cols);
  int k = v.first;
  if (v.kind == VarKind::Symmetric) {
    for (int j = 0; j < v.cols; ++j)
      for (int i = j; i < v.rows; ++i) {
        Matrix E = Matrix::Zero(v.rows, v.cols);
        E(i, j) = 1.0;
        E(j, i) = 1.0;
        expr += AffineMatrix::term(k++, E);
      }
  } else {
    for (int j = 0; j < v.cols; ++j)
      for (int i = 0; i < v.rows; ++i) {
        Matrix E = Matrix::Zero(v.rows, v.cols);
        E(i, j) = 1.0;
        expr += AffineMatrix::term(k++, E);
      }
  }
  return expr;
}

Matrix LmiProblem::value(const std::string& name, const Vector& x) const {
  const Variable& v = variable(name);
  if (x.size() < v.first + v.count) throw std::invalid_argument("value: solution vector too short");
  Matrix out(v.rows, v.cols);
  int k = v.first;
  switch (v.kind) {
    case VarKind::Symmetric:
      for (int j = 0; j < v.cols; ++j)
        for (int i = j; i < v.rows; ++i) {
          out(i, j) = x(k);
          out(j, i) = x(k);
          ++k;
        }
      break;
    case VarKind::Rectangular:
    case VarKind::Scalar:
      for (int j = 0; j < v.cols; ++j)
        for (int i = 0; i < v.rows; ++i) out(i, j) = x(k++);
      break;
  }
  return out;
}

Vector LmiProblem::pack(const std::map<std::string, Matrix>& values) const {
  Vector x = Vector::Zero(num_scalars_);
  for (const auto& [name, M] : values) {
    const Variable& v = variable(name);
    if (M.rows() != v.rows || M.cols() != v.cols) throw std::invalid_argument("pack: wrong shape for '" + name + "'");
    int k = v.first;
    if (v.kind == VarKind::Symmetric) {
      for (int j = 0; j < v.cols; ++j)
        for (int i = j; i < v.rows; ++i) x(k++) = 0.5 * (M(i, j) + M(j, i));
    } else {
      for (int j = 0; j < v.cols; ++j)
        for (int i = 0; i < v.rows; ++i) x(k++) = M(i, j);
    }
  }
  return x;
}

std::vector<ConstraintCheck> LmiProblem::check(const Vector& x, double margin_fraction, double tol) const {
  std::vector<ConstraintCheck> out;
  out.reserve(constraints_.size());
  for (const auto& c : constraints_) {
    const Matrix G = symmetrize(c.expr.evaluate(x));
    const bool negative = c.sense == Sense::NegativeDefinite || c.sense == Sense::NegativeSemidefinite;
    const double depth = negative ? -max_eigenvalue(G) : min_eigenvalue(G);
    const bool strict = c.sense == Sense::NegativeDefinite || c.sense == Sense::PositiveDefinite;
    const bool ok = strict ? depth >= margin_fraction * c.margin : depth >= -tol * (1.0 + G.norm());
    out.push_back({c.label, depth, c.margin, ok && std::isfinite(depth)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Solver

namespace {

using detail::ConicBlock;
using detail::ConicProblem;
using detail::IpmOutcome;

// PSD form of a constraint with its margin folded into the constant.
ConicBlock to_block(const Constraint& c) {
  const bool negative = c.sense == Sense::NegativeDefinite || c.sense == Sense::NegativeSemidefinite;
  const double s = negative ? -1.0 : 1.0;
  const int n = c.expr.rows();
  ConicBlock b;
  b.constant = symmetrize(s * c.expr.constant()) - c.margin * Matrix::Identity(n, n);
  for (const auto& [k, T] : c.expr.terms())
    if (T.cwiseAbs().maxCoeff() > 0.0) b.terms.emplace_back(k, symmetrize(s * T));
  return b;
}

// [[R I, x], [x', R]] >= 0  <=>  ||x|| <= R.
ConicBlock radius_block(int n, double R) {
  ConicBlock b;
  b.constant = R * Matrix::Identity(n + 1, n + 1);
  for (int k = 0; k < n; ++k) {
    Matrix E = Matrix::Zero(n + 1, n + 1);
    E(k, n) = 1.0;
    E(n, k) = 1.0;
    b.terms.emplace_back(k, E);
  }
  return b;
}

double worst_normalised_depth(const std::vector<ConstraintCheck>& checks) {
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& c : checks) worst = std::min(worst, c.depth);
  return checks.empty() ? 0.0 : worst;
}

std::string first_violation(const std::vector<ConstraintCheck>& checks) {
  for (const auto& c : checks)
    if (!c.satisfied)
      return "constraint '" + c.label + "' has depth " + std::to_string(c.depth) + " (margin " +
             std::to_string(c.margin) + ")";
  return {};
}

}  // namespace

std::string backend_name() {
  const char* env = std::getenv("IQCSYNC_SOLVER");
  if (env == nullptr || std::string(env).empty() || std::string(env) == "ipm") return "ipm";
  static std::once_flag warned;
  std::call_once(warned, [env] {
    std::cerr << "iqcsync: solver backend '" << env << "' is not available, using the built-in ipm\n";
  });
  return "ipm";
}

LmiSolution solve(const LmiProblem& problem, const SolverOptions& options) {
  LmiSolution sol;
  sol.backend = backend_name();
  const int n = problem.num_scalars();
  if (n == 0) throw std::invalid_argument("solve: problem has no variables");
  if (problem.constraints().empty()) throw std::invalid_argument("solve: problem has no constraints");

  std::vector<ConicBlock> blocks;
  for (const auto& c : problem.constraints()) blocks.push_back(to_block(c));

  // Phase 1: minimise t + rho r subject to G_b(x) + t I >= 0, t >= -1,
  // ||x|| <= r <= R. The small weight on r picks a moderately scaled point
  // when the constraints are homogeneous.
  const int it = n, ir = n + 1;
  ConicProblem p1;
  p1.num_vars = n + 2;
  double lmin = std::numeric_limits<double>::infinity();
  for (ConicBlock b : blocks) {
    lmin = std::min(lmin, min_eigenvalue(b.constant));
    b.terms.emplace_back(it, Matrix::Identity(b.size(), b.size()));
    p1.blocks.push_back(std::move(b));
  }
  {
    ConicBlock floor;
    floor.constant = Matrix::Ones(1, 1);
    floor.terms.emplace_back(it, Matrix::Ones(1, 1));
    p1.blocks.push_back(std::move(floor));
    ConicBlock rad = radius_block(n, 0.0);
    Matrix I = Matrix::Identity(n + 1, n + 1);
    rad.terms.emplace_back(ir, I);
    p1.blocks.push_back(std::move(rad));
    ConicBlock cap;
    cap.constant = options.radius * Matrix::Ones(1, 1);
    cap.terms.emplace_back(ir, -Matrix::Ones(1, 1));
    p1.blocks.push_back(std::move(cap));
  }
  Vector z0 = Vector::Zero(n + 2);
  z0(it) = std::max(0.0, -lmin) + 1.0;
  z0(ir) = 1.0;

  detail::IpmOptions o1;
  o1.max_iterations = options.max_iterations;
  o1.tolerance = options.tolerance;
  o1.verbose = options.verbose;
  auto phase1 = [&](double rho) {
    p1.c = Vector::Zero(n + 2);
    p1.c(it) = 1.0;
    p1.c(ir) = rho;
    return detail::solve_conic(p1, z0, o1);
  };
  auto r1 = phase1(1e-8);
  sol.iterations = r1.iterations;
  if (!(r1.x(it) < 0.0)) {
    // The size penalty can hide a thin feasible set; retry without it.
    r1 = phase1(0.0);
    sol.iterations += r1.iterations;
  }
  sol.phase1_depth = -r1.x(it);

  const bool found = r1.x(it) < 0.0;
  if (!found) {
    if (r1.outcome == IpmOutcome::Converged) {
      sol.status = Status::Infeasible;
      sol.message = "no point satisfies the constraints with their margins (best uniform slack " +
                    std::to_string(-r1.x(it)) + ")";
    } else {
      sol.status = Status::NumericalFailure;
      sol.message = "feasibility phase did not converge (best uniform slack " + std::to_string(-r1.x(it)) + ")";
    }
    sol.x = r1.x.head(n);
    sol.checks = problem.check(sol.x);
    sol.worst_depth = worst_normalised_depth(sol.checks);
    return sol;
  }
  Vector x = r1.x.head(n);

  if (problem.objective()) {
    const AffineMatrix& obj = *problem.objective();
    ConicProblem p2;
    p2.num_vars = n;
    p2.blocks = blocks;
    p2.blocks.push_back(radius_block(n, options.radius));
    p2.c = Vector::Zero(n);
    for (const auto& [k, T] : obj.terms()) p2.c(k) = T(0, 0);

    detail::IpmOptions o2;
    o2.max_iterations = options.max_iterations;
    o2.tolerance = options.tolerance;
    o2.verbose = options.verbose;
    const auto r2 = detail::solve_conic(p2, x, o2);
    sol.iterations += r2.iterations;
    x = r2.x;

    // The radius matters only if relaxing it would still move the
    // objective: its multiplier is the sensitivity of the optimum to R.
    const double sensitivity = r2.Z.back().trace() * options.radius;
    const bool radius_active = sensitivity > 1e-6 * (1.0 + std::abs(r2.primal_objective));
    if (radius_active) {
      sol.status = Status::Unbounded;
      sol.message = "objective decreases until the variables reach the feasibility radius";
    } else if (r2.outcome == IpmOutcome::Converged ||
               (r2.relative_gap < 1e-7 && r2.dual_infeasibility < 1e-6)) {
      sol.status = Status::Optimal;
    } else {
      sol.status = Status::NumericalFailure;
      sol.message = "optimisation phase stopped with relative gap " + std::to_string(r2.relative_gap);
    }
    sol.objective = obj.evaluate(x)(0, 0);
  } else {
    sol.status = Status::Feasible;
  }

  sol.x = x;
  sol.checks = problem.check(x);
  sol.worst_depth = worst_normalised_depth(sol.checks);
  if (sol.ok()) {
    const std::string bad = first_violation(sol.checks);
    if (!bad.empty()) {
      sol.status = Status::NumericalFailure;
      sol.message = "verification failed: " + bad;
    }
  }
  return sol;
}

}  // namespace iqcsync::sdp
