#include "iqcsync/linalg.hpp"

#include <limits>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/KroneckerProduct>

namespace iqcsync {

Matrix sym_sqrt(const Matrix& S) {
  if (S.rows() != S.cols()) throw std::invalid_argument("sym_sqrt: matrix is not square");
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(S));
  Vector w = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * w.asDiagonal() * es.eigenvectors().transpose();
}

double max_eigenvalue(const Matrix& S) {
  if (S.size() == 0) return -std::numeric_limits<double>::infinity();
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(S), Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

double min_eigenvalue(const Matrix& S) {
  if (S.size() == 0) return std::numeric_limits<double>::infinity();
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(S), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

bool is_symmetric(const Matrix& S, double tol) {
  if (S.rows() != S.cols()) return false;
  const double scale = 1.0 + S.cwiseAbs().maxCoeff();
  return (S - S.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

bool is_positive_definite(const Matrix& S) {
  if (S.rows() != S.cols() || S.size() == 0) return false;
  if (!is_symmetric(S, 1e-10)) return false;
  Eigen::LLT<Matrix> llt(symmetrize(S));
  return llt.info() == Eigen::Success && min_eigenvalue(S) > 0.0;
}

bool all_finite(const Matrix& M) { return M.allFinite(); }

Matrix symmetrize(const Matrix& S) { return 0.5 * (S + S.transpose()); }

Matrix kron(const Matrix& A, const Matrix& B) {
  return Eigen::kroneckerProduct(A, B).eval();
}

double spectral_abscissa(const Matrix& A) {
  Eigen::EigenSolver<Matrix> es(A, false);
  return es.eigenvalues().real().maxCoeff();
}

}  // namespace iqcsync
