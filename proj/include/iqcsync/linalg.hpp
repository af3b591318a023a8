#pragma once

#include <Eigen/Dense>

namespace iqcsync {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Symmetric PSD square root through an eigendecomposition. Negative
// eigenvalues within round-off are clamped to zero.
Matrix sym_sqrt(const Matrix& S);

double max_eigenvalue(const Matrix& S);
double min_eigenvalue(const Matrix& S);

bool is_symmetric(const Matrix& S, double tol = 1e-12);
bool is_positive_definite(const Matrix& S);
bool all_finite(const Matrix& M);

Matrix symmetrize(const Matrix& S);
Matrix kron(const Matrix& A, const Matrix& B);

// Largest real part among the eigenvalues of a square matrix.
double spectral_abscissa(const Matrix& A);

}  // namespace iqcsync
