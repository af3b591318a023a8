#include "ipm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace iqcsync::sdp::detail {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Largest alpha with X + alpha dX >= 0, for X > 0.
double max_step(const Matrix& X, const Matrix& dX) {
  Eigen::LLT<Matrix> llt(X);
  if (llt.info() != Eigen::Success) return 0.0;
  const auto L = llt.matrixL();
  Matrix W = L.solve(dX);
  W = L.solve(W.transpose().eval());
  const double lmin = min_eigenvalue(W);
  return lmin >= 0.0 ? kInf : -1.0 / lmin;
}

double inner(const Matrix& A, const Matrix& B) { return A.cwiseProduct(B).sum(); }

}  // namespace

Matrix evaluate_block(const ConicBlock& block, const Vector& x) {
  Matrix S = block.constant;
  for (const auto& [k, A] : block.terms) S.noalias() += x(k) * A;
  return S;
}

IpmResult solve_conic(const ConicProblem& P, const Vector& x0, const IpmOptions& opt) {
  const int m = P.num_vars;
  const std::size_t nb = P.blocks.size();

  IpmResult res;
  Vector x = x0;
  std::vector<Matrix> S(nb), Z(nb), Rp(nb), Sinv(nb);
  double total_dim = 0.0;
  double data_norm = 1.0;
  for (std::size_t b = 0; b < nb; ++b) {
    const ConicBlock& blk = P.blocks[b];
    const int n = blk.size();
    total_dim += n;
    data_norm = std::max(data_norm, 1.0 + blk.constant.norm());
    Matrix Sx = evaluate_block(blk, x);
    const double lmin = min_eigenvalue(Sx);
    if (!(lmin > 0.0)) Sx += (1.0 - lmin) * Matrix::Identity(n, n);
    S[b] = Sx;
    Z[b] = Matrix::Identity(n, n);
  }
  const double cost_norm = 1.0 + P.c.norm();

  int stalls = 0;
  for (int it = 0; it < opt.max_iterations; ++it) {
    res.iterations = it;
    Vector rd = P.c;
    double gap = 0.0, dobj = 0.0, pinf = 0.0;
    for (std::size_t b = 0; b < nb; ++b) {
      const ConicBlock& blk = P.blocks[b];
      Rp[b] = evaluate_block(blk, x) - S[b];
      pinf = std::max(pinf, Rp[b].norm());
      for (const auto& [k, A] : blk.terms) rd(k) -= inner(A, Z[b]);
      gap += inner(S[b], Z[b]);
      dobj -= inner(blk.constant, Z[b]);
    }
    const double pobj = P.c.dot(x);
    const double mu = gap / total_dim;
    pinf /= data_norm;
    const double dinf = rd.norm() / cost_norm;
    const double relgap = gap / (1.0 + std::abs(pobj) + std::abs(dobj));
    res.primal_objective = pobj;
    res.dual_objective = dobj;
    res.primal_infeasibility = pinf;
    res.dual_infeasibility = dinf;
    res.relative_gap = relgap;
    if (opt.verbose)
      std::fprintf(stderr, "ipm %3d  pobj % .10e  dobj % .10e  gap %.2e  pinf %.2e  dinf %.2e\n", it, pobj, dobj,
                   relgap, pinf, dinf);

    if (relgap < opt.tolerance && pinf < opt.tolerance && dinf < opt.tolerance) {
      res.outcome = IpmOutcome::Converged;
      break;
    }
    if (opt.early_stop && pinf < opt.tolerance && opt.early_stop(x)) {
      res.outcome = IpmOutcome::EarlyStop;
      break;
    }

    // Schur complement B_kj = Tr(A_k S^-1 A_j Z).
    Matrix B = Matrix::Zero(m, m);
    for (std::size_t b = 0; b < nb; ++b) {
      const ConicBlock& blk = P.blocks[b];
      const int n = blk.size();
      Eigen::LLT<Matrix> llt(S[b]);
      Sinv[b] = llt.solve(Matrix::Identity(n, n));
      for (const auto& [k, Ak] : blk.terms) {
        const Matrix G = Sinv[b] * Ak * Z[b];
        for (const auto& [j, Aj] : blk.terms) B(j, k) += inner(Aj, G);
      }
    }
    B = 0.5 * (B + B.transpose()).eval();
    Eigen::LLT<Matrix> Bfac(B);
    double reg = 1e-14 * std::max(1.0, B.diagonal().cwiseAbs().maxCoeff());
    while (Bfac.info() != Eigen::Success && reg < 1e10) {
      Bfac.compute(B + reg * Matrix::Identity(m, m));
      reg *= 100.0;
    }

    std::vector<Matrix> dS(nb), dZ(nb);
    auto direction = [&](const std::vector<Matrix>& Rc, Vector& dx) {
      Vector rhs = -P.c;
      std::vector<Matrix> H(nb);
      for (std::size_t b = 0; b < nb; ++b) {
        H[b] = Sinv[b] * (Rc[b] - Rp[b] * Z[b]);
        for (const auto& [k, A] : P.blocks[b].terms) rhs(k) += inner(A, H[b]);
      }
      dx = Bfac.solve(rhs);
      for (std::size_t b = 0; b < nb; ++b) {
        dS[b] = Rp[b];
        for (const auto& [k, A] : P.blocks[b].terms) dS[b].noalias() += dx(k) * A;
        Matrix dz = Sinv[b] * (Rc[b] - dS[b] * Z[b]) - Z[b];
        dZ[b] = 0.5 * (dz + dz.transpose());
      }
    };
    auto steps = [&](double frac, double& ap, double& ad) {
      ap = kInf;
      ad = kInf;
      for (std::size_t b = 0; b < nb; ++b) {
        ap = std::min(ap, max_step(S[b], dS[b]));
        ad = std::min(ad, max_step(Z[b], dZ[b]));
      }
      ap = std::min(1.0, frac * ap);
      ad = std::min(1.0, frac * ad);
    };

    // Predictor.
    std::vector<Matrix> Rc(nb);
    for (std::size_t b = 0; b < nb; ++b) Rc[b] = Matrix::Zero(P.blocks[b].size(), P.blocks[b].size());
    Vector dx;
    direction(Rc, dx);
    double ap = 0.0, ad = 0.0;
    steps(1.0, ap, ad);
    double mu_aff = 0.0;
    for (std::size_t b = 0; b < nb; ++b) mu_aff += inner(S[b] + ap * dS[b], Z[b] + ad * dZ[b]);
    mu_aff /= total_dim;
    const double sigma = std::clamp(std::pow(std::max(mu_aff, 0.0) / mu, 3.0), 0.0, 1.0);

    // Corrector.
    for (std::size_t b = 0; b < nb; ++b) {
      const int n = P.blocks[b].size();
      Rc[b] = sigma * mu * Matrix::Identity(n, n) - dS[b] * dZ[b];
    }
    direction(Rc, dx);
    const double frac = relgap < 1e-4 ? 0.98 : opt.step_fraction;
    steps(frac, ap, ad);

    x += ap * dx;
    for (std::size_t b = 0; b < nb; ++b) {
      S[b] += ap * dS[b];
      S[b] = 0.5 * (S[b] + S[b].transpose()).eval();
      Z[b] += ad * dZ[b];
      Z[b] = 0.5 * (Z[b] + Z[b].transpose()).eval();
    }
    stalls = (ap < 1e-10 && ad < 1e-10) ? stalls + 1 : 0;
    if (stalls >= 3) {
      res.outcome = IpmOutcome::Stalled;
      res.iterations = it + 1;
      break;
    }
    res.iterations = it + 1;
  }
  res.x = x;
  res.S = std::move(S);
  res.Z = std::move(Z);
  return res;
}

}  // namespace iqcsync::sdp::detail
