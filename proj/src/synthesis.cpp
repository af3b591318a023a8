#include "iqcsync/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Cholesky>

namespace iqcsync {

namespace {

using sdp::AffineMatrix;
using sdp::LmiProblem;
using sdp::Sense;

struct Reciprocal {
  std::string var;
  std::string multiplier;
};

// An assembled synthesis problem before the objective is chosen.
struct Formulation {
  Method method = Method::Thm1;
  LmiProblem lmi;
  AffineMatrix Y;
  std::optional<AffineMatrix> F;
  std::vector<Reciprocal> reciprocals;
  std::vector<std::string> node_labels;

  explicit Formulation(double margin_scale) : lmi(margin_scale) {}
};

std::string node_label(int i) { return "node " + std::to_string(i); }

// M * s for a 1x1 affine scalar s.
AffineMatrix times(const Matrix& M, const AffineMatrix& s) { return sdp::kron(M, s); }

Matrix eye(int n) { return Matrix::Identity(n, n); }

AffineMatrix reciprocal(Formulation& f, const std::string& var, const std::string& multiplier) {
  f.reciprocals.push_back({var, multiplier});
  return f.lmi.add_scalar(var, true);
}

void require_e0(const Vector& e0, int N, int n) {
  if (e0.size() != static_cast<Eigen::Index>(N) * n)
    throw std::invalid_argument("initial error vector must have N*n = " + std::to_string(N * n) + " entries");
}

void require_spectral(const SpectralData& sd, const Topology& topo) {
  if (sd.N() != topo.N) throw std::invalid_argument("spectral data does not match the topology");
}

Formulation build_thm1(const SystemModel& mdl, const Topology& topo, const SpectralData& sd, double margin_scale) {
  const int n = mdl.n(), p = mdl.p(), r = mdl.r(), N = topo.N;
  Formulation f(margin_scale);
  f.method = Method::Thm1;
  f.Y = f.lmi.add_symmetric("Y", n);
  f.F = f.lmi.add_rectangular("F", p, n);
  f.lmi.add_constraint(f.Y, Sense::PositiveDefinite, "Y > 0");
  std::vector<AffineMatrix> pinv, tinv;
  for (int i = 1; i <= N; ++i) pinv.push_back(reciprocal(f, "pinv_" + std::to_string(i), "pi_" + std::to_string(i)));
  if (N > 1)
    for (int i = 1; i <= N; ++i)
      tinv.push_back(reciprocal(f, "tinv_" + std::to_string(i), "theta_" + std::to_string(i)));

  const Matrix Rinv = mdl.R.inverse();
  const Matrix B2B2 = mdl.B2 * mdl.B2.transpose();
  const AffineMatrix& Y = f.Y;
  const AffineMatrix& F = *f.F;
  const AffineMatrix CY = mdl.C * Y;
  for (int i = 0; i < N; ++i) {
    const double lam = sd.lambdas(i);
    const double mii2 = sd.M(i, i) * sd.M(i, i);
    const double moff2 = sd.M.row(i).squaredNorm() - mii2;
    AffineMatrix Z = mdl.A * Y + Y * mdl.A.transpose() +
                     lam * (F.transpose() * mdl.B1.transpose() + mdl.B1 * F) + times(mii2 * B2B2, pinv[i]);
    if (N > 1) Z += times(moff2 * B2B2, tinv[i]);
    const Matrix Qh = sym_sqrt(lam * mdl.Q);

    std::vector<int> sizes{n, p, n, r};
    std::vector<std::vector<AffineMatrix>> lower{
        {Z},
        {F, AffineMatrix(Matrix(-Rinv / (lam * lam)))},
        {Qh * Y, {}, AffineMatrix(Matrix(-eye(n)))},
        {CY, {}, {}, -times(eye(r), pinv[i])},
    };
    if (N > 1) {
      std::vector<AffineMatrix> theta_blocks;
      for (int j = 0; j < N; ++j)
        if (j != i) theta_blocks.push_back(-times(eye(r), tinv[j]));
      sizes.push_back((N - 1) * r);
      lower.push_back({sdp::repeat_rows(CY, N - 1), {}, {}, {}, sdp::block_diag(theta_blocks)});
    }
    f.lmi.add_constraint(sdp::symmetric_blocks(sizes, lower), Sense::NegativeDefinite, node_label(i + 1));
    f.node_labels.push_back(node_label(i + 1));
  }
  return f;
}

Formulation build_thm2(const SystemModel& mdl, const Topology& topo, const SpectralData& sd, double margin_scale) {
  const int n = mdl.n(), r = mdl.r(), N = topo.N;
  Formulation f(margin_scale);
  f.method = Method::Thm2;
  f.Y = f.lmi.add_symmetric("Y", n);
  f.lmi.add_constraint(f.Y, Sense::PositiveDefinite, "Y > 0");
  const AffineMatrix pinv = reciprocal(f, "pinv", "pi");
  std::optional<AffineMatrix> tinv;
  if (N > 1) tinv = reciprocal(f, "tinv", "theta");

  const double lmin = sd.lambda_min, lmax = sd.lambda_max;
  const Matrix B2B2 = mdl.B2 * mdl.B2.transpose();
  const AffineMatrix& Y = f.Y;
  AffineMatrix Z = mdl.A * Y + Y * mdl.A.transpose() -
                   AffineMatrix(Matrix((lmin * lmin) / (lmax * lmax) * mdl.B1 * mdl.R.inverse() *
                                       mdl.B1.transpose())) +
                   times(sd.w2 * B2B2, pinv);
  if (tinv) Z += times(sd.q2 * B2B2, *tinv);
  const Matrix Qh = sym_sqrt(lmax * mdl.Q);
  const AffineMatrix CY = mdl.C * Y;

  std::vector<int> sizes{n, n, r};
  std::vector<std::vector<AffineMatrix>> lower{
      {Z},
      {Qh * Y, AffineMatrix(Matrix(-eye(n)))},
      {CY, {}, -times(eye(r), pinv)},
  };
  if (tinv) {
    sizes.push_back(r);
    lower.push_back({CY, {}, {}, -times(eye(r) / (N - 1), *tinv)});
  }
  f.lmi.add_constraint(sdp::symmetric_blocks(sizes, lower), Sense::NegativeDefinite, "shared");
  f.node_labels.push_back("shared");
  return f;
}

// Thm3 and Thm4 share their layout; they differ in the bound matrices of
// each coupling direction and in the control-gain weight of Z_i.
struct DirectionalBounds {
  // (i, j) -> C_ij for j in S_i, plus (i, 0) and (0, i) for d_i = 1.
  std::map<std::pair<int, int>, Matrix> C;
  bool per_edge_nu = false;  // Thm4: nu_ij per edge instead of one nu_i per node
};

Formulation build_decentralised(Method method, const SystemModel& mdl, const Topology& topo, const SpectralData& sd,
                                const DirectionalBounds& bounds, double margin_scale) {
  const int n = mdl.n(), N = topo.N;
  Formulation f(margin_scale);
  f.method = method;
  f.Y = f.lmi.add_symmetric("Y", n);
  f.lmi.add_constraint(f.Y, Sense::PositiveDefinite, "Y > 0");
  const AffineMatrix& Y = f.Y;
  const auto tag = [](int a, int b) { return std::to_string(a) + "_" + std::to_string(b); };

  std::vector<std::vector<int>> S(N + 1);
  for (int i = 1; i <= N; ++i) S[i] = topo.phys_neighbors(i);

  std::map<int, AffineMatrix> nuinv, nu0inv, mu0inv;
  std::map<std::pair<int, int>, AffineMatrix> nuinv_edge, muinv;
  for (int i = 1; i <= N; ++i) {
    if (!bounds.per_edge_nu && !S[i].empty())
      nuinv.emplace(i, reciprocal(f, "nuinv_" + std::to_string(i), "nu_" + std::to_string(i)));
    for (int j : S[i]) {
      if (bounds.per_edge_nu) nuinv_edge.emplace(std::pair{i, j}, reciprocal(f, "nuinv_" + tag(i, j), "nu_" + tag(i, j)));
      muinv.emplace(std::pair{i, j}, reciprocal(f, "muinv_" + tag(i, j), "mu_" + tag(i, j)));
    }
    if (topo.d[i - 1] != 0) {
      nu0inv.emplace(i, reciprocal(f, "nu0inv_" + std::to_string(i), "nu_" + tag(i, 0)));
      mu0inv.emplace(i, reciprocal(f, "mu0inv_" + std::to_string(i), "mu_" + tag(0, i)));
    }
  }

  const double lmin = sd.lambda_min, lmax = sd.lambda_max;
  const double gain_weight = method == Method::Thm4 ? lmax : lmin;
  const Matrix BRB = gain_weight * mdl.B1 * mdl.R.inverse() * mdl.B1.transpose();
  const Matrix B2B2 = mdl.B2 * mdl.B2.transpose();
  const Matrix Qbh = sym_sqrt((lmin / lmax) * mdl.Q);
  const auto bound_of = [&](int a, int b) -> const Matrix& {
    auto it = bounds.C.find({a, b});
    if (it == bounds.C.end())
      throw std::invalid_argument("missing bound matrix for coupling direction (" + std::to_string(a) + ", " +
                                  std::to_string(b) + ")");
    if (it->second.cols() != n) throw std::invalid_argument("bound matrix has the wrong number of columns");
    return it->second;
  };

  AffineMatrix leader_sum(1, 1);
  for (const auto& [k, v] : mu0inv) leader_sum += v;

  for (int i = 1; i <= N; ++i) {
    const int fi = static_cast<int>(S[i].size());
    const bool di = topo.d[i - 1] != 0;
    AffineMatrix coef = leader_sum;
    if (!bounds.per_edge_nu && fi > 0) coef += static_cast<double>(fi * fi) * nuinv.at(i);
    for (int j : S[i]) {
      coef += muinv.at({i, j});
      if (bounds.per_edge_nu) coef += nuinv_edge.at({i, j});
    }
    if (di) coef += nu0inv.at(i);
    const AffineMatrix Z = mdl.A * Y + Y * mdl.A.transpose() - AffineMatrix(BRB) + times(B2B2, coef);

    // Off-diagonal rows G_k Y paired with diagonal blocks -w_k I.
    std::vector<std::pair<Matrix, AffineMatrix>> rows;
    if (bounds.per_edge_nu) {
      for (int j : S[i]) rows.emplace_back(bound_of(i, j), nuinv_edge.at({i, j}));
    } else if (fi > 0) {
      rows.emplace_back(bound_of(i, S[i].front()), nuinv.at(i));
    }
    for (int j : S[i]) rows.emplace_back(bound_of(j, i), muinv.at({j, i}));
    if (di) {
      rows.emplace_back(bound_of(i, 0), nu0inv.at(i));
      rows.emplace_back(bound_of(0, i), (1.0 / N) * mu0inv.at(i));
    }

    std::vector<int> sizes{n, n};
    std::vector<std::vector<AffineMatrix>> lower{{Z}, {Qbh * Y, AffineMatrix(Matrix(-eye(n)))}};
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const int rk = static_cast<int>(rows[k].first.rows());
      sizes.push_back(rk);
      std::vector<AffineMatrix> row(sizes.size());
      row[0] = rows[k].first * Y;
      row.back() = -times(eye(rk), rows[k].second);
      lower.push_back(std::move(row));
    }
    f.lmi.add_constraint(sdp::symmetric_blocks(sizes, lower), Sense::NegativeDefinite, node_label(i));
    f.node_labels.push_back(node_label(i));
  }
  return f;
}

DirectionalBounds identical_bounds(const SystemModel& mdl, const Topology& topo) {
  DirectionalBounds b;
  for (int i = 1; i <= topo.N; ++i) {
    for (int j : topo.phys_neighbors(i)) b.C[{i, j}] = mdl.C;
    if (topo.d[i - 1] != 0) {
      b.C[{i, 0}] = mdl.C;
      b.C[{0, i}] = mdl.C;
    }
  }
  return b;
}

DirectionalBounds edge_bounds(const EdgeCouplingSet& couplings, const Topology& topo) {
  check_couplings(couplings, topo);
  DirectionalBounds b;
  b.per_edge_nu = true;
  for (const auto& [key, op] : couplings.entries()) b.C[key] = op.C();
  return b;
}

Formulation build_cor1(const SystemModel& mdl, const Topology& topo, const SpectralData& sd, double margin_scale) {
  if (mdl.B2.cwiseAbs().maxCoeff() != 0.0 || mdl.C.cwiseAbs().maxCoeff() != 0.0)
    throw std::invalid_argument("the uncoupled condition requires B2 = 0 and C = 0");
  const int n = mdl.n(), N = topo.N;
  Formulation f(margin_scale);
  f.method = Method::Cor1;
  f.Y = f.lmi.add_symmetric("Y", n);
  f.lmi.add_constraint(f.Y, Sense::PositiveDefinite, "Y > 0");
  const Matrix BRB = mdl.B1 * mdl.R.inverse() * mdl.B1.transpose();
  const double lmax = sd.lambda_max;
  for (int i = 0; i < N; ++i) {
    const double rho = sd.lambdas(i) / lmax;
    const AffineMatrix Z = mdl.A * f.Y + f.Y * mdl.A.transpose() - AffineMatrix(Matrix(rho * (2.0 - rho) * BRB));
    const Matrix Qh = sym_sqrt(sd.lambdas(i) * mdl.Q);
    f.lmi.add_constraint(sdp::symmetric_blocks({n, n}, {{Z}, {Qh * f.Y, AffineMatrix(Matrix(-eye(n)))}}),
                         Sense::NegativeDefinite, node_label(i + 1));
    f.node_labels.push_back(node_label(i + 1));
  }
  return f;
}

Formulation build(Method m, const SystemModel& mdl, const Topology& topo, const SpectralData& sd,
                  const EdgeCouplingSet* couplings, double margin_scale) {
  mdl.validate();
  topo.validate();
  require_spectral(sd, topo);
  switch (m) {
    case Method::Thm1: return build_thm1(mdl, topo, sd, margin_scale);
    case Method::Thm2: return build_thm2(mdl, topo, sd, margin_scale);
    case Method::Thm3:
      return build_decentralised(m, mdl, topo, sd, identical_bounds(mdl, topo), margin_scale);
    case Method::Thm4:
      if (couplings == nullptr) throw std::invalid_argument("per-edge synthesis needs a coupling set");
      return build_decentralised(m, mdl, topo, sd, edge_bounds(*couplings, topo), margin_scale);
    case Method::Cor1: return build_cor1(mdl, topo, sd, margin_scale);
  }
  throw std::invalid_argument("unknown method");
}

Matrix gain(Method m, const SystemModel& mdl, const SpectralData& sd, const Matrix& Y, const Matrix* F) {
  const Eigen::LDLT<Matrix> Yf(Y);
  const Matrix RB = mdl.R.inverse() * mdl.B1.transpose();
  switch (m) {
    case Method::Thm1: return Yf.solve(F->transpose()).transpose();
    case Method::Thm2:
      return -(sd.lambda_min / (sd.lambda_max * sd.lambda_max)) * Yf.solve(RB.transpose()).transpose();
    case Method::Thm3:
    case Method::Thm4: return -Yf.solve(RB.transpose()).transpose();
    case Method::Cor1: return -(1.0 / sd.lambda_max) * Yf.solve(RB.transpose()).transpose();
  }
  throw std::invalid_argument("unknown method");
}

Certificate solve_formulation(Formulation& f, Objective objective, const SystemModel& mdl, const SpectralData& sd,
                              const std::optional<Vector>& e0, const SynthesisOptions& opts,
                              const std::function<void(Formulation&)>& add_objective,
                              const std::function<double(const Matrix&)>& bound_of) {
  if (add_objective) add_objective(f);
  const sdp::LmiSolution sol = sdp::solve(f.lmi, opts.solver);

  Certificate cert;
  cert.method = f.method;
  cert.objective = objective;
  cert.status = sol.status;
  cert.margin = sol.worst_depth;
  cert.iterations = sol.iterations;
  cert.message = sol.message;
  if (!sol.ok()) return cert;

  cert.Y = f.lmi.value("Y", sol.x);
  if (f.F) cert.F = f.lmi.value("F", sol.x);
  const Eigen::SelfAdjointEigenSolver<Matrix> es(cert.Y);
  const double ymin = es.eigenvalues().minCoeff(), ymax = es.eigenvalues().maxCoeff();
  if (!(ymin > 0.0) || ymax / ymin > 1e14) {
    cert.status = sdp::Status::NumericalFailure;
    cert.message = "solution Y is numerically singular";
    return cert;
  }
  for (const auto& rc : f.reciprocals) cert.multipliers[rc.multiplier] = 1.0 / f.lmi.value(rc.var, sol.x)(0, 0);
  cert.K = gain(f.method, mdl, sd, cert.Y, cert.F ? &*cert.F : nullptr);
  if (sol.objective) cert.gamma = *sol.objective;
  if (bound_of)
    cert.bound = bound_of(cert.Y);
  else if (e0)
    cert.bound = bound_formula(f.method, cert.Y, *e0, sd);
  return cert;
}

Certificate feasibility(Method m, const SystemModel& mdl, const Topology& topo, const SpectralData& sd,
                        const EdgeCouplingSet* couplings, const Vector& e0, const SynthesisOptions& opts) {
  require_e0(e0, topo.N, mdl.n());
  Formulation f = build(m, mdl, topo, sd, couplings, opts.margin_scale);
  return solve_formulation(f, Objective::Feasibility, mdl, sd, e0, opts, nullptr, nullptr);
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::Thm1: return "THM1";
    case Method::Thm2: return "THM2";
    case Method::Thm3: return "THM3";
    case Method::Thm4: return "THM4";
    case Method::Cor1: return "COR1";
  }
  return "UNKNOWN";
}

Method method_from_string(const std::string& s) {
  std::string u = s;
  std::transform(u.begin(), u.end(), u.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  for (Method m : {Method::Thm1, Method::Thm2, Method::Thm3, Method::Thm4, Method::Cor1})
    if (to_string(m) == u) return m;
  throw std::invalid_argument("unknown synthesis method '" + s + "'");
}

std::string to_string(Objective o) {
  switch (o) {
    case Objective::Feasibility: return "feasible";
    case Objective::Gamma: return "gamma";
    case Objective::Trace: return "trace";
  }
  return "unknown";
}

double bound_scale(Method m, const SpectralData& sd) {
  if (m == Method::Thm3 || m == Method::Thm4) return sd.lambda_min / (sd.lambda_max * sd.lambda_max);
  return 1.0;
}

double bound_formula(Method m, const Matrix& Y, const Vector& e0, const SpectralData& sd) {
  const int n = static_cast<int>(Y.rows());
  if (e0.size() % n != 0) throw std::invalid_argument("initial error length is not a multiple of n");
  const Eigen::LDLT<Matrix> Yf(Y);
  if (Yf.info() != Eigen::Success) throw std::runtime_error("Y is singular");
  const Eigen::Index N = e0.size() / n;
  const Eigen::Map<const Matrix> E(e0.data(), n, N);
  const double quad = (E.transpose() * Yf.solve(E)).trace();
  return quad / bound_scale(m, sd);
}

Certificate synth_thm1(const SystemModel& model, const Topology& topo, const SpectralData& sd, const Vector& e0,
                       const SynthesisOptions& opts) {
  return feasibility(Method::Thm1, model, topo, sd, nullptr, e0, opts);
}

Certificate synth_thm2(const SystemModel& model, const Topology& topo, const SpectralData& sd, const Vector& e0,
                       const SynthesisOptions& opts) {
  return feasibility(Method::Thm2, model, topo, sd, nullptr, e0, opts);
}

Certificate synth_thm3(const SystemModel& model, const Topology& topo, const SpectralData& sd, const Vector& e0,
                       const SynthesisOptions& opts) {
  return feasibility(Method::Thm3, model, topo, sd, nullptr, e0, opts);
}

Certificate synth_thm4(const SystemModel& model, const Topology& topo, const SpectralData& sd,
                       const EdgeCouplingSet& couplings, const Vector& e0, const SynthesisOptions& opts) {
  return feasibility(Method::Thm4, model, topo, sd, &couplings, e0, opts);
}

Certificate synth_cor1(const SystemModel& model, const Topology& topo, const SpectralData& sd, const Vector& e0,
                       const SynthesisOptions& opts) {
  return feasibility(Method::Cor1, model, topo, sd, nullptr, e0, opts);
}

Certificate optimize_bound(Method m, const SystemModel& model, const Topology& topo, const SpectralData& sd,
                           const Vector& e0, const EdgeCouplingSet* couplings, const SynthesisOptions& opts) {
  const int n = model.n(), N = topo.N;
  require_e0(e0, N, n);
  Formulation f = build(m, model, topo, sd, couplings, opts.margin_scale);
  const double s = bound_scale(m, sd);

  // The epigraph is kept non-strict so that the optimal gamma coincides
  // with the bound formula at the optimiser.
  auto add_objective = [&](Formulation& fm) {
    const AffineMatrix sY = s * fm.Y;
    if (N * n <= opts.dense_epigraph_limit) {
      const AffineMatrix gamma = fm.lmi.add_scalar("gamma", false);
      const AffineMatrix e{Matrix(e0)};
      const AffineMatrix big =
          sdp::symmetric_blocks({1, N * n}, {std::vector<AffineMatrix>{gamma}, {e, sdp::kron(eye(N), sY)}});
      fm.lmi.add_constraint(big, Sense::PositiveSemidefinite, "initial error");
      fm.lmi.minimize(gamma);
    } else {
      AffineMatrix total(1, 1);
      for (int i = 0; i < N; ++i) {
        const AffineMatrix gi = fm.lmi.add_scalar("gamma_" + std::to_string(i + 1), false);
        const AffineMatrix ei(Matrix(e0.segment(static_cast<Eigen::Index>(i) * n, n)));
        fm.lmi.add_constraint(sdp::symmetric_blocks({1, n}, {std::vector<AffineMatrix>{gi}, {ei, sY}}), Sense::PositiveSemidefinite,
                              "initial error " + std::to_string(i + 1));
        total += gi;
      }
      fm.lmi.minimize(total);
    }
  };
  return solve_formulation(f, Objective::Gamma, model, sd, e0, opts, add_objective, nullptr);
}

Certificate thm2_point(const SystemModel& model, const Topology& topo, const SpectralData& sd, const Matrix& W,
                       double a, double b, const SynthesisOptions& opts) {
  const int n = model.n();
  if (W.rows() != n || W.cols() != n) throw std::invalid_argument("weight must be n x n");
  if (a < 0.0 || b < 0.0) throw std::invalid_argument("weights must be nonnegative");
  Formulation f = build(Method::Thm2, model, topo, sd, nullptr, opts.margin_scale);
  auto add_objective = [&](Formulation& fm) {
    AffineMatrix obj = a * fm.lmi.variable_expr("pinv");
    if (fm.lmi.has_variable("tinv")) obj += b * fm.lmi.variable_expr("tinv");
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (W(i, j) != 0.0) obj += W(i, j) * (Matrix(eye(n).row(j)) * fm.Y * Matrix(eye(n).col(i)));
    fm.lmi.minimize(-obj);
  };
  Certificate c = solve_formulation(f, Objective::Feasibility, model, sd, std::nullopt, opts, add_objective,
                                    [](const Matrix&) { return 0.0; });
  c.gamma.reset();
  return c;
}

Certificate thm2_certificate(const SystemModel& model, const SpectralData& sd, const Matrix& Y, double pi,
                             double theta) {
  if (!is_positive_definite(Y)) throw std::invalid_argument("Y must be positive definite");
  Certificate c;
  c.method = Method::Thm2;
  c.status = sdp::Status::Feasible;
  c.Y = Y;
  c.multipliers["pi"] = pi;
  if (sd.N() > 1) c.multipliers["theta"] = theta;
  c.K = gain(Method::Thm2, model, sd, Y, nullptr);
  return c;
}

Certificate optimize_trace(Method m, const SystemModel& model, const Topology& topo, const SpectralData& sd,
                           const Matrix& Mcov, const EdgeCouplingSet* couplings, const SynthesisOptions& opts) {
  const int n = model.n(), N = topo.N;
  if (Mcov.rows() != n || Mcov.cols() != n) throw std::invalid_argument("covariance must be n x n");
  if (!is_symmetric(Mcov, 1e-12 * (1.0 + Mcov.norm())) || !is_positive_definite(Mcov))
    throw std::invalid_argument("covariance must be symmetric positive definite");
  Formulation f = build(m, model, topo, sd, couplings, opts.margin_scale);
  const double s = bound_scale(m, sd);
  const Matrix Mh = sym_sqrt(Mcov);

  auto add_objective = [&](Formulation& fm) {
    const AffineMatrix S = fm.lmi.add_symmetric("S", n);
    fm.lmi.add_constraint(sdp::symmetric_blocks({n, n}, {{S}, {AffineMatrix(Mh), s * fm.Y}}),
                          Sense::PositiveSemidefinite, "covariance");
    AffineMatrix tr(1, 1);
    for (int i = 0; i < n; ++i) tr += Matrix(eye(n).row(i)) * S * Matrix(eye(n).col(i));
    fm.lmi.minimize(static_cast<double>(N) * tr);
  };
  auto expected = [&](const Matrix& Y) {
    const Eigen::LDLT<Matrix> Yf(s * Y);
    return N * Yf.solve(Mcov).trace();
  };
  return solve_formulation(f, Objective::Trace, model, sd, std::nullopt, opts, add_objective, expected);
}

bool ResidualReport::all_negative() const {
  return !max_eigenvalues.empty() &&
         std::all_of(max_eigenvalues.begin(), max_eigenvalues.end(), [](double v) { return v < 0.0; });
}

double ResidualReport::worst() const {
  return max_eigenvalues.empty() ? 0.0 : *std::max_element(max_eigenvalues.begin(), max_eigenvalues.end());
}

namespace {

double multiplier(const Certificate& c, const std::string& name) {
  auto it = c.multipliers.find(name);
  if (it == c.multipliers.end()) throw std::invalid_argument("certificate lacks multiplier '" + name + "'");
  return it->second;
}

}  // namespace

ResidualReport schur_reduce(const Certificate& cert, const SystemModel& mdl, const Topology& topo,
                            const SpectralData& sd, const EdgeCouplingSet* couplings) {
  if (!cert.feasible()) throw std::invalid_argument("schur_reduce needs a feasible certificate");
  const Eigen::LDLT<Matrix> Yf(cert.Y);
  if (Yf.info() != Eigen::Success || !is_positive_definite(cert.Y)) throw std::runtime_error("Y is singular");
  const int n = mdl.n(), N = topo.N;
  const Matrix X = Yf.solve(eye(n));
  const Matrix& K = cert.K;
  const Matrix XB2 = X * mdl.B2;
  const Matrix XB2B2X = XB2 * XB2.transpose();
  const Matrix CC = mdl.C.transpose() * mdl.C;
  const auto closed = [&](double lam) {
    const Matrix XA = X * (mdl.A + lam * mdl.B1 * K);
    return Matrix(XA + XA.transpose());
  };

  ResidualReport rep;
  rep.method = cert.method;
  switch (cert.method) {
    case Method::Thm1:
    case Method::Thm2: {
      // Per-mode Riccati form; the shared-LMI certificate is checked by
      // substituting its common multipliers into every mode.
      const bool shared = cert.method == Method::Thm2;
      std::vector<double> pi(N), theta(N, 0.0);
      for (int i = 0; i < N; ++i) {
        pi[i] = shared ? multiplier(cert, "pi") : multiplier(cert, "pi_" + std::to_string(i + 1));
        if (N > 1) theta[i] = shared ? multiplier(cert, "theta") : multiplier(cert, "theta_" + std::to_string(i + 1));
      }
      double theta_sum = 0.0;
      for (double t : theta) theta_sum += t;
      for (int i = 0; i < N; ++i) {
        const double lam = sd.lambdas(i);
        const double mii2 = sd.M(i, i) * sd.M(i, i);
        const double moff2 = sd.M.row(i).squaredNorm() - mii2;
        double coef = mii2 / pi[i];
        if (N > 1) coef += moff2 / theta[i];
        const Matrix Ric = closed(lam) + lam * lam * K.transpose() * mdl.R * K + coef * XB2B2X + lam * mdl.Q +
                           (pi[i] + theta_sum - theta[i]) * CC;
        rep.max_eigenvalues.push_back(max_eigenvalue(symmetrize(Ric)));
      }
      break;
    }
    case Method::Thm3:
    case Method::Thm4: {
      const bool per_edge = cert.method == Method::Thm4;
      if (per_edge && couplings == nullptr) throw std::invalid_argument("per-edge residuals need the coupling set");
      const double lam = per_edge ? sd.lambda_max : sd.lambda_min;
      const Matrix Qbar = (sd.lambda_min / sd.lambda_max) * mdl.Q;
      const auto bound_of = [&](int a, int b) -> Matrix {
        return per_edge ? Matrix(couplings->at(a, b).C()) : mdl.C;
      };
      const auto tag = [](int a, int b) { return std::to_string(a) + "_" + std::to_string(b); };
      double leader_sum = 0.0;
      for (int k = 1; k <= N; ++k)
        if (topo.d[k - 1] != 0) leader_sum += 1.0 / multiplier(cert, "mu_" + tag(0, k));
      for (int i = 1; i <= N; ++i) {
        const std::vector<int> S = topo.phys_neighbors(i);
        const int fi = static_cast<int>(S.size());
        const bool di = topo.d[i - 1] != 0;
        double coef = leader_sum;
        Matrix W = Qbar;
        if (!per_edge && fi > 0) {
          const double nu = multiplier(cert, "nu_" + std::to_string(i));
          coef += fi * fi / nu;
          W += nu * CC;
        }
        for (int j : S) {
          coef += 1.0 / multiplier(cert, "mu_" + tag(i, j));
          const Matrix Cji = bound_of(j, i);
          W += multiplier(cert, "mu_" + tag(j, i)) * Cji.transpose() * Cji;
          if (per_edge) {
            const double nu = multiplier(cert, "nu_" + tag(i, j));
            coef += 1.0 / nu;
            const Matrix Cij = bound_of(i, j);
            W += nu * Cij.transpose() * Cij;
          }
        }
        if (di) {
          const double nu0 = multiplier(cert, "nu_" + tag(i, 0));
          const double mu0 = multiplier(cert, "mu_" + tag(0, i));
          coef += 1.0 / nu0;
          const Matrix Ci0 = bound_of(i, 0), C0i = bound_of(0, i);
          W += nu0 * Ci0.transpose() * Ci0 + N * mu0 * C0i.transpose() * C0i;
        }
        const Matrix Ric = closed(lam) + lam * K.transpose() * mdl.R * K + coef * XB2B2X + W;
        rep.max_eigenvalues.push_back(max_eigenvalue(symmetrize(Ric)));
      }
      break;
    }
    case Method::Cor1: {
      const Matrix XBRBX = X * mdl.B1 * mdl.R.inverse() * mdl.B1.transpose() * X;
      for (int i = 0; i < N; ++i) {
        const double rho = sd.lambdas(i) / sd.lambda_max;
        const Matrix Ric = X * mdl.A + mdl.A.transpose() * X - rho * (2.0 - rho) * XBRBX + sd.lambdas(i) * mdl.Q;
        rep.max_eigenvalues.push_back(max_eigenvalue(symmetrize(Ric)));
      }
      break;
    }
  }
  return rep;
}

std::vector<double> lmi_max_eigenvalues(const Certificate& cert, const SystemModel& model, const Topology& topo,
                                        const SpectralData& sd, const EdgeCouplingSet* couplings) {
  const Formulation f = build(cert.method, model, topo, sd, couplings, 1e-7);
  std::map<std::string, Matrix> values{{"Y", cert.Y}};
  if (f.F) {
    if (!cert.F) throw std::invalid_argument("certificate lacks F");
    values["F"] = *cert.F;
  }
  for (const auto& rc : f.reciprocals) values[rc.var] = Matrix::Constant(1, 1, 1.0 / multiplier(cert, rc.multiplier));
  const Vector x = f.lmi.pack(values);
  std::vector<double> out;
  for (const auto& c : f.lmi.constraints())
    if (std::find(f.node_labels.begin(), f.node_labels.end(), c.label) != f.node_labels.end())
      out.push_back(max_eigenvalue(symmetrize(c.expr.evaluate(x))));
  return out;
}

}  // namespace iqcsync
