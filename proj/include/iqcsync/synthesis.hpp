#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "iqcsync/graph.hpp"
#include "iqcsync/model.hpp"
#include "iqcsync/sdp.hpp"

namespace iqcsync {

// Thm1: coupled per-mode LMIs in (Y, F).
// Thm2: one LMI shared by all nodes.
// Thm3: per-node LMIs without the modal transformation, identical couplings.
// Thm4: as Thm3 with a separate bound matrix C_ij per coupling direction.
// Cor1: uncoupled subsystems (B2 = 0, C = 0).
enum class Method { Thm1, Thm2, Thm3, Thm4, Cor1 };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

enum class Objective { Feasibility, Gamma, Trace };

std::string to_string(Objective o);

struct Certificate {
  Method method = Method::Thm1;
  Objective objective = Objective::Feasibility;
  sdp::Status status = sdp::Status::NumericalFailure;
  Matrix K;
  Matrix Y;
  std::optional<Matrix> F;
  // Multipliers by name: pi_i, theta_i (Thm1); pi, theta (Thm2);
  // nu_i, mu_i_j, nu_i_0, mu_0_i (Thm3); nu_i_j, mu_i_j, nu_i_0, mu_0_i (Thm4).
  std::map<std::string, double> multipliers;
  // Guaranteed cost for the given initial errors, or the expected cost
  // N Tr((sY)^-1 Mcov) under the trace objective.
  double bound = 0.0;
  std::optional<double> gamma;  // optimal objective value
  double margin = 0.0;          // smallest constraint depth at the solution
  int iterations = 0;
  std::string message;

  bool feasible() const { return status == sdp::Status::Feasible || status == sdp::Status::Optimal; }
};

struct SynthesisOptions {
  sdp::SolverOptions solver;
  double margin_scale = 1e-7;
  // Above this many entries (N n) the initial-error constraint is split
  // into one block per node.
  int dense_epigraph_limit = 100;
};

// s in the initial-error constraint [[gamma, e0'], [e0, I (x) sY]] >= 0:
// 1 for Thm1/Thm2/Cor1 and lambda_min / lambda_max^2 for Thm3/Thm4.
double bound_scale(Method m, const SpectralData& sd);

// sum_i e_i(0)' (sY)^-1 e_i(0).
double bound_formula(Method m, const Matrix& Y, const Vector& e0, const SpectralData& sd);

// Feasibility versions. The bound is evaluated at the returned Y.
Certificate synth_thm1(const SystemModel& model, const Topology& topo, const SpectralData& sd, const Vector& e0,
                       const SynthesisOptions& opts = {});
Certificate synth_thm2(const SystemModel& model, const Topology& topo, const SpectralData& sd, const Vector& e0,
                       const SynthesisOptions& opts = {});
Certificate synth_thm3(const SystemModel& model, const Topology& topo, const SpectralData& sd, const Vector& e0,
                       const SynthesisOptions& opts = {});
Certificate synth_thm4(const SystemModel& model, const Topology& topo, const SpectralData& sd,
                       const EdgeCouplingSet& couplings, const Vector& e0, const SynthesisOptions& opts = {});
// Throws std::invalid_argument unless B2 = 0 and C = 0.
Certificate synth_cor1(const SystemModel& model, const Topology& topo, const SpectralData& sd, const Vector& e0,
                       const SynthesisOptions& opts = {});

// A point of the shared Thm2 LMI maximising Tr(W Y) + a / pi + b / theta
// (bounded, since Q > 0 caps Y and the multipliers). W must be symmetric
// positive semidefinite and a, b >= 0.
Certificate thm2_point(const SystemModel& model, const Topology& topo, const SpectralData& sd, const Matrix& W,
                       double a, double b, const SynthesisOptions& opts = {});

// Thm2 certificate for given (Y, pi, theta) with K from the gain formula.
Certificate thm2_certificate(const SystemModel& model, const SpectralData& sd, const Matrix& Y, double pi,
                             double theta);

// Minimise gamma subject to the method's LMIs and the initial-error constraint.
// `couplings` is required for Thm4 and ignored otherwise.
Certificate optimize_bound(Method m, const SystemModel& model, const Topology& topo, const SpectralData& sd,
                           const Vector& e0, const EdgeCouplingSet* couplings = nullptr,
                           const SynthesisOptions& opts = {});

// Minimise N Tr((sY)^-1 Mcov) for random initial errors with covariance Mcov.
Certificate optimize_trace(Method m, const SystemModel& model, const Topology& topo, const SpectralData& sd,
                           const Matrix& Mcov, const EdgeCouplingSet* couplings = nullptr,
                           const SynthesisOptions& opts = {});

// Per-node maximum eigenvalue of the Riccati inequality equivalent to the
// method's LMI, evaluated from K, Y and the multipliers.
struct ResidualReport {
  Method method = Method::Thm1;
  std::vector<double> max_eigenvalues;

  bool all_negative() const;
  double worst() const;
};

ResidualReport schur_reduce(const Certificate& cert, const SystemModel& model, const Topology& topo,
                            const SpectralData& sd, const EdgeCouplingSet* couplings = nullptr);

// Maximum eigenvalue of each node's LMI block (no margin) at the
// certificate's variable values.
std::vector<double> lmi_max_eigenvalues(const Certificate& cert, const SystemModel& model, const Topology& topo,
                                        const SpectralData& sd, const EdgeCouplingSet* couplings = nullptr);

}  // namespace iqcsync
