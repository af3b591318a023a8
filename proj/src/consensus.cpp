#include "iqcsync/consensus.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace iqcsync {

double max_step_size(const Topology& topo) {
  const std::vector<int> h = topo.control_degrees();
  const int hmax = h.empty() ? 0 : *std::max_element(h.begin(), h.end());
  return hmax == 0 ? 1.0 : 1.0 / hmax;
}

int default_iteration_cap(const Topology& topo, double beta) {
  if (topo.N <= 1) return 1;
  const Eigen::SelfAdjointEigenSolver<Matrix> es(laplacian(topo.control_edges, topo.N), Eigen::EigenvaluesOnly);
  const double lambda2 = es.eigenvalues()(1);
  if (!(lambda2 > 0.0)) throw std::invalid_argument("control graph is not connected");
  const double cap = 10.0 * topo.N / (beta * lambda2);
  return static_cast<int>(std::min(cap, 1e8));
}

std::vector<NodeState> consensus_step(const std::vector<NodeState>& states, const Topology& topo, double beta) {
  if (static_cast<int>(states.size()) != topo.N) throw std::invalid_argument("one state per follower is required");
  const double limit = max_step_size(topo);
  if (!(beta > 0.0 && beta < limit)) {
    std::ostringstream os;
    os << "step size " << beta << " outside (0, " << limit << ")";
    throw std::invalid_argument(os.str());
  }
  std::vector<NodeState> next = states;
  // Each edge moves the same amount into one endpoint and out of the other.
  for (auto [a, b] : topo.control_edges) {
    const NodeState& si = states[a - 1];
    const NodeState& sj = states[b - 1];
    const Matrix dY = beta * (sj.Y - si.Y);
    const double dp = beta * (sj.pi_inv - si.pi_inv);
    const double dt = beta * (sj.theta_inv - si.theta_inv);
    next[a - 1].Y += dY;
    next[b - 1].Y -= dY;
    next[a - 1].pi_inv += dp;
    next[b - 1].pi_inv -= dp;
    next[a - 1].theta_inv += dt;
    next[b - 1].theta_inv -= dt;
  }
  for (auto& s : next) {
    ++s.k;
    if (!is_positive_definite(s.Y))
      throw std::runtime_error("node " + std::to_string(s.id) + " lost positive definiteness at round " +
                               std::to_string(s.k));
  }
  return next;
}

double max_deviation(const std::vector<NodeState>& states) {
  double dev = 0.0;
  for (std::size_t i = 0; i < states.size(); ++i)
    for (std::size_t j = i + 1; j < states.size(); ++j) {
      dev = std::max(dev, (states[i].Y - states[j].Y).norm());
      dev = std::max(dev, std::abs(states[i].pi_inv - states[j].pi_inv));
      dev = std::max(dev, std::abs(states[i].theta_inv - states[j].theta_inv));
    }
  return dev;
}

AgreementResult run_to_agreement(std::vector<NodeState> states, const Topology& topo, double beta, double tol,
                                 const SystemModel& model, const SpectralData& sd, int max_iterations) {
  if (!(tol > 0.0)) throw std::invalid_argument("tolerance must be positive");
  const int cap = max_iterations > 0 ? max_iterations : default_iteration_cap(topo, beta);
  AgreementResult res;
  double dev = max_deviation(states);
  int k = 0;
  while (dev >= tol) {
    if (k >= cap) {
      res.deviation_history.push_back(dev);
      std::ostringstream os;
      os << "no agreement after " << cap << " rounds (deviation " << dev << ")";
      throw ConsensusNotConverged(os.str(), res.deviation_history);
    }
    res.deviation_history.push_back(dev);
    states = consensus_step(states, topo, beta);
    dev = max_deviation(states);
    ++k;
  }
  res.deviation_history.push_back(dev);
  res.iterations = k;

  const int n = model.n();
  Matrix Y = Matrix::Zero(n, n);
  double pi_inv = 0.0, theta_inv = 0.0;
  for (const auto& s : states) {
    Y += s.Y;
    pi_inv += s.pi_inv;
    theta_inv += s.theta_inv;
  }
  const double N = static_cast<double>(states.size());
  res.Y = symmetrize(Y / N);
  res.pi = N / pi_inv;
  res.theta = topo.N > 1 ? N / theta_inv : 0.0;
  res.certificate = thm2_certificate(model, sd, res.Y, res.pi, res.theta);
  res.K = res.certificate.K;
  const std::vector<double> eig = lmi_max_eigenvalues(res.certificate, model, topo, sd);
  res.lmi_max_eigenvalue = eig.front();
  if (!(res.lmi_max_eigenvalue < 0.0)) {
    res.certificate.status = sdp::Status::NumericalFailure;
    res.certificate.message = "agreed point violates the shared LMI";
  }
  res.certificate.margin = -res.lmi_max_eigenvalue;
  return res;
}

std::vector<NodeState> seed_states(const SystemModel& model, const Topology& topo, const SpectralData& sd,
                                   std::uint64_t seed, const SynthesisOptions& opts) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> weight(0.5, 1.5);
  const int n = model.n();

  // Each term of the objective is normalised by its own maximum over the
  // feasible set, otherwise one term can dominate and every node lands on
  // the same corner.
  const auto peak = [&](const Matrix& W, double a, double b, const char* what) {
    const Certificate c = thm2_point(model, topo, sd, W, a, b, opts);
    if (!c.feasible()) throw std::runtime_error(std::string("shared LMI has no feasible point (") + what + "): " + c.message);
    const double v = W.cwiseProduct(c.Y).sum() + a / c.multipliers.at("pi") +
                     (topo.N > 1 ? b / c.multipliers.at("theta") : 0.0);
    if (!(v > 0.0)) throw std::runtime_error(std::string("degenerate feasible set (") + what + ")");
    return v;
  };
  const Matrix zero = Matrix::Zero(n, n);
  const double y_scale = peak(Matrix::Identity(n, n), 0.0, 0.0, "trace");
  const double p_scale = peak(zero, 1.0, 0.0, "pi");
  const double t_scale = topo.N > 1 ? peak(zero, 0.0, 1.0, "theta") : 1.0;

  std::vector<NodeState> states;
  for (int i = 1; i <= topo.N; ++i) {
    Matrix G(n, n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) G(r, c) = weight(rng) - 1.0;
    const Matrix W = G * G.transpose() + Matrix::Identity(n, n) * weight(rng);
    const double a = weight(rng), b = weight(rng);
    const Certificate c = thm2_point(model, topo, sd, W / y_scale, a / p_scale, b / t_scale, opts);
    if (!c.feasible())
      throw std::runtime_error("node " + std::to_string(i) + " found no feasible point: " + c.message);
    NodeState s;
    s.id = i;
    s.Y = c.Y;
    s.pi_inv = 1.0 / c.multipliers.at("pi");
    s.theta_inv = topo.N > 1 ? 1.0 / c.multipliers.at("theta") : 0.0;
    states.push_back(std::move(s));
  }
  return states;
}

}  // namespace iqcsync
