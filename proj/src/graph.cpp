#include "iqcsync/graph.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>

#include <Eigen/Eigenvalues>

namespace iqcsync {

namespace {

void check_edges(const std::vector<Edge>& edges, int N, const char* which) {
  std::set<Edge> seen;
  for (auto [i, j] : edges) {
    if (i < 1 || i > N || j < 1 || j > N)
      throw std::invalid_argument(std::string(which) + ": node label out of range in edge (" +
                                  std::to_string(i) + ", " + std::to_string(j) + ")");
    if (i == j) throw std::invalid_argument(std::string(which) + ": self-loop at node " + std::to_string(i));
    if (!seen.insert({std::min(i, j), std::max(i, j)}).second)
      throw std::invalid_argument(std::string(which) + ": repeated edge (" + std::to_string(i) + ", " +
                                  std::to_string(j) + ")");
  }
}

std::vector<int> neighbors(const std::vector<Edge>& edges, int i) {
  std::vector<int> out;
  for (auto [a, b] : edges) {
    if (a == i) out.push_back(b);
    if (b == i) out.push_back(a);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

void Topology::validate() const {
  if (N < 1) throw std::invalid_argument("topology: need at least one follower");
  if (static_cast<int>(g.size()) != N || static_cast<int>(d.size()) != N)
    throw std::invalid_argument("topology: g and d must have N entries");
  for (int v : g)
    if (v != 0 && v != 1) throw std::invalid_argument("topology: g entries must be 0 or 1");
  for (int v : d)
    if (v != 0 && v != 1) throw std::invalid_argument("topology: d entries must be 0 or 1");
  check_edges(control_edges, N, "control graph");
  check_edges(phys_edges, N, "interconnection graph");
  if (std::none_of(g.begin(), g.end(), [](int v) { return v != 0; }))
    throw std::invalid_argument("topology: no follower observes the leader (G = 0)");
  if (!control_connected()) throw std::invalid_argument("topology: control graph is not connected");
}

bool Topology::control_connected() const {
  if (N <= 1) return true;
  std::vector<int> parent(N);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };
  int components = N;
  for (auto [i, j] : control_edges) {
    const int a = find(i - 1), b = find(j - 1);
    if (a != b) {
      parent[a] = b;
      --components;
    }
  }
  return components == 1;
}

std::vector<int> Topology::control_neighbors(int i) const { return neighbors(control_edges, i); }
std::vector<int> Topology::phys_neighbors(int i) const { return neighbors(phys_edges, i); }

std::vector<int> Topology::in_degrees() const {
  std::vector<int> f(N, 0);
  for (auto [i, j] : phys_edges) {
    ++f[i - 1];
    ++f[j - 1];
  }
  return f;
}

std::vector<int> Topology::control_degrees() const {
  std::vector<int> h(N, 0);
  for (auto [i, j] : control_edges) {
    ++h[i - 1];
    ++h[j - 1];
  }
  return h;
}

Topology pendulum_topology() {
  Topology t;
  t.N = 20;
  for (int i = 1; i < 20; ++i) {
    t.control_edges.emplace_back(i, i + 1);
    t.phys_edges.emplace_back(i, i + 1);
  }
  t.g.assign(20, 0);
  for (int i : {1, 7, 12, 18}) t.g[i - 1] = 1;
  t.d.assign(20, 0);
  t.d[0] = 1;
  t.d[19] = 1;
  return t;
}

Matrix laplacian(const std::vector<Edge>& edges, int N) {
  check_edges(edges, N, "laplacian");
  Matrix L = Matrix::Zero(N, N);
  for (auto [i, j] : edges) {
    L(i - 1, i - 1) += 1.0;
    L(j - 1, j - 1) += 1.0;
    L(i - 1, j - 1) -= 1.0;
    L(j - 1, i - 1) -= 1.0;
  }
  return L;
}

Matrix pinning_matrix(const Topology& topo) {
  Vector g(topo.N);
  for (int i = 0; i < topo.N; ++i) g(i) = topo.g[i];
  return g.asDiagonal();
}

Matrix leader_coupling_matrix(const Topology& topo) {
  Vector d(topo.N);
  for (int i = 0; i < topo.N; ++i) d(i) = topo.d[i];
  Matrix P = laplacian(topo.phys_edges, topo.N);
  P.diagonal() += d;
  P += Vector::Ones(topo.N) * d.transpose();
  return P;
}

SpectralData spectral(const Topology& topo) {
  topo.validate();
  const Matrix LG = laplacian(topo.control_edges, topo.N) + pinning_matrix(topo);
  Eigen::SelfAdjointEigenSolver<Matrix> es(LG);
  if (es.info() != Eigen::Success) throw std::runtime_error("spectral: eigensolver failed");

  SpectralData sd;
  sd.lambdas = es.eigenvalues();
  sd.T = es.eigenvectors();
  for (int c = 0; c < topo.N; ++c) {
    for (int r = 0; r < topo.N; ++r) {
      if (std::abs(sd.T(r, c)) > 1e-12) {
        if (sd.T(r, c) < 0.0) sd.T.col(c) *= -1.0;
        break;
      }
    }
  }
  if (sd.lambdas.minCoeff() <= 0.0)
    throw std::runtime_error("spectral: L^c + G is not positive definite");

  sd.M = sd.T.transpose() * leader_coupling_matrix(topo) * sd.T;
  sd.lambda_min = sd.lambdas.minCoeff();
  sd.lambda_max = sd.lambdas.maxCoeff();
  for (int i = 0; i < topo.N; ++i) {
    const double diag = sd.M(i, i) * sd.M(i, i);
    sd.w2 = std::max(sd.w2, diag);
    sd.q2 = std::max(sd.q2, sd.M.row(i).squaredNorm() - diag);
  }
  return sd;
}

Vector transform_errors(const Vector& e, const SpectralData& sd, int n) {
  if (e.size() != sd.N() * n) throw std::invalid_argument("transform_errors: dimension mismatch");
  Eigen::Map<const Matrix> E(e.data(), n, sd.N());  // column i is e_i
  Matrix eps = E * sd.T;                            // column i is sum_j T_ji e_j
  return Eigen::Map<const Vector>(eps.data(), eps.size());
}

Vector untransform_errors(const Vector& eps, const SpectralData& sd, int n) {
  if (eps.size() != sd.N() * n) throw std::invalid_argument("untransform_errors: dimension mismatch");
  Eigen::Map<const Matrix> E(eps.data(), n, sd.N());
  Matrix e = E * sd.T.transpose();
  return Eigen::Map<const Vector>(e.data(), e.size());
}

void check_couplings(const EdgeCouplingSet& couplings, const Topology& topo) {
  auto need = [&](int i, int j) {
    if (!couplings.contains(i, j))
      throw std::invalid_argument("coupling: missing operator for direction (" + std::to_string(i) + ", " +
                                  std::to_string(j) + ")");
    const UncertaintyOp& op = couplings.at(i, j);
    if (!all_finite(op.C())) throw std::invalid_argument("coupling: non-finite C_ij");
  };
  for (auto [i, j] : topo.phys_edges) {
    need(i, j);
    need(j, i);
  }
  for (int i = 1; i <= topo.N; ++i) {
    if (topo.d[i - 1] == 0) continue;
    need(i, 0);
    need(0, i);
  }
}

}  // namespace iqcsync
