#pragma once

#include <utility>
#include <vector>

#include "iqcsync/linalg.hpp"
#include "iqcsync/model.hpp"

namespace iqcsync {

using Edge = std::pair<int, int>;

// Followers are labelled 1..N, the leader is node 0. Edge lists hold
// unordered follower pairs; leader links are carried by g (control) and
// d (physical coupling).
struct Topology {
  int N = 0;
  std::vector<Edge> control_edges;
  std::vector<Edge> phys_edges;
  std::vector<int> g;  // pinning: follower observes the leader
  std::vector<int> d;  // physical coupling with the leader

  // Throws std::invalid_argument on self-loops, repeated edges, labels
  // out of range, non-binary g/d, G = 0, or a disconnected control graph.
  void validate() const;

  bool control_connected() const;

  // Neighbour sets (1-based labels).
  std::vector<int> control_neighbors(int i) const;
  std::vector<int> phys_neighbors(int i) const;
  std::vector<int> in_degrees() const;  // f_i in the follower coupling graph
  std::vector<int> control_degrees() const;  // h_i
};

// Pendulum rig: chain 1-2-...-20 for both graphs, leader observed by
// followers 1, 7, 12, 18 and physically attached to followers 1 and 20.
Topology pendulum_topology();

// Degree minus adjacency of an undirected graph on labels 1..N.
Matrix laplacian(const std::vector<Edge>& edges, int N);

Matrix pinning_matrix(const Topology& topo);       // G
Matrix leader_coupling_matrix(const Topology& topo);  // L0 + D + Dbar

struct SpectralData {
  Vector lambdas;  // ascending eigenvalues of L^c + G
  Matrix T;        // orthogonal, columns are the matching eigenvectors
  Matrix M;        // T' (L0 + D + Dbar) T
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  double w2 = 0.0;  // max_i M_ii^2
  double q2 = 0.0;  // max_i sum_{j != i} M_ij^2

  int N() const { return static_cast<int>(lambdas.size()); }
};

// Eigendecomposition of L^c + G. Eigenvectors are normalised so that the
// first entry with magnitude above 1e-12 is positive.
SpectralData spectral(const Topology& topo);

// epsilon = (T^-1 (x) I_n) e and its inverse.
Vector transform_errors(const Vector& e, const SpectralData& sd, int n);
Vector untransform_errors(const Vector& eps, const SpectralData& sd, int n);

// Throws std::invalid_argument when some physical direction (including the
// leader pairs (i,0) and (0,i) for d_i = 1) has no operator.
void check_couplings(const EdgeCouplingSet& couplings, const Topology& topo);

}  // namespace iqcsync
