#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "iqcsync/graph.hpp"

namespace iqcsync {
namespace {

using testing::toy_topology;

TEST(Laplacian, ThreeNodePath) {
  Matrix expected(3, 3);
  expected << 1, -1, 0, -1, 2, -1, 0, -1, 1;
  EXPECT_TRUE(laplacian({{1, 2}, {2, 3}}, 3).isApprox(expected));
}

TEST(Laplacian, EmptyGraphIsZero) { EXPECT_TRUE(laplacian({}, 4).isZero()); }

TEST(Topology, PendulumStructure) {
  const Topology t = pendulum_topology();
  EXPECT_NO_THROW(t.validate());
  EXPECT_EQ(t.N, 20);
  EXPECT_EQ(t.control_edges.size(), 19u);
  EXPECT_TRUE(laplacian(t.phys_edges, t.N).isApprox(laplacian(t.control_edges, t.N)));
  const std::vector<int> g_nodes = {1, 7, 12, 18};
  for (int i = 1; i <= 20; ++i) {
    const bool pinned = std::find(g_nodes.begin(), g_nodes.end(), i) != g_nodes.end();
    EXPECT_EQ(t.g[i - 1], pinned ? 1 : 0) << i;
    EXPECT_EQ(t.d[i - 1], (i == 1 || i == 20) ? 1 : 0) << i;
  }
  EXPECT_EQ(t.control_degrees()[0], 1);
  EXPECT_EQ(t.control_degrees()[5], 2);
}

TEST(Topology, ValidationErrors) {
  Topology t = toy_topology();
  t.control_edges = {{1, 1}};
  EXPECT_THROW(t.validate(), std::invalid_argument);
  t = toy_topology();
  t.control_edges = {{1, 2}, {2, 1}};
  EXPECT_THROW(t.validate(), std::invalid_argument);
  t = toy_topology();
  t.phys_edges = {{1, 3}};
  EXPECT_THROW(t.validate(), std::invalid_argument);
  t = toy_topology();
  t.g = {0, 0};
  EXPECT_THROW(t.validate(), std::invalid_argument);
  t = toy_topology();
  t.control_edges = {};
  EXPECT_FALSE(t.control_connected());
  EXPECT_THROW(t.validate(), std::invalid_argument);
  t = toy_topology();
  t.d = {2, 0};
  EXPECT_THROW(t.validate(), std::invalid_argument);
}

TEST(Spectral, TwoNodeEigenData) {
  const SpectralData sd = spectral(toy_topology());
  ASSERT_EQ(sd.N(), 2);
  EXPECT_NEAR(sd.lambdas(0), 0.381966011250105, 1e-12);
  EXPECT_NEAR(sd.lambdas(1), 2.618033988749895, 1e-12);
  Matrix T(2, 2);
  T << 0.5257311121191335, 0.8506508083520399, 0.8506508083520399, -0.5257311121191335;
  EXPECT_TRUE(sd.T.isApprox(T, 1e-12));
  Matrix M(2, 2);
  M << 1.1055728090000838, 1.1708203932499366, 0.17082039324993673, 2.8944271909999153;
  EXPECT_TRUE(sd.M.isApprox(M, 1e-12));
  EXPECT_TRUE((sd.T.transpose() * sd.T).isIdentity(1e-12));
}

TEST(Spectral, PendulumConstants) {
  const SpectralData sd = spectral(pendulum_topology());
  EXPECT_NEAR(sd.lambda_min, 0.12403366278924223, 1e-12);
  EXPECT_NEAR(sd.lambda_max, 4.273616129079727, 1e-12);
  EXPECT_NEAR(sd.w2, 14.739887057437583, 1e-10);
  EXPECT_NEAR(sd.q2, 36.04641395605231, 1e-10);
  EXPECT_NEAR(sd.lambdas(9), 2.0, 1e-12);
  const Matrix H = laplacian(pendulum_topology().control_edges, 20) + pinning_matrix(pendulum_topology());
  EXPECT_TRUE((sd.T * sd.lambdas.asDiagonal() * sd.T.transpose()).isApprox(H, 1e-12));
}

TEST(Spectral, SingleFollower) {
  Topology t;
  t.N = 1;
  t.g = {1};
  t.d = {1};
  t.validate();
  const SpectralData sd = spectral(t);
  EXPECT_DOUBLE_EQ(sd.lambda_min, 1.0);
  EXPECT_DOUBLE_EQ(sd.T(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(sd.M(0, 0), 2.0);
}

TEST(Transform, ModalCoordinatesOfUnitError) {
  const SpectralData sd = spectral(toy_topology());
  Vector e = Vector::Zero(4);
  e(0) = 1.0;
  Vector expected(4);
  expected << 0.5257311121191335, 0.0, 0.8506508083520399, 0.0;
  EXPECT_TRUE(transform_errors(e, sd, 2).isApprox(expected, 1e-12));
}

TEST(Transform, RoundTrip) {
  const SpectralData sd = spectral(pendulum_topology());
  const Vector e = Vector::LinSpaced(40, -1.0, 2.0);
  EXPECT_LE((untransform_errors(transform_errors(e, sd, 2), sd, 2) - e).norm(), 1e-13);
  EXPECT_THROW(transform_errors(Vector::Zero(3), sd, 2), std::invalid_argument);
}

TEST(Couplings, MissingDirectionIsRejected) {
  const Topology t = toy_topology();
  const auto op = UncertaintyOp::input_delay(Matrix::Identity(1, 1), 0.1);
  EdgeCouplingSet set = EdgeCouplingSet::uniform(t.phys_edges, t.d, op);
  EXPECT_NO_THROW(check_couplings(set, t));
  EdgeCouplingSet partial;
  partial.set(1, 2, op);
  partial.set(1, 0, op);
  partial.set(0, 1, op);
  EXPECT_THROW(check_couplings(partial, t), std::invalid_argument);
}

}  // namespace
}  // namespace iqcsync
