#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "iqcsync/sim.hpp"
#include "iqcsync/synthesis.hpp"

namespace iqcsync {
namespace {

using testing::pendulum_errors;
using testing::pendulum_initial_state;
using testing::toy_errors;
using testing::toy_model;
using testing::toy_topology;

UncertaintyOp zero_coupling(const SystemModel& m) {
  return UncertaintyOp::norm_bounded(m.C, DeltaSchedule::constant(Matrix::Zero(m.m(), m.m())));
}

TEST(Simulate, UncontrolledUncoupledFlowIsRotation) {
  SystemModel m = pendulum_model();
  m.A << 0.0, 1.0, -1.0, 0.0;
  const Topology t = toy_topology();
  Vector x0(6);
  x0 << 1.0, 0.0, 0.5, -0.2, -0.3, 0.7;
  const Trajectory tr = simulate(m, t, Matrix::Zero(1, 2), zero_coupling(m), x0, 5.0, 1e-3);
  ASSERT_EQ(tr.samples(), 5001);
  const double T = tr.t(tr.samples() - 1);
  EXPECT_DOUBLE_EQ(T, 5.0);
  Matrix flow(2, 2);
  flow << std::cos(T), std::sin(T), -std::sin(T), std::cos(T);
  for (int b = 0; b < 3; ++b) {
    const Vector expected = flow * x0.segment(2 * b, 2);
    EXPECT_LE((tr.x.col(tr.samples() - 1).segment(2 * b, 2) - expected).norm(), 1e-10);
  }
  EXPECT_TRUE(tr.u.isZero());
}

TEST(Simulate, SynchronisedStartHasZeroCost) {
  const SystemModel m = pendulum_model();
  const Topology t = pendulum_topology();
  Vector lead(2);
  lead << 0.3, 0.0;
  const Vector x0 = stack_states(lead, std::vector<Vector>(20, lead));
  const auto op = testing::pendulum_schedule_op(m);
  Matrix K(1, 2);
  K << 18.5, 28.4;
  const Trajectory tr = simulate(m, t, K, op, x0, 2.0, 1e-3);
  EXPECT_EQ(tr.final_cost(), 0.0);
  EXPECT_EQ(tr.error_matrix().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Simulate, RejectsHorizonOffGrid) {
  const SystemModel m = toy_model();
  Vector x0(3);
  x0 << 0.3, 0.1, -0.1;
  EXPECT_THROW(simulate(m, toy_topology(), Matrix::Zero(1, 1), zero_coupling(m), x0, 1.0005, 1e-3),
               std::invalid_argument);
  EXPECT_THROW(simulate(m, toy_topology(), Matrix::Zero(1, 1), zero_coupling(m), Vector::Zero(2), 1.0, 1e-3),
               std::invalid_argument);
}

TEST(Simulate, DivergenceIsReported) {
  const SystemModel m = toy_model();
  Vector x0(3);
  x0 << 1.0, 0.0, 0.0;
  Matrix K = Matrix::Constant(1, 1, 30.0);  // positive feedback on the error
  try {
    simulate(m, toy_topology(), K, zero_coupling(m), x0, 10.0, 1e-3);
    FAIL() << "expected divergence";
  } catch (const SimulationDiverged& e) {
    EXPECT_GT(e.time(), 0.0);
    EXPECT_LE(e.time(), 10.0);
  }
}

TEST(Simulate, ChannelAuditsRespectUnitBound) {
  const SystemModel m = pendulum_model();
  const Topology t = pendulum_topology();
  Matrix K(1, 2);
  K << 18.53, 28.45;
  for (const auto& op : {testing::pendulum_schedule_op(m), UncertaintyOp::input_delay(m.C, 0.2),
                         UncertaintyOp::input_delay(m.C, 5e-4), UncertaintyOp::first_order_lag(m.C, 1.0)}) {
    const Trajectory tr = simulate(m, t, K, op, pendulum_initial_state(), 10.0, 1e-3);
    EXPECT_EQ(tr.audits.size(), 2 * t.phys_edges.size() + 4);
    for (const auto& a : tr.audits) {
      if (a.bound_energy > 0.0) {
        EXPECT_LE(a.ratio(), 1.0 + 1e-4) << op.name() << " " << a.label;
      }
    }
  }
}

TEST(CostForms, AgreeOnRandomSamples) {
  const SystemModel m = pendulum_model();
  const Topology t = pendulum_topology();
  const SpectralData sd = spectral(t);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 100; ++trial) {
    const Vector e = Vector::NullaryExpr(40, [&] { return n01(rng); });
    const Vector u = Vector::NullaryExpr(20, [&] { return n01(rng); });
    const double edge = cost_integrand_edges(t, m.Q, m.R, e, u);
    EXPECT_NEAR(cost_integrand_kron(t, m.Q, m.R, e, u), edge, 1e-9 * std::abs(edge));
    EXPECT_NEAR(cost_integrand_modal(sd, m.Q, m.R, e, u), edge, 1e-9 * std::abs(edge));
  }
}

TEST(CostForms, AccumulatedCostMatchesKroneckerForm) {
  const SystemModel m = pendulum_model();
  const Topology t = pendulum_topology();
  const SpectralData sd = spectral(t);
  const Certificate c = optimize_bound(Method::Thm1, m, t, sd, pendulum_errors());
  ASSERT_TRUE(c.feasible());
  const Trajectory tr = simulate(m, t, c.K, testing::pendulum_schedule_op(m), pendulum_initial_state(), 30.0, 1e-3);
  const CostReport rep = evaluate_cost(tr, t, m.Q, m.R, &sd);
  EXPECT_NEAR(rep.kron_form, rep.edge_form, 1e-6 * rep.edge_form);
  EXPECT_NEAR(rep.modal_form, rep.edge_form, 1e-6 * rep.edge_form);
  EXPECT_NEAR(tr.final_cost(), rep.edge_form, 1e-9 * rep.edge_form);
  EXPECT_TRUE(rep.tail_converged);
  EXPECT_LE(rep.edge_form, c.bound);
  EXPECT_LE(tr.errors(tr.samples() - 1).norm(), 1e-3 * tr.errors(0).norm());
}

TEST(Transformation, ToyModalDynamicsMatch) {
  const SystemModel m = toy_model();
  const Topology t = toy_topology();
  const SpectralData sd = spectral(t);
  const auto op = UncertaintyOp::norm_bounded(m.C, DeltaSchedule::table({0.0, 5.0, 10.0}, {1.0, -0.5, 0.7}, 1));
  EXPECT_LE(verify_transformation(m, t, sd, Matrix::Constant(1, 1, -1.38), op, toy_errors(), 10.0, 1e-3), 1e-6);
}

TEST(Transformation, PendulumWithoutCoupling) {
  const SystemModel m = pendulum_model();
  const Topology t = pendulum_topology();
  const SpectralData sd = spectral(t);
  Matrix K(1, 2);
  K << 18.53, 28.45;
  EXPECT_LE(verify_transformation(m, t, sd, K, zero_coupling(m), pendulum_errors(), 10.0, 1e-3), 1e-8);
}

TEST(Transformation, SingleFollowerIsExact) {
  const SystemModel m = pendulum_model();
  Topology t;
  t.N = 1;
  t.g = {1};
  t.d = {1};
  Vector e0(2);
  e0 << 0.2, -0.1;
  Matrix K(1, 2);
  K << 10.0, 5.0;
  EXPECT_LE(verify_transformation(m, t, spectral(t), K, UncertaintyOp::input_delay(m.C, 0.1), e0, 5.0, 1e-3),
            1e-12);
}

TEST(Trajectory, ErrorsAreLeaderMinusFollower) {
  const SystemModel m = toy_model();
  Vector x0(3);
  x0 << 0.3, 0.1, -0.2;
  const Trajectory tr = simulate(m, toy_topology(), Matrix::Zero(1, 1), zero_coupling(m), x0, 0.01, 1e-3);
  Vector expected(2);
  expected << 0.2, 0.5;
  EXPECT_TRUE(tr.errors(0).isApprox(expected));
  EXPECT_EQ(tr.error_matrix().cols(), tr.samples());
}

}  // namespace
}  // namespace iqcsync
