#pragma once

#include <array>

#include "iqcsync/graph.hpp"
#include "iqcsync/model.hpp"
#include "iqcsync/sim.hpp"

namespace iqcsync::testing {

// Scalar plant on two followers joined by one edge; follower 1 sees the leader.
inline SystemModel toy_model() {
  SystemModel m;
  m.A = Matrix::Constant(1, 1, 0.1);
  m.B1 = Matrix::Constant(1, 1, 1.0);
  m.B2 = Matrix::Constant(1, 1, 0.2);
  m.C = Matrix::Constant(1, 1, 1.0);
  m.Q = Matrix::Identity(1, 1);
  m.R = Matrix::Identity(1, 1);
  return m;
}

inline Topology toy_topology() {
  Topology t;
  t.N = 2;
  t.control_edges = {{1, 2}};
  t.phys_edges = {{1, 2}};
  t.g = {1, 0};
  t.d = {1, 0};
  return t;
}

inline Vector toy_errors() {
  Vector e(2);
  e << 1.0, -0.5;
  return e;
}

// Follower angles of the reference pendulum run.
inline constexpr std::array<double, 20> kPendulumAngles = {
    0.1369616873214543,  -0.2302132862361297,  -0.4590264760638053, -0.4834723644714709, 0.3132702392002724,
    0.4127555772777217,  0.10663577576717986,  0.2294965609839984,  0.04362499146542287, 0.4350724237877682,
    0.31585355412153215, -0.4972614998298519,  0.35740427658756935, -0.46641442469453565, 0.22965544642994407,
    -0.324344379397441,  0.3631789223498866,   0.04146122024909171, -0.20028810946261522, -0.07731277880234155};

inline Vector pendulum_leader() {
  Vector x(2);
  x << 0.3, 0.0;
  return x;
}

inline std::vector<Vector> pendulum_followers() {
  std::vector<Vector> out;
  for (double a : kPendulumAngles) {
    Vector x(2);
    x << a, 0.0;
    out.push_back(x);
  }
  return out;
}

inline Vector pendulum_errors() {
  Vector e(40);
  for (int i = 0; i < 20; ++i) {
    e(2 * i) = 0.3 - kPendulumAngles[i];
    e(2 * i + 1) = 0.0;
  }
  return e;
}

inline Vector pendulum_initial_state() { return stack_states(pendulum_leader(), pendulum_followers()); }

inline UncertaintyOp pendulum_schedule_op(const SystemModel& m) {
  return UncertaintyOp::norm_bounded(m.C, DeltaSchedule::pendulum(0.5, 0.4, 1.0, m.m()));
}

}  // namespace iqcsync::testing
