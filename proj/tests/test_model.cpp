#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "iqcsync/model.hpp"

namespace iqcsync {
namespace {

SampledSignal sample(const std::function<Vector(double)>& f, double T, double h) {
  const int K = static_cast<int>(std::lround(T / h)) + 1;
  SampledSignal s;
  s.step = h;
  s.values.resize(f(0.0).size(), K);
  for (int k = 0; k < K; ++k) s.values.col(k) = f(k * h);
  return s;
}

Vector scalar(double v) { return Vector::Constant(1, v); }

TEST(SystemModel, PendulumMatrices) {
  const SystemModel m = pendulum_model();
  EXPECT_NO_THROW(m.validate());
  EXPECT_EQ(m.n(), 2);
  EXPECT_EQ(m.p(), 1);
  EXPECT_EQ(m.m(), 1);
  EXPECT_EQ(m.r(), 1);
  EXPECT_DOUBLE_EQ(m.A(1, 0), -9.8);
  EXPECT_DOUBLE_EQ(m.B1(1, 0), -1.0);
  EXPECT_DOUBLE_EQ(m.C(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(m.R(0, 0), 0.01);
}

TEST(SystemModel, RejectsBadWeights) {
  SystemModel m = pendulum_model();
  m.R(0, 0) = 0.0;
  EXPECT_THROW(m.validate(), std::invalid_argument);
  m = pendulum_model();
  m.Q(0, 1) = 0.5;
  EXPECT_THROW(m.validate(), std::invalid_argument);
  m = pendulum_model();
  m.A(0, 0) = std::nan("");
  EXPECT_THROW(m.validate(), std::invalid_argument);
  m = pendulum_model();
  m.C = Matrix::Ones(1, 3);
  EXPECT_THROW(m.validate(), std::invalid_argument);
}

TEST(UncertaintyOp, PendulumScheduleReachesUnitGainWhenSpringAtLength) {
  // a(t) = 0.5 + 0.4 sin t equals 0.9 at t = pi/2.
  Matrix C(1, 2);
  C << 0.5, 0.5;
  const auto op = UncertaintyOp::norm_bounded(C, DeltaSchedule::pendulum(0.5, 0.4, 0.9, 1));
  const auto y = sample([](double) { return Vector::Ones(2); }, 2.0, 1e-3);
  EXPECT_NEAR(apply_uncertainty(op, y, M_PI / 2)(0), 1.0, 1e-12);
  EXPECT_NO_THROW(op.validate(20.0));
}

TEST(UncertaintyOp, ValidateRejectsGainAboveOne) {
  const auto op = UncertaintyOp::norm_bounded(Matrix::Identity(1, 1), DeltaSchedule::constant(Matrix::Constant(1, 1, 1.1)));
  EXPECT_THROW(op.validate(), std::invalid_argument);
  EXPECT_THROW(UncertaintyOp::input_delay(Matrix::Identity(1, 1), -0.1).validate(), std::invalid_argument);
  EXPECT_THROW(UncertaintyOp::first_order_lag(Matrix::Identity(1, 1), 0.0).validate(), std::invalid_argument);
}

TEST(UncertaintyOp, LagAdmissibilityNeedsUnitPole) {
  EXPECT_TRUE(UncertaintyOp::first_order_lag(Matrix::Identity(1, 1), 1.0).is_iqc_admissible());
  EXPECT_FALSE(UncertaintyOp::first_order_lag(Matrix::Identity(1, 1), 0.5).is_iqc_admissible());
  EXPECT_TRUE(UncertaintyOp::input_delay(Matrix::Identity(1, 1), 0.3).is_iqc_admissible());
}

TEST(UncertaintyOp, TableScheduleInterpolatesAndHolds) {
  const auto s = DeltaSchedule::table({0.0, 5.0, 10.0}, {1.0, -0.5, 0.7}, 1);
  EXPECT_DOUBLE_EQ(s.at(2.5)(0, 0), 0.25);
  EXPECT_DOUBLE_EQ(s.at(12.0)(0, 0), 0.7);
  EXPECT_DOUBLE_EQ(s.at(-1.0)(0, 0), 1.0);
}

TEST(ApplyUncertainty, LagStepResponse) {
  const auto op = UncertaintyOp::first_order_lag(Matrix::Identity(1, 1), 1.0);
  const auto y = sample([](double) { return scalar(1.0); }, 2.0, 1e-3);
  EXPECT_NEAR(apply_uncertainty(op, y, 1.0)(0), 0.6321205588285577, 1e-12);
  const Matrix series = apply_uncertainty_series(op, y);
  EXPECT_NEAR(series(0, 1000), 0.6321205588285577, 1e-12);
}

TEST(ApplyUncertainty, ZeroDelayIsIdentity) {
  const auto op = UncertaintyOp::input_delay(Matrix::Identity(1, 1), 0.0);
  const auto y = sample([](double t) { return scalar(std::sin(3.0 * t)); }, 2.0, 1e-2);
  for (double t : {0.0, 0.37, 1.0, 2.0}) EXPECT_NEAR(apply_uncertainty(op, y, t)(0), y.at(t)(0), 1e-15);
}

TEST(ApplyUncertainty, DelayShiftsAndStartsAtZero) {
  const auto op = UncertaintyOp::input_delay(Matrix::Identity(1, 1), 0.3);
  const auto y = sample([](double t) { return scalar(1.0 + t); }, 2.0, 1e-2);
  EXPECT_DOUBLE_EQ(apply_uncertainty(op, y, 0.2)(0), 0.0);
  EXPECT_NEAR(apply_uncertainty(op, y, 1.0)(0), 1.7, 1e-12);
  EXPECT_THROW(apply_uncertainty(op, y, 2.5), std::out_of_range);
}

TEST(IqcAudit, IdentityGainGivesUnitRatio) {
  const auto op = UncertaintyOp::norm_bounded(Matrix::Identity(2, 2), DeltaSchedule::constant(Matrix::Identity(2, 2)));
  const auto y = sample(
      [](double t) {
        Vector v(2);
        v << std::sin(t), std::exp(-0.2 * t);
        return v;
      },
      10.0, 1e-3);
  EXPECT_NEAR(iqc_audit(op, y, 10.0), 1.0, 1e-12);
}

TEST(IqcAudit, DelayOnDecayingExponential) {
  const auto op = UncertaintyOp::input_delay(Matrix::Identity(1, 1), 0.3);
  const auto y = sample([](double t) { return scalar(std::exp(-t)); }, 10.0, 1e-3);
  const double ratio = iqc_audit(op, y, 10.0);
  EXPECT_NEAR(ratio, 0.9999999983054868, 1e-6);
  EXPECT_LE(ratio, 1.0);
}

TEST(IqcAudit, LagOnStep) {
  const auto op = UncertaintyOp::first_order_lag(Matrix::Identity(1, 1), 2.0);
  const auto y = sample([](double) { return scalar(1.0); }, 20.0, 1e-3);
  EXPECT_NEAR(iqc_audit(op, y, 20.0), 0.240625, 1e-6);
}

TEST(IqcAudit, RejectsZeroSignal) {
  const auto op = UncertaintyOp::input_delay(Matrix::Identity(1, 1), 0.1);
  const auto y = sample([](double) { return scalar(0.0); }, 1.0, 1e-2);
  EXPECT_THROW(iqc_audit(op, y, 1.0), std::domain_error);
}

TEST(IqcAudit, RandomSignalsStayWithinUnitBound) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  Matrix C(1, 2);
  C << 0.5, 0.5;
  const std::vector<UncertaintyOp> ops = {
      UncertaintyOp::norm_bounded(C, DeltaSchedule::pendulum(0.5, 0.4, 1.0, 1)),
      UncertaintyOp::norm_bounded(C, DeltaSchedule::table({0.0, 3.0, 6.0}, {1.0, -1.0, 0.2}, 1)),
      UncertaintyOp::input_delay(C, 0.2),
      UncertaintyOp::input_delay(C, 1e-4),
      UncertaintyOp::first_order_lag(C, 1.0),
      UncertaintyOp::first_order_lag(C, 3.0)};
  for (const auto& op : ops) {
    for (int trial = 0; trial < 50; ++trial) {
      Vector a = Vector::NullaryExpr(2, [&] { return U(rng); });
      Vector b = Vector::NullaryExpr(2, [&] { return U(rng); });
      const double w = 0.5 + 4.0 * (U(rng) + 1.0);
      const double decay = 0.1 + (U(rng) + 1.0);
      const auto y = sample([&](double t) { return Vector(std::exp(-decay * t) * (a * std::cos(w * t) + b)); }, 8.0,
                            1e-3);
      EXPECT_LE(iqc_audit(op, y, 8.0), 1.0 + 1e-6) << op.name() << " trial " << trial;
    }
  }
}

TEST(EdgeCouplingSet, UniformCoversEveryDirection) {
  const auto op = UncertaintyOp::input_delay(Matrix::Identity(1, 1), 0.1);
  const auto set = EdgeCouplingSet::uniform({{1, 2}, {2, 3}}, {1, 0, 1}, op);
  EXPECT_EQ(set.entries().size(), 8u);
  EXPECT_TRUE(set.contains(2, 1));
  EXPECT_TRUE(set.contains(0, 3));
  EXPECT_TRUE(set.contains(3, 0));
  EXPECT_FALSE(set.contains(0, 2));
  EXPECT_THROW(set.at(1, 3), std::invalid_argument);
}

}  // namespace
}  // namespace iqcsync
