#include "iqcsync/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace iqcsync {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

// Weight of the linear ramp part of the input over one lag step:
// (1/a) * (1 - (1 - e^{-x}) / x), x = a h.
double ramp_weight(double a, double h) {
  const double x = a * h;
  if (x < 1e-4) return h * (0.5 - x / 6.0 + x * x / 24.0);
  return (1.0 + std::expm1(-x) / x) / a;
}

// Exact zeta(t0 + h) for zeta' = -a zeta + u(s), u linear from u0 to u1.
Vector lag_step(const Vector& zeta, const Vector& u0, const Vector& u1, double a, double h) {
  if (h <= 0.0) return zeta;
  const double decay = std::exp(-a * h);
  const double hold = -std::expm1(-a * h) / a;
  return decay * zeta + hold * u0 + ramp_weight(a, h) * (u1 - u0);
}

}  // namespace

void SystemModel::validate() const {
  require(A.rows() > 0 && A.rows() == A.cols(), "model: A must be square and nonempty");
  require(B1.rows() == A.rows() && B1.cols() > 0, "model: B1 must have n rows");
  require(B2.rows() == A.rows() && B2.cols() > 0, "model: B2 must have n rows");
  require(C.cols() == A.rows() && C.rows() > 0, "model: C must have n columns");
  require(Q.rows() == A.rows() && Q.cols() == A.rows(), "model: Q must be n x n");
  require(R.rows() == B1.cols() && R.cols() == B1.cols(), "model: R must be p x p");
  for (const Matrix* M : {&A, &B1, &B2, &C, &Q, &R})
    require(all_finite(*M), "model: matrices must have finite entries");
  require(is_symmetric(Q, 1e-12) && is_positive_definite(Q), "model: Q must be symmetric positive definite");
  require(is_symmetric(R, 1e-12) && is_positive_definite(R), "model: R must be symmetric positive definite");
}

SystemModel pendulum_model(const PendulumParams& prm) {
  const double ml2 = prm.mass * prm.length * prm.length;
  SystemModel m;
  m.A.resize(2, 2);
  m.A << 0.0, 1.0, -prm.gravity / prm.length, 0.0;
  m.B1.resize(2, 1);
  m.B1 << 0.0, -1.0 / ml2;
  m.B2.resize(2, 1);
  m.B2 << 0.0, 1.0 / prm.mass;
  m.C.resize(1, 2);
  m.C << prm.k1, prm.k2;
  m.Q.resize(2, 2);
  m.Q << 1.0, 0.0, 0.0, 0.1;
  m.R = Matrix::Constant(1, 1, 0.01);
  return m;
}

DeltaSchedule DeltaSchedule::constant(const Matrix& delta) {
  std::ostringstream os;
  os << "constant " << delta.rows() << "x" << delta.cols();
  return {[delta](double) { return delta; }, os.str()};
}

DeltaSchedule DeltaSchedule::scalar(std::function<double(double)> delta, int dim,
                                    std::string description) {
  return {[delta = std::move(delta), dim](double t) {
            return Matrix(delta(t) * Matrix::Identity(dim, dim));
          },
          std::move(description)};
}

DeltaSchedule DeltaSchedule::pendulum(double a0, double a1, double length, int dim) {
  std::ostringstream os;
  os << "((" << a0 << " + " << a1 << " sin t) / " << length << ")^2";
  return scalar(
      [a0, a1, length](double t) {
        const double a = a0 + a1 * std::sin(t);
        return a * a / (length * length);
      },
      dim, os.str());
}

DeltaSchedule DeltaSchedule::table(std::vector<double> times, std::vector<double> values, int dim) {
  require(!times.empty() && times.size() == values.size(), "schedule table: times and values must match");
  require(std::is_sorted(times.begin(), times.end()), "schedule table: times must be sorted");
  auto fn = [times = std::move(times), values = std::move(values)](double t) {
    if (t <= times.front()) return values.front();
    if (t >= times.back()) return values.back();
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    const std::size_t k = static_cast<std::size_t>(it - times.begin());
    const double w = (t - times[k - 1]) / (times[k] - times[k - 1]);
    return (1.0 - w) * values[k - 1] + w * values[k];
  };
  return scalar(std::move(fn), dim, "table");
}

UncertaintyOp UncertaintyOp::norm_bounded(Matrix C, DeltaSchedule schedule) {
  return UncertaintyOp(NormBounded{std::move(schedule)}, std::move(C));
}

UncertaintyOp UncertaintyOp::input_delay(Matrix C, double tau) {
  return UncertaintyOp(InputDelay{tau}, std::move(C));
}

UncertaintyOp UncertaintyOp::first_order_lag(Matrix C, double a) {
  return UncertaintyOp(FirstOrderLag{a}, std::move(C));
}

int UncertaintyOp::output_dim() const {
  if (const auto* nb = std::get_if<NormBounded>(&kind_)) return static_cast<int>(nb->schedule.at(0.0).rows());
  return channel_dim();
}

std::string UncertaintyOp::name() const {
  struct Namer {
    std::string operator()(const NormBounded& k) const { return "norm_bounded[" + k.schedule.description + "]"; }
    std::string operator()(const InputDelay& k) const { return "input_delay[tau=" + std::to_string(k.tau) + "]"; }
    std::string operator()(const FirstOrderLag& k) const { return "first_order_lag[a=" + std::to_string(k.a) + "]"; }
  };
  return std::visit(Namer{}, kind_);
}

void UncertaintyOp::validate(double horizon, double sample_step) const {
  require(C_.rows() > 0 && C_.cols() > 0 && all_finite(C_), "uncertainty: C must be nonempty and finite");
  if (const auto* nb = std::get_if<NormBounded>(&kind_)) {
    require(static_cast<bool>(nb->schedule.at), "uncertainty: norm-bounded schedule is empty");
    const Matrix d0 = nb->schedule.at(0.0);
    require(d0.cols() == C_.rows(), "uncertainty: Delta must have rows(C) columns");
    const int steps = std::max(1, static_cast<int>(std::ceil(horizon / sample_step)));
    for (int k = 0; k <= steps; ++k) {
      const double t = horizon * k / steps;
      const Matrix d = nb->schedule.at(t);
      require(d.rows() == d0.rows() && d.cols() == d0.cols() && all_finite(d),
              "uncertainty: Delta(t) changes shape or is not finite");
      require(max_eigenvalue(d.transpose() * d) <= 1.0 + 1e-12,
              "uncertainty: Delta(t)'Delta(t) exceeds I at t = " + std::to_string(t));
    }
  } else if (const auto* dl = std::get_if<InputDelay>(&kind_)) {
    require(std::isfinite(dl->tau) && dl->tau >= 0.0, "uncertainty: delay must be >= 0");
  } else if (const auto* lg = std::get_if<FirstOrderLag>(&kind_)) {
    require(std::isfinite(lg->a) && lg->a > 0.0, "uncertainty: lag pole must be > 0");
  }
}

bool UncertaintyOp::is_iqc_admissible() const {
  if (const auto* lg = std::get_if<FirstOrderLag>(&kind_)) return lg->a >= 1.0;
  return true;
}

UncertaintyOp UncertaintyOp::with_C(Matrix C) const { return UncertaintyOp(kind_, std::move(C)); }

Vector SampledSignal::at(double t) const {
  if (t < 0.0) return Vector::Zero(values.rows());
  const double pos = t / step;
  const int k = static_cast<int>(std::floor(pos));
  if (k >= samples() - 1) return values.col(samples() - 1);
  const double w = pos - k;
  return (1.0 - w) * values.col(k) + w * values.col(k + 1);
}

namespace {

void check_signal(const UncertaintyOp& op, const SampledSignal& y) {
  require(y.samples() >= 1 && y.step > 0.0, "signal: needs samples and a positive step");
  require(y.values.rows() == op.input_dim(), "signal: dimension does not match the operator's C");
}

void check_time(const SampledSignal& y, double t) {
  const double tol = 1e-9 * std::max(1.0, y.duration());
  if (!(t >= -tol && t <= y.duration() + tol))
    throw std::out_of_range("apply_uncertainty: t outside the sampled history");
}

}  // namespace

Vector apply_uncertainty(const UncertaintyOp& op, const SampledSignal& y, double t) {
  check_signal(op, y);
  check_time(y, t);
  t = std::clamp(t, 0.0, y.duration());
  const Matrix& C = op.C();
  if (const auto* nb = std::get_if<NormBounded>(&op.kind())) return nb->schedule.at(t) * (C * y.at(t));
  if (const auto* dl = std::get_if<InputDelay>(&op.kind())) {
    if (t < dl->tau) return Vector::Zero(C.rows());
    return C * y.at(t - dl->tau);
  }
  const double a = std::get<FirstOrderLag>(op.kind()).a;
  Vector zeta = Vector::Zero(C.rows());
  const int full = std::min(static_cast<int>(std::floor(t / y.step)), y.samples() - 1);
  for (int k = 0; k < full; ++k)
    zeta = lag_step(zeta, C * y.values.col(k), C * y.values.col(k + 1), a, y.step);
  const double rest = t - full * y.step;
  if (rest > 0.0) zeta = lag_step(zeta, C * y.values.col(full), C * y.at(t), a, rest);
  return zeta;
}

Matrix apply_uncertainty_series(const UncertaintyOp& op, const SampledSignal& y) {
  check_signal(op, y);
  const int K = y.samples();
  Matrix out(op.output_dim(), K);
  if (const auto* lg = std::get_if<FirstOrderLag>(&op.kind())) {
    Vector zeta = Vector::Zero(op.channel_dim());
    out.col(0) = zeta;
    for (int k = 0; k + 1 < K; ++k) {
      zeta = lag_step(zeta, op.C() * y.values.col(k), op.C() * y.values.col(k + 1), lg->a, y.step);
      out.col(k + 1) = zeta;
    }
    return out;
  }
  for (int k = 0; k < K; ++k) out.col(k) = apply_uncertainty(op, y, k * y.step);
  return out;
}

double iqc_audit(const UncertaintyOp& op, const SampledSignal& y, double horizon) {
  check_signal(op, y);
  require(horizon > 0.0, "iqc_audit: horizon must be positive");
  check_time(y, horizon);
  const int last = std::min(y.samples() - 1, static_cast<int>(std::floor(horizon / y.step + 1e-9)));
  require(last >= 1, "iqc_audit: horizon shorter than one step");
  double num = 0.0, den = 0.0;
  for (int k = 0; k <= last; ++k) {
    const double w = (k == 0 || k == last) ? 0.5 : 1.0;
    den += w * (op.C() * y.values.col(k)).squaredNorm();
  }
  if (const auto* dl = std::get_if<InputDelay>(&op.kind())) {
    // The delayed output jumps at t = tau; integrate the shifted input
    // over [0, t_last - tau] rather than smearing the jump on the grid.
    const double end = last * y.step - dl->tau;
    if (end > 0.0) {
      const int full = std::min(last, static_cast<int>(std::floor(end / y.step)));
      for (int k = 0; k < full; ++k)
        num += 0.5 * ((op.C() * y.values.col(k)).squaredNorm() + (op.C() * y.values.col(k + 1)).squaredNorm());
      const double rest = end - full * y.step;
      if (rest > 0.0)
        num += 0.5 * rest / y.step *
               ((op.C() * y.values.col(full)).squaredNorm() + (op.C() * y.at(end)).squaredNorm());
    }
  } else {
    const Matrix phi = apply_uncertainty_series(op, y);
    for (int k = 0; k <= last; ++k) {
      const double w = (k == 0 || k == last) ? 0.5 : 1.0;
      num += w * phi.col(k).squaredNorm();
    }
  }
  if (!(den > 1e-300)) throw std::domain_error("iqc_audit: degenerate denominator (C y is zero)");
  return num / den;
}

void EdgeCouplingSet::set(int i, int j, UncertaintyOp op) {
  require(i != j, "coupling: self-coupling is not allowed");
  entries_.insert_or_assign({i, j}, std::move(op));
}

bool EdgeCouplingSet::contains(int i, int j) const { return entries_.count({i, j}) > 0; }

const UncertaintyOp& EdgeCouplingSet::at(int i, int j) const {
  const auto it = entries_.find({i, j});
  if (it == entries_.end())
    throw std::invalid_argument("coupling: missing operator for direction (" + std::to_string(i) + ", " +
                                std::to_string(j) + ")");
  return it->second;
}

EdgeCouplingSet EdgeCouplingSet::uniform(const std::vector<std::pair<int, int>>& phys_edges,
                                         const std::vector<int>& d, const UncertaintyOp& op) {
  EdgeCouplingSet set;
  for (const auto& [i, j] : phys_edges) {
    set.set(i, j, op);
    set.set(j, i, op);
  }
  for (std::size_t k = 0; k < d.size(); ++k) {
    if (d[k] == 0) continue;
    const int node = static_cast<int>(k) + 1;
    set.set(node, 0, op);
    set.set(0, node, op);
  }
  return set;
}

}  // namespace iqcsync
