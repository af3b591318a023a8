#include "iqcsync/sim.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <sstream>

namespace iqcsync {

namespace {

// dx/dt = (I (x) A_blk) x + drift x + feedback (diff x) + input [phi_1; ...; phi_c],
// with phi_c the operator op_c applied to sel_c (pre_c x). Differences of node
// states are formed explicitly (diff, pre) so that synchronised nodes stay
// exactly synchronised.
struct Channel {
  std::string label;
  Matrix sel;
  Matrix pre;  // optional
  const UncertaintyOp* op = nullptr;
  int out_offset = 0;
  int out_dim = 0;
  int lag_offset = -1;  // position of the filter state in the augmented vector
  int target = 0;       // state block driven by the channel
};

struct CoupledSystem {
  int dim = 0;
  Matrix block_drift;
  Matrix drift;     // optional
  Matrix diff;      // optional
  Matrix feedback;  // dim x rows(diff)
  Matrix input;
  std::vector<Channel> channels;
};

struct EngineResult {
  Matrix x;  // dim x samples
  std::vector<ChannelAudit> audits;
};

Vector channel_input(const Channel& c, const Vector& x) {
  return c.pre.size() ? Vector(c.sel * (c.pre * x)) : Vector(c.sel * x);
}

int step_count(double T, double h) {
  if (!(h > 0.0) || !(T > 0.0)) throw std::invalid_argument("horizon and step must be positive");
  const long long steps = std::llround(T / h);
  if (steps < 1 || std::abs(static_cast<double>(steps) * h - T) > 1e-9 * T)
    throw std::invalid_argument("horizon must be an integer multiple of the step");
  if (steps > 50'000'000) throw std::invalid_argument("too many integration steps");
  return static_cast<int>(steps);
}

// Lag states are appended after the plant state; returns the augmented size.
int assign_lag_states(CoupledSystem& sys) {
  int size = sys.dim;
  for (auto& c : sys.channels)
    if (std::holds_alternative<FirstOrderLag>(c.op->kind())) {
      c.lag_offset = size;
      size += c.out_dim;
    }
  return size;
}

EngineResult integrate(CoupledSystem sys, const Vector& x0, double T, double h) {
  const int steps = step_count(T, h);
  const int dim = sys.dim;
  const int aug = assign_lag_states(sys);
  if (x0.size() != dim) throw std::invalid_argument("initial state has the wrong size");

  EngineResult res;
  res.x.resize(dim, steps + 1);
  res.x.col(0) = x0;
  int current = 0;  // last filled column

  // State at time s for a delayed lookup; `stage` is the state at `s_now`.
  auto delayed = [&](double s, double s_now, const Vector& stage) -> Vector {
    if (s < 0.0) return Vector::Zero(dim);
    const double t_cur = current * h;
    if (s <= t_cur) {
      const double pos = s / h;
      int k = static_cast<int>(std::floor(pos));
      if (k >= current) return res.x.col(current);
      const double w = pos - k;
      return (1.0 - w) * res.x.col(k) + w * res.x.col(k + 1);
    }
    const double w = (s - t_cur) / (s_now - t_cur);
    return (1.0 - w) * res.x.col(current) + w * stage;
  };

  auto outputs = [&](double s, const Vector& z) {
    Vector phi(sys.input.cols());
    for (const auto& c : sys.channels) {
      const Vector x = z.head(dim);
      auto seg = phi.segment(c.out_offset, c.out_dim);
      if (const auto* nb = std::get_if<NormBounded>(&c.op->kind())) {
        seg = nb->schedule.at(s) * channel_input(c, x);
      } else if (const auto* d = std::get_if<InputDelay>(&c.op->kind())) {
        seg = channel_input(c, delayed(s - d->tau, s, x));
      } else {
        seg = z.segment(c.lag_offset, c.out_dim);
      }
    }
    return phi;
  };

  auto rhs = [&](double s, const Vector& z) {
    Vector dz(aug);
    const Vector x = z.head(dim);
    const int nb = static_cast<int>(sys.block_drift.rows());
    for (int b = 0; b < dim / nb; ++b) dz.segment(b * nb, nb) = sys.block_drift * x.segment(b * nb, nb);
    if (sys.drift.size()) dz.head(dim) += sys.drift * x;
    if (sys.diff.size()) dz.head(dim) += sys.feedback * (sys.diff * x);
    if (!sys.channels.empty()) dz.head(dim) += sys.input * outputs(s, z);
    for (const auto& c : sys.channels)
      if (c.lag_offset >= 0) {
        const double a = std::get<FirstOrderLag>(c.op->kind()).a;
        dz.segment(c.lag_offset, c.out_dim) = -a * z.segment(c.lag_offset, c.out_dim) + channel_input(c, x);
      }
    return dz;
  };

  res.audits.resize(sys.channels.size());
  std::vector<std::vector<double>> bound_history(sys.channels.size());
  std::vector<double> prev_out(sys.channels.size()), prev_bound(sys.channels.size());
  auto audit = [&](int k, const Vector& z, bool first) {
    const double s = k * h;
    const Vector phi = sys.channels.empty() ? Vector() : outputs(s, z);
    for (std::size_t c = 0; c < sys.channels.size(); ++c) {
      const Channel& ch = sys.channels[c];
      const double out = phi.segment(ch.out_offset, ch.out_dim).squaredNorm();
      const double bnd = channel_input(ch, z.head(dim)).squaredNorm();
      if (std::holds_alternative<InputDelay>(ch.op->kind())) bound_history[c].push_back(bnd);
      if (!first) {
        res.audits[c].output_energy += 0.5 * h * (prev_out[c] + out);
        res.audits[c].bound_energy += 0.5 * h * (prev_bound[c] + bnd);
      }
      prev_out[c] = out;
      prev_bound[c] = bnd;
    }
  };
  for (std::size_t c = 0; c < sys.channels.size(); ++c) res.audits[c].label = sys.channels[c].label;

  Vector z = Vector::Zero(aug);
  z.head(dim) = x0;
  audit(0, z, true);
  for (int k = 0; k < steps; ++k) {
    const double s = k * h;
    const Vector k1 = rhs(s, z);
    const Vector k2 = rhs(s + 0.5 * h, z + 0.5 * h * k1);
    const Vector k3 = rhs(s + 0.5 * h, z + 0.5 * h * k2);
    const Vector k4 = rhs(s + h, z + h * k3);
    z += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    const double norm = z.norm();
    if (!std::isfinite(norm) || norm > 1e12) {
      std::ostringstream os;
      os << "closed loop diverged at t = " << (k + 1) * h;
      throw SimulationDiverged(os.str(), (k + 1) * h);
    }
    res.x.col(k + 1) = z.head(dim);
    current = k + 1;
    audit(k + 1, z, false);
  }

  // A delayed output jumps at t = tau, which the grid trapezoid smears.
  // Its energy on [0, T] is the input energy on [0, T - tau] instead.
  for (std::size_t c = 0; c < sys.channels.size(); ++c) {
    const auto* d = std::get_if<InputDelay>(&sys.channels[c].op->kind());
    if (!d) continue;
    const double end = steps * h - d->tau;
    double energy = 0.0;
    if (end > 0.0) {
      const int full = std::min(steps, static_cast<int>(std::floor(end / h)));
      const auto& f = bound_history[c];
      for (int k = 0; k < full; ++k) energy += 0.5 * h * (f[k] + f[k + 1]);
      const double rest = end - full * h;
      if (rest > 0.0 && full < steps) {
        const double w = rest / h;
        const Vector x = (1.0 - w) * res.x.col(full) + w * res.x.col(full + 1);
        energy += 0.5 * rest * (f[full] + channel_input(sys.channels[c], x).squaredNorm());
      }
    }
    res.audits[c].output_energy = energy;
  }
  return res;
}

Matrix block_row(int N, int i, const Matrix& B) {
  Matrix r = Matrix::Zero(B.rows(), static_cast<Eigen::Index>(N) * B.cols());
  r.middleCols(static_cast<Eigen::Index>(i) * B.cols(), B.cols()) = B;
  return r;
}

void check_op(const UncertaintyOp& op, const SystemModel& model, const std::string& where) {
  if (op.input_dim() != model.n())
    throw std::invalid_argument(where + ": operator bound matrix must have n columns");
  if (op.output_dim() != model.m())
    throw std::invalid_argument(where + ": operator output must match the columns of B2");
}

Matrix error_map(int N, int n) {
  // e = E x with e_i = x_0 - x_i.
  Matrix E = Matrix::Zero(static_cast<Eigen::Index>(N) * n, static_cast<Eigen::Index>(N + 1) * n);
  for (int i = 0; i < N; ++i) {
    E.block(i * n, 0, n, n) = Matrix::Identity(n, n);
    E.block(i * n, (i + 1) * n, n, n) = -Matrix::Identity(n, n);
  }
  return E;
}

double trapezoid_total(const Vector& f, double h) {
  if (f.size() < 2) return 0.0;
  return h * (f.sum() - 0.5 * (f(0) + f(f.size() - 1)));
}

}  // namespace

Vector Trajectory::errors(int k) const {
  Vector e(static_cast<Eigen::Index>(N) * n);
  for (int i = 0; i < N; ++i) e.segment(i * n, n) = x.col(k).head(n) - x.col(k).segment((i + 1) * n, n);
  return e;
}

Matrix Trajectory::error_matrix() const {
  return error_map(N, n) * x;
}

Vector stack_states(const Vector& leader, const std::vector<Vector>& followers) {
  const Eigen::Index n = leader.size();
  Vector x(n * static_cast<Eigen::Index>(followers.size() + 1));
  x.head(n) = leader;
  for (std::size_t i = 0; i < followers.size(); ++i) {
    if (followers[i].size() != n) throw std::invalid_argument("follower state has the wrong size");
    x.segment(n * static_cast<Eigen::Index>(i + 1), n) = followers[i];
  }
  return x;
}

Trajectory simulate(const SystemModel& model, const Topology& topo, const Matrix& K, const EdgeCouplingSet& couplings,
                    const Vector& x_init, double T, double h) {
  model.validate();
  topo.validate();
  check_couplings(couplings, topo);
  const int N = topo.N, n = model.n(), p = model.p(), m = model.m();
  if (K.rows() != p || K.cols() != n) throw std::invalid_argument("gain must be p x n");
  if (x_init.size() != static_cast<Eigen::Index>(N + 1) * n)
    throw std::invalid_argument("initial state must stack the leader and N followers");

  CoupledSystem sys;
  sys.dim = (N + 1) * n;
  sys.block_drift = model.A;
  // One row block x_j - x_i per observed neighbour j (the leader is j = 0),
  // fed back through -B1 K into follower i.
  std::vector<std::pair<int, int>> observed;
  for (int i = 1; i <= N; ++i) {
    if (topo.g[i - 1] != 0) observed.emplace_back(i, 0);
    for (int j : topo.control_neighbors(i)) observed.emplace_back(i, j);
  }
  const int rows = static_cast<int>(observed.size()) * n;
  sys.diff = Matrix::Zero(rows, sys.dim);
  sys.feedback = Matrix::Zero(sys.dim, rows);
  Matrix control = Matrix::Zero(static_cast<Eigen::Index>(N) * p, rows);  // u = control (diff x)
  const Matrix BK = model.B1 * K;
  for (std::size_t q = 0; q < observed.size(); ++q) {
    const auto [i, j] = observed[q];
    const int r = static_cast<int>(q) * n;
    sys.diff.block(r, j * n, n, n) = Matrix::Identity(n, n);
    sys.diff.block(r, i * n, n, n) -= Matrix::Identity(n, n);
    sys.feedback.block(i * n, r, n, n) = -BK;
    control.block((i - 1) * p, r, p, n) = -K;
  }
  const Matrix diff = sys.diff;

  int out = 0;
  for (const auto& [key, op] : couplings.entries()) {
    const auto [i, j] = key;
    const bool used = (i == 0 || j == 0) ? topo.d[std::max(i, j) - 1] != 0
                                         : [&] {
                                             const auto nb = topo.phys_neighbors(i);
                                             return std::find(nb.begin(), nb.end(), j) != nb.end();
                                           }();
    if (!used) continue;
    const std::string label = "(" + std::to_string(i) + "," + std::to_string(j) + ")";
    check_op(op, model, "coupling " + label);
    Channel c;
    c.label = label;
    c.op = &op;
    c.sel = op.C();
    c.pre = Matrix::Zero(n, sys.dim);
    c.pre.middleCols(j * n, n) += Matrix::Identity(n, n);
    c.pre.middleCols(i * n, n) -= Matrix::Identity(n, n);
    c.target = i;
    c.out_offset = out;
    c.out_dim = m;
    out += m;
    sys.channels.push_back(std::move(c));
  }
  sys.input = Matrix::Zero(sys.dim, out);
  for (const auto& c : sys.channels) {
    sys.input.block(c.target * n, c.out_offset, n, m) = model.B2;
  }

  EngineResult er = integrate(std::move(sys), x_init, T, h);

  Trajectory tr;
  tr.N = N;
  tr.n = n;
  tr.p = p;
  tr.h = h;
  const int samples = static_cast<int>(er.x.cols());
  tr.t = Vector::LinSpaced(samples, 0.0, h * (samples - 1));
  tr.x = std::move(er.x);
  tr.u = control * (diff * tr.x);
  tr.audits = std::move(er.audits);
  tr.running_cost = Vector::Zero(samples);
  double prev = cost_integrand_edges(topo, model.Q, model.R, tr.errors(0), tr.u.col(0));
  for (int k = 1; k < samples; ++k) {
    const double cur = cost_integrand_edges(topo, model.Q, model.R, tr.errors(k), tr.u.col(k));
    tr.running_cost(k) = tr.running_cost(k - 1) + 0.5 * h * (prev + cur);
    prev = cur;
  }
  return tr;
}

Trajectory simulate(const SystemModel& model, const Topology& topo, const Matrix& K, const UncertaintyOp& op,
                    const Vector& x_init, double T, double h) {
  return simulate(model, topo, K, EdgeCouplingSet::uniform(topo.phys_edges, topo.d, op), x_init, T, h);
}

double cost_integrand_edges(const Topology& topo, const Matrix& Q, const Matrix& R, const Vector& e, const Vector& u) {
  const int n = static_cast<int>(Q.rows()), p = static_cast<int>(R.rows());
  double v = 0.0;
  for (int i = 1; i <= topo.N; ++i) {
    const auto ei = e.segment((i - 1) * n, n);
    for (int j : topo.control_neighbors(i)) {
      // x_j - x_i = e_i - e_j
      const Vector d = ei - e.segment((j - 1) * n, n);
      v += 0.5 * d.dot(Q * d);
    }
    if (topo.g[i - 1] != 0) v += ei.dot(Q * ei);
    const auto ui = u.segment((i - 1) * p, p);
    v += ui.dot(R * ui);
  }
  return v;
}

double cost_integrand_kron(const Topology& topo, const Matrix& Q, const Matrix& R, const Vector& e, const Vector& u) {
  const Matrix H = laplacian(topo.control_edges, topo.N) + pinning_matrix(topo);
  const Matrix W = kron(H, Q);
  const Matrix RR = kron(Matrix::Identity(topo.N, topo.N), R);
  return e.dot(W * e) + u.dot(RR * u);
}

double cost_integrand_modal(const SpectralData& sd, const Matrix& Q, const Matrix& R, const Vector& e,
                            const Vector& u) {
  const int n = static_cast<int>(Q.rows()), p = static_cast<int>(R.rows());
  const Vector eps = transform_errors(e, sd, n);
  const Vector uh = transform_errors(u, sd, p);
  double v = 0.0;
  for (int i = 0; i < sd.N(); ++i) {
    const auto ei = eps.segment(i * n, n);
    const auto ui = uh.segment(i * p, p);
    v += sd.lambdas(i) * ei.dot(Q * ei) + ui.dot(R * ui);
  }
  return v;
}

CostReport evaluate_cost(const Trajectory& traj, const Topology& topo, const Matrix& Q, const Matrix& R,
                         const SpectralData* sd) {
  const int S = traj.samples();
  Vector fe(S), fk(S), fm(S);
  const Matrix H = laplacian(topo.control_edges, topo.N) + pinning_matrix(topo);
  const Matrix W = kron(H, Q);
  const Matrix RR = kron(Matrix::Identity(topo.N, topo.N), R);
  for (int k = 0; k < S; ++k) {
    const Vector e = traj.errors(k);
    const Vector u = traj.u.col(k);
    fe(k) = cost_integrand_edges(topo, Q, R, e, u);
    fk(k) = e.dot(W * e) + u.dot(RR * u);
    if (sd) fm(k) = cost_integrand_modal(*sd, Q, R, e, u);
  }
  CostReport rep;
  rep.edge_form = trapezoid_total(fe, traj.h);
  rep.kron_form = trapezoid_total(fk, traj.h);
  if (sd) rep.modal_form = trapezoid_total(fm, traj.h);
  if (std::abs(rep.edge_form - rep.kron_form) > 1e-9 * std::max(1.0, std::abs(rep.edge_form)))
    throw std::logic_error("edge and Kronecker cost forms disagree");

  const int tail_start = static_cast<int>(std::floor(0.9 * (S - 1)));
  const double tail = trapezoid_total(fe.tail(S - tail_start), traj.h);
  rep.tail_fraction = rep.edge_form > 0.0 ? tail / rep.edge_form : 0.0;
  rep.tail_converged = rep.tail_fraction < 1e-3;
  if (!rep.tail_converged)
    std::cerr << "iqcsync: cost has not settled, last 10% of the horizon contributes " << rep.tail_fraction * 100.0
              << "%\n";
  return rep;
}

double verify_transformation(const SystemModel& model, const Topology& topo, const SpectralData& sd,
                             const Matrix& K, const UncertaintyOp& op, const Vector& e0, double T, double h) {
  model.validate();
  topo.validate();
  check_op(op, model, "uncertainty");
  const int N = topo.N, n = model.n(), m = model.m();
  if (e0.size() != static_cast<Eigen::Index>(N) * n) throw std::invalid_argument("initial error must have N n entries");
  const Matrix IN = Matrix::Identity(N, N);
  const Matrix H = laplacian(topo.control_edges, N) + pinning_matrix(topo);
  const Matrix BK = model.B1 * K;

  CoupledSystem err;
  err.dim = N * n;
  err.block_drift = model.A;
  err.drift = kron(H, BK);
  err.input = -kron(leader_coupling_matrix(topo), model.B2);

  CoupledSystem modal;
  modal.dim = N * n;
  modal.block_drift = model.A;
  modal.drift = kron(Matrix(sd.lambdas.asDiagonal()), BK);
  modal.input = -kron(sd.M, model.B2) * kron(Matrix(sd.T.transpose()), Matrix::Identity(m, m));

  for (int i = 0; i < N; ++i) {
    Channel c;
    c.label = "node " + std::to_string(i + 1);
    c.op = &op;
    c.out_offset = i * m;
    c.out_dim = m;
    c.sel = block_row(N, i, op.C());
    err.channels.push_back(c);
    c.sel = kron(Matrix(sd.T.row(i)), op.C());
    modal.channels.push_back(c);
  }

  const EngineResult re = integrate(err, e0, T, h);
  const EngineResult rm = integrate(modal, transform_errors(e0, sd, n), T, h);
  const Matrix Tt = kron(Matrix(sd.T.transpose()), Matrix::Identity(n, n));
  return (rm.x - Tt * re.x).colwise().norm().maxCoeff();
}

}  // namespace iqcsync
