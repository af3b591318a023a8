#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "iqcsync/consensus.hpp"
#include "iqcsync/graph.hpp"
#include "iqcsync/model.hpp"
#include "iqcsync/scenario.hpp"
#include "iqcsync/sim.hpp"
#include "iqcsync/synthesis.hpp"

namespace py = pybind11;
using namespace iqcsync;

PYBIND11_MODULE(_core, m) {
  m.doc() = "Leader-follower synchronisation: LMI synthesis, simulation and consensus";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<SimulationDiverged>(m, "SimulationDiverged", PyExc_RuntimeError);
  py::register_exception<ConsensusNotConverged>(m, "ConsensusNotConverged", PyExc_RuntimeError);

  // Model.
  py::class_<SystemModel>(m, "SystemModel")
      .def(py::init<>())
      .def(py::init([](Matrix A, Matrix B1, Matrix B2, Matrix C, Matrix Q, Matrix R) {
             SystemModel s{std::move(A), std::move(B1), std::move(B2), std::move(C), std::move(Q), std::move(R)};
             s.validate();
             return s;
           }),
           py::arg("A"), py::arg("B1"), py::arg("B2"), py::arg("C"), py::arg("Q"), py::arg("R"))
      .def_readwrite("A", &SystemModel::A)
      .def_readwrite("B1", &SystemModel::B1)
      .def_readwrite("B2", &SystemModel::B2)
      .def_readwrite("C", &SystemModel::C)
      .def_readwrite("Q", &SystemModel::Q)
      .def_readwrite("R", &SystemModel::R)
      .def_property_readonly("n", &SystemModel::n)
      .def_property_readonly("p", &SystemModel::p)
      .def_property_readonly("m", &SystemModel::m)
      .def_property_readonly("r", &SystemModel::r)
      .def("validate", &SystemModel::validate);

  py::class_<PendulumParams>(m, "PendulumParams")
      .def(py::init<>())
      .def_readwrite("mass", &PendulumParams::mass)
      .def_readwrite("length", &PendulumParams::length)
      .def_readwrite("gravity", &PendulumParams::gravity)
      .def_readwrite("k1", &PendulumParams::k1)
      .def_readwrite("k2", &PendulumParams::k2);
  m.def("pendulum_model", &pendulum_model, py::arg("params") = PendulumParams{});

  py::class_<DeltaSchedule>(m, "DeltaSchedule")
      .def_static("constant", &DeltaSchedule::constant, py::arg("delta"))
      .def_static("pendulum", &DeltaSchedule::pendulum, py::arg("a0"), py::arg("a1"), py::arg("length"),
                  py::arg("dim"))
      .def_static("table", &DeltaSchedule::table, py::arg("times"), py::arg("values"), py::arg("dim"))
      .def("__call__", [](const DeltaSchedule& s, double t) { return s.at(t); })
      .def_readonly("description", &DeltaSchedule::description);

  py::class_<UncertaintyOp>(m, "UncertaintyOp")
      .def_static("norm_bounded", &UncertaintyOp::norm_bounded, py::arg("C"), py::arg("schedule"))
      .def_static("input_delay", &UncertaintyOp::input_delay, py::arg("C"), py::arg("tau"))
      .def_static("first_order_lag", &UncertaintyOp::first_order_lag, py::arg("C"), py::arg("a"))
      .def_property_readonly("C", &UncertaintyOp::C)
      .def_property_readonly("name", &UncertaintyOp::name)
      .def("validate", &UncertaintyOp::validate, py::arg("horizon") = 10.0, py::arg("sample_step") = 1e-2)
      .def("is_iqc_admissible", &UncertaintyOp::is_iqc_admissible)
      .def("apply",
           [](const UncertaintyOp& op, const Matrix& values, double step) {
             return apply_uncertainty_series(op, SampledSignal{values, step});
           },
           py::arg("values"), py::arg("step"), "Operator output at every sample of a uniformly sampled signal.")
      .def("audit",
           [](const UncertaintyOp& op, const Matrix& values, double step, double horizon) {
             return iqc_audit(op, SampledSignal{values, step}, horizon);
           },
           py::arg("values"), py::arg("step"), py::arg("horizon"));

  py::class_<EdgeCouplingSet>(m, "EdgeCouplingSet")
      .def(py::init<>())
      .def("set", &EdgeCouplingSet::set, py::arg("i"), py::arg("j"), py::arg("op"))
      .def("contains", &EdgeCouplingSet::contains)
      .def_static("uniform", &EdgeCouplingSet::uniform, py::arg("phys_edges"), py::arg("d"), py::arg("op"));

  // Graph.
  py::class_<Topology>(m, "Topology")
      .def(py::init<>())
      .def(py::init([](int N, std::vector<Edge> control, std::vector<Edge> phys, std::vector<int> g,
                       std::vector<int> d) {
             Topology t{N, std::move(control), std::move(phys), std::move(g), std::move(d)};
             t.validate();
             return t;
           }),
           py::arg("N"), py::arg("control_edges"), py::arg("phys_edges"), py::arg("g"), py::arg("d"))
      .def_readwrite("N", &Topology::N)
      .def_readwrite("control_edges", &Topology::control_edges)
      .def_readwrite("phys_edges", &Topology::phys_edges)
      .def_readwrite("g", &Topology::g)
      .def_readwrite("d", &Topology::d)
      .def("validate", &Topology::validate);
  m.def("pendulum_topology", &pendulum_topology);
  m.def("laplacian", &laplacian, py::arg("edges"), py::arg("N"));

  py::class_<SpectralData>(m, "SpectralData")
      .def_readonly("lambdas", &SpectralData::lambdas)
      .def_readonly("T", &SpectralData::T)
      .def_readonly("M", &SpectralData::M)
      .def_readonly("lambda_min", &SpectralData::lambda_min)
      .def_readonly("lambda_max", &SpectralData::lambda_max)
      .def_readonly("w2", &SpectralData::w2)
      .def_readonly("q2", &SpectralData::q2);
  m.def("spectral", &spectral, py::arg("topology"));

  // Synthesis.
  py::enum_<Method>(m, "Method")
      .value("THM1", Method::Thm1)
      .value("THM2", Method::Thm2)
      .value("THM3", Method::Thm3)
      .value("THM4", Method::Thm4)
      .value("COR1", Method::Cor1);
  py::enum_<Objective>(m, "Objective")
      .value("FEASIBILITY", Objective::Feasibility)
      .value("GAMMA", Objective::Gamma)
      .value("TRACE", Objective::Trace);
  py::enum_<sdp::Status>(m, "Status")
      .value("FEASIBLE", sdp::Status::Feasible)
      .value("OPTIMAL", sdp::Status::Optimal)
      .value("INFEASIBLE", sdp::Status::Infeasible)
      .value("UNBOUNDED", sdp::Status::Unbounded)
      .value("NUMERICAL_FAILURE", sdp::Status::NumericalFailure);

  py::class_<Certificate>(m, "Certificate")
      .def_readonly("method", &Certificate::method)
      .def_readonly("objective", &Certificate::objective)
      .def_readonly("status", &Certificate::status)
      .def_readwrite("K", &Certificate::K)
      .def_readwrite("Y", &Certificate::Y)
      .def_readonly("F", &Certificate::F)
      .def_readonly("multipliers", &Certificate::multipliers)
      .def_readonly("bound", &Certificate::bound)
      .def_readonly("gamma", &Certificate::gamma)
      .def_readonly("margin", &Certificate::margin)
      .def_readonly("iterations", &Certificate::iterations)
      .def_readonly("message", &Certificate::message)
      .def_property_readonly("feasible", &Certificate::feasible);

  py::class_<SynthesisOptions>(m, "SynthesisOptions")
      .def(py::init<>())
      .def_readwrite("margin_scale", &SynthesisOptions::margin_scale)
      .def_readwrite("dense_epigraph_limit", &SynthesisOptions::dense_epigraph_limit);

  const py::arg_v no_couplings("couplings", nullptr);
  m.def("synth_thm1", &synth_thm1, py::arg("model"), py::arg("topology"), py::arg("spectral"), py::arg("e0"),
        py::arg("options") = SynthesisOptions{});
  m.def("synth_thm2", &synth_thm2, py::arg("model"), py::arg("topology"), py::arg("spectral"), py::arg("e0"),
        py::arg("options") = SynthesisOptions{});
  m.def("synth_thm3", &synth_thm3, py::arg("model"), py::arg("topology"), py::arg("spectral"), py::arg("e0"),
        py::arg("options") = SynthesisOptions{});
  m.def("synth_thm4", &synth_thm4, py::arg("model"), py::arg("topology"), py::arg("spectral"), py::arg("couplings"),
        py::arg("e0"), py::arg("options") = SynthesisOptions{});
  m.def("synth_cor1", &synth_cor1, py::arg("model"), py::arg("topology"), py::arg("spectral"), py::arg("e0"),
        py::arg("options") = SynthesisOptions{});
  m.def("optimize_bound", &optimize_bound, py::arg("method"), py::arg("model"), py::arg("topology"),
        py::arg("spectral"), py::arg("e0"), no_couplings, py::arg("options") = SynthesisOptions{});
  m.def("optimize_trace", &optimize_trace, py::arg("method"), py::arg("model"), py::arg("topology"),
        py::arg("spectral"), py::arg("Mcov"), no_couplings, py::arg("options") = SynthesisOptions{});
  m.def("bound_scale", &bound_scale, py::arg("method"), py::arg("spectral"));
  m.def("bound_formula", &bound_formula, py::arg("method"), py::arg("Y"), py::arg("e0"), py::arg("spectral"));

  py::class_<ResidualReport>(m, "ResidualReport")
      .def_readonly("max_eigenvalues", &ResidualReport::max_eigenvalues)
      .def_property_readonly("all_negative", &ResidualReport::all_negative)
      .def_property_readonly("worst", &ResidualReport::worst);
  m.def("schur_reduce", &schur_reduce, py::arg("certificate"), py::arg("model"), py::arg("topology"),
        py::arg("spectral"), no_couplings);

  // Consensus.
  py::class_<NodeState>(m, "NodeState")
      .def(py::init<>())
      .def_readwrite("id", &NodeState::id)
      .def_readwrite("Y", &NodeState::Y)
      .def_readwrite("pi_inv", &NodeState::pi_inv)
      .def_readwrite("theta_inv", &NodeState::theta_inv)
      .def_readwrite("k", &NodeState::k);
  py::class_<AgreementResult>(m, "AgreementResult")
      .def_readonly("Y", &AgreementResult::Y)
      .def_readonly("pi", &AgreementResult::pi)
      .def_readonly("theta", &AgreementResult::theta)
      .def_readonly("K", &AgreementResult::K)
      .def_readonly("iterations", &AgreementResult::iterations)
      .def_readonly("deviation_history", &AgreementResult::deviation_history)
      .def_readonly("lmi_max_eigenvalue", &AgreementResult::lmi_max_eigenvalue)
      .def_readonly("certificate", &AgreementResult::certificate);
  m.def("consensus_step", &consensus_step, py::arg("states"), py::arg("topology"), py::arg("beta"));
  m.def("seed_states", &seed_states, py::arg("model"), py::arg("topology"), py::arg("spectral"), py::arg("seed"),
        py::arg("options") = SynthesisOptions{});
  m.def("run_to_agreement", &run_to_agreement, py::arg("states"), py::arg("topology"), py::arg("beta"),
        py::arg("tol"), py::arg("model"), py::arg("spectral"), py::arg("max_iterations") = 0);

  // Simulation.
  py::class_<ChannelAudit>(m, "ChannelAudit")
      .def_readonly("label", &ChannelAudit::label)
      .def_readonly("output_energy", &ChannelAudit::output_energy)
      .def_readonly("bound_energy", &ChannelAudit::bound_energy)
      .def_property_readonly("ratio", &ChannelAudit::ratio);
  py::class_<Trajectory>(m, "Trajectory")
      .def_readonly("t", &Trajectory::t)
      .def_readonly("x", &Trajectory::x)
      .def_readonly("u", &Trajectory::u)
      .def_readonly("running_cost", &Trajectory::running_cost)
      .def_readonly("audits", &Trajectory::audits)
      .def_property_readonly("final_cost", &Trajectory::final_cost)
      .def_property_readonly("errors", &Trajectory::error_matrix);
  m.def("simulate",
        py::overload_cast<const SystemModel&, const Topology&, const Matrix&, const UncertaintyOp&, const Vector&,
                          double, double>(&simulate),
        py::arg("model"), py::arg("topology"), py::arg("K"), py::arg("op"), py::arg("x0"), py::arg("T"),
        py::arg("h"));
  m.def("simulate",
        py::overload_cast<const SystemModel&, const Topology&, const Matrix&, const EdgeCouplingSet&, const Vector&,
                          double, double>(&simulate),
        py::arg("model"), py::arg("topology"), py::arg("K"), py::arg("couplings"), py::arg("x0"), py::arg("T"),
        py::arg("h"));
  m.def("stack_states", &stack_states, py::arg("leader"), py::arg("followers"));

  py::class_<CostReport>(m, "CostReport")
      .def_readonly("edge_form", &CostReport::edge_form)
      .def_readonly("kron_form", &CostReport::kron_form)
      .def_readonly("modal_form", &CostReport::modal_form)
      .def_readonly("tail_fraction", &CostReport::tail_fraction)
      .def_readonly("tail_converged", &CostReport::tail_converged);
  m.def(
      "evaluate_cost",
      [](const Trajectory& tr, const Topology& topo, const Matrix& Q, const Matrix& R, const SpectralData* sd) {
        return evaluate_cost(tr, topo, Q, R, sd);
      },
      py::arg("trajectory"), py::arg("topology"), py::arg("Q"), py::arg("R"), py::arg("spectral") = nullptr);
  m.def("verify_transformation", &verify_transformation, py::arg("model"), py::arg("topology"), py::arg("spectral"),
        py::arg("K"), py::arg("op"), py::arg("e0"), py::arg("T"), py::arg("h"));

  // Scenario files.
  py::class_<ScenarioConfig>(m, "ScenarioConfig")
      .def_readonly("name", &ScenarioConfig::name)
      .def_readonly("model", &ScenarioConfig::model)
      .def_readonly("topology", &ScenarioConfig::topo)
      .def_readwrite("method", &ScenarioConfig::method)
      .def_readwrite("T", &ScenarioConfig::T)
      .def_readwrite("h", &ScenarioConfig::h)
      .def_readwrite("seed", &ScenarioConfig::seed)
      .def_property_readonly("initial_state", &initial_state)
      .def_property_readonly("initial_errors", &initial_errors);
  m.def("parse_config", &parse_config, py::arg("json_text"));
  m.def("load_config", &load_config, py::arg("path"));
  m.def("run_synthesis", &run_synthesis, py::arg("config"));
  m.def("load_certificate", [](const std::string& path) { return load_certificate(path).certificate; },
        py::arg("path"));

  py::class_<SimulationSummary>(m, "SimulationSummary")
      .def_readonly("scenario", &SimulationSummary::scenario)
      .def_readonly("method", &SimulationSummary::method)
      .def_readonly("uncertainty", &SimulationSummary::uncertainty)
      .def_readonly("final_cost", &SimulationSummary::final_cost)
      .def_readonly("bound", &SimulationSummary::bound)
      .def_readonly("bound_satisfied", &SimulationSummary::bound_satisfied)
      .def_readonly("max_audit_ratio", &SimulationSummary::max_audit_ratio)
      .def_readonly("tail_fraction", &SimulationSummary::tail_fraction)
      .def_readonly("final_error_ratio", &SimulationSummary::final_error_ratio);
  m.def(
      "run_simulation",
      [](const ScenarioConfig& cfg, const Certificate& cert) {
        ScenarioRun r = run_simulation(cfg, cert);
        return py::make_tuple(std::move(r.trajectory), std::move(r.summary));
      },
      py::arg("config"), py::arg("certificate"), "Returns (trajectory, summary).");
  m.def("run_consensus", &run_consensus, py::arg("config"));
}
