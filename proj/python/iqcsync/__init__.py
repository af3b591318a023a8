"""Robust leader-follower synchronisation: LMI gain synthesis, simulation and consensus."""

from ._core import (
    AgreementResult,
    Certificate,
    ConfigError,
    CostReport,
    DeltaSchedule,
    EdgeCouplingSet,
    Method,
    NodeState,
    Objective,
    PendulumParams,
    ResidualReport,
    ScenarioConfig,
    SimulationSummary,
    SpectralData,
    Status,
    SystemModel,
    Topology,
    Trajectory,
    UncertaintyOp,
    bound_formula,
    bound_scale,
    consensus_step,
    evaluate_cost,
    laplacian,
    load_certificate,
    load_config,
    optimize_bound,
    optimize_trace,
    parse_config,
    pendulum_model,
    pendulum_topology,
    run_consensus,
    run_simulation,
    run_synthesis,
    run_to_agreement,
    schur_reduce,
    seed_states,
    simulate,
    spectral,
    stack_states,
    synth_cor1,
    synth_thm1,
    synth_thm2,
    synth_thm3,
    synth_thm4,
    verify_transformation,
)

__all__ = [name for name in dir() if not name.startswith("_")]
