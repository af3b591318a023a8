import json
import pathlib

import numpy as np
import pytest

import iqcsync as iq

CONFIGS = pathlib.Path(__file__).resolve().parents[2] / "configs"


def toy():
    model = iq.SystemModel(
        A=np.array([[0.1]]), B1=np.array([[1.0]]), B2=np.array([[0.2]]),
        C=np.array([[1.0]]), Q=np.array([[1.0]]), R=np.array([[1.0]]),
    )
    topo = iq.Topology(2, [(1, 2)], [(1, 2)], [1, 0], [1, 0])
    return model, topo


def test_spectral_two_nodes():
    _, topo = toy()
    sd = iq.spectral(topo)
    np.testing.assert_allclose(sd.lambdas, [0.381966011250105, 2.618033988749895], rtol=1e-12)
    np.testing.assert_allclose(sd.T.T @ sd.T, np.eye(2), atol=1e-12)


def test_optimal_bound_matches_formula():
    model, topo = toy()
    sd = iq.spectral(topo)
    e0 = np.array([1.0, -0.5])
    cert = iq.optimize_bound(iq.Method.THM1, model, topo, sd, e0)
    assert cert.feasible
    assert cert.gamma == pytest.approx(3.580097514792401, rel=1e-5)
    assert cert.gamma == pytest.approx(iq.bound_formula(iq.Method.THM1, cert.Y, e0, sd), rel=1e-5)
    assert iq.schur_reduce(cert, model, topo, sd).all_negative


def test_simulated_cost_below_bound():
    model, topo = toy()
    sd = iq.spectral(topo)
    x0 = iq.stack_states(np.array([0.3]), [np.array([-0.7]), np.array([0.8])])
    e0 = np.array([1.0, -0.5])
    cert = iq.optimize_bound(iq.Method.THM1, model, topo, sd, e0)
    op = iq.UncertaintyOp.norm_bounded(model.C, iq.DeltaSchedule.table([0.0, 5.0, 10.0], [1.0, -0.5, 0.7], 1))
    traj = iq.simulate(model, topo, cert.K, op, x0, 10.0, 1e-3)
    assert traj.x.shape == (3, 10001)
    assert traj.final_cost <= cert.bound
    report = iq.evaluate_cost(traj, topo, model.Q, model.R, sd)
    assert report.modal_form == pytest.approx(report.edge_form, rel=1e-9)
    assert all(a.ratio <= 1.0 + 1e-4 for a in traj.audits)


def test_operator_audit():
    op = iq.UncertaintyOp.first_order_lag(np.eye(1), 2.0)
    assert op.audit(np.ones((1, 20001)), 1e-3, 20.0) == pytest.approx(0.240625, abs=1e-6)


def test_config_errors_raise():
    doc = {
        "model": {"A": [[0.1]], "B1": [[1.0]], "B2": [[0.2]], "C": [[1.0]], "Q": [[1.0]], "R": [[0.0]]},
        "topology": {"N": 1, "control_edges": [], "phys_edges": [], "g": [1], "d": [0]},
        "uncertainty": {"kind": "none"},
    }
    with pytest.raises(iq.ConfigError, match="model.R"):
        iq.parse_config(json.dumps(doc))
    with pytest.raises(ValueError):
        iq.Topology(2, [], [], [1, 0], [0, 0])


def test_pendulum_scenario_end_to_end():
    cfg = iq.load_config(str(CONFIGS / "pendulum_thm1.json"))
    cfg.T = 10.0
    cert = iq.run_synthesis(cfg)
    assert cert.feasible
    traj, summary = iq.run_simulation(cfg, cert)
    assert summary.bound_satisfied
    assert traj.errors.shape == (40, 10001)
