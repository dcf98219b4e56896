import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from driftbv.analysis import (
    DiagnosticsReport,
    characteristics_oracle,
    classify,
    directional_tv,
    flow_map,
    lq_norm,
    report,
    total_variation,
    verify_bv_stationary,
)
from driftbv.errors import CutoffRejected, GridMismatch, OracleInapplicable, StepTooLarge
from driftbv.evolution import EvolutionConfig, lq_audits, run
from driftbv.fields import DriftField, extend_field, inflow_set, time_average
from driftbv.geometry import build_cutoff, build_eta, build_grid
from driftbv.graphs import MonotoneGraph, RegularizedGraph
from driftbv.stationary import StationaryProblem, solve_stationary

G1 = build_grid((0, 1), 10, dirichlet="all")
G2 = build_grid([(0, 1), (0, 2)], (4, 5), dirichlet="all")
finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_tv_examples():
    assert total_variation(G1, np.zeros(10)) == 0.0
    step = np.where(G1.centers[:, 0] < 0.5, 0.0, 3.0)
    assert total_variation(G1, step) == 3.0
    saw = np.array([0, 1, 0, 1, 0, 1, 0, 1, 0, 1], float)
    assert total_variation(G1, saw) == 9.0
    # x-jump of 2 across a 2-high column of faces: 2 * face_area * rows
    u = np.where(G2.centers[:, 0] < 0.5, 0.0, 2.0)
    assert directional_tv(G2, u, 0) == pytest.approx(2.0 * 2.0)
    assert directional_tv(G2, u, 1) == 0.0


def test_tv_weight_and_region():
    u = np.arange(10.0)
    w = np.zeros(10)
    w[4:6] = 1.0
    # faces (3,4),(4,5),(5,6) carry weights 0.5, 1, 0.5
    assert total_variation(G1, u, weight=w) == pytest.approx(2.0)
    r = np.zeros(10, bool)
    r[2:5] = True
    assert total_variation(G1, u, region=r) == pytest.approx(2.0)
    with pytest.raises(GridMismatch):
        total_variation(G1, np.zeros(9))


@given(arrays(float, 20, elements=finite), arrays(float, 20, elements=finite), st.floats(-10, 10))
def test_tv_seminorm(u, v, c):
    g = build_grid([(0, 1), (0, 1)], (4, 5), dirichlet="all")
    tu, tv = total_variation(g, u), total_variation(g, v)
    assert total_variation(g, u + v) <= tu + tv + 1e-9 * (1 + tu + tv)
    assert total_variation(g, c * u) == pytest.approx(abs(c) * tu, rel=1e-12, abs=1e-9)
    assert total_variation(g, u + c) == pytest.approx(tu, rel=1e-9, abs=1e-9)


def test_lq_norm():
    u = np.ones(10)
    assert lq_norm(G1, u, 1) == pytest.approx(1.0)
    assert lq_norm(G1, 2 * u, 2) == pytest.approx(2.0)
    assert lq_norm(G1, np.arange(10.0), math.inf) == 9.0


def test_classify():
    assert classify(1.0, 1.0)[1] == "pass"
    assert classify(1.03, 1.0)[1] == "pass_with_slack"
    assert classify(1.06, 1.0)[1] == "fail"
    assert classify(0.0, 0.0) == (0.0, "pass")


def test_flow_map_rotation():
    V = DriftField.make("rotation", 2, center=[0.5, 0.5], rate=1.0)
    X, inside = flow_map(V, np.array([[0.7, 0.5]]), 0.0, math.pi / 2, steps=400)
    np.testing.assert_allclose(X[0], [0.5, 0.7], atol=1e-6)
    back, _ = flow_map(V, X, math.pi / 2, 0.0, steps=400)
    np.testing.assert_allclose(back[0], [0.7, 0.5], atol=1e-10)
    assert inside.all()


def test_oracle_constant_drift_and_round_trip():
    g = build_grid([(0, 1), (0, 1)], (20, 20), dirichlet="all")
    V = DriftField.make("constant", 2, value=[0.2, 0.0])

    def bump(x):
        return np.exp(-40 * np.sum((x - 0.4) ** 2, axis=1))

    u = characteristics_oracle(V, bump, 0.5, g)
    foot = g.centers - [0.1, 0.0]
    np.testing.assert_allclose(u, np.where(foot[:, 0] >= 0, bump(foot), 0.0), atol=1e-12)
    R = DriftField.make("rotation", 2, center=[0.5, 0.5], rate=1.0)
    np.testing.assert_allclose(characteristics_oracle(R, bump, 0.0, g), bump(g.centers))
    with pytest.raises(OracleInapplicable):
        characteristics_oracle(DriftField.make("radial", 2, rate=1.0), bump, 0.5, g)


def _bv_problem(V, lam=0.05, n=100):
    g = build_grid((0, 1), n, dirichlet="all")
    x = g.centers[:, 0]
    f = ((x > 0.3) & (x < 0.7)).astype(float)
    prob = StationaryProblem(grid=g, lam=lam, graph=RegularizedGraph(MonotoneGraph.power_law(2.0), lam), f=f,
                             V=time_average(V, (0, 1), g), bv_guard=True)
    return g, prob, solve_stationary(prob)


def test_verify_bv_stationary():
    g, prob, sol = _bv_problem(DriftField.make("radial", 1, center=[0.5], rate=1.0))
    cut = build_cutoff(g, build_eta(0.1))
    rec = verify_bv_stationary(prob, sol, cut)
    assert rec.passed and rec.lhs > 0
    _, prob0, sol0 = _bv_problem(DriftField.make("zero", 1))
    assert verify_bv_stationary(prob0, sol0, cut).status == "pass"
    # inward drift violates the shell sign hypothesis
    _, pin, sin_ = _bv_problem(DriftField.make("radial", 1, center=[0.5], rate=-1.0))
    with pytest.raises(CutoffRejected):
        verify_bv_stationary(pin, sin_, cut)
    with pytest.raises(GridMismatch):
        verify_bv_stationary(prob, sol, build_cutoff(build_grid((0, 1), 50, dirichlet="all"), build_eta(0.1)))
    _, big, bsol = _bv_problem(DriftField.make("radial", 1, center=[0.5], rate=1.0), lam=0.05)
    object.__setattr__(big, "lam", 1.5)
    with pytest.raises(StepTooLarge):
        verify_bv_stationary(big, bsol, cut)


def test_extension_matches_on_inner_box():
    inner = build_grid([(0, 1), (0, 1)], (20, 20), dirichlet="all")
    outer = build_grid([(-0.25, 1.25), (-0.25, 1.25)], (30, 30), dirichlet="all")
    V = DriftField.make("radial", 2, center=[0.3, 0.6], rate=1.5)
    E = extend_field(V, inner, outer, 0.25)
    pts = np.random.default_rng(3).uniform(0, 1, size=(500, 2))
    pts = np.vstack([pts, [[0, 0], [1, 1], [0, 0.5], [1, 0.3]]])
    assert np.array_equal(E(0.0, pts), V(0.0, pts))
    h = outer.spacing[0]
    near = outer.centers[np.min(np.minimum(outer.centers + 0.25, 1.25 - outer.centers), axis=1) <= h]
    assert np.all(E(0.0, near) == 0.0)
    assert inflow_set(E, outer) == []


def test_extension_run_restricts_consistently():
    # drift pointing outward on the inner box: the extended run must agree
    # with the direct run to discretization accuracy, and mass never reappears
    inner = build_grid((0, 1), 40, dirichlet="all")
    outer = build_grid((-0.25, 1.25), 60, dirichlet="all")
    V = DriftField.make("radial", 1, center=[0.5], rate=1.0)
    E = extend_field(V, inner, outer, 0.25)
    x = outer.centers[:, 0]
    u0 = np.where((x > 0) & (x < 1), np.maximum(0, 1 - ((x - 0.5) / 0.3) ** 2), 0.0)
    r = run(EvolutionConfig(outer, MonotoneGraph.transport_zero(), 0.3, 0.01, u0, V=E))
    assert all(a.passed for a in lq_audits(r, tol=1e-8))
    assert min(r.u[r.stored[-1]]) >= -1e-14


def test_report_json():
    cfg = EvolutionConfig(G1, MonotoneGraph.identity(), 0.05, 0.01, np.sin(np.pi * G1.centers[:, 0]))
    r = run(cfg)
    rep = report(r, lq_audits(r), constants={"lambda0": math.inf})
    assert isinstance(rep, DiagnosticsReport)
    data = json.loads(json.dumps(rep.to_json()))
    assert data["status"] == "ok" and data["steps"] == 5
    assert set(data["mq_curves"]) == {"1", "2", "inf"}
    assert data["constants"]["lambda0"] == "inf"
    assert data["energy"]["cumulative_ok"]
    assert len(rep.tables["steps"]) == 5
