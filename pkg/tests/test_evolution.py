import math

import numpy as np
import pytest

from driftbv.analysis import total_variation
from driftbv.errors import RunAborted, StepTooLarge, TimeOutOfRange
from driftbv.evolution import (
    EvolutionConfig,
    delta_refinement_study,
    energy_ledger,
    euler_step,
    interpolant_eval,
    lq_audits,
    mq_bound,
    mq_eps_bound,
    run,
)
from driftbv.fields import DriftField, ScalarField
from driftbv.geometry import build_grid
from driftbv.graphs import MonotoneGraph
from driftbv.stationary import assemble


def heleshaw(n=100, T=0.2, eps=0.01):
    g = build_grid((0, 1), n, dirichlet="left", neumann="right")
    x = g.centers[:, 0]
    V = DriftField.make("polynomial", 1, components=[[[-0.5, [1]], [0.5, [2]]]])
    return EvolutionConfig(g, MonotoneGraph.sign(), T, eps, ((x >= 0.4) & (x <= 0.8)).astype(float), V=V,
                           f=ScalarField.make("constant", 1, value=0.5))


def test_eps_adjustment():
    g = build_grid((0, 1), 8, dirichlet="all")
    cfg = EvolutionConfig(g, MonotoneGraph.identity(), 1.0, 0.3, np.zeros(8))
    assert cfg.n_steps == 4 and cfg.eps == 0.25 and cfg.eps_requested == 0.3
    assert cfg.delta_eff == 0.25


def test_zero_step():
    g = build_grid((0, 1), 10, dirichlet="all")
    cfg = EvolutionConfig(g, MonotoneGraph.power_law(2), 0.1, 0.05, np.zeros(10))
    u, p, rec, _ = euler_step(np.zeros(10), 0, cfg)
    assert np.all(u == 0) and np.all(p == 0)


def test_heat_step_on_eigenvector():
    n, eps, delta = 40, 0.01, 0.05
    g = build_grid((0, 1), n, dirichlet="all")
    ops = assemble(g)
    mu, vecs = np.linalg.eigh(ops.A.toarray() / g.vol)
    phi = vecs[:, 0] * np.sign(vecs[n // 2, 0])
    cfg = EvolutionConfig(g, MonotoneGraph.identity(), eps, eps, phi, delta=delta)
    u, _, _, _ = euler_step(phi, 0, cfg)
    np.testing.assert_allclose(u, phi / (1 + eps * (1 + delta) * mu[0]), rtol=1e-9, atol=1e-13)


def test_transport_step_mass_loss_is_outflow():
    g = build_grid((0, 1), 50, dirichlet="all")
    x = g.centers[:, 0]
    u0 = ((x > 0.2) & (x < 0.5)).astype(float)
    cfg = EvolutionConfig(g, MonotoneGraph.transport_zero(), 0.02, 0.02, u0,
                          V=DriftField.make("constant", 1, value=[1.0]))
    u, p, rec, _ = euler_step(u0, 0, cfg)
    m0, m1 = g.vol * u0.sum(), g.vol * u.sum()
    assert m1 <= m0
    assert m0 - m1 == pytest.approx(cfg.eps * u[-1], rel=1e-10, abs=1e-15)
    assert np.all(p == 0)


def test_constant_state_preserved():
    g = build_grid([(0, 1), (0, 1)], (8, 8), neumann="all")
    cfg = EvolutionConfig(g, MonotoneGraph.power_law(0.5), 1.0, 0.1, np.full(64, 0.7))
    r = run(cfg)
    for i in r.stored:
        np.testing.assert_allclose(r.u[i], 0.7, rtol=2e-15)


def test_positivity_and_determinism():
    cfg = heleshaw()
    a, b = run(cfg), run(cfg)
    for i in a.stored:
        assert np.all(a.u[i] >= -1e-14)
        assert np.array_equal(a.u[i], b.u[i]) and np.array_equal(a.p[i], b.p[i])


def test_interpolants():
    r = run(heleshaw(T=0.05, eps=0.01))
    cfg = r.config
    np.testing.assert_array_equal(interpolant_eval(r, cfg.t(2)), r.u[2])
    mid = interpolant_eval(r, 0.5 * (cfg.t(2) + cfg.t(3)))
    np.testing.assert_allclose(mid, 0.5 * (r.u[2] + r.u[3]), rtol=1e-12, atol=1e-15)
    np.testing.assert_array_equal(interpolant_eval(r, cfg.t(2) + 1e-4, "piecewise_constant"), r.u[3])
    with pytest.raises(TimeOutOfRange):
        interpolant_eval(r, cfg.T)
    with pytest.raises(TimeOutOfRange):
        interpolant_eval(r, -0.1)


def test_mq_bound_examples():
    g = build_grid((0, 1), 50, dirichlet="all")
    x = g.centers[:, 0]
    u0 = np.sin(np.pi * x)
    l2 = math.sqrt(g.vol * np.sum(u0**2))
    l1 = g.vol * np.sum(np.abs(u0))
    free = EvolutionConfig(g, MonotoneGraph.identity(), 1.0, 0.1, u0, V=DriftField.make("constant", 1, value=[1.0]))
    for q in (1, 2, math.inf):
        assert mq_bound(q, 0.7, free) == pytest.approx(
            l1 if q == 1 else l2 if q == 2 else np.max(np.abs(u0)), rel=1e-14
        )
    src = EvolutionConfig(g, MonotoneGraph.identity(), 1.0, 0.1, u0, V=DriftField.make("radial", 1, rate=-3.0),
                          f=ScalarField.make("constant", 1, value=2.0))
    assert mq_bound(1, 0.5, src) == pytest.approx(l1 + 0.5 * 2.0, rel=1e-12)
    conv = EvolutionConfig(g, MonotoneGraph.identity(), 1.0, 0.1, u0, V=DriftField.make("radial", 1, rate=-2.0))
    assert mq_bound(2, 0.3, conv) == pytest.approx(math.exp(2 * 0.3) * l2, rel=1e-12)
    with pytest.raises(Exception):
        mq_bound(0.5, 0.3, conv)


def test_lq_and_energy_audits_hold():
    r = run(heleshaw())
    assert all(a.passed for a in lq_audits(r, tol=1e-8))
    assert all(a.passed for a in energy_ledger(r))
    assert all(rec.audits_failed == 0 for rec in r.ledger)
    b = mq_eps_bound(r, 2)
    assert b.shape == (r.n + 1,) and np.all(np.diff(b) >= 0)


def test_mass_conservation_neumann():
    g = build_grid([(0, 1), (0, 1)], (16, 16), neumann="all")
    x = g.centers
    u0 = np.maximum(0, 1 - np.sum((x - 0.4) ** 2, axis=1) / 0.04)
    V = DriftField.make("rotation", 2, center=[0.5, 0.5], rate=1.0, cutoff=[0.3, 0.45])
    r = run(EvolutionConfig(g, MonotoneGraph.power_law(0.5), 0.1, 0.01, u0, V=V))
    m0 = g.vol * u0.sum()
    for rec in r.ledger:
        assert abs(rec.mass - m0) <= 1e-12 * m0


@pytest.mark.parametrize("graph", [MonotoneGraph.identity(), MonotoneGraph.power_law(2.0), MonotoneGraph.sign(),
                                   MonotoneGraph.stefan(0.3)], ids=lambda g: g.kind + str(g.m))
def test_pure_diffusion_tvd(graph):
    g = build_grid((0, 1), 80, neumann="all")
    x = g.centers[:, 0]
    u0 = np.where(x < 0.3, 0.9, np.where(x < 0.6, 0.1, 0.6)) + 0.05 * np.sin(20 * x)
    r = run(EvolutionConfig(g, graph, 0.05, 0.0025, u0))
    tv = [total_variation(g, r.u[i]) for i in r.stored]
    assert all(b <= a + 1e-12 for a, b in zip(tv, tv[1:]))


def test_delta_study():
    g = build_grid((0, 1), 40, dirichlet="all")
    x = g.centers[:, 0]
    cfg = EvolutionConfig(g, MonotoneGraph.identity(), 0.05, 0.01, np.sin(np.pi * x))
    study = delta_refinement_study(cfg, [0.1, 0.05, 0.025])
    assert study.monotone
    assert study.u_distances[0] / study.u_distances[1] == pytest.approx(2.0, rel=0.1)
    tz = EvolutionConfig(g, MonotoneGraph.transport_zero(), 0.05, 0.01, np.sin(np.pi * x),
                         V=DriftField.make("radial", 1, center=[0.5], rate=1.0))
    zero = delta_refinement_study(tz, [0.1, 0.01])
    assert zero.u_distances == [0.0] and zero.p_distances == [0.0]
    with pytest.raises(Exception):
        delta_refinement_study(cfg, [0.1])


def test_abort_keeps_partial_run():
    g = build_grid((0, 1), 20, dirichlet="all")
    cfg = EvolutionConfig(g, MonotoneGraph.identity(), 1.0, 0.2, np.ones(20), V=DriftField.make("radial", 1, rate=-10.0))
    with pytest.raises(RunAborted) as info:
        run(cfg)
    assert info.value.step == 0 and isinstance(info.value.cause, StepTooLarge)
    assert info.value.run.completed_steps == 0 and 0 in info.value.run.u


def test_time_dependent_drift():
    g = build_grid((0, 1), 30, dirichlet="all")
    x = g.centers[:, 0]
    V = DriftField.make("radial", 1, center=[0.5], rate=1.0, time=[1.0, -2.0])
    r = run(EvolutionConfig(g, MonotoneGraph.power_law(2.0), 0.2, 0.02, np.exp(-50 * (x - 0.5) ** 2), V=V))
    assert all(a.passed for a in lq_audits(r, tol=1e-8))
    assert all(a.passed for a in energy_ledger(r))
    # drift reverses sign at t = 0.5, so the sampled rates decay in time
    rates = [rec.lambda_V for rec in r.ledger]
    assert rates[0] > rates[-1]
