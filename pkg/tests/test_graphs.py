import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.optimize import brentq

from driftbv.errors import GraphHasNoResolvent, InvalidInput, OutsideDomainOfJ
from driftbv.graphs import (
    MonotoneGraph,
    RegularizedGraph,
    graph_from_config,
    h_sigma,
    h_sigma_plus,
    primitive_B,
    primitive_j,
    resolvent,
    yosida_derivative,
    yosida_eval,
    yosida_inverse,
)

GRAPHS = [
    MonotoneGraph.identity(),
    MonotoneGraph.power_law(0.5),
    MonotoneGraph.power_law(2.0),
    MonotoneGraph.power_law(3.7),
    MonotoneGraph.sign(),
    MonotoneGraph.stefan(0.7),
]
reals = st.floats(-20, 20, allow_nan=False)
deltas = st.floats(1e-3, 2.0)
graphs = st.sampled_from(GRAPHS)


def beta_max(g, s):
    """Upper end of beta(s) for a bracketing oracle."""
    if g.kind == "identity":
        return s
    if g.kind == "powerlaw":
        return math.copysign(abs(s) ** g.m, s)
    if g.kind == "sign":
        return 1.0 if s >= 0 else -1.0
    return s + (g.latent if s >= 0 else 0.0)


def resolvent_oracle(g, r, delta):
    # s + delta * beta(s) is increasing; its jump (if any) contains r when the root sits on it
    h = lambda s: s + delta * beta_max(g, s) - r
    lo, hi = -abs(r) - 1, abs(r) + 1
    if g.kind in ("sign", "stefan"):
        # multivalued at 0: r in [0 + delta * beta_min(0), delta * beta_max(0)] maps to 0
        bmin = -1.0 if g.kind == "sign" else 0.0
        if delta * bmin <= r <= delta * beta_max(g, 0.0):
            return 0.0
    return brentq(h, lo, hi, xtol=1e-15, rtol=1e-15)


def test_resolvent_examples():
    assert resolvent(MonotoneGraph.identity(), 1.0, 1.0) == pytest.approx(0.5)
    assert resolvent(MonotoneGraph.sign(), 0.0, 0.3) == 0.0
    assert resolvent(MonotoneGraph.power_law(2), 2.0, 1.0) == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("g", GRAPHS, ids=lambda g: f"{g.kind}-{g.m}")
def test_resolvent_matches_root_finder(g):
    for r in np.linspace(-5, 5, 41):
        for d in (1e-2, 0.3, 2.0):
            assert resolvent(g, r, d) == pytest.approx(resolvent_oracle(g, r, d), abs=1e-12)


def test_yosida_examples():
    d = 0.1
    assert yosida_eval(RegularizedGraph(MonotoneGraph.sign(), d), 2 * d) == pytest.approx(1.0)
    assert yosida_eval(RegularizedGraph(MonotoneGraph.identity(), 1.0), 1.0) == pytest.approx(0.5)
    for g in GRAPHS:
        assert yosida_eval(RegularizedGraph(g, 0.2), 0.0) == 0.0


def test_primitive_examples():
    rg1 = RegularizedGraph(MonotoneGraph.identity(), 1.0)
    assert primitive_B(rg1, 2.0) == pytest.approx(1.0)
    assert primitive_B(RegularizedGraph(MonotoneGraph.sign(), 1.0), 2.0) == pytest.approx(1.5)
    assert primitive_j(rg1, 1.0) == pytest.approx(1.0)
    assert primitive_j(RegularizedGraph(MonotoneGraph.sign(), 1.0), 0.5) == pytest.approx(0.125)
    for g in GRAPHS:
        rg = RegularizedGraph(g, 0.3)
        assert primitive_B(rg, 0.0) == 0.0
        assert primitive_j(rg, 0.0) == 0.0


@pytest.mark.parametrize("g", GRAPHS, ids=lambda g: f"{g.kind}-{g.m}")
def test_primitives_match_quadrature(g):
    rg = RegularizedGraph(g, 0.25)
    for p in (-3.0, -0.4, 0.1, 0.7, 2.5):
        ref, _ = quad(lambda r: yosida_eval(rg, r), 0.0, p, limit=200, epsabs=1e-13, points=[0.0])
        assert primitive_B(rg, p) == pytest.approx(ref, rel=1e-9, abs=1e-12)
        u = yosida_eval(rg, p)
        ref_j, _ = quad(lambda s: yosida_inverse(rg, s), 0.0, u, limit=200, epsabs=1e-13)
        assert primitive_j(rg, u) == pytest.approx(ref_j, rel=1e-8, abs=1e-12)


def test_sign_j_domain():
    rg = RegularizedGraph(MonotoneGraph.sign(), 0.5)
    assert primitive_j(rg, 1.0) == pytest.approx(0.25)
    with pytest.raises(OutsideDomainOfJ):
        primitive_j(rg, 1.5)


def test_errors():
    with pytest.raises(GraphHasNoResolvent):
        resolvent(MonotoneGraph.transport_zero(), 1.0, 0.1)
    with pytest.raises(GraphHasNoResolvent):
        yosida_eval(RegularizedGraph(MonotoneGraph.transport_zero(), 0.1), 1.0)
    with pytest.raises(InvalidInput):
        resolvent(MonotoneGraph.identity(), float("nan"), 0.1)
    with pytest.raises(InvalidInput):
        MonotoneGraph.power_law(-1)
    with pytest.raises(InvalidInput):
        RegularizedGraph(MonotoneGraph.identity(), 0.0)


def test_h_sigma():
    assert h_sigma(1.0, 1.0) == 1.0 and h_sigma(-1.0, 1.0) == -1.0
    assert h_sigma(0.0, 0.3) == 0.0 and h_sigma_plus(0.0, 0.3) == 0.0
    assert h_sigma(1.0, 2.0) == 0.5 and h_sigma_plus(1.0, 2.0) == 0.5
    assert h_sigma_plus(-1.0, 2.0) == 0.0
    assert h_sigma(5.0, 2.0) == 1.0


def test_array_evaluation_matches_scalar():
    rg = RegularizedGraph(MonotoneGraph.power_law(0.5), 0.1)
    r = np.linspace(-3, 3, 17)
    np.testing.assert_allclose(yosida_eval(rg, r), [yosida_eval(rg, float(x)) for x in r])


def test_config_factory():
    assert graph_from_config("PowerLaw", m=2.0) == MonotoneGraph.power_law(2.0)
    assert graph_from_config("stefan", latent=3.0).latent == 3.0
    assert graph_from_config("sign").kind == "sign"


@pytest.mark.parametrize("g", [MonotoneGraph.power_law(0.5), MonotoneGraph.power_law(2.0), MonotoneGraph.sign()])
def test_graph_convergence(g):
    # continuity points of the minimal section (0 is excluded for sign)
    r = np.array([-2.0, -0.7, -0.2, -0.005, 0.003, 0.3, 0.9, 1.7])
    errs = [np.max(np.abs(yosida_eval(RegularizedGraph(g, d), r) - g.minimal_section(r))) for d in (1e-1, 1e-2, 1e-3)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 0.05 * errs[0]


@given(graphs, reals, reals, deltas)
def test_resolvent_is_contraction(g, r, s, d):
    jr, js = resolvent(g, r, d), resolvent(g, s, d)
    assert abs(jr - js) <= abs(r - s) * (1 + 1e-12) + 1e-12
    assert abs(jr) <= abs(r) + 1e-12
    if r <= s:
        assert jr <= js + 1e-12


@given(graphs, reals, reals, deltas)
def test_yosida_monotone_lipschitz(g, r, s, d):
    rg = RegularizedGraph(g, d)
    br, bs = yosida_eval(rg, r), yosida_eval(rg, s)
    assert (br - bs) * (r - s) >= -1e-12
    assert abs(br - bs) <= abs(r - s) / d * (1 + 1e-10) + 1e-12


@given(graphs, reals, deltas)
def test_fenchel_equality(g, p, d):
    rg = RegularizedGraph(g, d)
    b = yosida_eval(rg, p)
    lhs = primitive_B(rg, p) + primitive_j(rg, b)
    assert lhs == pytest.approx(p * b, rel=1e-9, abs=1e-10)
    assert 0 <= primitive_B(rg, p) <= p * b + 1e-10


@given(graphs, reals, deltas)
def test_inverse_round_trip(g, p, d):
    rg = RegularizedGraph(g, d)
    if g.kind == "sign" and abs(p) >= d:
        return  # saturated branch: beta_delta is not invertible there
    assert yosida_inverse(rg, yosida_eval(rg, p)) == pytest.approx(p, rel=1e-9, abs=1e-9)


@given(graphs, st.floats(-5, 5), deltas)
def test_derivative_matches_difference_quotient(g, p, d):
    rg = RegularizedGraph(g, d)
    h = 1e-6
    fd = (yosida_eval(rg, p + h) - yosida_eval(rg, p - h)) / (2 * h)
    exact = yosida_derivative(rg, p)
    # the difference quotient straddles kinks; compare only where both one-sided slopes agree
    left = (yosida_eval(rg, p) - yosida_eval(rg, p - h)) / h
    right = (yosida_eval(rg, p + h) - yosida_eval(rg, p)) / h
    if abs(left - right) < 1e-4 * max(1.0, abs(left)):
        assert exact == pytest.approx(fd, rel=1e-4, abs=1e-6)
