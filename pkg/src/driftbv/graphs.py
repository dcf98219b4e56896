"""Maximal monotone graphs, their resolvents and Yosida regularizations.

Every graph ``beta`` handled here is the subdifferential of a convex
potential ``phi`` with ``phi(0) = 0``.  That gives closed forms for the two
primitives used by the estimate audits:

* ``B_delta(p) = int_0^p beta_delta`` is the Moreau envelope of ``phi``,
  ``phi(J p) + delta * beta_delta(p)**2 / 2``;
* ``j(u) = int_0^u beta_delta^{-1}`` is its convex conjugate,
  ``phi*(u) + delta * u**2 / 2``.

All evaluation functions accept scalars or numpy arrays and return the same
shape (a Python float for scalar input).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GraphHasNoResolvent, InvalidInput, OutsideDomainOfJ

KINDS = ("identity", "powerlaw", "sign", "stefan", "transport_zero")

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class MonotoneGraph:
    """One member of the supported parametric graph families.

    ``m`` is used by ``powerlaw`` (``beta(r) = |r|**(m-1) * r``) and ``latent``
    by ``stefan`` (``beta(r) = r + latent * H(r)`` with the jump filled in).
    ``transport_zero`` is the graph with ``beta^{-1} = 0``: the pressure
    vanishes identically and the problem degenerates to pure transport.
    """

    kind: str
    m: float = 1.0
    latent: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInput(f"unknown graph kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "powerlaw" and not (np.isfinite(self.m) and self.m > 0):
            raise InvalidInput(f"powerlaw exponent must be positive, got {self.m}")
        if self.kind == "stefan" and not (np.isfinite(self.latent) and self.latent > 0):
            raise InvalidInput(f"latent heat must be positive, got {self.latent}")

    @classmethod
    def identity(cls):
        return cls("identity")

    @classmethod
    def power_law(cls, m):
        return cls("powerlaw", m=float(m))

    @classmethod
    def sign(cls):
        return cls("sign")

    @classmethod
    def stefan(cls, latent):
        return cls("stefan", latent=float(latent))

    @classmethod
    def transport_zero(cls):
        return cls("transport_zero")

    @property
    def is_transport(self):
        return self.kind == "transport_zero"

    def minimal_section(self, r):
        """Element of least norm of ``beta(r)``."""
        r, scalar = _as_array(r)
        k = self.kind
        if k == "identity":
            out = r.copy()
        elif k == "powerlaw":
            out = np.sign(r) * np.abs(r) ** self.m
        elif k == "sign":
            out = np.sign(r)
        elif k == "stefan":
            out = np.where(r > 0, r + self.latent, np.where(r < 0, r, 0.0))
        else:
            raise GraphHasNoResolvent("transport_zero has no section: beta is all of R at p = 0")
        return _ret(out, scalar)

    def potential(self, s):
        """Convex potential ``phi`` with ``beta = d phi`` and ``phi(0) = 0``."""
        s, scalar = _as_array(s)
        k = self.kind
        if k == "identity":
            out = 0.5 * s**2
        elif k == "powerlaw":
            out = np.abs(s) ** (self.m + 1.0) / (self.m + 1.0)
        elif k == "sign":
            out = np.abs(s)
        elif k == "stefan":
            out = 0.5 * s**2 + self.latent * np.maximum(s, 0.0)
        else:
            raise GraphHasNoResolvent("transport_zero has no finite potential")
        return _ret(out, scalar)

    def conjugate(self, u):
        """Fenchel conjugate ``phi*``; raises where it is ``+inf``."""
        u, scalar = _as_array(u)
        k = self.kind
        if k == "identity":
            out = 0.5 * u**2
        elif k == "powerlaw":
            m = self.m
            out = m * np.abs(u) ** ((m + 1.0) / m) / (m + 1.0)
        elif k == "sign":
            if np.any(np.abs(u) > 1.0):
                raise OutsideDomainOfJ("sign graph: |u| must not exceed 1")
            out = np.zeros_like(u)
        elif k == "stefan":
            out = 0.5 * np.minimum(u, 0.0) ** 2 + 0.5 * np.maximum(u - self.latent, 0.0) ** 2
        else:
            out = np.zeros_like(u)
        return _ret(out, scalar)


@dataclass(frozen=True)
class RegularizedGraph:
    """Yosida regularization ``beta_delta`` of ``base``."""

    base: MonotoneGraph
    delta: float

    def __post_init__(self):
        if not (np.isfinite(self.delta) and self.delta > 0):
            raise InvalidInput(f"delta must be positive, got {self.delta}")

    def __call__(self, r):
        return yosida_eval(self, r)

    def derivative(self, r):
        return yosida_derivative(self, r)

    def inverse(self, u):
        return yosida_inverse(self, u)

    def B(self, p):
        return primitive_B(self, p)

    def j(self, u):
        return primitive_j(self, u)


def _as_array(x):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidInput("non-finite input")
    return arr, arr.ndim == 0


def _ret(arr, scalar):
    return float(arr) if scalar else arr


def _check_resolvable(graph, delta):
    if graph.is_transport:
        raise GraphHasNoResolvent("transport_zero admits no resolvent or Yosida evaluation")
    if not (np.isfinite(delta) and delta > 0):
        raise InvalidInput(f"delta must be positive, got {delta}")


def _power_resolvent(a, delta, m, max_iter=200):
    """Solve ``s + delta * s**m = a`` for ``s >= 0`` (``a >= 0``), elementwise.

    Newton iterations safeguarded by the bracket ``[0, a]``; a bisection step
    replaces any Newton step that leaves the bracket.
    """
    lo = np.zeros_like(a)
    hi = a.copy()
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        s = np.minimum(a, (a / delta) ** (1.0 / m))
        active = a > 0
        for _ in range(max_iter):
            if not active.any():
                break
            g = s + delta * s**m - a
            lo = np.where(active & (g < 0), s, lo)
            hi = np.where(active & (g > 0), s, hi)
            dg = 1.0 + delta * m * s ** (m - 1.0)
            step = np.where(np.isfinite(dg), g / dg, 0.0)
            s_new = s - step
            outside = ~((s_new > lo) & (s_new < hi))
            s_new = np.where(outside & active, 0.5 * (lo + hi), s_new)
            s_new = np.where(active, s_new, s)
            moved = np.abs(s_new - s)
            s = s_new
            active &= (moved > 1e-14 * np.maximum(s, 1e-300) + 4 * _EPS * s) & (hi - lo > 4 * _EPS * hi)
            active &= g != 0
    return s


def resolvent(graph, r, delta):
    """``J_delta(r)``: the unique ``s`` with ``s + delta * beta(s)`` containing ``r``."""
    _check_resolvable(graph, delta)
    r, scalar = _as_array(r)
    k = graph.kind
    if k == "identity":
        out = r / (1.0 + delta)
    elif k == "powerlaw":
        if graph.m == 1.0:
            out = r / (1.0 + delta)
        else:
            out = np.sign(r) * _power_resolvent(np.abs(r), delta, graph.m)
    elif k == "sign":
        out = r - delta * np.clip(r / delta, -1.0, 1.0)
    else:  # stefan
        L = graph.latent
        out = np.where(r < 0, r / (1.0 + delta), np.where(r > delta * L, (r - delta * L) / (1.0 + delta), 0.0))
    return _ret(out, scalar)


def yosida_eval(rg, r):
    """``beta_delta(r) = (r - J_delta(r)) / delta``."""
    graph, delta = rg.base, rg.delta
    _check_resolvable(graph, delta)
    r, scalar = _as_array(r)
    k = graph.kind
    if k == "identity":
        out = r / (1.0 + delta)
    elif k == "powerlaw":
        s = np.asarray(resolvent(graph, r, delta))
        # beta(J r) equals (r - J r)/delta but avoids the cancellation
        out = np.sign(s) * np.abs(s) ** graph.m
    elif k == "sign":
        out = np.clip(r / delta, -1.0, 1.0)
    else:
        L = graph.latent
        out = np.where(r < 0, r / (1.0 + delta), np.where(r > delta * L, (r + L) / (1.0 + delta), r / delta))
    return _ret(out, scalar)


def yosida_derivative(rg, r):
    """Derivative of ``beta_delta`` (right derivative at kinks of piecewise-linear cases)."""
    graph, delta = rg.base, rg.delta
    _check_resolvable(graph, delta)
    r, scalar = _as_array(r)
    k = graph.kind
    if k == "identity":
        out = np.full_like(r, 1.0 / (1.0 + delta))
    elif k == "powerlaw":
        m = graph.m
        s = np.abs(np.asarray(resolvent(graph, r, delta)))
        with np.errstate(divide="ignore"):
            inv_slope = s ** (1.0 - m) / m  # 1/beta'(s); inf at s=0 when m>1
        out = 1.0 / (delta + inv_slope)
    elif k == "sign":
        out = np.where(np.abs(r) < delta, 1.0 / delta, 0.0)
    else:
        L = graph.latent
        out = np.where((r >= 0) & (r < delta * L), 1.0 / delta, 1.0 / (1.0 + delta))
    return _ret(out, scalar)


def yosida_inverse(rg, u):
    """Least-norm selection of ``beta_delta^{-1}(u)``, i.e. of ``dj(u)``."""
    graph, delta = rg.base, rg.delta
    _check_resolvable(graph, delta)
    u, scalar = _as_array(u)
    k = graph.kind
    if k == "identity":
        out = (1.0 + delta) * u
    elif k == "powerlaw":
        out = np.sign(u) * np.abs(u) ** (1.0 / graph.m) + delta * u
    elif k == "sign":
        if np.any(np.abs(u) > 1.0):
            raise OutsideDomainOfJ("sign graph: beta_delta takes values in [-1, 1]")
        out = delta * u
    else:
        L = graph.latent
        out = np.minimum(u, 0.0) + np.maximum(u - L, 0.0) + delta * u
    return _ret(out, scalar)


def primitive_B(rg, p):
    """``int_0^p beta_delta(r) dr`` via the Moreau-envelope closed form."""
    graph, delta = rg.base, rg.delta
    _check_resolvable(graph, delta)
    p, scalar = _as_array(p)
    s = np.asarray(resolvent(graph, p, delta))
    b = np.asarray(yosida_eval(rg, p))
    out = np.asarray(graph.potential(s)) + 0.5 * delta * b**2
    return _ret(out, scalar)


def primitive_j(rg, u):
    """``j(u) = int_0^u beta_delta^{-1}(s) ds``, the conjugate of ``B_delta``.

    For ``transport_zero`` (``beta^{-1} = 0``) this is identically zero.  For
    the sign graph ``j`` is finite only on ``[-1, 1]``.
    """
    graph, delta = rg.base, rg.delta
    u, scalar = _as_array(u)
    if graph.is_transport:
        return _ret(np.zeros_like(u), scalar)
    _check_resolvable(graph, delta)
    out = np.asarray(graph.conjugate(u)) + 0.5 * delta * u**2
    return _ret(out, scalar)


def h_sigma(r, sigma):
    """Piecewise-linear odd approximation of sign: ``clip(r / sigma, -1, 1)``."""
    if not sigma > 0:
        raise InvalidInput("sigma must be positive")
    r, scalar = _as_array(r)
    return _ret(np.clip(r / sigma, -1.0, 1.0), scalar)


def h_sigma_plus(r, sigma):
    """Approximation of the positive-part sign: ``clip(r / sigma, 0, 1)``."""
    if not sigma > 0:
        raise InvalidInput("sigma must be positive")
    r, scalar = _as_array(r)
    return _ret(np.clip(r / sigma, 0.0, 1.0), scalar)


def graph_from_config(kind, m=None, latent=None):
    kind = kind.lower()
    if kind == "powerlaw":
        return MonotoneGraph.power_law(1.0 if m is None else m)
    if kind == "stefan":
        return MonotoneGraph.stefan(1.0 if latent is None else latent)
    return MonotoneGraph(kind)
