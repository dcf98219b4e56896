"""Drift fields and sources: analytic catalog, time averages, divergence
operators, assumption audits, the compactly supported extension and inflow
detection.

Fields are evaluated as ``field(t, pts)`` with ``pts`` of shape ``(n, dim)``;
drift fields return ``(n, dim)`` and scalar fields ``(n,)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from functools import cached_property

import numpy as np

from .errors import ExtensionMarginTooSmall, GridMismatch, InvalidInput
from .geometry import SIDE_AXIS, boundary_projection, build_eta, eta_eval

DRIFT_KINDS = ("zero", "constant", "rotation", "radial", "shear", "polynomial")
SCALAR_KINDS = ("zero", "constant", "indicator", "bump", "sine", "polynomial", "cells")

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(5)


def _freeze(obj):
    if isinstance(obj, dict):
        return tuple(sorted((k, _freeze(v)) for k, v in obj.items()))
    if isinstance(obj, (list, tuple, np.ndarray)):
        return tuple(_freeze(v) for v in obj)
    return obj


def _thaw(obj):
    if isinstance(obj, tuple) and all(isinstance(p, tuple) and len(p) == 2 and isinstance(p[0], str) for p in obj):
        return {k: _thaw(v) for k, v in obj}
    if isinstance(obj, tuple):
        return [_thaw(v) for v in obj]
    return obj


def _smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s**3 * (10 - 15 * s + 6 * s * s)


def _smoothstep_d(s):
    inside = (s > 0) & (s < 1)
    return np.where(inside, 30 * s * s * (1 - s) ** 2, 0.0)


def _poly_eval(terms, pts, dim):
    out = np.zeros(len(pts))
    for coef, powers in terms:
        powers = list(powers) + [0] * (dim - len(powers))
        val = np.full(len(pts), float(coef))
        for k in range(dim):
            val = val * pts[:, k] ** powers[k]
        out += val
    return out


def _poly_grad(terms, pts, dim):
    out = np.zeros((len(pts), dim))
    for coef, powers in terms:
        powers = list(powers) + [0] * (dim - len(powers))
        for i in range(dim):
            if powers[i] == 0:
                continue
            val = np.full(len(pts), float(coef) * powers[i])
            for k in range(dim):
                e = powers[k] - 1 if k == i else powers[k]
                val = val * pts[:, k] ** e
            out[:, i] += val
    return out


class _TimeFactor:
    def time_factor(self, t):
        coeffs = self.param("time", [1.0])
        return float(np.polynomial.polynomial.polyval(float(t), coeffs))

    @property
    def time_dependent(self):
        c = self.param("time", [1.0])
        return any(float(x) != 0.0 for x in list(c)[1:])

    def param(self, key, default=None):
        return self.params_dict.get(key, default)

    @cached_property
    def params_dict(self):
        return _thaw(self.params) if self.params else {}


def _pts(pts, dim):
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if pts.shape[1] != dim:
        raise GridMismatch(f"points have dimension {pts.shape[1]}, field has {dim}")
    return pts


_DRIFT_PARAMS = {
    "zero": (),
    "constant": ("value",),
    "rotation": ("center", "rate", "cutoff"),
    "radial": ("center", "rate"),
    "shear": ("center", "rate"),
    "polynomial": ("components",),
}
_SCALAR_PARAMS = {
    "zero": (),
    "constant": ("value",),
    "indicator": ("lo", "hi", "value"),
    "bump": ("center", "radius", "amplitude", "power"),
    "sine": ("modes", "amplitude"),
    "polynomial": ("terms",),
    "cells": ("values",),
}


def _check_params(fld, allowed):
    unknown = sorted({k for k, _ in fld.params} - set(allowed) - {"time"})
    if unknown:
        raise InvalidInput(
            f"unknown parameter {unknown[0]!r} for {fld.kind} field; allowed: {', '.join(allowed + ('time',))}"
        )


@dataclass(frozen=True)
class DriftField(_TimeFactor):
    """Catalog drift field ``V(t, x) = g(t) * W(x)`` with polynomial ``g``.

    Kinds and parameters:

    ``zero``; ``constant`` (``value``); ``rotation`` (``center``, ``rate``,
    optional ``cutoff = [r0, r1]`` fading the field to zero between the two
    radii, divergence stays zero); ``radial`` (``center``, ``rate``:
    ``rate * (x - center)``); ``shear`` (``rate``, ``center``:
    ``(rate * (y - cy), 0)``); ``polynomial`` (``components``: one term list
    ``[[coef, [px, py]], ...]`` per component).  ``time`` holds the
    coefficients of ``g`` (default ``[1]``).
    """

    kind: str
    dim: int
    params: tuple = ()

    def __post_init__(self):
        if self.kind not in DRIFT_KINDS:
            raise InvalidInput(f"unknown field kind {self.kind!r}; expected one of {DRIFT_KINDS}")
        if self.dim not in (1, 2):
            raise InvalidInput("fields are 1D or 2D")
        if self.kind in ("rotation", "shear") and self.dim != 2:
            raise InvalidInput(f"{self.kind} field needs 2D")
        if self.kind == "polynomial" and len(self.param("components", [])) != self.dim:
            raise InvalidInput("polynomial field needs one term list per component")
        _check_params(self, _DRIFT_PARAMS[self.kind])

    @classmethod
    def make(cls, kind, dim, **params):
        return cls(kind, dim, _freeze(params))

    def _center(self):
        return np.asarray(self.param("center", [0.5] * self.dim), dtype=float)

    def spatial(self, pts):
        pts = _pts(pts, self.dim)
        n = len(pts)
        if self.kind == "zero":
            return np.zeros((n, self.dim))
        if self.kind == "constant":
            return np.tile(np.asarray(self.param("value"), dtype=float), (n, 1))
        if self.kind == "radial":
            return float(self.param("rate", 1.0)) * (pts - self._center())
        if self.kind == "shear":
            c = self._center()
            out = np.zeros((n, 2))
            out[:, 0] = float(self.param("rate", 1.0)) * (pts[:, 1] - c[1])
            return out
        if self.kind == "rotation":
            rel = pts - self._center()
            w = float(self.param("rate", 1.0)) * np.stack([-rel[:, 1], rel[:, 0]], axis=-1)
            return w * self._rotation_envelope(rel)[0][:, None]
        comps = self.param("components")
        return np.stack([_poly_eval(c, pts, self.dim) for c in comps], axis=-1)

    def _rotation_envelope(self, rel):
        cut = self.param("cutoff")
        r = np.hypot(rel[:, 0], rel[:, 1])
        if cut is None:
            return np.ones(len(rel)), np.zeros(len(rel)), r
        r0, r1 = float(cut[0]), float(cut[1])
        s = (r - r0) / (r1 - r0)
        return 1.0 - _smoothstep(s), -_smoothstep_d(s) / (r1 - r0), r

    def __call__(self, t, pts):
        return self.time_factor(t) * self.spatial(pts)

    def jacobian(self, t, pts):
        """Analytic ``J[:, k, i] = d V_k / d x_i``."""
        pts = _pts(pts, self.dim)
        n, d = len(pts), self.dim
        J = np.zeros((n, d, d))
        if self.kind == "radial":
            J[:] = float(self.param("rate", 1.0)) * np.eye(d)
        elif self.kind == "shear":
            J[:, 0, 1] = float(self.param("rate", 1.0))
        elif self.kind == "rotation":
            rate = float(self.param("rate", 1.0))
            rel = pts - self._center()
            env, denv, r = self._rotation_envelope(rel)
            w = rate * np.stack([-rel[:, 1], rel[:, 0]], axis=-1)
            base = rate * np.array([[0.0, -1.0], [1.0, 0.0]])
            with np.errstate(invalid="ignore", divide="ignore"):
                grad_env = np.where(r[:, None] > 0, denv[:, None] * rel / r[:, None], 0.0)
            J = env[:, None, None] * base[None] + w[:, :, None] * grad_env[:, None, :]
        elif self.kind == "polynomial":
            for k, c in enumerate(self.param("components")):
                J[:, k, :] = _poly_grad(c, pts, d)
        return self.time_factor(t) * J

    def divergence(self, t, pts):
        return np.trace(self.jacobian(t, pts), axis1=1, axis2=2)


@dataclass(frozen=True)
class ScalarField(_TimeFactor):
    """Catalog scalar field ``f(t, x) = g(t) * F(x)``.

    Kinds: ``zero``; ``constant`` (``value``); ``indicator`` (``lo``, ``hi``
    per axis, ``value``); ``bump`` (``center``, ``radius``, ``amplitude``,
    ``power``: ``amplitude * (1 - |x - c|^2 / R^2)_+^power``); ``sine``
    (``modes`` per axis, ``amplitude``: product of ``sin(k pi x)``);
    ``polynomial`` (``terms``); ``cells`` (``values`` tabulated per cell,
    only usable on a grid with matching size).
    """

    kind: str
    dim: int
    params: tuple = ()

    def __post_init__(self):
        if self.kind not in SCALAR_KINDS:
            raise InvalidInput(f"unknown source kind {self.kind!r}; expected one of {SCALAR_KINDS}")
        if self.dim not in (1, 2):
            raise InvalidInput("fields are 1D or 2D")
        _check_params(self, _SCALAR_PARAMS[self.kind])

    @classmethod
    def make(cls, kind, dim, **params):
        return cls(kind, dim, _freeze(params))

    def spatial(self, pts):
        pts = _pts(pts, self.dim)
        n = len(pts)
        if self.kind == "zero":
            return np.zeros(n)
        if self.kind == "constant":
            return np.full(n, float(self.param("value", 1.0)))
        if self.kind == "indicator":
            lo = np.asarray(self.param("lo"), dtype=float)
            hi = np.asarray(self.param("hi"), dtype=float)
            inside = np.all((pts >= lo) & (pts <= hi), axis=1)
            return np.where(inside, float(self.param("value", 1.0)), 0.0)
        if self.kind == "bump":
            c = np.asarray(self.param("center"), dtype=float)
            R = float(self.param("radius"))
            s = 1.0 - np.sum((pts - c) ** 2, axis=1) / (R * R)
            return float(self.param("amplitude", 1.0)) * np.maximum(s, 0.0) ** float(self.param("power", 2))
        if self.kind == "sine":
            modes = self.param("modes", [1] * self.dim)
            val = np.full(n, float(self.param("amplitude", 1.0)))
            for k in range(self.dim):
                val = val * np.sin(modes[k] * math.pi * pts[:, k])
            return val
        if self.kind == "polynomial":
            return _poly_eval(self.param("terms"), pts, self.dim)
        values = np.asarray(self.param("values"), dtype=float)
        if values.shape != (n,):
            raise GridMismatch(f"tabulated source has {values.size} values, asked for {n} points")
        return values

    def __call__(self, t, pts):
        return self.time_factor(t) * self.spatial(pts)


# ---------------------------------------------------------------- sampling


@dataclass(frozen=True, eq=False)
class AveragedSample:
    """Time average over ``interval`` of a field sampled on ``grid``.

    ``cells`` holds cell-center values (``(size,)`` for sources, ``(size, dim)``
    for drifts).  Drift samples also carry ``faces``: per axis, the average of
    the normal component at the centers of all faces normal to that axis.
    """

    grid: object
    interval: tuple
    cells: np.ndarray
    faces: tuple | None = None

    @property
    def is_vector(self):
        return self.faces is not None

    @cached_property
    def ops(self):
        return divergence_ops(self, self.grid)

    @property
    def divergence(self):
        return self.ops.div

    @property
    def div_neg_sup(self):
        return self.ops.neg_sup

    @property
    def grad_div(self):
        return self.ops.grad_div

    @cached_property
    def lambda_V(self):
        """Sum over ``i, k`` of the sup of ``|d_i V_k|`` from sampled differences."""
        g = self.grid
        total = 0.0
        for k in range(g.dim):
            comp = self.cells[:, k].reshape(g.shape)
            for i in range(g.dim):
                d = np.gradient(comp, g.spacing[i], axis=i, edge_order=2)
                total += float(np.max(np.abs(d)))
        return total

    @cached_property
    def face_fluxes(self):
        """Per axis: normal velocity times face area (positive means toward +axis)."""
        return tuple(self.faces[k] * self.grid.face_area(k) for k in range(self.grid.dim))

    @cached_property
    def scheme_divergence(self):
        """Net outward flux of each cell divided by its volume.

        Interior faces and Dirichlet faces count; Neumann faces carry no
        convective flux in the discretization and are skipped.  This is the
        divergence the finite-volume operator actually sees.
        """
        g = self.grid
        divM = np.zeros(g.shape)
        for k, w in enumerate(self.face_fluxes):
            w = np.array(w)
            lo = [slice(None)] * g.dim
            hi = [slice(None)] * g.dim
            lo[k] = 0
            hi[k] = -1
            side_lo, side_hi = ("left", "right") if k == 0 else ("bottom", "top")
            if g.bc.label(side_lo) == "N":
                w[tuple(lo)] = 0.0
            if g.bc.label(side_hi) == "N":
                w[tuple(hi)] = 0.0
            upper = [slice(None)] * g.dim
            lower = [slice(None)] * g.dim
            upper[k] = slice(1, None)
            lower[k] = slice(0, -1)
            divM += w[tuple(upper)] - w[tuple(lower)]
        return divM.ravel() / g.vol

    @cached_property
    def scheme_neg_sup(self):
        return float(np.max(np.maximum(-self.scheme_divergence, 0.0)))

    @property
    def lambda0(self):
        """Step guard ``1 / ||(div V)^-||_inf`` using the scheme divergence."""
        n = self.scheme_neg_sup
        return math.inf if n == 0 else 1.0 / n

    @property
    def lambda1(self):
        lv = self.lambda_V
        return math.inf if lv == 0 else 1.0 / lv


@dataclass(frozen=True)
class DivergenceOps:
    div: np.ndarray
    neg_sup: float
    grad_div: np.ndarray


def divergence_ops(sample, grid):
    """Centered divergence, sup of its negative part, and its gradient.

    Second-order centered differences in the interior, second-order one-sided
    differences on the outer ring of cells.
    """
    if not sample.is_vector:
        raise InvalidInput("divergence needs a drift sample")
    if not grid.same_as(sample.grid):
        raise GridMismatch("sample lives on a different grid")
    div = np.zeros(grid.shape)
    for k in range(grid.dim):
        div += np.gradient(sample.cells[:, k].reshape(grid.shape), grid.spacing[k], axis=k, edge_order=2)
    grad = np.stack(
        [np.gradient(div, grid.spacing[j], axis=j, edge_order=2).ravel() for j in range(grid.dim)], axis=-1
    )
    return DivergenceOps(div=div.ravel(), neg_sup=float(np.max(np.maximum(-div, 0.0))), grad_div=grad)


def time_average(fld, interval, grid):
    """Average ``fld`` over ``interval`` with 5-point Gauss-Legendre in time."""
    t0, t1 = float(interval[0]), float(interval[1])
    if not t1 > t0:
        raise InvalidInput(f"empty averaging interval [{t0}, {t1}]")
    ts = 0.5 * (t1 - t0) * _GL_NODES + 0.5 * (t0 + t1)
    ws = 0.5 * _GL_WEIGHTS
    if not getattr(fld, "time_dependent", True):
        ts, ws = [t0], [1.0]
    vector = isinstance(fld, (DriftField, ExtendedField))
    face_pts = [grid.face_centers(k) for k in range(grid.dim)] if vector else []
    cells = 0.0
    faces = [0.0] * len(face_pts)
    for t, w in zip(ts, ws):
        cells = cells + w * fld(t, grid.centers)
        for k, fp in enumerate(face_pts):
            shape = fp.shape[:-1]
            faces[k] = faces[k] + w * fld(t, fp.reshape(-1, grid.dim))[:, k].reshape(shape)
    cells = np.asarray(cells, dtype=float)
    return AveragedSample(grid=grid, interval=(t0, t1), cells=cells, faces=tuple(faces) if vector else None)


def zero_drift_sample(grid, interval=(0.0, 1.0)):
    return time_average(DriftField("zero", grid.dim), interval, grid)


# ---------------------------------------------------------------- audits


def boundary_faces(grid):
    """Boundary face centers: list of ``(side, label, points, outward_normal)``."""
    out = []
    for side, label in grid.bc.labels:
        axis, end = SIDE_AXIS[side]
        fc = grid.face_centers(axis)
        idx = [slice(None)] * grid.dim
        idx[axis] = -1 if end else 0
        pts = fc[tuple(idx)].reshape(-1, grid.dim)
        nu = np.zeros(grid.dim)
        nu[axis] = 1.0 if end else -1.0
        out.append((side, label, pts, nu))
    return out


@dataclass(frozen=True)
class AssumptionReport:
    level: str
    T1: bool
    T2: bool
    T3: bool
    T3_witness: float
    T3_where: str
    Tp1: bool
    Tp2: bool
    Tp3: bool
    Tp3_witness: float
    sup_V: float
    div_neg_sup: float
    lambda_V: float
    lambda0: float
    lambda1: float
    notes: tuple = ()

    @property
    def passed(self):
        base = self.T1 and self.T2 and self.T3
        if self.level == "Tprime":
            return base and self.Tp1 and self.Tp2 and self.Tp3
        return base


def check_assumptions(V, grid, level="T", times=(0.0,), h=None, tol=1e-10):
    """Audit the standing hypotheses on the drift at the given sample times.

    ``T3``: ``V . nu >= 0`` on Dirichlet faces and ``V . nu = 0`` on Neumann
    faces.  ``Tp3``: ``V(x) . nu(pi(x)) >= 0`` on the shell ``d(x) <= h``.
    Sup-norms stand in for the time-integrability conditions.
    """
    if level not in ("T", "Tprime"):
        raise InvalidInput(f"level must be 'T' or 'Tprime', got {level!r}")
    h = 8.0 * max(grid.spacing) if h is None else float(h)
    sup_v = div_neg = lam_v = 0.0
    worst3, where3, worst_p3 = 0.0, "", 0.0
    finite = True
    d, _, nu = boundary_projection(grid)
    shell = d <= h
    for t in times:
        vals = V(t, grid.centers)
        J = V.jacobian(t, grid.centers)
        div = np.trace(J, axis1=1, axis2=2)
        finite &= bool(np.all(np.isfinite(vals)) and np.all(np.isfinite(J)))
        sup_v = max(sup_v, float(np.max(np.abs(vals))) if vals.size else 0.0)
        div_neg = max(div_neg, float(np.max(np.maximum(-div, 0.0))))
        lam_v = max(lam_v, float(np.sum(np.max(np.abs(J), axis=0))))
        for side, label, pts, nrm in boundary_faces(grid):
            vn = V(t, pts) @ nrm
            viol = float(np.max(np.maximum(-vn, 0.0))) if label == "D" else float(np.max(np.abs(vn)))
            if viol > worst3:
                worst3, where3 = viol, f"{side} ({'Dirichlet' if label == 'D' else 'Neumann'}) at t={t:g}"
        if shell.any():
            dots = np.einsum("ij,ij->i", vals[shell], nu[shell])
            worst_p3 = max(worst_p3, float(np.max(np.maximum(-dots, 0.0))))
    return AssumptionReport(
        level=level,
        T1=finite,
        T2=finite and math.isfinite(div_neg),
        T3=worst3 <= tol,
        T3_witness=worst3,
        T3_where=where3,
        Tp1=finite,
        Tp2=finite,
        Tp3=worst_p3 <= tol,
        Tp3_witness=worst_p3,
        sup_V=sup_v,
        div_neg_sup=div_neg,
        lambda_V=lam_v,
        lambda0=math.inf if div_neg == 0 else 1.0 / div_neg,
        lambda1=math.inf if lam_v == 0 else 1.0 / lam_v,
        notes=("lambda_V identified with the summed sup-norms of the drift Jacobian",),
    )


@dataclass(frozen=True)
class InflowFace:
    side: str
    index: int
    point: tuple
    value: float


def inflow_set(V, grid, t=0.0, tol=1e-14):
    """Boundary faces whose outward normal velocity is below ``-tol``."""
    out = []
    for side, _, pts, nrm in boundary_faces(grid):
        vn = V(t, pts) @ nrm
        for i in np.flatnonzero(vn < -tol):
            out.append(InflowFace(side, int(i), tuple(pts[i]), float(vn[i])))
    return out


# ---------------------------------------------------------------- extension


def _reflect(x, a, b):
    """Even reflection of ``x`` into ``[a, b]``, constant beyond one width."""
    y = np.where(x < a, np.clip(2 * a - x, a, b), x)
    return np.where(x > b, np.clip(2 * b - x, a, b), y)


@dataclass(frozen=True)
class ExtendedField:
    """``V~ = phi * EV`` on an outer box: reflected drift times a cutoff.

    ``phi`` is the radial cutoff profile of half-width ``H`` applied to the
    distance to the outer boundary, so it equals 1 on a neighbourhood of the
    inner box and vanishes near the outer walls.
    """

    base: object
    inner: tuple
    outer: tuple
    H: float
    dim: int = dc_field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "dim", self.base.dim)

    @property
    def time_dependent(self):
        return getattr(self.base, "time_dependent", True)

    @cached_property
    def eta(self):
        return build_eta(self.H)

    def cutoff(self, pts):
        pts = _pts(pts, self.dim)
        d = np.min(
            np.stack([np.minimum(pts[:, k] - a, b - pts[:, k]) for k, (a, b) in enumerate(self.outer)], axis=-1),
            axis=1,
        )
        return eta_eval(self.eta, np.maximum(d, 0.0))[0]

    def reflected(self, pts):
        pts = _pts(pts, self.dim)
        out = pts.copy()
        for k, (a, b) in enumerate(self.inner):
            out[:, k] = _reflect(pts[:, k], a, b)
        return out

    def __call__(self, t, pts):
        pts = _pts(pts, self.dim)
        return self.cutoff(pts)[:, None] * self.base(t, self.reflected(pts))

    def jacobian(self, t, pts, step=1e-6):
        """Central-difference Jacobian (the reflection has kinks on the inner walls)."""
        pts = _pts(pts, self.dim)
        J = np.zeros((len(pts), self.dim, self.dim))
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = step
            J[:, :, i] = (self(t, pts + e) - self(t, pts - e)) / (2 * step)
        return J

    def divergence(self, t, pts):
        return np.trace(self.jacobian(t, pts), axis1=1, axis2=2)


def extend_field(V, inner, outer, margin):
    """Extend ``V`` from the box of grid ``inner`` to the box of grid ``outer``.

    ``margin`` is the gap between the two boxes on every side; it must span at
    least four outer cells.
    """
    margin = float(margin)
    h_out = max(outer.spacing)
    if margin < 4 * h_out * (1 - 1e-12):
        raise ExtensionMarginTooSmall(f"margin {margin} spans fewer than 4 outer cells (h = {h_out})")
    for (a, b), (A, B) in zip(inner.extents, outer.extents):
        if a - A < margin * (1 - 1e-12) or B - b < margin * (1 - 1e-12):
            raise ExtensionMarginTooSmall(
                f"inner box [{a}, {b}] is not inside [{A}, {B}] with margin {margin} on both sides"
            )
    return ExtendedField(base=V, inner=inner.extents, outer=outer.extents, H=0.9 * margin)
