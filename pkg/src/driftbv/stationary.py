"""One regularized stationary problem ``v - lam Lap p + lam div(v V) = f``,
``v = beta_delta(p)``, discretized by cell-centered finite volumes.

Matrices are volume-scaled ("M-scaled"): the discrete system reads

    M beta(p) + lam A p + lam D beta(p) = M f

with ``M`` the diagonal of cell volumes, ``A`` the two-point stiffness
matrix and ``D`` the first-order upwind convection matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import InvalidInput, SolveFailed, StepTooLarge, UnknownEstimate
from .fields import zero_drift_sample
from .graphs import MonotoneGraph, RegularizedGraph

AUDIT_RTOL = 1e-8
AUDIT_ATOL = 1e-12


@dataclass(frozen=True)
class SolverOptions:
    newton_tol: float = 1e-10
    abs_tol: float = 1e-13
    max_newton: int = 60
    linear_tol: float = 1e-12
    damping_min: float = 2.0**-20
    max_fallback: int = 2000
    polish_steps: int = 2


@dataclass(frozen=True, eq=False)
class Operators:
    grid: object
    M: np.ndarray  # cell volumes
    A: sp.csr_matrix
    D: sp.csr_matrix
    divM: np.ndarray  # net outward convective flux per cell

    @property
    def div(self):
        return self.divM / self.M


def _cell_index(grid):
    return np.arange(grid.size).reshape(grid.shape)


def _side_names(axis):
    return ("left", "right") if axis == 0 else ("bottom", "top")


def assemble(grid, V_sample=None):
    """Stiffness and upwind convection matrices for ``grid``.

    Interior faces couple neighbours with ``area / h``; a Dirichlet face adds
    ``2 area / h`` to its cell (the wall sits half a cell away).  Convection
    uses the upwind value on interior faces, the interior value on Dirichlet
    outflow faces, zero inflow on Dirichlet faces and no flux on Neumann
    faces.
    """
    if V_sample is None:
        V_sample = zero_drift_sample(grid)
    if not grid.same_as(V_sample.grid):
        raise InvalidInput("drift sample lives on a different grid")
    idx = _cell_index(grid)
    n = grid.size
    rows, cols, vals = [], [], []
    drows, dcols, dvals = [], [], []
    divM = np.zeros(n)
    diagA = np.zeros(n)
    diagD = np.zeros(n)
    for k in range(grid.dim):
        coef = grid.face_area(k) / grid.spacing[k]
        w_all = V_sample.face_fluxes[k]
        lo = [slice(None)] * grid.dim
        hi = [slice(None)] * grid.dim
        lo[k] = slice(0, -1)
        hi[k] = slice(1, None)
        K = idx[tuple(lo)].ravel()
        L = idx[tuple(hi)].ravel()
        inner = [slice(None)] * grid.dim
        inner[k] = slice(1, -1)
        w = w_all[tuple(inner)].ravel()
        # diffusion
        rows += [K, L]
        cols += [L, K]
        vals += [np.full(K.size, -coef)] * 2
        np.add.at(diagA, K, coef)
        np.add.at(diagA, L, coef)
        # upwind convection, w > 0 carries v_K into L
        wp, wm = np.maximum(w, 0.0), np.maximum(-w, 0.0)
        np.add.at(diagD, K, wp)
        np.add.at(diagD, L, wm)
        drows += [K, L]
        dcols += [L, K]
        dvals += [-wm, -wp]
        np.add.at(divM, K, w)
        np.add.at(divM, L, -w)
        # boundary faces
        for end, side in enumerate(_side_names(k)):
            sl = [slice(None)] * grid.dim
            sl[k] = -1 if end else 0
            cells = idx[tuple(sl)].ravel()
            if grid.bc.label(side) != "D":
                continue
            w_out = w_all[tuple(sl)].ravel() * (1.0 if end else -1.0)
            np.add.at(diagA, cells, 2 * coef)
            np.add.at(diagD, cells, np.maximum(w_out, 0.0))
            np.add.at(divM, cells, w_out)
    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diagA)
    drows.append(np.arange(n))
    dcols.append(np.arange(n))
    dvals.append(diagD)
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    D = sp.csr_matrix((np.concatenate(dvals), (np.concatenate(drows), np.concatenate(dcols))), shape=(n, n))
    D.eliminate_zeros()
    return Operators(grid=grid, M=np.full(n, grid.vol), A=A, D=D, divM=divM)


@dataclass(frozen=True, eq=False)
class StationaryProblem:
    """Data of one stationary solve.

    ``graph`` is a :class:`RegularizedGraph`, or a bare ``transport_zero``
    graph.  ``V`` is a time-averaged drift sample (``None`` means zero drift).
    Construction rejects ``lam >= lambda0``; with ``bv_guard`` it also rejects
    ``lam >= lambda1``.
    """

    grid: object
    lam: float
    graph: object
    f: np.ndarray
    V: object = None
    options: SolverOptions = field(default_factory=SolverOptions)
    bv_guard: bool = False
    operators: Operators | None = None

    def __post_init__(self):
        f = self.grid.check_field(self.f, name="f")
        if not np.all(np.isfinite(f)):
            raise InvalidInput("f has non-finite entries")
        object.__setattr__(self, "f", f)
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise InvalidInput(f"lambda must be positive, got {self.lam}")
        if self.V is None:
            object.__setattr__(self, "V", zero_drift_sample(self.grid))
        if self.lam * self.div_neg_sup >= 1.0:
            raise StepTooLarge(f"lambda = {self.lam} >= lambda0 = {1.0 / self.div_neg_sup}")
        if self.bv_guard and self.lam * self.V.lambda_V >= 1.0:
            raise StepTooLarge(f"lambda = {self.lam} >= lambda1 = {self.V.lambda1}")

    @cached_property
    def ops(self):
        return self.operators if self.operators is not None else assemble(self.grid, self.V)

    @cached_property
    def div_neg_sup(self):
        return float(np.max(np.maximum(-self.ops.div, 0.0)))

    @property
    def is_transport(self):
        base = self.graph.base if isinstance(self.graph, RegularizedGraph) else self.graph
        return isinstance(base, MonotoneGraph) and base.is_transport

    def residual(self, p):
        ops = self.ops
        v = self.graph(p)
        return ops.M * v + self.lam * (ops.A @ p) + self.lam * (ops.D @ v) - ops.M * self.f

    def jacobian(self, p, floor=0.0):
        ops = self.ops
        d = np.maximum(self.graph.derivative(p), floor)
        MD = sp.diags(ops.M) + self.lam * ops.D
        return (MD @ sp.diags(d) + self.lam * ops.A).tocsc()


@dataclass
class StationarySolution:
    p: np.ndarray
    v: np.ndarray
    residual: float
    newton_iterations: int = 0
    linear_iterations: int = 0
    converged: bool = True
    fallback_used: bool = False


def _norm(x):
    return float(np.linalg.norm(x))


def solve_stationary(problem, p0=None):
    """Damped Newton with a frozen-slope fixed-point fallback."""
    if problem.is_transport:
        return solve_transport_step(problem)
    opts = problem.options
    rg = problem.graph
    ops = problem.ops
    floor = 1e-10 / rg.delta
    target = max(opts.newton_tol * _norm(ops.M * problem.f), opts.abs_tol)
    p = _initial_guess(problem) if p0 is None else np.array(p0, dtype=float)
    F = problem.residual(p)
    r = _norm(F)
    its = lin = 0
    stalled = False
    while r > target and its < opts.max_newton:
        its += 1
        try:
            dp = splu(problem.jacobian(p, floor)).solve(-F)
        except RuntimeError:
            stalled = True
            break
        lin += 1
        step = 1.0
        while step >= opts.damping_min:
            trial = p + step * dp
            Ft = problem.residual(trial)
            rt = _norm(Ft)
            if rt < (1 - 1e-4 * step) * r or rt <= target:
                break
            step *= 0.5
        else:
            stalled = True
            break
        p, F, r = trial, Ft, rt
    fallback = False
    if r > target and (stalled or its >= opts.max_newton):
        fallback = True
        p, F, r, extra = _fixed_point(problem, p, target)
        lin += extra
    if r > target:
        raise SolveFailed(f"stationary solve stalled at residual {r:.3e} (target {target:.3e})", residual=r)
    for _ in range(opts.polish_steps):
        try:
            dp = splu(problem.jacobian(p, floor)).solve(-F)
        except RuntimeError:
            break
        lin += 1
        Ft = problem.residual(p + dp)
        rt = _norm(Ft)
        if not rt < r:
            break
        p, F, r = p + dp, Ft, rt
    return StationarySolution(
        p=p, v=rg(p), residual=r, newton_iterations=its, linear_iterations=lin, converged=True, fallback_used=fallback
    )


def _initial_guess(problem):
    # exact answer when diffusion and drift are switched off
    f = problem.f
    if problem.graph.base.kind == "sign":
        f = np.clip(f, -1.0, 1.0)
    return np.asarray(problem.graph.inverse(f), dtype=float)


def _fixed_point(problem, p, target):
    """Linearized iteration with the constant slope ``1/delta``.

    Each step solves ``(L (M + lam D) + lam A) dp = -F(p)`` with
    ``L = 1/delta``, the Lipschitz bound of ``beta_delta``.
    """
    ops = problem.ops
    L = 1.0 / problem.graph.delta
    lhs = (L * (sp.diags(ops.M) + problem.lam * ops.D) + problem.lam * ops.A).tocsc()
    lu = splu(lhs)
    F = problem.residual(p)
    r = _norm(F)
    n = 0
    while r > target and n < problem.options.max_fallback:
        p = p + lu.solve(-F)
        F = problem.residual(p)
        r = _norm(F)
        n += 1
    return p, F, r, n


class TransportFactorCache:
    """Reuses the LU factor of ``M + lam D`` across steps with identical data."""

    def __init__(self):
        self._key = None
        self._lu = None

    def get(self, problem):
        key = (id(problem.ops), problem.lam)
        if key != self._key:
            self._lu = splu((sp.diags(problem.ops.M) + problem.lam * problem.ops.D).tocsc())
            self._key = key
        return self._lu


def solve_transport_step(problem, cache=None):
    """Pure transport step: ``(M + lam D) v = M f`` with ``p = 0``."""
    if not problem.is_transport:
        raise InvalidInput("solve_transport_step needs the transport_zero graph")
    ops = problem.ops
    try:
        lu = cache.get(problem) if cache is not None else splu((sp.diags(ops.M) + problem.lam * ops.D).tocsc())
    except RuntimeError as exc:
        raise SolveFailed(f"transport matrix is singular: {exc}") from exc
    rhs = ops.M * problem.f
    v = lu.solve(rhs)
    res = _norm(ops.M * v + problem.lam * (ops.D @ v) - rhs)
    if not np.all(np.isfinite(v)):
        raise SolveFailed("transport solve produced non-finite values", residual=res)
    return StationarySolution(p=np.zeros_like(v), v=v, residual=res, newton_iterations=0, linear_iterations=1)


# ---------------------------------------------------------------- audits


@dataclass(frozen=True)
class AuditRecord:
    name: str
    lhs: float
    rhs: float
    passed: bool
    time: float = float("nan")
    status: str = ""
    detail: str = ""

    @property
    def margin(self):
        return self.rhs - self.lhs

    @property
    def ratio(self):
        if self.rhs == 0:
            return 0.0 if self.lhs <= 0 else math.inf
        return self.lhs / self.rhs


def within(lhs, rhs, rtol=AUDIT_RTOL, atol=AUDIT_ATOL):
    return bool(lhs <= rhs * (1 + rtol) + atol)


def weighted_lq(M, x, q):
    if q == math.inf:
        return float(np.max(np.abs(x))) if x.size else 0.0
    return float(np.sum(M * np.abs(x) ** q) ** (1.0 / q))


ESTIMATES = ("lq", "energy", "k_plus", "k_minus", "linf", "positivity")


def verify_stationary_estimates(sol, problem, which, q=None, k=None):
    """Audit one of the stationary a-priori estimates.

    ``which`` is one of ``lq`` (needs ``q``), ``energy``, ``k_plus`` (``k >=
    0``), ``k_minus`` (``k <= 0``), ``linf`` and ``positivity`` (the
    ``k_minus`` bound at ``k = 0``, which forces ``v >= 0`` when ``f >= 0``).
    """
    if which not in ESTIMATES:
        raise UnknownEstimate(f"unknown estimate {which!r}; expected one of {ESTIMATES}")
    M = problem.ops.M
    lam, N = problem.lam, problem.div_neg_sup
    v, p, f = sol.v, sol.p, problem.f
    c = 1.0 - lam * N
    if which == "lq":
        if q is None or q < 1:
            raise InvalidInput("lq audit needs q >= 1")
        coef = c if q == math.inf else 1.0 - (q - 1) * lam * N
        lhs, rhs = coef * weighted_lq(M, v, q), weighted_lq(M, f, q)
        name = f"lq[q={q}]"
    elif which == "linf":
        lhs, rhs = c * weighted_lq(M, v, math.inf), weighted_lq(M, f, math.inf)
        name = "linf"
    elif which == "energy":
        lhs = c * float(np.sum(M * v * p)) + lam * float(p @ (problem.ops.A @ p))
        rhs = float(np.sum(M * f * p))
        name = "energy"
    elif which == "k_plus":
        if k is None or k < 0:
            raise InvalidInput("k_plus audit needs k >= 0")
        lhs = float(np.sum(M * np.maximum(v - k, 0.0)))
        rhs = float(np.sum(M * np.maximum(f - k * c, 0.0)))
        name = f"k_plus[k={k:.6g}]"
    else:
        kk = 0.0 if which == "positivity" else k
        if kk is None or kk > 0:
            raise InvalidInput("k_minus audit needs k <= 0")
        lhs = float(np.sum(M * np.maximum(kk - v, 0.0)))
        rhs = float(np.sum(M * np.maximum(kk * c - f, 0.0)))
        name = "positivity" if which == "positivity" else f"k_minus[k={kk:.6g}]"
    ok = within(lhs, rhs)
    return AuditRecord(name=name, lhs=lhs, rhs=rhs, passed=ok, status="pass" if ok else "fail")
