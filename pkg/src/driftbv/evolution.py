"""Implicit Euler driver: chains stationary solves with ``lam = eps``.

Step ``i`` (``0 <= i < n``) maps ``u_i`` to ``u_{i+1}`` using the data
averaged over ``[t_i, t_{i+1}]`` with ``t_i = i * eps`` and ``n * eps = T``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import InvalidInput, RunAborted, SolveFailed, StepTooLarge, TimeOutOfRange
from .fields import DriftField, ScalarField, time_average, zero_drift_sample
from .graphs import MonotoneGraph, RegularizedGraph, primitive_j
from .stationary import (
    AuditRecord,
    SolverOptions,
    StationaryProblem,
    TransportFactorCache,
    assemble,
    solve_stationary,
    solve_transport_step,
    verify_stationary_estimates,
    weighted_lq,
)

MAX_SNAPSHOTS = 512
Q_VALUES = (1.0, 2.0, math.inf)
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(5)


@dataclass(frozen=True, eq=False)
class EvolutionConfig:
    """Everything one run needs.

    ``eps`` is shrunk so that ``T / eps`` is an integer; the requested value
    is kept in ``eps_requested``.  ``delta=None`` ties the Yosida parameter to
    the (adjusted) time step.
    """

    grid: object
    graph: MonotoneGraph
    T: float
    eps: float
    u0: np.ndarray
    V: object = None
    f: object = None
    delta: float | None = None
    options: SolverOptions = field(default_factory=SolverOptions)
    snapshot_stride: int | None = None
    audit_per_step: bool = True
    bv_guard: bool = False
    eps_requested: float = field(init=False)
    n_steps: int = field(init=False)

    def __post_init__(self):
        if not (self.T > 0 and self.eps > 0):
            raise InvalidInput("T and eps must be positive")
        u0 = self.grid.check_field(self.u0, name="u0")
        object.__setattr__(self, "u0", u0)
        n = max(1, math.ceil(self.T / self.eps - 1e-9))
        object.__setattr__(self, "eps_requested", float(self.eps))
        object.__setattr__(self, "n_steps", n)
        object.__setattr__(self, "eps", self.T / n)
        if self.V is None:
            object.__setattr__(self, "V", DriftField("zero", self.grid.dim))
        if self.f is None:
            object.__setattr__(self, "f", ScalarField("zero", self.grid.dim))
        if self.snapshot_stride is None:
            object.__setattr__(self, "snapshot_stride", 1 if n <= MAX_SNAPSHOTS else math.ceil(n / MAX_SNAPSHOTS))

    @property
    def delta_eff(self):
        return self.eps if self.delta is None else float(self.delta)

    @property
    def regularized(self):
        return RegularizedGraph(self.graph, self.delta_eff)

    def t(self, i):
        return i * self.eps


@dataclass
class StepRecord:
    step: int
    t: float
    residual: float
    newton_iterations: int
    linear_iterations: int
    fallback_used: bool
    mass: float
    div_neg_sup: float
    lambda_V: float
    norm_u_1: float
    norm_u_2: float
    norm_u_inf: float
    norm_f_1: float
    norm_f_2: float
    norm_f_inf: float
    j_u: float
    grad_sq: float
    source_work: float
    div_work: float
    audits_passed: int
    audits_failed: int


class StepData:
    """Per-interval averaged data and operators, cached when time-independent."""

    def __init__(self, cfg):
        self.cfg = cfg
        self._static_V = not getattr(cfg.V, "time_dependent", True)
        self._static_f = not getattr(cfg.f, "time_dependent", True)
        self._V = self._f = self._ops = None
        self.transport_cache = TransportFactorCache()

    def interval(self, i):
        return (self.cfg.t(i), self.cfg.t(i + 1))

    def V(self, i):
        if self._static_V and self._V is not None:
            return self._V
        g = self.cfg.grid
        if isinstance(self.cfg.V, DriftField) and self.cfg.V.kind == "zero":
            sample = zero_drift_sample(g)
        else:
            sample = time_average(self.cfg.V, self.interval(i), g)
        if self._static_V:
            self._V = sample
        return sample

    def f(self, i):
        if self._static_f and self._f is not None:
            return self._f
        sample = time_average(self.cfg.f, self.interval(i), self.cfg.grid)
        if self._static_f:
            self._f = sample
        return sample

    def ops(self, i):
        if self._static_V:
            if self._ops is None:
                self._ops = assemble(self.cfg.grid, self.V(i))
            return self._ops
        return assemble(self.cfg.grid, self.V(i))


@dataclass
class EvolutionRun:
    config: EvolutionConfig
    u: dict = field(default_factory=dict)  # stored step index -> u_i
    p: dict = field(default_factory=dict)
    ledger: list = field(default_factory=list)
    step_audits: list = field(default_factory=list)
    completed_steps: int = 0

    @property
    def stored(self):
        return sorted(self.u)

    @property
    def n(self):
        return self.config.n_steps

    def times(self):
        return np.array([self.config.t(i) for i in range(self.completed_steps + 1)])

    def snapshot(self, i):
        if i not in self.u:
            raise InvalidInput(f"step {i} was not retained (stride {self.config.snapshot_stride})")
        return self.u[i], self.p[i]

    @property
    def all_stored(self):
        return len(self.u) == self.completed_steps + 1


def euler_step(u_prev, i, cfg, data=None, p_guess=None):
    """Advance ``u_i`` to ``u_{i+1}``; returns ``(u, p, record, audits)``."""
    data = StepData(cfg) if data is None else data
    Vi, fi, ops = data.V(i), data.f(i), data.ops(i)
    eps = cfg.eps
    rhs = u_prev + eps * fi.cells
    rg = cfg.regularized
    problem = StationaryProblem(
        grid=cfg.grid, lam=eps, graph=rg, f=rhs, V=Vi, options=cfg.options, bv_guard=cfg.bv_guard, operators=ops
    )
    if problem.is_transport:
        sol = solve_transport_step(problem, cache=data.transport_cache)
    else:
        sol = solve_stationary(problem, p0=p_guess)
    u, p = sol.v, sol.p
    M = ops.M
    divneg = np.maximum(-ops.div, 0.0)
    audits = []
    if cfg.audit_per_step:
        for q in Q_VALUES:
            audits.append(verify_stationary_estimates(sol, problem, "lq", q=q))
        if not problem.is_transport:
            audits.append(verify_stationary_estimates(sol, problem, "energy"))
    j_u = 0.0 if problem.is_transport else float(np.sum(M * primitive_j(rg, u)))
    rec = StepRecord(
        step=i + 1,
        t=cfg.t(i + 1),
        residual=sol.residual,
        newton_iterations=sol.newton_iterations,
        linear_iterations=sol.linear_iterations,
        fallback_used=sol.fallback_used,
        mass=float(np.sum(M * u)),
        div_neg_sup=problem.div_neg_sup,
        lambda_V=Vi.lambda_V,
        norm_u_1=weighted_lq(M, u, 1),
        norm_u_2=weighted_lq(M, u, 2),
        norm_u_inf=weighted_lq(M, u, math.inf),
        norm_f_1=weighted_lq(M, fi.cells, 1),
        norm_f_2=weighted_lq(M, fi.cells, 2),
        norm_f_inf=weighted_lq(M, fi.cells, math.inf),
        j_u=j_u,
        grad_sq=float(p @ (ops.A @ p)),
        source_work=float(np.sum(M * fi.cells * p)),
        div_work=float(np.sum(M * divneg * p * u)),
        audits_passed=sum(a.passed for a in audits),
        audits_failed=sum(not a.passed for a in audits),
    )
    return u, p, rec, audits


def run(cfg):
    """Execute all ``n`` steps; a failed step raises :class:`RunAborted` carrying the partial run."""
    out = EvolutionRun(config=cfg)
    out.u[0] = cfg.u0.copy()
    out.p[0] = np.zeros_like(cfg.u0)
    data = StepData(cfg)
    u, p = cfg.u0.copy(), None
    for i in range(cfg.n_steps):
        try:
            u, p, rec, audits = euler_step(u, i, cfg, data=data, p_guess=p)
        except (SolveFailed, StepTooLarge) as exc:
            raise RunAborted(i, exc, out) from exc
        out.ledger.append(rec)
        out.step_audits.append(audits)
        out.completed_steps = i + 1
        if (i + 1) % cfg.snapshot_stride == 0 or i + 1 == cfg.n_steps:
            out.u[i + 1] = u
            out.p[i + 1] = p
    out.data = data
    return out


def step_data(run_):
    data = getattr(run_, "data", None)
    if data is None:
        data = StepData(run_.config)
        run_.data = data
    return data


def interpolant_eval(run_, t, which="linear"):
    """Piecewise-constant (``u_{i+1}`` on ``[t_i, t_{i+1})``) or linear interpolant."""
    cfg = run_.config
    if not (0 <= t < cfg.T):
        raise TimeOutOfRange(f"t = {t} outside [0, {cfg.T})")
    i = min(int(math.floor(t / cfg.eps)), cfg.n_steps - 1)
    if which == "piecewise_constant":
        return run_.snapshot(i + 1)[0].copy()
    if which != "linear":
        raise InvalidInput(f"unknown interpolant {which!r}")
    ui, ui1 = run_.snapshot(i)[0], run_.snapshot(i + 1)[0]
    theta = (t - cfg.t(i)) / cfg.eps
    if theta == 0.0:
        return ui.copy()
    return (1.0 - theta) * ui + theta * ui1


def _qkey(q):
    return "inf" if q == math.inf else str(int(q)) if float(q).is_integer() else str(q)


def _exp_coef(q):
    return 1.0 if q == math.inf else q - 1.0


def mq_eps_bound(run_, q):
    """``M_q^eps(t_i)`` for every completed step, from the averaged step data.

    ``(||u_0||_q + sum_{k<i} eps ||f_k||_q) * exp(c_q sum_{k<i} eps N_k)`` with
    ``c_q = q - 1`` and ``c_inf = 1``.
    """
    if q < 1:
        raise InvalidInput("q must be >= 1")
    cfg = run_.config
    M = np.full(cfg.grid.size, cfg.grid.vol)
    eps = cfg.eps
    if q in Q_VALUES:
        fn = np.array([getattr(r, f"norm_f_{_qkey(q)}") for r in run_.ledger])
    else:
        data = step_data(run_)
        fn = np.array([weighted_lq(M, data.f(i).cells, q) for i in range(run_.completed_steps)])
    N = np.array([r.div_neg_sup for r in run_.ledger])
    src = np.concatenate([[0.0], np.cumsum(eps * fn)])
    expo = np.concatenate([[0.0], np.cumsum(eps * N)])
    return (weighted_lq(M, cfg.u0, q) + src) * np.exp(_exp_coef(q) * expo)


def mq_bound(q, t, cfg):
    """Continuous-time ``M_q(t)`` with Gauss quadrature on each step interval."""
    if q < 1:
        raise InvalidInput("q must be >= 1")
    if not (0 <= t <= cfg.T * (1 + 1e-12)):
        raise TimeOutOfRange(f"t = {t} outside [0, {cfg.T}]")
    grid = cfg.grid
    M = np.full(grid.size, grid.vol)
    nodes = np.linspace(0.0, t, max(1, math.ceil(t / cfg.eps - 1e-9)) + 1) if t > 0 else np.array([0.0])
    f_int = n_int = 0.0
    for a, b in zip(nodes[:-1], nodes[1:]):
        for x, w in zip(_GL_NODES, _GL_WEIGHTS):
            s = 0.5 * (b - a) * x + 0.5 * (a + b)
            ww = 0.5 * (b - a) * w
            f_int += ww * weighted_lq(M, cfg.f(s, grid.centers), q)
            if isinstance(cfg.V, DriftField) and cfg.V.kind == "zero":
                continue
            div = cfg.V.divergence(s, grid.centers)
            n_int += ww * float(np.max(np.maximum(-div, 0.0)))
    return (weighted_lq(M, cfg.u0, q) + f_int) * math.exp(_exp_coef(q) * n_int)


def lq_audits(run_, qs=Q_VALUES, tol=1e-4):
    """``||u_i||_q <= M_q^eps(t_i) (1 + tol)`` at every retained step."""
    cfg = run_.config
    M = np.full(cfg.grid.size, cfg.grid.vol)
    out = []
    for q in qs:
        bound = mq_eps_bound(run_, q)
        for i in run_.stored:
            lhs = weighted_lq(M, run_.u[i], q)
            rhs = float(bound[i])
            ok = lhs <= rhs * (1 + tol)
            out.append(
                AuditRecord(f"Mq[q={_qkey(q)}]", lhs, rhs, ok, time=cfg.t(i), status="pass" if ok else "fail")
            )
    return out


def energy_ledger(run_, tol=1e-8):
    """Cumulative energy inequality at every completed step.

    ``int j(u_n) + sum eps |grad p_k|^2 <= int j(u_0) + sum eps (int f_k p_k
    + int (div V_k)^- p_k u_k)``; the additive slack is ``tol`` times the
    data scale ``max(1, rhs)``.
    """
    cfg = run_.config
    if cfg.graph.is_transport:
        return []
    M = np.full(cfg.grid.size, cfg.grid.vol)
    rg = cfg.regularized
    j0 = float(np.sum(M * primitive_j(rg, cfg.u0)))
    eps = cfg.eps
    out = [AuditRecord("energy", j0, j0, True, time=0.0, status="pass")]
    diss = work = 0.0
    for rec in run_.ledger:
        diss += eps * rec.grad_sq
        work += eps * (rec.source_work + rec.div_work)
        lhs = rec.j_u + diss
        rhs = j0 + work
        ok = lhs <= rhs + tol * max(1.0, abs(rhs))
        out.append(AuditRecord("energy", lhs, rhs, ok, time=rec.t, status="pass" if ok else "fail"))
    return out


@dataclass
class DeltaStudy:
    deltas: list
    u_distances: list
    p_distances: list

    @property
    def monotone(self):
        return all(b <= a for a, b in zip(self.u_distances, self.u_distances[1:]))


def run_distances(a, b):
    """Discrete ``L2(Q)`` distance of ``u`` and ``H1``-seminorm distance of ``p``."""
    cfg = a.config
    M = np.full(cfg.grid.size, cfg.grid.vol)
    A = assemble(cfg.grid).A
    du = dp = 0.0
    for i in range(1, cfg.n_steps + 1):
        eu = a.u[i] - b.u[i]
        ep = a.p[i] - b.p[i]
        du += cfg.eps * float(np.sum(M * eu * eu))
        dp += cfg.eps * float(ep @ (A @ ep))
    return math.sqrt(du), math.sqrt(dp)


def delta_refinement_study(cfg, deltas):
    deltas = [float(d) for d in deltas]
    if len(deltas) < 2 or any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise InvalidInput("need at least two strictly decreasing deltas")
    runs = [run(replace(cfg, delta=d, snapshot_stride=1)) for d in deltas]
    ud, pd = [], []
    for a, b in zip(runs, runs[1:]):
        x, y = run_distances(a, b)
        ud.append(x)
        pd.append(y)
    return DeltaStudy(deltas=deltas, u_distances=ud, p_distances=pd)


def ledger_rows(run_):
    return [asdict(r) for r in run_.ledger]
