"""Discrete norms and total variation, BV audits, the characteristics oracle
and run reports."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import CutoffRejected, GridMismatch, InvalidInput, OracleInapplicable, StepTooLarge
from .geometry import check_cutoff_sign

EXACT_RTOL = 1e-6
DEFAULT_SLACK = 0.05


def lq_norm(grid, u, q, region=None):
    """Volume-weighted ``L^q`` norm (max for ``q = inf``), optionally on a cell mask."""
    if q < 1:
        raise InvalidInput("q must be >= 1")
    u = grid.check_field(u)
    if region is not None:
        u = u[np.asarray(region, dtype=bool)]
    if u.size == 0:
        return 0.0
    if q == math.inf:
        return float(np.max(np.abs(u)))
    return float((grid.vol * np.sum(np.abs(u) ** q)) ** (1.0 / q))


def _face_pairs(grid, axis):
    idx = np.arange(grid.size).reshape(grid.shape)
    lo = [slice(None)] * grid.dim
    hi = [slice(None)] * grid.dim
    lo[axis] = slice(0, -1)
    hi[axis] = slice(1, None)
    return idx[tuple(lo)].ravel(), idx[tuple(hi)].ravel()


def directional_tv(grid, u, axis, weight=None, region=None):
    """Sum over interior faces normal to ``axis`` of ``|jump| * area * weight``.

    The face weight is the mean of the two adjacent cell weights.  With
    ``region`` only faces between two cells of the region count.
    """
    u = grid.check_field(u)
    K, L = _face_pairs(grid, axis)
    jumps = np.abs(u[L] - u[K]) * grid.face_area(axis)
    if weight is not None:
        w = grid.check_field(weight, name="weight")
        if np.any(w < 0):
            raise InvalidInput("weight must be nonnegative")
        jumps = jumps * 0.5 * (w[K] + w[L])
    if region is not None:
        r = np.asarray(region, dtype=bool)
        if r.shape != (grid.size,):
            raise GridMismatch("region mask has the wrong size")
        jumps = jumps[r[K] & r[L]]
    return float(np.sum(jumps))


def total_variation(grid, u, weight=None, region=None):
    return sum(directional_tv(grid, u, j, weight, region) for j in range(grid.dim))


def tv_profile(grid, u, weight=None):
    """Per-direction TV, plain and weighted."""
    plain = [directional_tv(grid, u, j) for j in range(grid.dim)]
    weighted = plain if weight is None else [directional_tv(grid, u, j, weight) for j in range(grid.dim)]
    return {"plain": plain, "weighted": weighted}


def pressure_term(grid, p, lap_pos):
    """Sum over interior faces of ``(Lap omega)^+ |d_j p|`` integrated on the dual cell."""
    total = 0.0
    for j in range(grid.dim):
        K, L = _face_pairs(grid, j)
        total += float(np.sum(0.5 * (lap_pos[K] + lap_pos[L]) * np.abs(p[L] - p[K]) * grid.face_area(j)))
    return total


def divergence_term(grid, v, omega, grad_div):
    return float(grid.vol * np.sum(omega[:, None] * np.abs(v)[:, None] * np.abs(grad_div)))


def classify(lhs, rhs, slack=DEFAULT_SLACK):
    if rhs <= 0:
        ratio = 0.0 if lhs <= 1e-14 else math.inf
    else:
        ratio = lhs / rhs
    if ratio <= 1 + EXACT_RTOL:
        return ratio, "pass"
    if ratio <= 1 + slack:
        return ratio, "pass_with_slack"
    return ratio, "fail"


@dataclass
class BVAuditRecord:
    time: float
    lhs: float
    pressure: float
    divergence: float
    source: float
    initial: float
    factor: float
    rhs: float
    ratio: float
    status: str
    note: str = ""

    @property
    def passed(self):
        return self.status in ("pass", "pass_with_slack")


def _require_sign(cutoff, V_sample):
    check = check_cutoff_sign(cutoff, V_sample.cells)
    if not check.passed:
        raise CutoffRejected(
            f"V . grad omega_h = {check.worst_value:.3e} > 0 at cell {check.worst_cell}; the shell hypothesis fails"
        )


def verify_bv_stationary(problem, sol, cutoff, slack=DEFAULT_SLACK):
    """Weighted-TV bound for one stationary solve.

    ``(1 - lam lambda_V) TV_omega(v) <= lam sum (Lap omega)^+ |d p|
    + TV_omega(f) + lam sum omega |v| |d_j div V|``.
    """
    grid = problem.grid
    if not grid.same_as(cutoff.grid):
        raise GridMismatch("cutoff lives on a different grid")
    lam, lv = problem.lam, problem.V.lambda_V
    if lam * lv >= 1:
        raise StepTooLarge(f"lambda = {lam} >= lambda1 = {1 / lv}")
    _require_sign(cutoff, problem.V)
    w = cutoff.values
    lhs = (1 - lam * lv) * total_variation(grid, sol.v, w)
    pres = lam * pressure_term(grid, sol.p, cutoff.laplacian_pos)
    div = lam * divergence_term(grid, sol.v, w, problem.V.grad_div)
    src = total_variation(grid, problem.f, w)
    rhs = pres + div + src
    ratio, status = classify(lhs, rhs, slack)
    return BVAuditRecord(0.0, lhs, pres, div, src, 0.0, 1.0, rhs, ratio, status)


def verify_bv_evolution(run_, cutoff, slack=DEFAULT_SLACK):
    """Weighted-TV bound at every step of a run (all steps must be retained).

    ``TV_omega(u_k) <= exp(lambda_V T) [TV_omega(u_0) + sum_{m<=k} eps
    (P_m + Q_m + TV_omega(f_{m-1}))]`` where ``P`` is the pressure term and
    ``Q`` the divergence-gradient term.
    """
    from .evolution import step_data

    cfg = run_.config
    grid = cfg.grid
    if not grid.same_as(cutoff.grid):
        raise GridMismatch("cutoff lives on a different grid")
    if not run_.all_stored:
        raise InvalidInput("the evolution BV audit needs every step retained (snapshot stride 1)")
    data = step_data(run_)
    eps, n = cfg.eps, run_.completed_steps
    samples = [data.V(i) for i in range(n)]
    seen = set()
    for s in samples:
        if id(s) not in seen:
            _require_sign(cutoff, s)
            seen.add(id(s))
    lv = max((s.lambda_V for s in samples), default=0.0)
    if eps * lv >= 1:
        raise StepTooLarge(f"eps = {eps} >= lambda1 = {1 / lv}")
    factor = math.exp(lv * cfg.T)
    w, lap = cutoff.values, cutoff.laplacian_pos
    tv0 = total_variation(grid, run_.u[0], w)
    out = [BVAuditRecord(0.0, tv0, 0.0, 0.0, 0.0, tv0, factor, factor * tv0, *classify(tv0, factor * tv0, slack))]
    pres = div = src = 0.0
    for k in range(1, n + 1):
        u, p = run_.u[k], run_.p[k]
        pres += eps * pressure_term(grid, p, lap)
        div += eps * divergence_term(grid, u, w, samples[k - 1].grad_div)
        src += eps * total_variation(grid, data.f(k - 1).cells, w)
        lhs = total_variation(grid, u, w)
        rhs = factor * (tv0 + pres + div + src)
        ratio, status = classify(lhs, rhs, slack)
        note = "discrete_slack" if status != "pass" else ""
        out.append(BVAuditRecord(cfg.t(k), lhs, pres, div, src, tv0, factor, rhs, ratio, status, note))
    return out


# ---------------------------------------------------------------- oracle


def _inside(grid, pts):
    ok = np.ones(len(pts), dtype=bool)
    for k, (a, b) in enumerate(grid.extents):
        ok &= (pts[:, k] >= a) & (pts[:, k] <= b)
    return ok


def flow_map(V, pts, t0, t1, steps=200, grid=None):
    """RK4 flow of ``dX/ds = V(s, X)`` from ``s = t0`` to ``s = t1``.

    Returns ``(X, inside)``; with ``grid`` given, ``inside`` flags points whose
    path (at every stage) stayed in the box.
    """
    X = np.atleast_2d(np.asarray(pts, dtype=float)).copy()
    inside = np.ones(len(X), dtype=bool)
    if t1 == t0:
        return X, inside
    h = (t1 - t0) / steps
    s = t0
    for _ in range(steps):
        k1 = V(s, X)
        k2 = V(s + h / 2, X + h / 2 * k1)
        k3 = V(s + h / 2, X + h / 2 * k2)
        k4 = V(s + h, X + h * k3)
        if grid is not None:
            for stage in (X + h / 2 * k1, X + h / 2 * k2, X + h * k3):
                inside &= _inside(grid, stage)
        X = X + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if grid is not None:
            inside &= _inside(grid, X)
        s += h
    return X, inside


def characteristics_oracle(V, u0, t, grid, steps=200, div_tol=1e-10):
    """``u(t, x) = u0(X_{t->0}(x))`` at cell centers for divergence-free ``V``.

    ``u0`` is a callable on points ``(n, dim)``.  Backward paths that leave
    the box get the value 0.
    """
    pts = grid.centers
    for s in (0.0, 0.5 * t, t):
        div = V.divergence(s, pts)
        worst = float(np.max(np.abs(div))) if div.size else 0.0
        if worst > div_tol:
            raise OracleInapplicable(f"drift is not divergence free (|div V| = {worst:.3e} at t = {s:g})")
    if t == 0:
        return np.asarray(u0(pts), dtype=float)
    X, inside = flow_map(V, pts, t, 0.0, steps=steps, grid=grid)
    vals = np.asarray(u0(X), dtype=float)
    return np.where(inside, vals, 0.0)


# ---------------------------------------------------------------- reports


@dataclass
class DiagnosticsReport:
    summary: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)

    def to_json(self):
        return _jsonable(self.summary)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def audit_rows(audits):
    """Uniform dict rows for stationary-style and BV audit records."""
    rows = []
    for a in audits:
        if isinstance(a, BVAuditRecord):
            rows.append({"name": "bv", **asdict(a)})
        else:
            ratio = a.ratio
            rows.append(
                {
                    "name": a.name,
                    "time": a.time,
                    "lhs": a.lhs,
                    "rhs": a.rhs,
                    "ratio": ratio,
                    "status": a.status or ("pass" if a.passed else "fail"),
                }
            )
    return rows


def report(run_=None, audits=(), constants=None, extra=None):
    """Summarize a run and its audits into a machine-readable report."""
    rows = audit_rows(audits)
    counts = {}
    for r in rows:
        counts[r["status"]] = counts.get(r["status"], 0) + 1
    violations = counts.get("fail", 0)
    finite = [r["ratio"] for r in rows if r["ratio"] is not None and math.isfinite(r["ratio"])]
    summary = {
        "audits": len(rows),
        "counts": counts,
        "status": "ok" if violations == 0 else f"violations: {violations}",
        "worst_ratio": max(finite) if finite else None,
        "constants": constants or {},
    }
    tables = {"audits": rows}
    if run_ is not None:
        from .evolution import Q_VALUES, energy_ledger, ledger_rows, mq_eps_bound

        cfg = run_.config
        summary["steps"] = run_.completed_steps
        summary["eps"] = cfg.eps
        summary["eps_requested"] = cfg.eps_requested
        summary["delta"] = cfg.delta_eff
        summary["T"] = cfg.T
        summary["mq_curves"] = {
            ("inf" if q == math.inf else str(int(q))): [float(x) for x in mq_eps_bound(run_, q)] for q in Q_VALUES
        }
        energy = energy_ledger(run_)
        if energy:
            diss = sum(cfg.eps * r.grad_sq for r in run_.ledger)
            summary["energy"] = {
                "dissipation": diss,
                "final_lhs": energy[-1].lhs,
                "final_rhs": energy[-1].rhs,
                "cumulative_ok": all(e.passed for e in energy),
                "poincare_available": not cfg.grid.bc.poincare_unavailable,
            }
        summary["notes"] = [
            "the q = inf bound uses exponent coefficient 1, not the q -> inf limit of the finite-q line",
            "lambda_V is the summed sup of sampled drift derivatives",
        ]
        tables["steps"] = ledger_rows(run_)
    if extra:
        summary.update(extra)
    return DiagnosticsReport(summary=summary, tables=tables)
