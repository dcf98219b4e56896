"""Turn a :class:`RunConfig` into a run, audit it and write the artifacts."""

from __future__ import annotations

import csv
import json
import math
import os
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analysis import (
    report,
    total_variation,
    verify_bv_evolution,
)
from .config import RunConfig, dump_config
from .errors import CutoffRejected, InvalidInput, RunAborted, StepTooLarge
from .evolution import EvolutionConfig, energy_ledger, lq_audits, run
from .fields import DriftField, ScalarField, check_assumptions, extend_field, time_average
from .geometry import build_cutoff, build_eta, build_grid, default_cutoff_h
from .graphs import MonotoneGraph, RegularizedGraph, graph_from_config
from .stationary import AuditRecord, SolverOptions, StationaryProblem, solve_stationary, verify_stationary_estimates


@dataclass
class Setup:
    grid: object  # grid the run lives on (outer box when extended)
    inner: object  # the physical domain
    graph: MonotoneGraph
    V: object
    f: ScalarField
    u0: np.ndarray
    inner_mask: np.ndarray
    evolution: EvolutionConfig
    cutoff: object = None


def _mask_inside(grid, extents):
    pts = grid.centers
    ok = np.ones(grid.size, dtype=bool)
    for k, (a, b) in enumerate(extents):
        ok &= (pts[:, k] >= a) & (pts[:, k] <= b)
    return ok


def build_setup(cfg: RunConfig):
    """Build grids, fields and the evolution config (raises on invalid data)."""
    dim = cfg.dim
    inner = build_grid(cfg.grid.extents, cfg.grid.cells, dirichlet=cfg.bc.dirichlet, neumann=cfg.bc.neumann)
    graph = graph_from_config(cfg.graph.kind, cfg.graph.m, cfg.graph.latent)
    V = DriftField.make(cfg.field.kind, dim, **cfg.field.params)
    f = ScalarField.make(cfg.source.kind, dim, **cfg.source.params)
    init = ScalarField.make(cfg.initial.kind, dim, **cfg.initial.params)
    grid, mask = inner, np.ones(inner.size, dtype=bool)
    if cfg.extension.margin is not None:
        margin = cfg.extension.margin
        pad = [round(margin / h) for h in inner.spacing]
        if any(abs(p * h - margin) > 1e-9 * max(1.0, margin) for p, h in zip(pad, inner.spacing)):
            raise InvalidInput("extension.margin must be a whole number of grid cells")
        ext = [(a - margin, b + margin) for a, b in inner.extents]
        cells = [n + 2 * p for n, p in zip(inner.cells, pad)]
        grid = build_grid(ext, cells, dirichlet="all")
        V = extend_field(V, inner, grid, margin)
        mask = _mask_inside(grid, inner.extents)
        f = ScalarField.make("cells", dim, values=list(np.where(mask, f.spatial(grid.centers), 0.0)))
    u0 = np.where(mask, init.spatial(grid.centers), 0.0)
    opts = SolverOptions(
        newton_tol=cfg.solver.newton_tol,
        max_newton=cfg.solver.max_newton,
        linear_tol=cfg.solver.linear_tol,
        damping_min=cfg.solver.damping_min,
    )
    evo = EvolutionConfig(
        grid=grid,
        graph=graph,
        T=cfg.time.T,
        eps=cfg.time.eps,
        u0=u0,
        V=V,
        f=f,
        delta=cfg.graph.delta,
        options=opts,
        snapshot_stride=1 if cfg.audit.bv else cfg.snapshots.stride,
        audit_per_step=cfg.audit.per_step,
        bv_guard=cfg.audit.bv,
    )
    cutoff = None
    if cfg.audit.bv:
        h = cfg.cutoff.h if cfg.cutoff.h is not None else default_cutoff_h(grid)
        cutoff = build_cutoff(grid, build_eta(h, cfg.cutoff.c1, cfg.cutoff.c2))
    return Setup(grid, inner, graph, V, f, u0, mask, evo, cutoff)


# ---------------------------------------------------------------- stationary battery


def _random_source(rng, grid, amplitude):
    x = grid.centers
    f = np.zeros(grid.size)
    for _ in range(rng.integers(1, 4)):
        c = rng.uniform(0.1, 0.9, size=grid.dim)
        r = rng.uniform(0.1, 0.4)
        s = 1.0 - np.sum((x - c) ** 2, axis=1) / r**2
        f += rng.uniform(-0.5, 1.0) * np.maximum(s, 0.0) ** rng.integers(1, 3)
    lo = rng.uniform(0.0, 0.6, size=grid.dim)
    box = np.all((x >= lo) & (x <= lo + rng.uniform(0.1, 0.4)), axis=1)
    f += rng.uniform(-0.5, 1.0) * box
    f += 0.3 * rng.uniform(-1, 1) * np.prod(np.sin(np.pi * rng.integers(1, 4) * x), axis=1)
    peak = np.max(np.abs(f))
    return amplitude * f / peak if peak > 0 else f


def _random_drift(rng, dim):
    kind = rng.choice(["zero", "constant", "radial", "polynomial"] + (["rotation", "shear"] if dim == 2 else []))
    if kind == "zero":
        return DriftField("zero", dim)
    if kind == "constant":
        return DriftField.make("constant", dim, value=list(rng.uniform(-2, 2, size=dim)))
    if kind == "radial":
        return DriftField.make("radial", dim, center=list(rng.uniform(0.2, 0.8, size=dim)), rate=rng.uniform(-3, 3))
    if kind == "rotation":
        return DriftField.make("rotation", 2, center=list(rng.uniform(0.3, 0.7, size=2)), rate=rng.uniform(-3, 3))
    if kind == "shear":
        return DriftField.make("shear", 2, center=[0.5, 0.5], rate=rng.uniform(-3, 3))
    comps = []
    for _ in range(dim):
        terms = [[float(rng.uniform(-2, 2)), [int(p) for p in rng.integers(0, 3, size=dim)]] for _ in range(3)]
        comps.append(terms)
    return DriftField.make("polynomial", dim, components=comps)


def stationary_scenario(rng):
    """One randomized stationary problem (and its positive-part twin)."""
    dim = 1 if rng.uniform() < 0.6 else 2
    sides = ["left", "right"] + (["bottom", "top"] if dim == 2 else [])
    labels = {s: ("D" if rng.uniform() < 0.6 else "N") for s in sides}
    dirichlet = [s for s in sides if labels[s] == "D"]
    neumann = [s for s in sides if labels[s] == "N"]
    cells = [int(rng.integers(24, 65))] if dim == 1 else [int(rng.integers(10, 19))] * 2
    grid = build_grid([(0.0, 1.0)] * dim, cells, dirichlet=dirichlet, neumann=neumann)
    kind = rng.choice(["identity", "powerlaw", "sign"])
    graph = MonotoneGraph.power_law(2.0) if kind == "powerlaw" else MonotoneGraph(kind)
    delta = float(10 ** rng.uniform(-3, -1))
    V = time_average(_random_drift(rng, dim), (0.0, 1.0), grid)
    lam0 = V.lambda0
    frac = rng.uniform(0.05, 0.4 if kind == "sign" else 0.9)
    lam = frac * lam0 if math.isfinite(lam0) else float(10 ** rng.uniform(-2, 0))
    amp = 0.5 if kind == "sign" else float(rng.uniform(0.5, 2.0))
    f = _random_source(rng, grid, amp)
    rg = RegularizedGraph(graph, delta)
    return StationaryProblem(grid, lam, rg, f, V=V), StationaryProblem(grid, lam, rg, np.maximum(f, 0.0), V=V)


def stationary_battery(n, seed=0, n_k=5):
    """Solve ``n`` random scenarios and audit every stationary estimate."""
    rng = np.random.default_rng(seed)
    records = []
    for s in range(n):
        prob, prob_pos = stationary_scenario(rng)
        sol = solve_stationary(prob)
        recs = [verify_stationary_estimates(sol, prob, "lq", q=q) for q in (1.0, 2.0, math.inf)]
        recs.append(verify_stationary_estimates(sol, prob, "linf"))
        recs.append(verify_stationary_estimates(sol, prob, "energy"))
        fmax = float(np.max(np.abs(prob.f)))
        for k in rng.uniform(0.0, 1.2 * fmax, size=n_k):
            recs.append(verify_stationary_estimates(sol, prob, "k_plus", k=float(k)))
        for k in rng.uniform(-1.2 * fmax, 0.0, size=n_k):
            recs.append(verify_stationary_estimates(sol, prob, "k_minus", k=float(k)))
        sol_pos = solve_stationary(prob_pos)
        recs.append(verify_stationary_estimates(sol_pos, prob_pos, "positivity"))
        for r in recs:
            records.append(AuditRecord(f"s{s}:{r.name}", r.lhs, r.rhs, r.passed, status=r.status))
    return records


# ---------------------------------------------------------------- execution


@dataclass
class Outcome:
    exit_code: int
    out_dir: Path
    report: dict
    run: object = None
    audits: list = None
    message: str = ""


def _write_csv(path, rows, header=None):
    with open(path, "w", newline="") as fh:
        if not rows and header is None:
            return
        keys = header or list(rows[0].keys())
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for r in rows:
            w.writerow([_fmt(r.get(k)) for k in keys])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return v


def write_snapshot(path, grid, u, p):
    n = grid.size
    idx = np.indices(grid.shape).reshape(grid.dim, -1)
    i = idx[0]
    j = idx[1] if grid.dim == 2 else np.zeros(n, dtype=int)
    x = grid.centers[:, 0]
    y = grid.centers[:, 1] if grid.dim == 2 else np.zeros(n)
    with open(path, "w") as fh:
        fh.write("i,j,x,y,u,p\n")
        for r in range(n):
            fh.write("%d,%d,%.17g,%.17g,%.17g,%.17g\n" % (i[r], j[r], x[r], y[r], u[r], p[r]))


def output_dir(cfg, override=None):
    root = Path(override or os.environ.get("DRIFTBV_OUT") or cfg.output.dir)
    return root / cfg.name


def _mass_audit(setup, run_):
    """Exact mass balance when no flux can cross the boundary."""
    grid = setup.grid
    if setup.grid.bc.dirichlet:
        return []
    rep = check_assumptions(setup.V, grid, "T", times=(0.0, run_.config.T)) if isinstance(setup.V, DriftField) else None
    if rep is None or not rep.T3:
        return []
    data_mass = float(np.sum(grid.vol * setup.u0))
    scale = float(np.sum(grid.vol * np.abs(setup.u0))) or 1.0
    out = []
    from .evolution import step_data

    data = step_data(run_)
    for rec in run_.ledger:
        data_mass += run_.config.eps * float(np.sum(grid.vol * data.f(rec.step - 1).cells))
        err = abs(rec.mass - data_mass)
        ok = err <= 1e-12 * max(scale, abs(data_mass))
        out.append(AuditRecord("mass", err, 1e-12 * scale, ok, time=rec.t, status="pass" if ok else "fail"))
    return out


def execute(cfg: RunConfig, mode="run", out_root=None):
    """Run ``cfg``, audit it and write artifacts.

    ``mode='verify'`` additionally runs the randomized stationary battery and
    sets exit code 1 when any audit fails beyond the slack ceiling.
    """
    setup = build_setup(cfg)
    out = output_dir(cfg, out_root)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(dump_config(cfg) + "\n")
    for old in out.glob("snapshot_*.csv"):
        old.unlink()
    try:
        run_ = run(setup.evolution)
        failure = None
    except RunAborted as exc:
        run_, failure = exc.run, exc
    audits = []
    assumptions = None
    if cfg.audit.enabled:
        for step in run_.step_audits:
            audits.extend(AuditRecord(a.name, a.lhs, a.rhs, a.passed, time=a.time, status=a.status) for a in step)
        audits.extend(lq_audits(run_))
        audits.extend(energy_ledger(run_))
        audits.extend(_mass_audit(setup, run_))
        if isinstance(setup.V, DriftField):
            assumptions = check_assumptions(
                setup.V, setup.grid, "Tprime" if cfg.audit.bv else "T", times=(0.0, 0.5 * cfg.time.T, cfg.time.T),
                h=setup.cutoff.eta.h if setup.cutoff is not None else None,
            )
            if not assumptions.T3:
                audits.append(
                    AuditRecord("assumption_T3", assumptions.T3_witness, 0.0, False, status="fail",
                                detail=assumptions.T3_where)
                )
        if setup.cutoff is not None and failure is None:
            try:
                audits.extend(verify_bv_evolution(run_, setup.cutoff, slack=cfg.audit.slack))
            except (CutoffRejected, StepTooLarge) as exc:
                audits.append(AuditRecord("bv", math.nan, math.nan, True, status="not_applicable", detail=str(exc)))
        if mode == "verify" and cfg.audit.battery_size > 0:
            audits.extend(stationary_battery(cfg.audit.battery_size, seed=cfg.seed))
    constants = {}
    if run_.ledger:
        constants = {
            "div_neg_sup": max(r.div_neg_sup for r in run_.ledger),
            "lambda_V": max(r.lambda_V for r in run_.ledger),
        }
        constants["lambda0"] = math.inf if constants["div_neg_sup"] == 0 else 1 / constants["div_neg_sup"]
        constants["lambda1"] = math.inf if constants["lambda_V"] == 0 else 1 / constants["lambda_V"]
    extra = {"name": cfg.name, "mode": mode, "solver_failure": str(failure) if failure else None}
    if assumptions is not None:
        extra["assumptions"] = {k: getattr(assumptions, k) for k in ("T1", "T2", "T3", "T3_witness", "Tp3", "Tp3_witness")}
    if cfg.extension.margin is not None:
        extra["extension"] = {"outer_extents": [list(e) for e in setup.grid.extents], "outer_cells": list(setup.grid.cells)}
    rep = report(run_, audits, constants, extra)
    if not audits:
        rep.summary["warning"] = "no audits were run"
        if mode == "verify":
            warnings.warn("verify: empty audit set", stacklevel=2)
    (out / "report.json").write_text(json.dumps(rep.to_json(), indent=2, sort_keys=True) + "\n")
    _write_csv(out / "steps.csv", rep.tables.get("steps", []))
    _write_csv(out / "audits.csv", rep.tables["audits"], header=["name", "time", "lhs", "rhs", "ratio", "status"])
    grid = setup.grid
    w = setup.cutoff.values if setup.cutoff is not None else None
    tv_rows = [
        {"step": i, "t": run_.config.t(i), "tv": total_variation(grid, run_.u[i]),
         "tv_weighted": total_variation(grid, run_.u[i], w) if w is not None else total_variation(grid, run_.u[i])}
        for i in run_.stored
    ]
    _write_csv(out / "tv_series.csv", tv_rows, header=["step", "t", "tv", "tv_weighted"])
    for i in run_.stored:
        write_snapshot(out / ("snapshot_%04d.csv" % i), grid, run_.u[i], run_.p[i])
    if failure is not None:
        code = 1
    elif mode == "verify":
        code = 0 if all(r["status"] in ("pass", "pass_with_slack", "not_applicable") for r in rep.tables["audits"]) else 1
    else:
        code = 0
    return Outcome(code, out, rep.to_json(), run_, audits, str(failure) if failure else "")
