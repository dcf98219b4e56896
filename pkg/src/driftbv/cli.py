"""Command line entry point: ``driftbv run|verify|sweep|presets``."""

from __future__ import annotations

import argparse
import copy
import json
import sys
from concurrent.futures import ProcessPoolExecutor

from .config import ConfigError, dump_config, load_config, parse_config, preset_names
from .errors import DriftBVError

SWEEP_AXES = ("eps", "delta", "cells", "cutoff.h")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"driftbv: error: {message}", file=sys.stderr)
        raise SystemExit(2)


def _parser():
    p = _Parser(prog="driftbv", description="Drift-diffusion solver with a-priori estimate audits")
    sub = p.add_subparsers(dest="cmd", required=True)
    for name, text in (("run", "run one configuration"), ("verify", "run and audit, exit 1 on violations")):
        s = sub.add_parser(name, help=text)
        s.add_argument("config", help="config file or preset name")
        s.add_argument("--out", help="output root (default: DRIFTBV_OUT or output.dir)")
    s = sub.add_parser("sweep", help="independent runs along one parameter axis")
    s.add_argument("config")
    s.add_argument("--axis", required=True)
    s.add_argument("--values", required=True, help="comma separated values")
    s.add_argument("--out")
    s.add_argument("--workers", type=int, default=None)
    sub.add_parser("presets", help="list shipped presets")
    return p


def _fail_config(exc):
    print(f"driftbv: config error: {exc}", file=sys.stderr)
    return 2


def _summary_line(outcome):
    counts = outcome.report.get("counts", {})
    parts = ", ".join(f"{k}={v}" for k, v in sorted(counts.items())) or "no audits"
    return f"{outcome.out_dir}: {outcome.report.get('status')} ({parts})"


def cmd_run(arg, out=None, mode="run"):
    from .suite import execute

    try:
        cfg = load_config(arg)
    except ConfigError as exc:
        return _fail_config(exc)
    try:
        outcome = execute(cfg, mode=mode, out_root=out)
    except ConfigError as exc:
        return _fail_config(exc)
    print(_summary_line(outcome))
    if outcome.message:
        print(f"driftbv: solver failure: {outcome.message}", file=sys.stderr)
    return outcome.exit_code


def cmd_verify(arg, out=None):
    return cmd_run(arg, out=out, mode="verify")


def _apply_axis(data, axis, value):
    data = copy.deepcopy(data)
    if axis == "eps":
        data.setdefault("time", {})["eps"] = float(value)
    elif axis == "delta":
        data.setdefault("graph", {})["delta"] = float(value)
    elif axis == "cells":
        n = int(value)
        dim = len(data.get("grid", {}).get("cells", [100]))
        data.setdefault("grid", {})["cells"] = [n] * dim
    else:
        data.setdefault("cutoff", {})["h"] = float(value)
    data["name"] = f"{data.get('name', 'run')}_{axis.replace('.', '_')}_{value}"
    return data


def _sweep_one(args):
    from .suite import execute

    data, out = args
    cfg = parse_config(json.dumps(data))
    o = execute(cfg, mode="run", out_root=out)
    run_ = o.run
    last = run_.stored[-1]
    return {"name": cfg.name, "exit_code": o.exit_code, "grid": run_.config.grid, "eps": run_.config.eps,
            "u": run_.u[last], "t": run_.config.t(last), "status": o.report.get("status"), "dir": str(o.out_dir)}


def _distance(a, b):
    """L2 distance of final states, restricting the finer grid by block averaging."""
    import numpy as np

    ga, gb = a["grid"], b["grid"]
    ua, ub = a["u"], b["u"]
    if ga.size != gb.size:
        (gc, uc), (gf, uf) = sorted([(ga, ua), (gb, ub)], key=lambda x: x[0].size)
        ratios = [nf // nc for nf, nc in zip(gf.cells, gc.cells)]
        if any(nf != r * nc for nf, nc, r in zip(gf.cells, gc.cells, ratios)):
            return float("nan")
        arr = uf.reshape(gf.shape)
        for k, r in enumerate(ratios):
            shape = list(arr.shape)
            shape[k : k + 1] = [shape[k] // r, r]
            arr = arr.reshape(shape).mean(axis=k + 1)
        ua, ub, g = uc, arr.ravel(), gc
    else:
        g = ga
    return float(np.sqrt(g.vol * np.sum((ua - ub) ** 2)))


def cmd_sweep(arg, axis, values, out=None, workers=None):
    if axis not in SWEEP_AXES:
        print(f"driftbv: config error: unknown sweep axis {axis!r}; use one of {', '.join(SWEEP_AXES)}", file=sys.stderr)
        return 2
    try:
        cfg = load_config(arg)
        vals = [v.strip() for v in values.split(",") if v.strip()]
        if not vals:
            raise ConfigError("--values is empty")
        for v in vals:
            float(v)
        base = json.loads(dump_config(cfg))
        jobs = [_apply_axis(base, axis, v) for v in vals]
        for j in jobs:
            parse_config(json.dumps(j))
    except ValueError as exc:
        return _fail_config(exc if isinstance(exc, ConfigError) else ConfigError(f"bad sweep value: {exc}"))
    except DriftBVError as exc:
        return _fail_config(exc)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(_sweep_one, [(j, out) for j in jobs]))
    rows = []
    for k, r in enumerate(results):
        dist = _distance(results[k - 1], r) if k > 0 else float("nan")
        rows.append({"value": vals[k], "name": r["name"], "eps": r["eps"], "t": r["t"], "status": r["status"],
                     "exit_code": r["exit_code"], "distance_to_previous": dist})
    from .suite import _write_csv, output_dir

    sweep_dir = output_dir(cfg, out).parent / f"{cfg.name}_sweep_{axis.replace('.', '_')}"
    sweep_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(sweep_dir / "sweep.csv", rows)
    for r in rows:
        print(f"{axis}={r['value']}: distance_to_previous={r['distance_to_previous']:.6g} status={r['status']}")
    print(f"table: {sweep_dir / 'sweep.csv'}")
    return 1 if any(r["exit_code"] for r in results) else 0


def cmd_presets():
    for name in preset_names():
        print(name)
    return 0


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.cmd == "presets":
        return cmd_presets()
    if args.cmd == "run":
        return cmd_run(args.config, args.out)
    if args.cmd == "verify":
        return cmd_verify(args.config, args.out)
    return cmd_sweep(args.config, args.axis, args.values, args.out, args.workers)


if __name__ == "__main__":
    sys.exit(main())
