"""Weighted-TV audit of the shrinking-field preset under simultaneous (eps, h) refinement."""

import argparse
import json

from driftbv.analysis import verify_bv_evolution
from driftbv.config import PRESETS, config_from_dict
from driftbv.evolution import run
from driftbv.suite import build_setup


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--preset", default="bv_shrinkfield")
    ap.add_argument("--levels", type=int, default=3)
    args = ap.parse_args()
    base = PRESETS[args.preset]
    print(f"{'cells':>6} {'eps':>9} {'final TV_w':>11} {'worst ratio':>11} statuses")
    for k in range(args.levels):
        data = json.loads(json.dumps(base))
        data["grid"]["cells"] = [c * 2**k for c in base["grid"]["cells"]]
        data["time"]["eps"] = base["time"]["eps"] / 2**k
        setup = build_setup(config_from_dict(data))
        audits = verify_bv_evolution(run(setup.evolution), setup.cutoff)
        worst = max(a.ratio for a in audits)
        statuses = sorted({a.status for a in audits})
        print(f"{data['grid']['cells'][0]:6d} {setup.evolution.eps:9.6f} {audits[-1].lhs:11.6f} {worst:11.6f} {statuses}")


if __name__ == "__main__":
    main()
