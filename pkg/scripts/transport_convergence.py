"""L1 distance to the characteristics solution for the rotating bump under (eps, h) refinement."""

import argparse
import json

import numpy as np

from driftbv.analysis import characteristics_oracle, total_variation
from driftbv.config import PRESETS, config_from_dict
from driftbv.evolution import run
from driftbv.fields import ScalarField
from driftbv.suite import build_setup


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--cells", default="32,64,128")
    args = ap.parse_args()
    base = PRESETS["transport_rotation"]
    T = base["time"]["T"]
    prev = None
    print(f"{'n':>5} {'eps':>10} {'rel L1 err':>11} {'ratio':>6} {'TV_w/TV0':>9}")
    for n in map(int, args.cells.split(",")):
        data = json.loads(json.dumps(base))
        data["grid"]["cells"] = [n, n]
        data["time"]["eps"] = T / (2 * n)
        cfg = config_from_dict(data)
        setup = build_setup(cfg)
        r = run(setup.evolution)
        g = setup.grid
        u0f = ScalarField.make(cfg.initial.kind, 2, **cfg.initial.params)
        exact = characteristics_oracle(setup.V, u0f.spatial, T, g)
        uT = r.u[r.stored[-1]]
        err = np.sum(np.abs(uT - exact)) / np.sum(np.abs(r.u[0]))
        tv = total_variation(g, uT, setup.cutoff.values) / total_variation(g, r.u[0])
        ratio = f"{prev / err:6.2f}" if prev else "     -"
        print(f"{n:5d} {setup.evolution.eps:10.5f} {err:11.4f} {ratio} {tv:9.4f}")
        prev = err


if __name__ == "__main__":
    main()
