"""Distances between runs at successive regularization levels delta."""

import argparse

from driftbv.config import load_config
from driftbv.evolution import delta_refinement_study
from driftbv.suite import build_setup


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("config", nargs="?", default="heleshaw_mixed")
    ap.add_argument("--deltas", default="0.02,0.01,0.005,0.0025")
    args = ap.parse_args()
    evo = build_setup(load_config(args.config)).evolution
    deltas = [float(d) for d in args.deltas.split(",")]
    study = delta_refinement_study(evo, deltas)
    print(f"{'delta pair':>20} {'|u| L2(Q)':>12} {'|grad p| L2(Q)':>15}")
    for (a, b), du, dp in zip(zip(deltas, deltas[1:]), study.u_distances, study.p_distances):
        print(f"{a:>9g} -> {b:<8g} {du:12.4e} {dp:15.4e}")
    print("monotone:", study.monotone)


if __name__ == "__main__":
    main()
