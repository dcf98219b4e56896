"""Grid convergence of the stationary solver against p = sin(pi x) with the linear graph."""

import math

import numpy as np

from driftbv.geometry import build_grid
from driftbv.graphs import MonotoneGraph, RegularizedGraph
from driftbv.stationary import StationaryProblem, solve_stationary


def main(lam=0.1, delta=0.01):
    prev = None
    for n in (50, 100, 200, 400, 800):
        g = build_grid((0, 1), n, dirichlet="all")
        x = g.centers[:, 0]
        f = np.sin(np.pi * x) * (1 / (1 + delta) + lam * np.pi**2)
        p = solve_stationary(StationaryProblem(grid=g, lam=lam, graph=RegularizedGraph(MonotoneGraph.identity(), delta), f=f)).p
        err = math.sqrt(g.vol * np.sum((p - np.sin(np.pi * x)) ** 2))
        print(f"n={n:4d}  L2 error {err:.3e}" + (f"  ratio {prev / err:.3f}" if prev else ""))
        prev = err


if __name__ == "__main__":
    main()
