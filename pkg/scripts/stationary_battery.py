"""Randomized stationary estimate battery with a per-estimate summary."""

import argparse
import time
from collections import defaultdict

from driftbv.suite import stationary_battery


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenarios", type=int, default=50)
    ap.add_argument("--seed", type=int, default=2024)
    args = ap.parse_args()
    t0 = time.perf_counter()
    recs = stationary_battery(args.scenarios, seed=args.seed)
    by = defaultdict(list)
    for r in recs:
        by[r.name.split(":", 1)[1].split("[")[0]].append(r)
    print(f"{'estimate':>12} {'count':>6} {'fails':>6} {'worst lhs/rhs':>14}")
    for name, rs in sorted(by.items()):
        worst = max((r.lhs / r.rhs for r in rs if r.rhs > 0), default=0.0)
        print(f"{name:>12} {len(rs):6d} {sum(not r.passed for r in rs):6d} {worst:14.6f}")
    print(f"{len(recs)} audits in {time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
