"""Cauchy gaps |a_eps_k - a_eps_{k+1}|_1 along eps_k = eps0 2^-k for remark33_log.

Extends the ladder past k = 7 to show where the gap reaches a given target.
"""

import argparse
import csv
from pathlib import Path

from nfpe.coefficients import make_builtin, log_quadratic_potential
from nfpe.grid import build_grid
from nfpe.stationary import stationary_limit


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--N", type=int, default=400)
    ap.add_argument("--R", type=float, default=30.0)
    ap.add_argument("--eps0", type=float, default=0.1)
    ap.add_argument("--halvings", type=int, default=14)
    ap.add_argument("--sampling", choices=["average", "point"], default="average")
    ap.add_argument("--out", default="runs/eps_ladder.csv")
    args = ap.parse_args()

    diff, mob = make_builtin("remark33_log")
    grid = build_grid(3, args.R, args.N)
    lim = stationary_limit(diff, mob, log_quadratic_potential(d=3), grid, args.eps0, args.halvings,
                           sampling=args.sampling)
    rep = lim.report
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "eps", "mu", "gap_to_next", "gap_over_eps", "distance_to_limit"])
        for k, e in enumerate(rep["eps_ladder"]):
            gap = rep["cauchy_gaps"][k] if k < len(rep["cauchy_gaps"]) else ""
            ratio = gap / e if gap != "" else ""
            w.writerow([k, e, rep["mu_ladder"][k], gap, ratio, rep["distance_to_limit"][k]])
            print(f"k={k:2d} eps={e:.3e} gap={gap if gap == '' else f'{gap:.3e}'} "
                  f"dist={rep['distance_to_limit'][k]:.3e}")
    print(f"strictly decreasing: {rep['gaps_strictly_decreasing']}; wrote {out}")


if __name__ == "__main__":
    main()
