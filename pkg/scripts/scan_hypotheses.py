"""Margins of every sampled structural inequality over a grid of potential parameters."""

import argparse
import csv
import itertools
from pathlib import Path

from nfpe.coefficients import SamplingPlan, make_builtin, log_quadratic_potential, verify_hypotheses
from nfpe.errors import InvalidParameterError


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--diffusion", default="boltzmann")
    ap.add_argument("--d", type=int, default=3)
    ap.add_argument("--eta", type=float, nargs="+", default=[0.25, 0.5, 1.0, 2.0, 4.0])
    ap.add_argument("--gamma1", type=float, nargs="+", default=[0.5, 1.0, 2.0, 8.0])
    ap.add_argument("--out", default="runs/hypothesis_scan.csv")
    args = ap.parse_args()

    diff, mob = make_builtin(args.diffusion)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    rows = []
    for eta, g1 in itertools.product(args.eta, args.gamma1):
        try:
            pot = log_quadratic_potential(d=args.d, eta=eta, gamma1=g1)
        except InvalidParameterError as exc:
            print(f"eta={eta} gamma1={g1}: skipped ({exc})")
            continue
        rep = verify_hypotheses(diff, mob, pot, SamplingPlan(n=4000))
        for c in rep.checks:
            rows.append([eta, g1, c.name, c.passed, c.margin, c.witness])
        print(f"eta={eta} gamma1={g1}: failures {[c.name for c in rep.failures()]}")
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["eta", "gamma1", "check", "passed", "margin", "witness"])
        w.writerows(rows)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
