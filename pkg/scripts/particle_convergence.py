"""Langevin particles frozen at the boltzmann equilibrium: histogram L1 error versus particle count."""

import argparse
import csv
import time
from pathlib import Path

from nfpe.coefficients import make_builtin, log_quadratic_potential
from nfpe.grid import build_grid, l1_distance
from nfpe.particles import simulate_particles
from nfpe.semigroup import evolve
from nfpe.stationary import stationary_state


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--counts", type=int, nargs="+", default=[1000, 10_000, 100_000])
    ap.add_argument("--T", type=float, default=10.0)
    ap.add_argument("--dt", type=float, default=5e-3)
    ap.add_argument("--N", type=int, default=100, help="grid cells")
    ap.add_argument("--seeds", type=int, nargs="+", default=[12345])
    ap.add_argument("--out", default="runs/particle_convergence.csv")
    args = ap.parse_args()

    diff, mob = make_builtin("boltzmann")
    pot = log_quadratic_potential(d=3)
    grid = build_grid(3, 30.0, args.N)
    a = stationary_state(diff, mob, pot, grid)
    traj = evolve(a.field, args.T, 0.5, diff, mob, pot, stride=1, stationary=a, with_energy=False)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "particles", "l1_to_equilibrium", "seconds"])
        for seed in args.seeds:
            for n in args.counts:
                t0 = time.perf_counter()
                res = simulate_particles(traj, n, args.dt, args.T, seed)
                dist = l1_distance(res.histogram, a.field)
                secs = time.perf_counter() - t0
                w.writerow([seed, n, dist, secs])
                print(f"seed={seed} N={n:7d} L1={dist:.4f} ({secs:.1f}s)")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
