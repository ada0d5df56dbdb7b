"""Config-driven experiment runner: ``nfpe run config.json [--out DIR] [--seed S] [--probe NAME ...]``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as _dt
import hashlib
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .coefficients import (
    SamplingPlan, constant_mobility, constant_potential, make_builtin, log_quadratic_potential,
    saturating_mobility, verify_hypotheses,
)
from .config import PROBES, RunConfig, load_config
from .chemical import chemical_potential
from .diagnostics import free_energy, omega_probe, write_omega_report
from .errors import ConfigError, NFPEError, NonConvergenceError
from .grid import DensityField, build_grid, bump, l1_distance, normalize, random_field, write_field_csv
from .particles import simulate_particles
from .resolvent import ResolventOperator
from .semigroup import auto_step, evolve, exponential_formula_probe, write_trajectory
from .stationary import (
    check_divergence, dump_stationary, lemma_a2_check, stationary_limit, stationary_state,
    truncation_radius,
)

log = logging.getLogger("nfpe")

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3
_DEPENDS = {"omega": ("stationary", "evolve"), "particles": ("evolve",), "evolve": ("stationary",)}


def build_coefficients(cfg: RunConfig):
    c = cfg.coefficients
    d = cfg.grid.d
    params = dict(c.diffusion_params)
    if c.diffusion == "power_degenerate":
        params.setdefault("d", d)
    try:
        diff, mob = make_builtin(c.diffusion, **params)
    except (TypeError, ValueError) as exc:
        raise ConfigError("coefficients.diffusion_params", str(exc)) from exc
    mp = dict(c.mobility_params)
    try:
        if c.mobility == "constant":
            mob = constant_mobility(**mp) if mp else mob
        elif c.mobility == "saturating":
            mob = saturating_mobility(**mp)
        else:
            raise ConfigError("coefficients.mobility", f"unknown mobility {c.mobility!r}")
        pp = dict(c.potential_params)
        if c.potential == "log_quadratic":
            pot = log_quadratic_potential(d=d, **pp)
        elif c.potential == "constant":
            pot = constant_potential(d=d, **pp)
        else:
            raise ConfigError("coefficients.potential", f"unknown potential {c.potential!r}")
    except TypeError as exc:
        raise ConfigError("coefficients", str(exc)) from exc
    return diff, mob, pot


class _Summary:
    def __init__(self):
        self.invariants = []
        self.probes = {}

    def check(self, probe, name, passed, margin=None, hard=True):
        self.invariants.append({"probe": probe, "name": name, "hard": hard, "passed": bool(passed),
                                "margin": None if margin is None else float(margin)})

    @property
    def hard_passed(self) -> bool:
        return all(i["passed"] for i in self.invariants if i["hard"])


def _json_default(x):
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, float) and not math.isfinite(x):
        return None
    raise TypeError(f"not serializable: {type(x)}")


def _clean(x):
    """Replace non-finite floats by None so the JSON stays standard."""
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (float, np.floating)):
        return float(x) if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    return x


def _write_json(path: Path, obj):
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True, default=_json_default) + "\n")


def _nonincreasing(values, slack):
    """Pass flag and margin ``slack - largest increase`` (negative means violated)."""
    steps = np.diff(np.asarray(values, dtype=float))
    worst = float(steps.max()) if steps.size else 0.0
    return worst <= slack, slack - worst


def run(cfg: RunConfig, out_dir=None, probes=None) -> tuple[int, Path]:
    """Execute the requested probes and write all artifacts into one directory."""
    out = Path(out_dir or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    wanted = list(probes or cfg.probes)
    for p in list(wanted):
        for dep in _DEPENDS.get(p, ()):
            if dep not in wanted:
                wanted.append(dep)
    order = [p for p in PROBES if p in wanted]
    cfg_dict = cfg.to_dict()
    _write_json(out / "config.json", cfg_dict)
    summary = _Summary()
    status = EXIT_OK
    tol = cfg.tolerances
    diff, mob, pot = build_coefficients(cfg)
    eps = cfg.eps.value
    M = cfg.eps.M if cfg.eps.M is not None else math.inf
    R = cfg.grid.R
    if R is None:
        R = truncation_radius(diff, mob, pot, cfg.grid.tail_tol, eps)
    grid = build_grid(cfg.grid.d, R, cfg.grid.N, cfg.grid.refine)
    state = {"grid": {"d": grid.d, "R": grid.R, "N": grid.N}}
    a_point = a_avg = traj = None

    for probe in order:
        try:
            if probe == "hypotheses":
                rep = verify_hypotheses(diff, mob, pot, SamplingPlan(R=grid.R))
                div = check_divergence(diff, mob, eps, M, K=300)
                _write_json(out / "hypotheses.json", {"hypotheses": rep.to_dict(), "divergence": {
                    k: {"verdict": v["verdict"], "last_value": v["values"][-1],
                        "last_increment": v["last_increment"]}
                    for k, v in div.items()}})
                for c in rep.checks:
                    summary.check(probe, c.name, c.passed, c.margin, hard=False)
                summary.check(probe, "divergence_at_zero", div["zero"]["verdict"] == "diverges", hard=False)
                summary.check(probe, "divergence_at_infinity", div["infinity"]["verdict"] == "diverges", hard=False)
                summary.probes[probe] = {"passed": rep.passed, "failures": [c.name for c in rep.failures()]}

            elif probe == "stationary":
                if not chemical_potential(diff, mob, eps, M).diverges_at_zero:
                    # g(0+) finite: no equilibrium of the form g^{-1}(mu - Phi); evolve without one
                    summary.check(probe, "equilibrium_exists", False, hard=False)
                    summary.probes[probe] = {"skipped": "g(0+) is finite"}
                    continue
                if cfg.eps.limit and eps == 0:
                    lim = stationary_limit(diff, mob, pot, grid, cfg.eps.eps0, cfg.eps.halvings, M,
                                           tol.mass_tol, "point")
                    a_point = lim
                    summary.check(probe, "eps_gaps_strictly_decreasing", lim.report["gaps_strictly_decreasing"],
                                  hard=False)
                else:
                    a_point = stationary_state(diff, mob, pot, grid, eps, M, tol.mass_tol, "point")
                a_avg = stationary_state(diff, mob, pot, grid, eps, M, tol.mass_tol, "average")
                dump_stationary(a_point, out, "stationary")
                dump_stationary(a_avg, out, "stationary_average")
                res = abs(a_avg.report["mass_residual"])
                summary.check(probe, "mass_residual", res <= tol.mass_tol, tol.mass_tol - res)
                summary.check(probe, "nonnegative", a_point.values.min() >= 0, a_point.values.min())
                info = {"mu": a_point.mu, "mu_average": a_avg.mu, "eps": eps,
                        "mass_residual": a_avg.report["mass_residual"],
                        "point_average_gap": l1_distance(a_point.field, a_avg.field),
                        "free_energy": free_energy(a_point.field, diff, mob, pot, eps, M).to_dict()}
                if cfg.eps.limit and eps == 0:
                    info["eps_ladder"] = {k: a_point.report[k] for k in
                                          ("eps_ladder", "cauchy_gaps", "gaps_strictly_decreasing", "final_gap")}
                summary.probes[probe] = info

            elif probe == "evolve":
                u0 = _initial(cfg, grid, a_point)
                h = cfg.time.h
                if h == "auto":
                    h = auto_step(u0, diff, mob, pot, eps, M, cfg.time.h0, solver_tol=tol.solver_tol)
                traj = evolve(u0, cfg.time.T, h, diff, mob, pot, eps, M, cfg.time.stride, a_point,
                              tol.solver_tol)
                write_trajectory(traj, out, "trajectory")
                D = traj.diagnostics
                drift = float(np.max(np.abs(D["mass"] - D["mass"][0])))
                mn = float(min(s.values.min() for s in traj.snapshots))
                summary.check(probe, "mass_conservation", drift <= tol.mass_drift, tol.mass_drift - drift)
                summary.check(probe, "positivity", mn >= -tol.positivity, mn + tol.positivity)
                ok, w = _nonincreasing(D["V"], tol.slack)
                summary.check(probe, "free_energy_nonincreasing", ok, w)
                if a_point is not None:
                    ok, w = _nonincreasing(D["dist_to_a"], tol.slack + traj.step_tolerance())
                    summary.check(probe, "distance_to_a_nonincreasing", ok, w)
                ok, w = _nonincreasing(D["weighted"], tol.slack)
                summary.check(probe, "weighted_norm_nonincreasing", ok, w, hard=False)
                summary.probes[probe] = {"h": h, "steps": traj.params["steps"],
                                         "final_distance_to_a": float(D["dist_to_a"][-1]),
                                         "final_free_energy": float(D["V"][-1]),
                                         "max_mass_drift": drift, "min_value": mn,
                                         "fallback_steps": sum(1 for r in traj.reports if r["fallback"])}

            elif probe == "contraction":
                rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
                op = ResolventOperator(grid, diff, mob, pot, eps, M)
                rows, worst = [], -math.inf
                for lam in cfg.contraction.lambdas:
                    for k in range(cfg.contraction.pairs):
                        f, g = random_field(grid, rng), random_field(grid, rng)
                        uf, _ = op.solve(f, lam, tol.solver_tol)
                        ug, _ = op.solve(g, lam, tol.solver_tol)
                        before, after = l1_distance(f, g), l1_distance(uf, ug)
                        rows.append((lam, k, before, after))
                        worst = max(worst, after - before)
                with (out / "contraction.csv").open("w", newline="") as fh:
                    w = csv.writer(fh)
                    w.writerow(["lambda", "pair", "l1_before", "l1_after"])
                    for r in rows:
                        w.writerow([repr(float(r[0])), r[1], repr(float(r[2])), repr(float(r[3]))])
                summary.check(probe, "l1_contraction", worst <= tol.contraction_slack,
                              tol.contraction_slack - worst)
                summary.probes[probe] = {"pairs": len(rows), "max_excess": worst}

            elif probe == "omega":
                if a_point is None:
                    summary.probes[probe] = {"skipped": "no equilibrium"}
                    continue
                rep = omega_probe(traj, a_point, tol.conv_tol, cfg.omega.restart_horizon, tol.slack)
                write_omega_report(rep, out / "omega.json")
                summary.check(probe, "radius_nonincreasing", rep.monotone_violations == 0, -rep.max_violation)
                summary.check(probe, "converged", rep.converged, tol.conv_tol - rep.limit_radius, hard=False)
                summary.probes[probe] = {"limit_radius": rep.limit_radius,
                                         "isometry_drift": rep.isometry_drift,
                                         "converged": rep.converged}

            elif probe == "a2_bounds":
                br = lemma_a2_check(diff, mob, pot, grid, eps=eps)
                _write_json(out / "a2_bounds.json", br.to_dict())
                for c in br.checks:
                    summary.check(probe, c.name, c.passed, c.margin)
                summary.probes[probe] = {"branch": br.branch, "passed": br.passed}

            elif probe == "expformula":
                u0 = _initial(cfg, grid, a_point)
                res = exponential_formula_probe(u0, cfg.expformula.t, cfg.expformula.n_list,
                                                diff, mob, pot, eps, M, tol.solver_tol)
                _write_json(out / "expformula.json", res.to_dict())
                steps = np.diff(res.gaps) if len(res.gaps) > 1 else np.zeros(1)
                summary.check(probe, "gaps_decreasing", res.decreasing, -float(np.max(steps)))
                summary.probes[probe] = res.to_dict()

            elif probe == "particles":
                pc = cfg.particles
                T = pc.T if pc.T is not None else min(cfg.time.T, traj.snapshot_times[-1])
                res = simulate_particles(traj, pc.N, pc.dt, T, cfg.seed, pc.eps_sigma)
                write_field_csv(res.histogram, out / "particles_histogram.csv")
                ref = _snapshot_at(traj, T)
                dist = l1_distance(res.histogram, ref)
                meta = dict(res.meta, l1_to_pde=dist)
                _write_json(out / "particles.json", meta)
                summary.check(probe, "histogram_mass", abs(res.histogram.mass - 1) <= 1e-12,
                              res.histogram.mass - 1)
                summary.check(probe, "l1_to_pde", dist <= pc.tolerance, pc.tolerance - dist, hard=False)
                summary.probes[probe] = meta

        except NonConvergenceError as exc:
            status = EXIT_SOLVER
            summary.check(probe, "completed", False)
            summary.probes[probe] = {"error": str(exc), "step": exc.step}
            log.error("probe %s failed at step %s: %s", probe, exc.step, exc)
            if probe in ("stationary", "evolve"):
                break
        except NFPEError as exc:
            status = EXIT_SOLVER
            summary.check(probe, "completed", False)
            summary.probes[probe] = {"error": f"{type(exc).__name__}: {exc}"}
            log.error("probe %s failed: %s", probe, exc)
            if probe in ("stationary", "evolve"):
                break

    if status == EXIT_OK and not summary.hard_passed:
        status = EXIT_INVARIANT
    canon = json.dumps(_clean(cfg_dict), sort_keys=True).encode()
    doc = {
        "schema": 1,
        "metadata": {"timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat()},
        "version": __version__,
        "config_sha256": hashlib.sha256(canon).hexdigest(),
        "seed": cfg.seed,
        "grid": state["grid"],
        "probes_run": order,
        "probes": summary.probes,
        "invariants": summary.invariants,
        "hard_passed": summary.hard_passed,
        "exit_status": status,
    }
    _write_json(out / "summary.json", doc)
    return status, out


def _initial(cfg: RunConfig, grid, a_point) -> DensityField:
    ic = cfg.initial
    if ic.kind == "stationary":
        if a_point is None:
            raise ConfigError("initial.kind", "no equilibrium to start from for these coefficients")
        return a_point.field
    if ic.kind == "uniform":
        return normalize(DensityField(np.ones(grid.N), grid))
    return bump(grid, ic.center, ic.width, ic.floor)


def _snapshot_at(traj, t):
    k = int(np.argmin(np.abs(np.asarray(traj.snapshot_times) - t)))
    return traj.snapshots[k]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="nfpe", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    pr = sub.add_parser("run", help="run a configured experiment")
    pr.add_argument("config", help="path to the JSON configuration")
    pr.add_argument("--out", help="artifact directory (overrides config.output)")
    pr.add_argument("--seed", type=int, help="override the configured seed")
    pr.add_argument("--probe", action="append", choices=PROBES, help="run only these probes")
    pr.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
        status, out = run(cfg, args.out, args.probe)
    except ConfigError as exc:
        print(f"config error in field '{exc.field}': {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"{out}: exit status {status}")
    return status


if __name__ == "__main__":
    sys.exit(main())
