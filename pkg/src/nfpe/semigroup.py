"""Mild solutions by repeated implicit-Euler resolvent steps."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coefficients import MobilitySpec, PotentialSpec
from .diagnostics import free_energy
from .errors import InvalidParameterError, NonConvergenceError
from .grid import DensityField, field_norms, l1_distance, write_field_csv
from .resolvent import ResolventOperator
from .stationary import StationaryState

DIAG_COLUMNS = ("t", "mass", "l1", "linf", "weighted", "V", "dist_to_a")


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    snapshot_times: list
    snapshots: list
    diagnostics: dict
    reports: list
    params: dict
    context: dict = field(default_factory=dict, repr=False)

    @property
    def final(self) -> DensityField:
        return self.snapshots[-1]

    def step_tolerance(self) -> float:
        """Worst per-step residual, the slack owed to inexact solves."""
        return max((r["final_residual"] for r in self.reports), default=0.0)


def _steps(T: float, h: float) -> int:
    if not T >= 0 or not h > 0:
        raise InvalidParameterError("need T >= 0 and h > 0")
    return int(math.ceil(T / h - 1e-9))


def _diag_row(u, t, pot, diff, mob, eps, M, a, with_energy):
    n = field_norms(u, pot)
    V = free_energy(u, diff, mob, pot, eps, M).total if with_energy else math.nan
    dist = l1_distance(u, a) if a is not None else math.nan
    return {"t": t, "mass": n["mass"], "l1": n["l1"], "linf": n["linf"],
            "weighted": n["weighted"], "V": V, "dist_to_a": dist}


def evolve(u0: DensityField, T: float, h: float, diff, mob: MobilitySpec, pot: PotentialSpec,
           eps: float = 0.0, M: float = math.inf, stride: int = 10,
           stationary: StationaryState | DensityField | None = None,
           solver_tol: float = 1e-10, max_iter: int = 100, with_energy: bool = True,
           operator: ResolventOperator | None = None, t0: float = 0.0) -> TrajectoryRecord:
    """``ceil(T/h)`` resolvent steps with ``lam = h``.

    Diagnostics are recorded every step; snapshots every ``stride`` steps and
    always at the first and last step.
    """
    n = _steps(T, h)
    if stride < 1:
        raise InvalidParameterError("stride must be >= 1")
    op = operator or ResolventOperator(u0.grid, diff, mob, pot, eps, M)
    a = stationary.field if isinstance(stationary, StationaryState) else stationary
    u = u0
    times = [t0]
    diag = {c: [] for c in DIAG_COLUMNS}
    for c, v in _diag_row(u, t0, pot, diff, mob, eps, M, a, with_energy).items():
        diag[c].append(v)
    snaps, snap_t, reports = [u0], [t0], []
    for k in range(1, n + 1):
        try:
            u, rep = op.solve(u, h, solver_tol, max_iter, step=k)
        except NonConvergenceError as exc:
            exc.step = k
            raise
        t = t0 + k * h
        times.append(t)
        reports.append({"step": k, "iterations": rep.iterations, "final_residual": rep.final_residual,
                        "damping_events": rep.damping_events, "fallback": rep.fallback,
                        "mass_defect": rep.mass_defect})
        for c, v in _diag_row(u, t, pot, diff, mob, eps, M, a, with_energy).items():
            diag[c].append(v)
        if k % stride == 0 or k == n:
            snaps.append(u)
            snap_t.append(t)
    params = {"T": T, "h": h, "steps": n, "eps": eps, "M": M if math.isfinite(M) else None,
              "stride": stride, "diffusion": getattr(getattr(diff, "base", diff), "name", "custom"),
              "mobility": mob.name, "potential": pot.name, "N": u0.grid.N, "R": u0.grid.R,
              "d": u0.grid.d, "solver_tol": solver_tol, "eps_effective": op.eps_effective}
    context = {"diff": diff, "mob": mob, "pot": pot, "eps": eps, "M": M, "operator": op,
               "solver_tol": solver_tol, "max_iter": max_iter}
    return TrajectoryRecord(times=np.array(times), snapshot_times=snap_t, snapshots=snaps,
                            diagnostics={c: np.array(v) for c, v in diag.items()},
                            reports=reports, params=params, context=context)


def continue_trajectory(traj: TrajectoryRecord, start: DensityField, horizon: float) -> DensityField:
    """Evolve ``start`` for ``horizon`` with the trajectory's coefficients and step."""
    ctx = traj.context
    op = ctx["operator"]
    h = traj.params["h"]
    u = start
    for k in range(_steps(horizon, h)):
        u, _ = op.solve(u, h, ctx["solver_tol"], ctx["max_iter"], step=k + 1)
    return u


@dataclass(frozen=True)
class ExpFormulaResult:
    n_list: tuple
    gaps: tuple
    decreasing: bool
    finals: tuple = ()

    def to_dict(self) -> dict:
        return {"n_list": list(self.n_list), "gaps": list(self.gaps), "decreasing": self.decreasing}


def exponential_formula_probe(u0: DensityField, t: float, n_list, diff, mob: MobilitySpec,
                              pot: PotentialSpec, eps: float = 0.0, M: float = math.inf,
                              solver_tol: float = 1e-10, max_iter: int = 100) -> ExpFormulaResult:
    """``v_n = (I + (t/n) A)^{-n} u0`` for each n and the gaps ``|v_n - v_{2n}|_1``."""
    n_list = tuple(int(n) for n in n_list)
    if any(n < 1 for n in n_list):
        raise InvalidParameterError("n must be positive")
    op = ResolventOperator(u0.grid, diff, mob, pot, eps, M)
    finals = []
    for n in n_list:
        u = u0
        for k in range(n):
            u, _ = op.solve(u, t / n, solver_tol, max_iter, step=k + 1)
        finals.append(u)
    gaps = tuple(l1_distance(a, b) for a, b in zip(finals, finals[1:]))
    dec = all(b < a for a, b in zip(gaps, gaps[1:]))
    return ExpFormulaResult(n_list=n_list, gaps=gaps, decreasing=dec, finals=tuple(finals))


def auto_step(u0: DensityField, diff, mob: MobilitySpec, pot: PotentialSpec, eps: float = 0.0,
              M: float = math.inf, h0: float = 0.1, min_h: float = 1e-8,
              solver_tol: float = 1e-10) -> float:
    """Largest ``h0 / 2^k`` for which one resolvent step converges on ``u0``."""
    op = ResolventOperator(u0.grid, diff, mob, pot, eps, M)
    h = h0
    while h >= min_h:
        try:
            op.solve(u0, h, solver_tol)
            return h
        except NonConvergenceError:
            h *= 0.5
    raise NonConvergenceError(f"no step size above {min_h:g} converges on the initial datum")


def write_trajectory(traj: TrajectoryRecord, directory, stem: str = "trajectory") -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    diag_path = directory / f"{stem}_diagnostics.csv"
    with diag_path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DIAG_COLUMNS)
        for i in range(len(traj.times)):
            w.writerow([repr(float(traj.diagnostics[c][i])) for c in DIAG_COLUMNS])
    out.append(diag_path)
    for k, (t, s) in enumerate(zip(traj.snapshot_times, traj.snapshots)):
        out.append(write_field_csv(s, directory / f"{stem}_snap{k:04d}.csv"))
    meta = {"params": traj.params, "snapshot_times": list(traj.snapshot_times),
            "reports": traj.reports}
    meta_path = directory / f"{stem}.json"
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True))
    out.append(meta_path)
    return out
