"""Free energy, entropy production and omega-limit probes."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate

from .chemical import chemical_potential
from .coefficients import MobilitySpec, PotentialSpec, as_regularized
from .errors import InvalidParameterError, QuadratureError
from .grid import DensityField, l1_distance
from .stationary import StationaryState, g_eval


def sigma_eval(diff, mob: MobilitySpec, r: float, eps: float = 0.0, M: float = math.inf,
               quad_tol: float = 1e-10) -> float:
    """Entropy density ``sigma(r) = int_0^r g``, by parts ``r g(r) - int_0^r beta'(s)/b(s) ds``.

    The second integral is taken in ``t = log s`` so the origin is at ``t = -inf``.
    """
    if r < 0:
        raise InvalidParameterError("sigma is defined for r >= 0")
    if r == 0:
        return 0.0
    rd = as_regularized(diff, eps, M)

    def h(t):
        s = math.exp(t)
        return float(rd.beta_prime(s)) * s / float(mob.b(s))

    tr = math.log(r)
    pts = [math.log(p) for p in rd.breakpoints if 0 < p < r]
    lo = min(tr - 60.0, -60.0)
    val, err = integrate.quad(h, lo, tr, points=pts or None, epsabs=quad_tol, epsrel=0.0, limit=500)
    tail, err2 = integrate.quad(h, -np.inf, lo, epsabs=quad_tol, limit=200)
    if not err + err2 <= quad_tol:
        raise QuadratureError(f"sigma({r}): error estimate {err + err2:.3g}")
    return r * g_eval(rd, mob, 0.0, r, quad_tol=quad_tol) - (val + tail)


@dataclass(frozen=True)
class FreeEnergyBreakdown:
    entropy: float
    internal: float
    total: float

    def to_dict(self) -> dict:
        return {"entropy": self.entropy, "internal": self.internal, "total": self.total}


def free_energy(u: DensityField, diff, mob: MobilitySpec, pot: PotentialSpec,
                eps: float = 0.0, M: float = math.inf, neg_tol: float = 1e-12) -> FreeEnergyBreakdown:
    """``V(u) = sum V_i sigma(u_i) + sum V_i Phi(r_i) u_i`` with midpoint values."""
    vals = u.values
    if np.any(vals < -neg_tol):
        raise InvalidParameterError(f"free energy needs u >= 0 (min {vals.min():.3g})")
    vals = np.maximum(vals, 0.0)
    cp = chemical_potential(diff, mob, eps, M)
    V = u.grid.cell_volumes
    S = float(np.dot(V, cp.entropy_density(vals)))
    E = float(np.dot(V, pot.phi(u.grid.r_mid) * vals))
    return FreeEnergyBreakdown(entropy=S, internal=E, total=S + E)


def entropy_production(u: DensityField, diff, mob: MobilitySpec, pot: PotentialSpec,
                       eps: float = 0.0, M: float = math.inf) -> float:
    """``-int J . grad beta(u)`` with the current ``J = D b(u) u - grad beta(u)`` on faces."""
    rd = as_regularized(diff, eps, M)
    g = u.grid
    r = g.r_mid
    rf = g.edges[1:-1]
    dr = np.diff(r)
    x, y = u.values[:-1], u.values[1:]
    grad = (rd.beta(y) - rd.beta(x)) / dr
    drift = -pot.phi_prime(rf)
    up = np.where(drift >= 0, x, y)
    J = drift * mob.b(up) * up - grad
    return float(-np.sum(g.face_areas[1:-1] * dr * J * grad))


@dataclass
class OmegaProbeReport:
    times: list
    radii: list
    limit_radius: float
    monotone_violations: int
    max_violation: float
    isometry_drift: float
    isometry_pairs: list = field(default_factory=list)
    converged: bool = False
    conv_tol: float = 1e-3

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def omega_probe(traj, a, conv_tol: float = 1e-3, restart_horizon: float = 1.0,
                slack: float = 1e-8, horizons=None) -> OmegaProbeReport:
    """Distances of the stored snapshots to ``a`` and an isometry audit on late pairs.

    The isometry drift restarts the evolution from two late snapshots and
    compares ``|S(t)v - S(t)w|_1`` with ``|v - w|_1`` for t up to ``restart_horizon``.
    """
    from .semigroup import continue_trajectory

    af = a.field if isinstance(a, StationaryState) else a
    snaps = traj.snapshots
    if not snaps:
        raise InvalidParameterError("trajectory has no snapshots")
    radii = [l1_distance(s, af) for s in snaps]
    step_tol = traj.step_tolerance()
    viol = [r1 - r0 for r0, r1 in zip(radii, radii[1:]) if r1 > r0 + slack + step_tol]
    k0 = (3 * len(radii)) // 4
    tail = radii[k0:] if radii[k0:] else radii[-1:]
    limit = float(np.mean(tail))

    pairs = []
    drift = 0.0
    if len(snaps) >= 2 and restart_horizon > 0:
        i, j = max(k0, 0), len(snaps) - 1
        if i == j:
            i = j - 1
        v, w = snaps[i], snaps[j]
        base = l1_distance(v, w)
        hs = horizons or [restart_horizon / 2, restart_horizon]
        for hz in hs:
            sv = continue_trajectory(traj, v, hz)
            sw = continue_trajectory(traj, w, hz)
            dist = l1_distance(sv, sw)
            pairs.append({"t_v": traj.snapshot_times[i], "t_w": traj.snapshot_times[j],
                          "horizon": hz, "initial_distance": base, "restarted_distance": dist,
                          "drift": abs(dist - base)})
            drift = max(drift, abs(dist - base))
    return OmegaProbeReport(
        times=list(traj.snapshot_times), radii=radii, limit_radius=limit,
        monotone_violations=len(viol), max_violation=float(max(viol)) if viol else 0.0,
        isometry_drift=drift, isometry_pairs=pairs, converged=bool(limit <= conv_tol),
        conv_tol=conv_tol,
    )


def write_omega_report(report: OmegaProbeReport, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return path
