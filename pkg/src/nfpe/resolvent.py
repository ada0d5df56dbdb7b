"""One implicit step ``u + lam * A_h(u) = f`` on a radial finite-volume grid.

The face flux between an inner cell value ``x`` and an outer value ``y`` is an
exponentially fitted upwind flux built from the chemical potential ``g``.  With
``K = A / dr`` and ``p = Phi_out - Phi_in``::

    p >= 0:  F = K [beta(x) - beta(T_p(y))]
    p <  0:  F = K [beta(T_{-p}(x)) - beta(y)]

where ``T_p(y) = g^{-1}(g(y) + p)`` is the value in equilibrium with ``y``
across a potential jump ``p``.  To first order in the cell size this is
``-A [(beta(y) - beta(x))/dr + phi' b(u_up) u_up]`` with the donor cell chosen
by the sign of the drift.  The flux is nondecreasing in ``x`` and
nonincreasing in ``y``, which gives L1 contraction and positivity, and it
vanishes exactly on ``g(u_i) + Phi_i = const``, so sampled equilibria are
exact discrete fixed points.  For ``beta = id, b = 1`` it reduces to
``K [x - e^p y]``.

When ``g(0+)`` is finite, an empty cell is in equilibrium with any neighbour
up to ``T_p(0)``.  The untransported ``beta`` is clipped from below at
``beta(T_p(0))``, which keeps the flux monotone and continuous and makes it
vanish on compactly supported equilibria.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .chemical import ChemicalPotential, chemical_potential
from .coefficients import MobilitySpec, PotentialSpec, as_regularized
from .errors import InvalidParameterError, NonConvergenceError
from .grid import DensityField, RadialGrid

Y_FLOOR = 1e-300
SLOPE_CAP = 1e200


@dataclass
class ResolventSolveReport:
    iterations: int = 0
    final_residual: float = math.inf
    damping_events: int = 0
    fallback_used: bool = False
    fallback: str | None = None
    converged: bool = False
    eps_effective: float = 0.0
    mass_defect: float = 0.0
    continuation: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


class FaceFluxes:
    """Interior-face fluxes and their partial derivatives for one coefficient set."""

    def __init__(self, grid: RadialGrid, pot: PotentialSpec, cp: ChemicalPotential):
        if pot.d != grid.d:
            raise InvalidParameterError("potential dimension differs from grid dimension")
        self.grid = grid
        self.cp = cp
        r = grid.r_mid
        self.K = grid.face_areas[1:-1] / np.diff(r)
        phi = pot.phi(r)
        self.p = np.diff(phi)
        self.V = grid.cell_volumes
        self.up = self.p >= 0  # outer value is the one transported
        self.shift = np.abs(self.p)
        # with g(0+) finite an empty cell is in equilibrium with anything up to T_p(0)
        self.vacuum = None
        if not cp.diverges_at_zero:
            self.vacuum = cp.diff.beta(cp.transport(np.zeros_like(self.shift), self.shift))

    def _partner_slope(self, w, z):
        """d beta(T(w))/dw = beta'(w) z b(z) / (w b(w)), at a floor for w = 0."""
        diff, mob = self.cp.diff, self.cp.mob
        ww = np.maximum(w, Y_FLOOR)
        zz = np.where(w > 0, z, self.cp.transport(ww, self.shift))
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            s = diff.beta_prime(ww) * (zz / ww) * (mob.b(zz) / mob.b(ww))
        return np.nan_to_num(np.minimum(s, SLOPE_CAP), nan=SLOPE_CAP)

    def _plain(self, v):
        """``beta`` of the untransported value, clipped at the vacuum partner."""
        bv = self.cp.diff.beta(v)
        dv = self.cp.diff.beta_prime(v)
        if self.vacuum is None:
            return bv, dv
        return np.maximum(bv, self.vacuum), np.where(bv > self.vacuum, dv, 0.0)

    def evaluate(self, u, derivatives: bool = True):
        beta = self.cp.diff.beta
        x, y = u[:-1], u[1:]
        w = np.where(self.up, np.maximum(y, 0.0), np.maximum(x, 0.0))
        z = self.cp.transport(w, self.shift)
        P, dP = self._plain(np.where(self.up, x, y))
        F = self.K * np.where(self.up, P - beta(z), beta(z) - P)
        if not derivatives:
            return F, None, None
        ts = self._partner_slope(w, z)
        dFx = self.K * np.where(self.up, dP, ts)
        dFy = -self.K * np.where(self.up, ts, dP)
        return F, dFx, dFy

    def chord(self, u):
        """Secant slopes and offset so that F = sx*x - sy*y + c holds exactly at ``u``."""
        beta = self.cp.diff.beta
        x, y = np.maximum(u[:-1], 0.0), np.maximum(u[1:], 0.0)
        w = np.where(self.up, y, x)
        z = self.cp.transport(w, self.shift)
        v = np.where(self.up, x, y)
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            s_plain = np.where(v > 0, beta(v) / np.where(v > 0, v, 1.0), self.cp.diff.beta_prime(0.0))
            s_tr = np.where(w > 0, beta(z) / np.where(w > 0, w, 1.0), 0.0)
        s_tr = np.minimum(np.where(w > 0, s_tr, self._partner_slope(w, z)), SLOPE_CAP)
        c = np.zeros_like(s_plain)
        if self.vacuum is not None:
            clip = beta(v) <= self.vacuum
            s_plain = np.where(clip, 0.0, s_plain)
            c = self.K * np.where(clip, np.where(self.up, self.vacuum, -self.vacuum), 0.0)
        sx = self.K * np.where(self.up, s_plain, s_tr)
        sy = self.K * np.where(self.up, s_tr, s_plain)
        return np.minimum(sx, SLOPE_CAP), np.minimum(sy, SLOPE_CAP), c


class ResolventOperator:
    """Reusable ``J_lam`` for fixed grid, coefficients and regularization."""

    def __init__(self, grid: RadialGrid, diff, mob: MobilitySpec, pot: PotentialSpec,
                 eps: float = 0.0, M: float = math.inf, eps_floor: float = 0.0):
        self.grid, self.diff, self.mob, self.pot = grid, diff, mob, pot
        self.M = M
        cp = chemical_potential(diff, mob, eps, M)
        self.eps_effective = eps
        if not cp.diverges_at_zero and eps_floor > 0:
            self.eps_effective = max(eps, eps_floor)
            cp = chemical_potential(diff, mob, self.eps_effective, M)
        self.cp = cp
        self.fluxes = FaceFluxes(grid, pot, cp)
        self.degenerate = float(as_regularized(diff, self.eps_effective, M).beta_prime(0.0)) == 0.0

    def residual(self, u, f, lam):
        F, _, _ = self.fluxes.evaluate(u, derivatives=False)
        return self._assemble_residual(u, f, lam, F)

    def _assemble_residual(self, u, f, lam, F):
        div = np.zeros_like(u)
        div[:-1] += F
        div[1:] -= F
        return self.fluxes.V * (u - f) + lam * div

    def _jacobian(self, lam, dFx, dFy):
        V = self.fluxes.V
        N = V.size
        ab = np.zeros((3, N))
        ab[1] = V
        ab[1, :-1] += lam * dFx
        ab[1, 1:] -= lam * dFy
        ab[0, 1:] = lam * dFy
        ab[2, :-1] = -lam * dFx
        return ab

    def _newton(self, u, f, lam, tol, max_iter, report, polish=3):
        V_total = float(np.sum(self.fluxes.V * np.abs(f))) or 1.0
        # the exact solution of nonnegative data is nonnegative: keep iterates there
        clip = bool(np.all(f >= 0))
        if clip:
            u = np.maximum(u, 0.0)
        F, dFx, dFy = self.fluxes.evaluate(u)
        R = self._assemble_residual(u, f, lam, F)
        res = float(np.sum(np.abs(R)))
        extra = 0
        for _ in range(max_iter):
            if res <= tol:
                if extra >= polish or res <= 1e-17 * V_total:
                    return u, res, True
                extra += 1
            report.iterations += 1
            try:
                delta = solve_banded((1, 1), self._jacobian(lam, dFx, dFy), -R,
                                     overwrite_ab=True, check_finite=False)
            except (np.linalg.LinAlgError, ValueError):
                return u, res, res <= tol
            if not np.all(np.isfinite(delta)):
                return u, res, res <= tol
            theta = 1.0
            while True:
                trial = u + theta * delta
                if clip:
                    trial = np.maximum(trial, 0.0)
                Ft, dFxt, dFyt = self.fluxes.evaluate(trial)
                Rt = self._assemble_residual(trial, f, lam, Ft)
                rt = float(np.sum(np.abs(Rt)))
                if rt < res or (theta == 1.0 and rt <= tol):
                    break
                if res <= tol:  # polishing stalled at the round-off floor
                    return u, res, True
                theta *= 0.5
                report.damping_events += 1
                if theta < 2.0 ** -40:
                    return u, res, False
            u, R, res, dFx, dFy = trial, Rt, rt, dFxt, dFyt
        return u, res, res <= tol

    def _picard(self, u, f, lam, tol, max_iter, report):
        V = self.fluxes.V
        N = V.size
        res = math.inf
        for _ in range(max_iter):
            R = self.residual(u, f, lam)
            res = float(np.sum(np.abs(R)))
            if res <= tol:
                return u, res, True
            report.iterations += 1
            sx, sy, c = self.fluxes.chord(u)
            ab = np.zeros((3, N))
            ab[1] = V.copy()
            ab[1, :-1] += lam * sx
            ab[1, 1:] += lam * sy
            ab[0, 1:] = -lam * sy
            ab[2, :-1] = -lam * sx
            rhs = V * f
            rhs[:-1] -= lam * c
            rhs[1:] += lam * c
            u_new = solve_banded((1, 1), ab, rhs, check_finite=False)
            if not np.all(np.isfinite(u_new)):
                return u, res, False
            u = np.maximum(u_new, 0.0) if np.all(f >= 0) else u_new
        return u, res, res <= tol

    def solve(self, f: DensityField, lam: float, solver_tol: float = 1e-10, max_iter: int = 100,
              initial: np.ndarray | None = None, step: int | None = None):
        if not lam > 0:
            raise InvalidParameterError(f"lambda must be positive, got {lam}")
        if not f.grid.compatible(self.grid):
            raise InvalidParameterError("field lives on a different grid")
        fv = np.asarray(f.values, dtype=float)
        report = ResolventSolveReport(eps_effective=self.eps_effective)
        if not np.any(fv):
            report.converged, report.final_residual = True, 0.0
            return DensityField(np.zeros_like(fv), self.grid), report
        u0 = fv.copy() if initial is None else np.array(initial, dtype=float)
        u, res, ok = self._newton(u0, fv, lam, solver_tol, max_iter, report)
        if not ok and self.degenerate:
            report.fallback_used, report.fallback = True, "eps-continuation"
            u = u0
            for e in (1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8):
                if e <= self.eps_effective:
                    break
                sub = ResolventOperator(self.grid, self.diff, self.mob, self.pot, e, self.M)
                u, r_e, ok_e = sub._newton(u, fv, lam, solver_tol, max_iter, report)
                report.continuation.append({"eps": e, "residual": r_e, "converged": ok_e})
            u, res, ok = self._newton(u, fv, lam, solver_tol, max_iter, report)
        if not ok:
            report.fallback_used = True
            report.fallback = (report.fallback + "+picard") if report.fallback else "picard"
            u, res, ok = self._picard(u, fv, lam, solver_tol, 10 * max_iter, report)
            if ok:
                u2, res2, ok2 = self._newton(u, fv, lam, solver_tol, max_iter, report)
                if ok2 and res2 <= res:
                    u, res = u2, res2
        report.final_residual = res
        report.converged = ok
        if not ok:
            raise NonConvergenceError(
                f"resolvent solve did not reach {solver_tol:g} (residual {res:.3g}); retry with smaller lambda",
                step=step, report=report)
        V = self.fluxes.V
        report.mass_defect = float(np.dot(V, u) - np.dot(V, fv))
        return DensityField(u, self.grid), report


def apply_resolvent(f: DensityField, lam: float, diff, mob: MobilitySpec, pot: PotentialSpec,
                    eps: float = 0.0, M: float = math.inf, solver_tol: float = 1e-10,
                    max_iter: int = 100, initial=None):
    """``(I + lam A_h)^{-1} f`` with its solve report."""
    op = ResolventOperator(f.grid, diff, mob, pot, eps, M)
    return op.solve(f, lam, solver_tol, max_iter, initial)
