"""Equilibria ``a = g^{-1}(mu - Phi)``: the chemical potential, normalization and checks.

Two assemblies of the discrete equilibrium are offered:

* ``sampling="average"``: exact cell averages of the continuum profile
  (per-cell Gauss rules, normalized on the Gauss nodes).  This is the object
  to compare with closed forms.
* ``sampling="point"``: the profile sampled at cell midpoints and normalized by
  the discrete mass.  It is the exact fixed point of the finite-volume
  resolvent, so it is the reference for fixed-point and convergence tests.

The two differ by the O(h^2) discretization error.
"""

from __future__ import annotations

import json
import math
from functools import lru_cache
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate, optimize

from .chemical import ChemicalPotential, chemical_potential
from .coefficients import CheckResult, MobilitySpec, PotentialSpec, as_regularized
from .errors import BracketError, InvalidParameterError, QuadratureError, RangeError
from .grid import DensityField, RadialGrid, gauss_cell_rule, write_field_csv

T_MIN, T_MAX = -708.0, 709.0


@dataclass(frozen=True, eq=False)
class StationaryState:
    field: DensityField
    mu: float
    eps: float
    report: dict = field(default_factory=dict)

    @property
    def values(self) -> np.ndarray:
        return self.field.values


# --- scalar g and g^{-1} by adaptive quadrature -----------------------------

def _log_integrand(diff, mob):
    def h(t):
        s = math.exp(t)
        return float(diff.beta_prime(s)) / float(mob.b(s))
    return h


def g_eval(diff, mob: MobilitySpec, eps: float, r: float, M: float = math.inf,
           quad_tol: float = 1e-10) -> float:
    """``int_1^r (beta' + eps)/(s b(s)) ds`` by adaptive quadrature in ``t = log s``."""
    if not r > 0:
        raise InvalidParameterError(f"g is defined for r > 0, got {r}")
    rd = as_regularized(diff, eps, M)
    tr = math.log(r)
    if tr == 0.0:
        return 0.0
    lo, hi = sorted((0.0, tr))
    pts = [math.log(p) for p in rd.breakpoints if p > 0 and lo < math.log(p) < hi]
    val, err = integrate.quad(_log_integrand(rd, mob), lo, hi, points=pts or None,
                              epsabs=quad_tol, epsrel=0.0, limit=500)
    if not err <= quad_tol or not math.isfinite(val):
        raise QuadratureError(f"g({r}): error estimate {err:.3g} exceeds {quad_tol:.3g}")
    return val if tr > 0 else -val


def g_inverse(diff, mob: MobilitySpec, eps: float, y: float, M: float = math.inf,
              inv_tol: float = 1e-12, quad_tol: float = 1e-10, max_expand: int = 60) -> float:
    """Solve ``g(r) = y`` by bracket expansion in ``log r`` followed by bisection.

    A target below every representable value of a divergent ``g`` returns 0
    (the true root underflows); a finite ``g(0+)`` or ``g(+inf)`` raises RangeError.
    """
    def G(t):
        return g_eval(diff, mob, eps, math.exp(t), M, quad_tol)

    if y == 0.0:
        return 1.0
    lo = hi = 0.0
    step = 1.0
    if y > 0:
        for _ in range(max_expand):
            hi = min(lo + step, T_MAX)
            if G(hi) >= y:
                break
            if hi == T_MAX:
                raise RangeError(f"g stays below {y} on the representable range: g may not diverge at infinity")
            lo, step = hi, 2 * step
        else:
            raise RangeError("bracket expansion exhausted")
    else:
        for _ in range(max_expand):
            lo = max(hi - step, T_MIN)
            if G(lo) <= y:
                break
            if lo == T_MIN:
                if _zero_verdict(as_regularized(diff, eps, M), mob) == "diverges":
                    return 0.0
                raise RangeError(f"g(0+) appears finite and above {y}: g does not diverge at zero")
            hi, step = lo, 2 * step
        else:
            raise RangeError("bracket expansion exhausted")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        gm = G(mid)
        if abs(gm - y) <= inv_tol or hi - lo <= 1e-16 * max(1.0, abs(mid)):
            return math.exp(mid)
        if gm < y:
            lo = mid
        else:
            hi = mid
    return math.exp(0.5 * (lo + hi))


@lru_cache(maxsize=64)
def _zero_verdict(rd, mob) -> str:
    return check_divergence(rd, mob, K=300)["zero"]["verdict"]


def check_divergence(diff, mob: MobilitySpec, eps: float = 0.0, M: float = math.inf,
                     K: int = 300, threshold: float = 5.0, increment_tol: float = 1e-6) -> dict:
    """Probe ``g(10^{+-k})`` for k = 1..K; verdicts are heuristics, never proofs.

    A side "diverges" when the probes move monotonically past ``threshold`` in
    magnitude and the last decade still changes by more than ``increment_tol``.
    """
    ks = np.arange(1, K + 1)
    out = {}
    for side, sign in (("zero", -1.0), ("infinity", 1.0)):
        vals = np.array([g_eval(diff, mob, eps, 10.0 ** (sign * k), M) for k in ks])
        steps = sign * np.diff(vals)
        monotone = bool(np.all(steps > 0))
        last = float(steps[-1]) if steps.size else 0.0
        diverges = monotone and abs(vals[-1]) >= threshold and last > increment_tol
        out[side] = {
            "k": ks.tolist(),
            "values": vals.tolist(),
            "last_increment": last,
            "verdict": "diverges" if diverges else "suspect-finite",
        }
    return out


# --- normalization ----------------------------------------------------------

def _sampler(cp: ChemicalPotential, pot: PotentialSpec, grid: RadialGrid, sampling: str,
             gauss_order: int):
    if sampling == "average":
        nodes, weights = gauss_cell_rule(grid, gauss_order, pot.breakpoints)
        phi = pot.phi(nodes)

        def mass(mu):
            return float(np.sum(weights * cp.inverse(mu - phi)))

        def assemble(mu):
            return np.sum(weights * cp.inverse(mu - phi), axis=1) / grid.cell_volumes
    elif sampling == "point":
        V = grid.cell_volumes
        phi = pot.phi(grid.r_mid)

        def mass(mu):
            return float(np.dot(V, cp.inverse(mu - phi)))

        def assemble(mu):
            return cp.inverse(mu - phi)
    else:
        raise InvalidParameterError(f"unknown sampling {sampling!r}")
    return mass, assemble, phi


def _solve_mu(cp, pot, grid, sampling="average", mass_tol=1e-9, max_doublings=60,
              gauss_order=8):
    if pot.d != grid.d:
        raise InvalidParameterError("potential dimension differs from grid dimension")
    mass, assemble, phi = _sampler(cp, pot, grid, sampling, gauss_order)

    def M(mu):
        try:
            return mass(mu)
        except RangeError:
            return math.inf

    center = float(np.min(phi))
    lo = hi = center
    step = 1.0
    mlo = mhi = M(center)
    n_brk = 0
    while mhi < 1.0:
        n_brk += 1
        if n_brk > max_doublings:
            raise BracketError("no upper bracket for mu within the doubling budget")
        lo, mlo = hi, mhi
        hi += step
        step *= 2
        mhi = M(hi)
    step = 1.0
    while mlo >= 1.0:
        n_brk += 1
        if n_brk > max_doublings:
            raise BracketError("no lower bracket for mu within the doubling budget")
        hi, mhi = lo, mlo
        lo -= step
        step *= 2
        mlo = M(lo)
    it = 0
    mu, m = hi, mhi
    for it in range(1, 201):
        mu = 0.5 * (lo + hi)
        m = M(mu)
        if abs(m - 1.0) <= mass_tol or hi - lo <= 4e-16 * max(1.0, abs(mu)):
            break
        if m < 1.0:
            lo = mu
        else:
            hi = mu
    info = {"bracket_steps": n_brk, "bisection_iterations": it, "mass_residual": m - 1.0,
            "sampling": sampling}
    return mu, info, assemble


def solve_mu(diff, mob: MobilitySpec, pot: PotentialSpec, grid: RadialGrid, eps: float = 0.0,
             M: float = math.inf, mass_tol: float = 1e-9, sampling: str = "average") -> float:
    """Normalization constant with ``|int g^{-1}(mu - Phi) dx - 1| <= mass_tol`` on the grid."""
    cp = chemical_potential(diff, mob, eps, M)
    return _solve_mu(cp, pot, grid, sampling, mass_tol)[0]


def stationary_state(diff, mob: MobilitySpec, pot: PotentialSpec, grid: RadialGrid,
                     eps: float = 0.0, M: float = math.inf, mass_tol: float = 1e-9,
                     sampling: str = "average", gauss_order: int = 8) -> StationaryState:
    cp = chemical_potential(diff, mob, eps, M)
    if not cp.diverges_at_zero:
        raise RangeError("g(0+) is finite, so there is no equilibrium of the form g^{-1}(mu - Phi)")
    mu, info, assemble = _solve_mu(cp, pot, grid, sampling, mass_tol, gauss_order=gauss_order)
    vals = assemble(mu)
    u = DensityField(vals, grid)
    report = dict(info)
    report.update({"eps": eps, "M": M if math.isfinite(M) else None, "mass": u.mass,
                   "min_value": float(vals.min()), "zero_cells": int(np.sum(vals == 0.0))})
    return StationaryState(field=u, mu=mu, eps=eps, report=report)


def stationary_limit(diff, mob: MobilitySpec, pot: PotentialSpec, grid: RadialGrid,
                     eps0: float = 0.1, halvings: int = 8, M: float = math.inf,
                     mass_tol: float = 1e-9, sampling: str = "average") -> StationaryState:
    """Follow ``a_eps`` along ``eps_k = eps0 2^{-k}`` and return the ``eps = 0`` state.

    The report records the Cauchy gaps ``|a_k - a_{k+1}|_1``, whether they
    decrease strictly, and the distances ``|a_k - a|_1`` to the limit.
    """
    ladder = [eps0 * 2.0 ** (-k) for k in range(halvings + 1)]
    states = [stationary_state(diff, mob, pot, grid, e, M, mass_tol, sampling) for e in ladder]
    V = grid.cell_volumes
    gaps = [float(np.dot(V, np.abs(a.values - b.values))) for a, b in zip(states, states[1:])]
    limit = stationary_state(diff, mob, pot, grid, 0.0, M, mass_tol, sampling)
    dists = [float(np.dot(V, np.abs(s.values - limit.values))) for s in states]
    report = dict(limit.report)
    report.update({
        "eps_ladder": ladder,
        "mu_ladder": [s.mu for s in states],
        "cauchy_gaps": gaps,
        "gaps_strictly_decreasing": all(b < a for a, b in zip(gaps, gaps[1:])),
        "distance_to_limit": dists,
        "final_gap": gaps[-1] if gaps else None,
    })
    return StationaryState(field=limit.field, mu=limit.mu, eps=0.0, report=report)


# --- envelope and integrability bounds for g^{-1} ---------------------------

@dataclass(frozen=True)
class BoundReport:
    branch: str
    checks: tuple[CheckResult, ...]
    integrals: dict

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"branch": self.branch, "passed": self.passed,
                "checks": [c.__dict__ for c in self.checks], "integrals": self.integrals}


def _radial_integral(f, d: int, lo: float = 0.0, hi: float = math.inf, points=None):
    omega_d = math.pi ** (d / 2) / math.gamma(d / 2 + 1)
    def integrand(r):
        return d * omega_d * r ** (d - 1) * f(r)
    if math.isinf(hi):
        v1, e1 = integrate.quad(integrand, lo, 50.0, points=points, limit=500)
        v2, e2 = integrate.quad(integrand, 50.0, math.inf, limit=500)
        return v1 + v2, e1 + e2
    return integrate.quad(integrand, lo, hi, points=points, limit=500)


def _sublevel_intervals(phi, level: float, r_hi: float, n: int = 20001):
    """Intervals of [0, r_hi] on which phi < level (roots refined by brentq)."""
    r = np.linspace(0.0, r_hi, n)
    below = phi(r) < level
    out, start = [], (0.0 if below[0] else None)
    f = lambda x: float(phi(x)) - level
    for i in range(1, n):
        if below[i] != below[i - 1]:
            x = optimize.brentq(f, r[i - 1], r[i], xtol=1e-14)
            if below[i]:
                start = x
            else:
                out.append((start, x))
                start = None
    if start is not None:
        out.append((start, r_hi))
    return out


def _g_tilde(beta, r: float) -> float:
    if r == 1.0:
        return 0.0
    lo, hi = sorted((0.0, math.log(r)))
    val, _ = integrate.quad(lambda t: float(beta(math.exp(t))) * math.exp(-t), lo, hi,
                            epsabs=1e-13, epsrel=1e-13, limit=500)
    if r < 1:
        val = -val
    return float(beta(r)) / r - float(beta(1.0)) + val


def lemma_a2_check(diff, mob: MobilitySpec, pot: PotentialSpec, grid: RadialGrid,
                   n_samples: int = 20, span: float = 20.0, eq_tol: float = 1e-9,
                   eps: float = 0.0) -> BoundReport:
    """Numerical audit of the envelope, sandwich and integrability bounds for ``g^{-1}``.

    The branch follows ``nu``: for ``nu <= 1`` the envelope is
    ``exp((b0 r + beta(1) - mu1)/mu2)`` on ``r <= (mu1 - beta(1))/b0``; for
    ``nu > 1`` it is ``exp((b0 r + beta(1))/mu2)`` on ``r <= -beta(1)/b0``.
    """
    rd = as_regularized(diff, eps)
    base = rd.base
    mu1, mu2, nu = base.mu1, base.mu2 + eps, base.nu
    b0, bsup = mob.b0, mob.b_sup
    beta1 = float(rd.beta(1.0))
    if nu <= 1:
        branch, shift = "sublinear", mu1
        r_top = (mu1 - beta1) / b0
    else:
        branch, shift = "superlinear", 0.0
        r_top = -beta1 / b0
    checks = []

    # pointwise envelope on sampled arguments
    args = np.linspace(r_top - span, r_top, n_samples)
    env = np.exp((b0 * args + beta1 - shift) / mu2)
    ginv = np.array([g_inverse(rd, mob, 0.0, float(y)) for y in args])
    margins = env - ginv
    worst = int(np.argmin(margins))
    name = "envelope"
    checks.append(CheckResult(name, bool(margins[worst] >= -eq_tol), float(margins[worst]),
                              float(args[worst])))

    # sandwich between g and g~ divided by the mobility bounds
    rs = np.geomspace(1e-6, 1e4, n_samples)
    lows, highs = [], []
    for r in rs:
        gt = _g_tilde(rd.beta, r)
        gv = g_eval(rd, mob, 0.0, r)
        lo_b, hi_b = (gt / b0, gt / bsup) if r <= 1 else (gt / bsup, gt / b0)
        lows.append(gv - lo_b)
        highs.append(hi_b - gv)
    slack = np.minimum(lows, highs)
    scale = 1e-9 * np.maximum(1.0, np.abs([_g_tilde(rd.beta, r) for r in rs]))
    k = int(np.argmin(slack))
    checks.append(CheckResult("sandwich", bool(np.all(slack >= -scale)), float(slack[k]), float(rs[k])))

    # weighted integrals, at the grid's normalization constant
    cp = chemical_potential(rd, mob)
    mu, _, _ = _solve_mu(cp, pot, grid, "average")
    level = mu + (beta1 - shift) / b0
    pref = math.exp((b0 * mu + beta1 - shift) / mu2)
    pts = list(pot.breakpoints) or None
    e_int, e_err = _radial_integral(lambda r: math.exp(-b0 / mu2 * float(pot.phi(r))) * float(pot.phi(r)),
                                    pot.d, points=pts)
    r_hi = 1.0
    while float(pot.phi(r_hi)) < level + 1.0 and r_hi < 1e6:
        r_hi *= 2
    s_int = 0.0
    s_err = 0.0
    for a, b in _sublevel_intervals(pot.phi, level, r_hi):
        v, e = _radial_integral(lambda r: float(pot.phi(r)), pot.d, a, b)
        s_int += v
        s_err += e
    g1 = float(cp.inverse(mu - 1.0))
    rhs = pref * e_int + g1 * s_int
    finite = math.isfinite(e_int) and math.isfinite(s_int) and e_err < 1e-6 * max(1.0, e_int)
    nodes, weights = gauss_cell_rule(grid, 8, pot.breakpoints)
    phi_n = pot.phi(nodes)
    lhs = float(np.sum(weights * cp.inverse(mu - phi_n) * phi_n))
    iname = "weighted_integral"
    checks.append(CheckResult(iname + "_finite", bool(finite), float(e_err), None))
    checks.append(CheckResult(iname + "_inequality", bool(lhs <= rhs * (1 + 1e-9)), float(rhs - lhs), None))

    # pointwise bound on the grid where the envelope applies
    a_n = cp.inverse(mu - phi_n)
    where = phi_n >= level
    if np.any(where):
        slack_n = pref * np.exp(-b0 / mu2 * phi_n[where]) - a_n[where]
        j = int(np.argmin(slack_n))
        name = "pointwise_tail"
        checks.append(CheckResult(name, bool(slack_n[j] >= -1e-12), float(slack_n[j]),
                                  float(nodes[where][j])))
    integrals = {"envelope_max_abs_margin": float(np.max(np.abs(margins))),
                 "envelope_args": args.tolist(), "envelope_margins": margins.tolist(), "mu": mu, "exp_weighted": e_int, "exp_weighted_error": e_err,
                 "sublevel_phi": s_int, "sublevel_error": s_err, "g_inv_mu_minus_1": g1,
                 "bound_rhs": rhs, "phi_weighted_mass": lhs, "level": level}
    return BoundReport(branch=branch, checks=tuple(checks), integrals=integrals)


def truncation_radius(diff, mob: MobilitySpec, pot: PotentialSpec, tail_tol: float = 1e-8,
                      eps: float = 0.0, R_max: float = 1e4) -> float:
    """Smallest radius (to 1%) at which the envelope bound on the equilibrium tail is below ``tail_tol``."""
    rd = as_regularized(diff, eps)
    base = rd.base
    mu2 = base.mu2 + eps
    b0 = mob.b0
    beta1 = float(rd.beta(1.0))
    shift = base.mu1 if base.nu <= 1 else 0.0
    d = pot.d
    omega_d = math.pi ** (d / 2) / math.gamma(d / 2 + 1)
    r_star = omega_d ** (-1.0 / d)  # the ball of unit volume
    rr = np.linspace(0.0, r_star, 2001)
    mu_bound = float(np.max(pot.phi(rr)))  # mass 1 forces g^{-1}(mu - max Phi) <= 1
    level = mu_bound + (beta1 - shift) / b0
    pref = (b0 * mu_bound + beta1 - shift) / mu2

    def tail(R):
        if float(np.min(pot.phi(np.linspace(R, 4 * R + 10, 400)))) < level:
            return math.inf
        v, _ = _radial_integral(lambda r: math.exp(pref - b0 / mu2 * float(pot.phi(r))), d, R, math.inf)
        return v

    R = 1.0
    while tail(R) > tail_tol:
        R *= 2
        if R > R_max:
            raise RangeError("no truncation radius below R_max meets tail_tol")
    lo, hi = R / 2, R
    while hi - lo > 0.01 * hi:
        mid = 0.5 * (lo + hi)
        if tail(mid) > tail_tol:
            lo = mid
        else:
            hi = mid
    return hi


def dump_stationary(state: StationaryState, directory, stem: str = "stationary",
                    bound_report: BoundReport | None = None) -> tuple[Path, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    csv_path = write_field_csv(state.field, directory / f"{stem}.csv")
    side = {"mu": state.mu, "eps": state.eps,
            "mass_residual": state.field.mass - 1.0,
            "bound_report": bound_report.to_dict() if bound_report is not None else None,
            "report": state.report}
    json_path = directory / f"{stem}.json"
    json_path.write_text(json.dumps(side, indent=2, sort_keys=True, default=_jsonable))
    return csv_path, json_path


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x))
