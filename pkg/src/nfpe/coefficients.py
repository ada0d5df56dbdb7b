"""Problem data: diffusion, mobility and confining potential.

All coefficient maps are vectorized (they accept scalars or numpy arrays).
Radial potentials are described by their profile ``phi(r)`` with
``Phi(x) = phi(|x|)`` and drift ``D = -grad Phi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special

from .errors import InvalidParameterError

Scalar = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class DiffusionSpec:
    """Nonlinear diffusion ``beta`` with its sandwich constants.

    ``log_integral`` is an optional closed form of ``int_1^r beta'(s)/s ds``;
    it lets the chemical-potential map skip tabulation when the mobility is
    constant. ``breakpoints`` lists radii where ``beta'`` is not smooth.
    """

    name: str
    beta: Scalar
    beta_prime: Scalar
    mu1: float
    mu2: float
    nu: float
    log_integral: Scalar | None = None
    breakpoints: tuple[float, ...] = ()
    params: dict = field(default_factory=dict, compare=False, hash=False)


@dataclass(frozen=True)
class MobilitySpec:
    b: Scalar
    b_prime: Scalar
    b0: float
    b_sup: float
    constant: float | None = None
    name: str = "custom"


@dataclass(frozen=True)
class PotentialSpec:
    phi: Scalar
    phi_prime: Scalar
    phi_second: Scalar
    m: float
    d: int
    name: str = "custom"
    breakpoints: tuple[float, ...] = ()
    params: dict = field(default_factory=dict, compare=False, hash=False)


@dataclass(frozen=True)
class RegularizedDiffusion:
    """``beta + eps*r`` on ``|r| <= M`` with the affine C^1 extension beyond."""

    base: DiffusionSpec
    eps: float = 0.0
    M: float = math.inf

    def __post_init__(self):
        if self.eps < 0 or self.eps > 1:
            raise InvalidParameterError(f"eps must lie in [0, 1], got {self.eps}")
        if not self.M >= 1:
            raise InvalidParameterError(f"M must be >= 1, got {self.M}")

    @property
    def capped(self) -> bool:
        return math.isfinite(self.M)

    def beta(self, r):
        r = np.asarray(r, dtype=float)
        out = self.base.beta(r) + self.eps * r
        if self.capped:
            M = self.M
            slope = float(self.base.beta_prime(M))
            hi = float(self.base.beta(M)) + slope * (r - M) + self.eps * r
            lo = float(self.base.beta(-M)) + slope * (r + M) + self.eps * r
            out = np.where(r > M, hi, np.where(r < -M, lo, out))
        return out

    def beta_prime(self, r):
        r = np.asarray(r, dtype=float)
        out = self.base.beta_prime(r) + self.eps
        if self.capped:
            slope = float(self.base.beta_prime(self.M))
            out = np.where(np.abs(r) > self.M, slope + self.eps, out)
        return out

    def log_integral(self):
        """Closed form of ``int_1^r beta_eps,M'(s)/s ds`` or None."""
        L = self.base.log_integral
        if L is None:
            return None
        eps, M = self.eps, self.M
        if not self.capped:
            if eps == 0:
                return L
            return lambda r: L(r) + eps * np.log(r)
        LM = float(L(M))
        slope = float(self.base.beta_prime(M))

        def capped(r):
            r = np.asarray(r, dtype=float)
            inner = L(np.minimum(r, M))
            outer = LM + slope * np.log(np.maximum(r, M) / M)
            return np.where(r > M, outer, inner) + eps * np.log(r)

        return capped

    @property
    def breakpoints(self) -> tuple[float, ...]:
        pts = tuple(self.base.breakpoints)
        if self.capped:
            pts = pts + (self.M,)
        return pts

    def lipschitz_bound(self) -> float:
        """Upper bound for the global Lipschitz constant when M is finite."""
        if not self.capped:
            return math.inf
        rr = np.linspace(-self.M, self.M, 20001)
        inner = float(np.max(self.base.beta_prime(rr)))
        return float(self.base.beta_prime(self.M)) + self.eps + inner


def as_regularized(diff, eps: float = 0.0, M: float = math.inf) -> RegularizedDiffusion:
    if isinstance(diff, RegularizedDiffusion):
        if eps == 0.0 and math.isinf(M):
            return diff
        return RegularizedDiffusion(diff.base, eps, M)
    return RegularizedDiffusion(diff, eps, M)


def _odd(profile):
    def f(r):
        r = np.asarray(r, dtype=float)
        return np.sign(r) * profile(np.abs(r))

    return f


def _even(profile):
    def f(r):
        r = np.asarray(r, dtype=float)
        return profile(np.abs(r))

    return f


def sandwich_constants(beta, nu: float, r_lo: float = 1e-12, r_hi: float = 1e6,
                       n: int = 40001, safety: float = 1e-9) -> tuple[float, float]:
    """Numerical (mu1, mu2) for ``mu1 min(r^nu, r) <= beta(r) <= mu2 r``."""
    r = np.union1d(np.geomspace(r_lo, r_hi, n), [1.0])  # min(r^nu, r) has its kink at 1
    b = beta(r)
    lower = b / np.minimum(r ** nu, r)
    mu1 = float(np.min(lower)) * (1 - safety)
    mu2 = float(np.max(b / r)) * (1 + safety)
    return mu1, mu2


# --- built-in diffusions --------------------------------------------------


def _boltzmann():
    return DiffusionSpec(
        name="boltzmann",
        beta=lambda r: np.asarray(r, dtype=float) * 1.0,
        beta_prime=lambda r: np.ones_like(np.asarray(r, dtype=float)),
        mu1=1.0,
        mu2=1.0,
        nu=1.0,
        log_integral=lambda r: np.log(r),
        params={},
    )


def _remark33_log(delta: float):
    if not 0 < delta < 1:
        raise InvalidParameterError(f"delta must lie in (0, 1), got {delta}")
    ld = math.log(delta)
    theta_d = -1.0 / ld
    B = 1.0 / ld ** 2  # matches theta'(delta) = 1/(delta log^2 delta)
    A = theta_d + B
    beta_d = float(-special.expi(ld))

    def theta(s):
        s = np.asarray(s, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            low = np.where(s > 0, -1.0 / np.log(np.where(s > 0, np.minimum(s, delta), 0.5)), 0.0)
        with np.errstate(over="ignore"):
            high = A - B * np.exp(-(s - delta) / delta)
        return np.where(s <= delta, low, high)

    def profile(r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            low = np.where(r > 0, -special.expi(np.log(np.where(r > 0, np.minimum(r, delta), 1.0))), 0.0)
        high = beta_d + A * (r - delta) - B * delta * (1.0 - np.exp(-(r - delta) / delta))
        return np.where(r <= delta, low, high)

    L_delta = A * ld + B * math.e * (special.exp1(1.0) - special.exp1(1.0 / delta))
    E1_norm = float(special.exp1(1.0 / delta))
    lld = math.log(-ld)

    def log_integral(r):
        r = np.asarray(r, dtype=float)
        rl = np.maximum(r, delta)
        with np.errstate(over="ignore"):
            high = A * np.log(rl) + B * math.e * (special.exp1(rl / delta) - E1_norm)
        rs = np.minimum(r, delta)
        with np.errstate(divide="ignore"):
            low = L_delta - np.log(-np.log(rs)) + lld
        return np.where(r <= delta, low, high)

    beta = _odd(profile)
    mu1, _ = sandwich_constants(beta, 2.0)
    return DiffusionSpec(
        name="remark33_log",
        beta=beta,
        beta_prime=_even(theta),
        mu1=mu1,
        mu2=A,
        nu=2.0,
        log_integral=log_integral,
        breakpoints=(delta,),
        params={"delta": delta, "zeta_sup": A, "zeta_gap": B},
    )


def _power_degenerate(nu: float, r0: float, scale: float, d: int):
    if not nu > (d - 1) / d:
        raise InvalidParameterError(f"nu must exceed (d-1)/d = {(d - 1) / d:.4f}, got {nu}")
    if r0 <= 0 or scale <= 0:
        raise InvalidParameterError("r0 and scale must be positive")
    slope = scale * nu * r0 ** (nu - 1)
    b_r0 = scale * r0 ** nu

    def profile(r):
        r = np.asarray(r, dtype=float)
        inner = scale * np.minimum(r, r0) ** nu
        return np.where(r <= r0, inner, b_r0 + slope * (r - r0))

    def dprofile(r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            inner = scale * nu * np.minimum(r, r0) ** (nu - 1)
        return np.where(r <= r0, inner, slope)

    def antider(s):
        # antiderivative of beta'(s)/s
        s = np.asarray(s, dtype=float)
        sl = np.minimum(s, r0)
        with np.errstate(divide="ignore"):
            if nu == 1:
                inner = scale * np.log(sl)
            else:
                inner = scale * nu * sl ** (nu - 1) / (nu - 1)
        at_r0 = scale * math.log(r0) if nu == 1 else scale * nu * r0 ** (nu - 1) / (nu - 1)
        outer = at_r0 + slope * np.log(np.maximum(s, r0) / r0)
        return np.where(s <= r0, inner, outer)

    P1 = float(antider(1.0))

    beta = _odd(profile)
    if nu >= 1:
        mu1, _ = sandwich_constants(beta, nu)
        mu2 = slope
    else:
        mu1, mu2 = sandwich_constants(beta, nu)
        mu2 = math.inf  # beta(r)/r is unbounded near 0
    return DiffusionSpec(
        name="power_degenerate",
        beta=beta,
        beta_prime=_even(dprofile),
        mu1=mu1,
        mu2=mu2,
        nu=float(nu),
        log_integral=lambda r: antider(r) - P1,
        breakpoints=(r0,),
        params={"nu": nu, "r0": r0, "scale": scale},
    )


def _nondegenerate(gamma: float):
    if not 0 < gamma < 1:
        raise InvalidParameterError(f"gamma must lie in (0, 1), got {gamma}")
    c = 1.0 - gamma

    def profile(r):
        r = np.asarray(r, dtype=float)
        return r - c * r / (1.0 + r)

    def dprofile(r):
        r = np.asarray(r, dtype=float)
        return 1.0 - c / (1.0 + r) / (1.0 + r)

    ref = math.log(0.5) + 0.5

    def log_integral(r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            return np.log(r) - c * (np.log(r / (1.0 + r)) + 1.0 / (1.0 + r) - ref)

    return DiffusionSpec(
        name="nondegenerate",
        beta=_odd(profile),
        beta_prime=_even(dprofile),
        mu1=gamma,
        mu2=1.0,
        nu=1.0,
        log_integral=log_integral,
        params={"gamma": gamma},
    )


def constant_mobility(value: float = 1.0) -> MobilitySpec:
    if value <= 0:
        raise InvalidParameterError("mobility constant must be positive")
    return MobilitySpec(
        b=lambda r: np.full_like(np.asarray(r, dtype=float), value),
        b_prime=lambda r: np.zeros_like(np.asarray(r, dtype=float)),
        b0=value,
        b_sup=value,
        constant=value,
        name="constant",
    )


def saturating_mobility(b0: float = 1.0, b1: float = 2.0, k: float = 1.0) -> MobilitySpec:
    """``b(r) = b0 + (b1 - b0) r/(k + r)`` for r >= 0, even extension."""
    if not (0 < b0 <= b1) or k <= 0:
        raise InvalidParameterError("need 0 < b0 <= b1 and k > 0")

    def b(r):
        r = np.abs(np.asarray(r, dtype=float))
        return b0 + (b1 - b0) * r / (k + r)

    def bp(r):
        r = np.asarray(r, dtype=float)
        return np.sign(r) * (b1 - b0) * k / (k + np.abs(r)) ** 2

    return MobilitySpec(b=b, b_prime=bp, b0=b0, b_sup=b1, name="saturating")


def make_builtin(name: str, **params) -> tuple[DiffusionSpec, MobilitySpec]:
    """Built-in coefficient pairs.

    ``boltzmann``: beta(r) = r.  ``remark33_log``: beta' = -1/log s near 0
    (param ``delta``).  ``power_degenerate``: c|r|^nu near 0 with a linear
    C^1 extension beyond ``r0``.  ``nondegenerate``: beta' >= ``gamma``.
    Every family accepts ``b`` (constant mobility value, default 1).
    """
    b = params.pop("b", 1.0)
    d = params.pop("d", 3)
    if name == "boltzmann":
        diff = _boltzmann()
    elif name == "remark33_log":
        diff = _remark33_log(params.pop("delta", math.exp(-1.0)))
    elif name == "power_degenerate":
        diff = _power_degenerate(params.pop("nu", 3.0), params.pop("r0", 1.0),
                                 params.pop("scale", 1.0), d)
    elif name == "nondegenerate":
        diff = _nondegenerate(params.pop("gamma", 0.1))
    else:
        raise InvalidParameterError(f"unknown coefficient family {name!r}")
    if params:
        raise InvalidParameterError(f"unknown parameters for {name}: {sorted(params)}")
    return diff, constant_mobility(b)


# --- potentials -------------------------------------------------------------


def log_quadratic_potential(d: int = 3, shift: float = 2.0, eta: float = 1.0,
                    gamma1: float = 1.0, m: float | None = None) -> PotentialSpec:
    """The radial potential ``r^2 log r + shift`` glued C^1 to a linear far field.

    Beyond ``delta = exp(-(d+2)/(2d))`` the profile is
    ``varphi(r) + eta r + shift`` with ``varphi`` given in closed form.
    """
    if d < 3:
        raise InvalidParameterError("d must be >= 3")
    if eta <= 0 or gamma1 <= 0:
        raise InvalidParameterError("eta and gamma1 must be positive")
    delta = math.exp(-(d + 2) / (2 * d))
    k = d - 2
    c1 = d / (2 * delta + eta * d)
    c2 = delta / (gamma1 * k)
    a = c1 - c2
    if a <= 0:
        raise InvalidParameterError(
            f"gamma1 too small: need d/(2 delta + eta d) > delta/(gamma1 (d-2))")
    base = delta ** 2 * math.log(delta) - eta * delta
    log_ref = math.log(1.0 / (a + c2))

    def outer_t(r):
        return (np.maximum(r, delta) / delta) ** k

    def phi(r):
        r = np.abs(np.asarray(r, dtype=float))
        rs = np.minimum(r, delta)
        with np.errstate(divide="ignore", invalid="ignore"):
            inner = np.where(rs > 0, rs ** 2 * np.log(np.where(rs > 0, rs, 1.0)), 0.0)
        t = outer_t(r)
        far = base - (delta / (k * a)) * (np.log(t / (a + c2 * t)) - log_ref)
        return np.where(r <= delta, inner, far + eta * r) + shift

    def phi_prime(r):
        r = np.abs(np.asarray(r, dtype=float))
        rs = np.minimum(r, delta)
        with np.errstate(divide="ignore", invalid="ignore"):
            inner = np.where(rs > 0, rs * (2 * np.log(np.where(rs > 0, rs, 1.0)) + 1), 0.0)
        t = outer_t(r)
        rl = np.maximum(r, delta)
        far = eta - delta / (rl * (a + c2 * t))
        return np.where(r <= delta, inner, far)

    def phi_second(r):
        r = np.abs(np.asarray(r, dtype=float))
        rs = np.minimum(r, delta)
        with np.errstate(divide="ignore", invalid="ignore"):
            inner = np.where(rs > 0, 2 * np.log(np.where(rs > 0, rs, 1.0)) + 3, -np.inf)
        t = outer_t(r)
        rl = np.maximum(r, delta)
        q = a + c2 * t
        far = delta * (a + c2 * t * (1 + k)) / (rl ** 2 * q ** 2)
        return np.where(r <= delta, inner, far)

    return PotentialSpec(
        phi=phi, phi_prime=phi_prime, phi_second=phi_second,
        m=float(d + 1 if m is None else m), d=d, name="log_quadratic", breakpoints=(delta,),
        params={"shift": shift, "eta": eta, "gamma1": gamma1, "delta": delta},
    )


def constant_potential(value: float, d: int = 3, m: float = 4.0) -> PotentialSpec:
    """Flat potential; only meaningful for norm and hypothesis tests."""
    return PotentialSpec(
        phi=lambda r: np.full_like(np.asarray(r, dtype=float), value),
        phi_prime=lambda r: np.zeros_like(np.asarray(r, dtype=float)),
        phi_second=lambda r: np.zeros_like(np.asarray(r, dtype=float)),
        m=m, d=d, name="constant", params={"value": value},
    )


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


# --- hypothesis checks ------------------------------------------------------


@dataclass(frozen=True)
class SamplingPlan:
    n: int = 10_000
    r_min: float = 1e-8
    r_max: float = 1e4
    R: float = 50.0


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    margin: float
    witness: float | None = None


@dataclass(frozen=True)
class HypothesisReport:
    checks: tuple[CheckResult, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {c.name: {"passed": c.passed, "margin": c.margin, "witness": c.witness}
                for c in self.checks}


def _check(name: str, slack: np.ndarray, where: np.ndarray) -> CheckResult:
    """``slack >= 0`` everywhere means pass; record the worst sample."""
    slack = np.asarray(slack, dtype=float)
    bad = ~np.isfinite(slack)
    slack = np.where(bad, -np.inf, slack)
    i = int(np.argmin(slack))
    worst = float(slack[i])
    ok = worst >= 0
    return CheckResult(name, ok, worst, None if ok else float(where[i]))


def verify_hypotheses(diff, mob: MobilitySpec, pot: PotentialSpec,
                      samples: SamplingPlan | None = None) -> HypothesisReport:
    """Sample every structural inequality; failures are entries, not errors."""
    plan = samples or SamplingPlan()
    diff = as_regularized(diff)
    base = diff.base
    d = pot.d
    r = np.geomspace(plan.r_min, plan.r_max, plan.n)
    rr = np.concatenate([-r[::-1], r])

    checks = []
    b0_val = float(diff.beta(np.array(0.0)))
    checks.append(CheckResult("beta_zero", b0_val == 0.0, -abs(b0_val), None if b0_val == 0 else 0.0))
    checks.append(_check("beta_prime_positive", diff.beta_prime(rr), rr))
    nu_ok = base.nu > (d - 1) / d
    checks.append(CheckResult("nu_range", nu_ok, base.nu - (d - 1) / d, None))
    beta_abs = np.abs(diff.beta(rr))
    ar = np.abs(rr)
    checks.append(_check("sandwich_lower", beta_abs - base.mu1 * np.minimum(ar ** base.nu, ar), rr))
    checks.append(_check("sandwich_upper", base.mu2 * ar - beta_abs, rr))

    rb = np.concatenate([[0.0], r])
    bv = mob.b(rb)
    checks.append(_check("mobility_lower", bv - mob.b0, rb))
    checks.append(_check("mobility_upper", mob.b_sup - bv, rb))
    checks.append(CheckResult("mobility_b0_positive", mob.b0 > 0, mob.b0, None))

    rp = np.linspace(0.0, plan.R, plan.n)
    checks.append(_check("phi_ge_one", pot.phi(rp) - 1.0, rp))
    tail = np.geomspace(plan.R, 10 * plan.R, 64)
    grow = np.diff(pot.phi(tail))
    checks.append(_check("phi_tail_increasing", grow, tail[1:]))

    rq = rp[1:]
    lap = pot.phi_second(rq) + (d - 1) * pot.phi_prime(rq) / rq
    cond = base.mu2 * lap - mob.b0 * pot.phi_prime(rq) ** 2
    checks.append(_check("laplacian_gradient_condition", -cond, rq))

    omega = d * unit_ball_volume(d)
    with np.errstate(all="ignore"):
        val, err, *rest = integrate.quad(
            lambda s: omega * s ** (d - 1) * float(pot.phi(s)) ** (-pot.m),
            0, np.inf, limit=400, full_output=1)
    converged = len(rest) == 1
    finite = bool(np.isfinite(val) and np.isfinite(err) and err <= 1e-6 * max(1.0, abs(val)))
    checks.append(CheckResult("phi_power_integrable", finite and converged, -float(err), None if finite else math.inf))
    return HypothesisReport(tuple(checks))
