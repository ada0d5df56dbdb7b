"""Vectorized chemical-potential map ``g(r) = int_1^r beta'(s)/(s b(s)) ds``.

Everything is done in the logarithmic variable ``t = log r`` where the
integrand ``beta'(e^t)/b(e^t)`` is smooth even for the log-degenerate
diffusions (``beta'(s) = -1/log s`` becomes ``-1/t``).  A closed form is used
when the diffusion supplies one and the mobility is constant; otherwise the
map is tabulated by composite Gauss-Legendre quadrature with embedded error
control and evaluated exactly from the table plus a short panel.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .coefficients import MobilitySpec, RegularizedDiffusion, as_regularized
from .errors import QuadratureError, RangeError

T_LO = -708.0  # exp(T_LO) is still a normal double
T_HI = 709.0
TB_HI = 690.0  # the beta-integral grows like r, keep it representable
_X12, _W12 = np.polynomial.legendre.leggauss(12)
_X24, _W24 = np.polynomial.legendre.leggauss(24)
_X16, _W16 = np.polynomial.legendre.leggauss(16)


def _gl(fun, a, b, x, w):
    half = 0.5 * (b - a)
    nodes = a[:, None] + half[:, None] * (x[None, :] + 1.0)
    return half * (fun(nodes) @ w)


def _adaptive_panels(fun, nodes, tol, max_rounds=40):
    """Split panels until the 12/24-point Gauss pair agrees to ``tol``."""
    a, b = nodes[:-1].copy(), nodes[1:].copy()
    done_a, done_b, done_v = [], [], []
    for _ in range(max_rounds):
        coarse = _gl(fun, a, b, _X12, _W12)
        fine = _gl(fun, a, b, _X24, _W24)
        if not np.all(np.isfinite(fine)):
            raise QuadratureError("non-finite integrand value while tabulating")
        ok = np.abs(fine - coarse) <= tol * np.maximum(1.0, np.abs(fine))
        done_a.append(a[ok])
        done_b.append(b[ok])
        done_v.append(fine[ok])
        if ok.all():
            break
        a, b = a[~ok], b[~ok]
        if a.size > 200_000:
            break
        mid = 0.5 * (a + b)
        a, b = np.concatenate([a, mid]), np.concatenate([mid, b])
    else:
        raise QuadratureError("panel refinement did not reach the requested tolerance")
    pa = np.concatenate(done_a)
    order = np.argsort(pa)
    return pa[order], np.concatenate(done_b)[order], np.concatenate(done_v)[order]


class ChemicalPotential:
    """``g``, its derivative, inverse and the entropy density ``sigma``.

    ``sigma(r) = int_0^r g = r g(r) - int_0^r beta'(s)/b(s) ds``.
    """

    def __init__(self, diff: RegularizedDiffusion, mob: MobilitySpec, tol: float = 1e-14):
        self.diff = diff
        self.mob = mob
        L = diff.log_integral()
        self._closed = None
        if L is not None and mob.constant is not None:
            c = mob.constant
            self._closed = lambda r: L(r) / c
        self._tol = tol

        knots = {0.0}
        for p in diff.breakpoints:
            if p > 0:
                knots.add(math.log(p))
        base = np.concatenate([np.arange(T_LO, -40.0, 8.0), np.arange(-40.0, 40.0, 0.5),
                               np.arange(40.0, T_HI, 8.0), [T_HI]])
        nodes = np.unique(np.concatenate([base, sorted(knots)]))

        if self._closed is None:
            pa, pb, pv = _adaptive_panels(self._h, nodes, tol)
            self._t = np.concatenate([pa, [pb[-1]]])
            cum = np.concatenate([[0.0], np.cumsum(pv)])
            i0 = int(np.searchsorted(self._t, 0.0))
            self._G = cum - cum[i0]
        else:
            self._t = np.unique(np.concatenate([np.arange(T_LO, T_HI, 0.25), [T_HI], sorted(knots)]))
            self._G = self._closed(np.exp(self._t))

        if mob.constant is None:
            pa, pb, pv = _adaptive_panels(self._he, np.append(nodes[nodes < TB_HI], TB_HI), tol)
            self._tb = np.concatenate([pa, [pb[-1]]])
            self._B = np.concatenate([[0.0], np.cumsum(pv)])
        h_lo = float(self._h(np.array(T_LO)))
        self._h_lo = h_lo
        self.diverges_at_zero = diff.eps > 0 or abs(T_LO) * h_lo > 1e-3
        self.value_at_zero = -math.inf if self.diverges_at_zero else float(self._G[0])

    # integrands in t = log r
    def _h(self, t):
        r = np.exp(t)
        return self.diff.beta_prime(r) / self.mob.b(r)

    def _he(self, t):
        r = np.exp(t)
        return self.diff.beta_prime(r) / self.mob.b(r) * r

    def _g_of_t(self, t):
        t = np.asarray(t, dtype=float)
        if self._closed is not None:
            return self._closed(np.exp(t))
        k = np.clip(np.searchsorted(self._t, t, side="right") - 1, 0, len(self._t) - 2)
        t0 = self._t[k]
        flat = np.atleast_1d(t)
        return (self._G[k] + _gl(self._h, np.atleast_1d(t0).ravel(), flat.ravel(), _X16, _W16)
                .reshape(np.shape(t)))

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        pos = r > 0
        with np.errstate(divide="ignore"):
            t = np.log(np.where(pos, r, 1.0))
        if self._closed is not None:
            with np.errstate(divide="ignore"):
                val = self._closed(np.where(pos, r, 1.0))
        else:
            val = self._g_of_t(np.clip(t, T_LO, T_HI))
            # subnormal arguments: continue linearly in log r
            val = val + np.minimum(t - T_LO, 0.0) * self._h_lo
        return np.where(pos, val, self.value_at_zero)

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        return self.diff.beta_prime(r) / (r * self.mob.b(r))

    def inverse(self, y, underflow: str = "zero"):
        """Solve ``g(r) = y``; targets below ``g(exp(T_LO))`` map to 0.

        ``underflow='raise'`` turns those targets into a RangeError instead.
        """
        y = np.asarray(y, dtype=float)
        flat = y.ravel()
        out = np.zeros_like(flat)
        G, T = self._G, self._t
        if np.any(flat > G[-1]):
            raise RangeError(f"target {float(flat.max())} exceeds the representable range of g")
        low = flat < G[0]
        if np.any(low) and underflow == "raise":
            raise RangeError("target below the range of g")
        act = np.nonzero(~low)[0]
        if act.size:
            yy = flat[act]
            k = np.clip(np.searchsorted(G, yy, side="right") - 1, 0, len(T) - 2)
            lo, hi = T[k].copy(), T[k + 1].copy()
            glo, ghi = G[k], G[k + 1]
            span = ghi - glo
            frac = np.where(span > 0, (yy - glo) / np.where(span > 0, span, 1.0), 0.5)
            t = lo + np.clip(frac, 0.0, 1.0) * (hi - lo)
            idx = np.arange(act.size)
            for _ in range(100):
                F = self._g_of_t(t[idx]) - yy[idx]
                pos = F > 0
                hi[idx] = np.where(pos, t[idx], hi[idx])
                lo[idx] = np.where(pos, lo[idx], t[idx])
                dF = self._h(t[idx])
                with np.errstate(divide="ignore", invalid="ignore"):
                    step = np.where(dF > 0, F / dF, np.inf)
                cand = t[idx] - step
                inside = (cand > lo[idx]) & (cand < hi[idx])
                new = np.where(F == 0, t[idx], np.where(inside, cand, 0.5 * (lo[idx] + hi[idx])))
                delta = np.abs(new - t[idx])
                t[idx] = new
                conv = (delta <= 4e-16 * np.maximum(1.0, np.abs(new))) | (F == 0) | \
                    (hi[idx] - lo[idx] <= 4e-16 * np.maximum(1.0, np.abs(new)))
                idx = idx[~conv]
                if idx.size == 0:
                    break
            out[act] = np.exp(t)
        return out.reshape(y.shape)

    def transport(self, y, shift):
        """``g^{-1}(g(y) + shift)``, the equilibrium partner of ``y`` across a potential jump."""
        y = np.asarray(y, dtype=float)
        gy = self(np.maximum(y, 0.0))
        with np.errstate(invalid="ignore"):
            target = gy + shift
        target = np.where(np.isneginf(gy), -np.inf, target)
        return self.inverse(target)

    def beta_integral(self, r):
        """``int_0^r beta'(s)/b(s) ds`` for r >= 0."""
        r = np.asarray(r, dtype=float)
        if self.mob.constant is not None:
            return self.diff.beta(r) / self.mob.constant
        pos = r > 0
        with np.errstate(divide="ignore"):
            t = np.clip(np.log(np.where(pos, r, 1.0)), T_LO, TB_HI)
        k = np.clip(np.searchsorted(self._tb, t, side="right") - 1, 0, len(self._tb) - 2)
        flat = np.atleast_1d(t).ravel()
        val = self._B[np.atleast_1d(k).ravel()] + _gl(self._he, self._tb[np.atleast_1d(k).ravel()], flat, _X16, _W16)
        return np.where(pos, val.reshape(np.shape(t)), 0.0)

    def entropy_density(self, r):
        r = np.asarray(r, dtype=float)
        pos = r > 0
        rr = np.where(pos, r, 1.0)
        val = rr * self(rr) - self.beta_integral(rr)
        return np.where(pos, val, 0.0)


@lru_cache(maxsize=64)
def _cached(diff: RegularizedDiffusion, mob: MobilitySpec) -> ChemicalPotential:
    return ChemicalPotential(diff, mob)


def chemical_potential(diff, mob: MobilitySpec, eps: float = 0.0, M: float = math.inf) -> ChemicalPotential:
    return _cached(as_regularized(diff, eps, M), mob)
