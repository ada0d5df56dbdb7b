"""Euler-Maruyama particles for the McKean-Vlasov SDE with the density frozen from a PDE run.

``dX = b(u) (-grad Phi)(X) dt + sqrt(2 beta(u)/u) dW`` with ``u`` looked up in the
snapshot nearest in time, piecewise constant per cell.  Particles live in
blocks of fixed size, each with its own seed-sequence child, so results do not
depend on how blocks are distributed over threads.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .coefficients import as_regularized
from .errors import InvalidParameterError
from .grid import DensityField, RadialGrid

BLOCK = 10_000


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    positions: np.ndarray
    seed: int
    time: float

    def __post_init__(self):
        if self.positions.shape[0] == 0:
            raise InvalidParameterError("ensemble needs N > 0")
        if not np.all(np.isfinite(self.positions)):
            raise InvalidParameterError("non-finite particle position")


@dataclass(frozen=True, eq=False)
class ParticleResult:
    histogram: DensityField
    ensemble: ParticleEnsemble
    meta: dict = field(default_factory=dict)


def _worker_count(n_blocks: int, threads: int | None) -> int:
    cap = threads if threads is not None else int(os.environ.get("NFPE_THREADS", "1") or 1)
    return max(1, min(cap, n_blocks))


def sample_radial(u: DensityField, n: int, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF sampling of ``n`` points of the radial density ``u`` in R^d."""
    g = u.grid
    mass = g.cell_volumes * np.maximum(u.values, 0.0)
    cdf = np.cumsum(mass)
    if not cdf[-1] > 0:
        raise InvalidParameterError("cannot sample from a field without positive mass")
    cells = np.searchsorted(cdf, rng.random(n) * cdf[-1], side="right")
    cells = np.minimum(cells, g.N - 1)
    lo, hi = g.edges[cells] ** g.d, g.edges[cells + 1] ** g.d
    r = (lo + rng.random(n) * (hi - lo)) ** (1.0 / g.d)
    direction = rng.standard_normal((n, g.d))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    return direction * r[:, None]


def radial_histogram(positions: np.ndarray, grid: RadialGrid) -> DensityField:
    rho = np.linalg.norm(positions, axis=1)
    idx = np.clip(np.searchsorted(grid.edges, rho, side="right") - 1, 0, grid.N - 1)
    counts = np.bincount(idx, minlength=grid.N).astype(float)
    return DensityField(counts / (positions.shape[0] * grid.cell_volumes), grid)


def _run_block(x, rng, n_steps, dt, fields, snap_idx, grid, diff, mob, pot, eps_sigma):
    R = grid.R
    sq = math.sqrt(dt)
    for k in range(n_steps):
        u = fields[snap_idx[k]]
        rho = np.linalg.norm(x, axis=1)
        cell = np.clip(np.searchsorted(grid.edges, rho, side="right") - 1, 0, grid.N - 1)
        uc = u[cell]
        pos = uc > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            s2 = np.where(pos, 2.0 * diff.beta(uc) / np.where(pos, uc, 1.0), 0.0)
        s2 = np.maximum(s2, eps_sigma)
        speed = mob.b(np.maximum(uc, 0.0)) * (-pot.phi_prime(rho))
        with np.errstate(divide="ignore", invalid="ignore"):
            unit = np.where(rho[:, None] > 0, x / rho[:, None], 0.0)
        x = x + (speed * dt)[:, None] * unit + (np.sqrt(s2) * sq)[:, None] * rng.standard_normal(x.shape)
        rho = np.linalg.norm(x, axis=1)
        out = rho > R
        if np.any(out):
            new = 2 * R - rho[out]
            new = np.clip(new, 0.0, R * (1 - 1e-12))
            x[out] *= (new / rho[out])[:, None]
    return x


def simulate_particles(traj, N: int, dt: float, T: float, seed: int,
                       eps_sigma: float = 1e-12, hist_grid: RadialGrid | None = None,
                       threads: int | None = None) -> ParticleResult:
    """Histogram at time ``T`` of ``N`` particles started from the trajectory's initial field."""
    if not isinstance(N, (int, np.integer)) or N <= 0:
        raise InvalidParameterError(f"particle count must be a positive integer, got {N}")
    if not dt > 0 or not T >= 0:
        raise InvalidParameterError("need dt > 0 and T >= 0")
    t_end = traj.snapshot_times[-1]
    if T > t_end + 1e-9:
        raise InvalidParameterError(f"trajectory covers [0, {t_end}] but T = {T}")
    ctx = traj.context
    diff = as_regularized(ctx["diff"], ctx.get("eps", 0.0), ctx.get("M", math.inf))
    mob, pot = ctx["mob"], ctx["pot"]
    grid = traj.snapshots[0].grid
    n_steps = int(math.ceil(T / dt - 1e-9))
    st = np.asarray(traj.snapshot_times)
    times = np.arange(n_steps) * dt
    snap_idx = np.abs(times[:, None] - st[None, :]).argmin(axis=1) if n_steps else np.zeros(0, int)
    fields = [s.values for s in traj.snapshots]

    n_blocks = -(-N // BLOCK)
    children = np.random.SeedSequence(seed).spawn(n_blocks)
    sizes = [min(BLOCK, N - b * BLOCK) for b in range(n_blocks)]

    def job(b):
        rng = np.random.Generator(np.random.PCG64(children[b]))
        x0 = sample_radial(traj.snapshots[0], sizes[b], rng)
        return _run_block(x0, rng, n_steps, dt, fields, snap_idx, grid, diff, mob, pot, eps_sigma)

    workers = _worker_count(n_blocks, threads)
    if workers == 1:
        blocks = [job(b) for b in range(n_blocks)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            blocks = list(ex.map(job, range(n_blocks)))
    x = np.concatenate(blocks, axis=0)
    hist = radial_histogram(x, hist_grid or grid)
    meta = {"N": int(N), "dt": dt, "T": T, "seed": int(seed), "steps": n_steps,
            "blocks": n_blocks, "block_size": BLOCK, "eps_sigma": eps_sigma}
    return ParticleResult(histogram=hist, ensemble=ParticleEnsemble(x, int(seed), n_steps * dt), meta=meta)
