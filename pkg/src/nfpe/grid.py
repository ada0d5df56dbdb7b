"""Radial finite-volume grids on a truncated ball and the densities living on them."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .coefficients import PotentialSpec, unit_ball_volume
from .errors import InvalidParameterError


@dataclass(frozen=True, eq=False)
class RadialGrid:
    d: int
    R: float
    N: int
    edges: np.ndarray
    omega: float

    @property
    def r_mid(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def cell_volumes(self) -> np.ndarray:
        return self.omega * (self.edges[1:] ** self.d - self.edges[:-1] ** self.d)

    @property
    def face_areas(self) -> np.ndarray:
        """Areas of all N+1 faces, boundary faces included."""
        return self.d * self.omega * self.edges ** (self.d - 1)

    @property
    def center_spacing(self) -> np.ndarray:
        """Distances between neighbouring cell midpoints (interior faces)."""
        return np.diff(self.r_mid)

    @property
    def total_volume(self) -> float:
        return self.omega * self.R ** self.d

    def compatible(self, other: "RadialGrid") -> bool:
        return self is other or (self.d == other.d and self.N == other.N
                                 and np.array_equal(self.edges, other.edges))


def build_grid(d: int, R: float, N: int, refine: float | None = None) -> RadialGrid:
    """Uniform grid on [0, R]; ``refine`` > 1 grades cells geometrically toward r = 0."""
    if d < 3:
        raise InvalidParameterError("d must be >= 3")
    if not R > 0:
        raise InvalidParameterError("R must be positive")
    if N < 2:
        raise InvalidParameterError("N >= 2 required")
    if refine is None or refine == 1:
        edges = np.linspace(0.0, R, N + 1)
    else:
        if refine <= 1:
            raise InvalidParameterError("refine ratio must exceed 1")
        q = refine ** (1.0 / (N - 1))
        widths = q ** np.arange(N)
        edges = np.concatenate([[0.0], np.cumsum(widths)])
        edges *= R / edges[-1]
    edges[-1] = R
    edges.setflags(write=False)
    return RadialGrid(d=d, R=float(R), N=int(N), edges=edges, omega=unit_ball_volume(d))


@dataclass(frozen=True, eq=False)
class DensityField:
    values: np.ndarray
    grid: RadialGrid

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.N,):
            raise InvalidParameterError(f"expected {self.grid.N} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidParameterError("density values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def with_values(self, values) -> "DensityField":
        return DensityField(values, self.grid)

    @property
    def mass(self) -> float:
        return float(np.dot(self.grid.cell_volumes, self.values))

    def l1(self) -> float:
        return float(np.dot(self.grid.cell_volumes, np.abs(self.values)))

    def __sub__(self, other: "DensityField") -> "DensityField":
        return DensityField(self.values - other.values, self.grid)

    def __add__(self, other: "DensityField") -> "DensityField":
        return DensityField(self.values + other.values, self.grid)

    def scaled(self, c: float) -> "DensityField":
        return DensityField(c * self.values, self.grid)


def l1_distance(u: DensityField, v: DensityField) -> float:
    if not u.grid.compatible(v.grid):
        raise InvalidParameterError("fields live on different grids")
    return float(np.dot(u.grid.cell_volumes, np.abs(u.values - v.values)))


def project(f, grid: RadialGrid) -> DensityField:
    """Midpoint-rule cell values of a radial profile ``f(r)``."""
    vals = np.broadcast_to(np.asarray(f(grid.r_mid), dtype=float), (grid.N,))
    return DensityField(vals, grid)


def normalize(u: DensityField) -> DensityField:
    m = u.mass
    if not m > 0:
        raise InvalidParameterError(f"cannot normalize a field of mass {m}")
    return u.scaled(1.0 / m)


def field_norms(u: DensityField, pot: PotentialSpec | None = None) -> dict:
    V = u.grid.cell_volumes
    au = np.abs(u.values)
    out = {
        "mass": float(np.dot(V, u.values)),
        "l1": float(np.dot(V, au)),
        "linf": float(np.max(au)) if au.size else 0.0,
    }
    if pot is not None:
        if pot.d != u.grid.d:
            raise InvalidParameterError("potential dimension differs from grid dimension")
        out["weighted"] = float(np.dot(V, pot.phi(u.grid.r_mid) * au))
    return out


def bump(grid: RadialGrid, center: float, width: float, floor: float = 0.0) -> DensityField:
    """Normalized smooth bump ``exp(-((r-center)/width)^2)`` plus an optional floor."""
    r = grid.r_mid
    return normalize(DensityField(np.exp(-((r - center) / width) ** 2) + floor, grid))


def random_field(grid: RadialGrid, rng: np.random.Generator, r_max: float = 6.0) -> DensityField:
    """A normalized positive bump with random center, width and cell-wise noise."""
    center = rng.uniform(0.0, min(r_max, grid.R))
    width = rng.uniform(0.3, 2.0)
    r = grid.r_mid
    noise = 1.0 + 0.5 * rng.random(grid.N)
    return normalize(DensityField(np.exp(-((r - center) / width) ** 2) * noise, grid))


def write_field_csv(u: DensityField, path) -> Path:
    path = Path(path)
    g = u.grid
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cell_index", "r_mid", "volume", "value"])
        for i, (r, vol, val) in enumerate(zip(g.r_mid, g.cell_volumes, u.values)):
            w.writerow([i, repr(float(r)), repr(float(vol)), repr(float(val))])
    return path


def read_field_csv(path, grid: RadialGrid) -> DensityField:
    with Path(path).open() as fh:
        rows = list(csv.DictReader(fh))
    vals = np.array([float(row["value"]) for row in rows])
    return DensityField(vals, grid)


def gauss_cell_rule(grid: RadialGrid, order: int = 8,
                    breakpoints=()) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell Gauss-Legendre nodes and volume weights.

    Integrates ``int_cell f(|x|) dx = d omega int r^{d-1} f(r) dr`` to high
    order.  When ``breakpoints`` (radii where the integrand has a kink) are
    given, every cell is split in two sub-panels, at the kink when it falls
    inside the cell and at the midpoint otherwise; the shape becomes
    (N, 2*order).
    """
    x, w = np.polynomial.legendre.leggauss(order)
    lo, hi = grid.edges[:-1], grid.edges[1:]
    inner = [p for p in breakpoints if 0 < p < grid.R]
    if inner:
        cut = 0.5 * (lo + hi)
        for p in inner:
            cut = np.where((lo < p) & (p < hi), p, cut)
        lo = np.stack([lo, cut], axis=1).reshape(-1)
        hi = np.stack([cut, hi], axis=1).reshape(-1)
    half = 0.5 * (hi - lo)[:, None]
    nodes = lo[:, None] + half * (x[None, :] + 1.0)
    weights = grid.d * grid.omega * nodes ** (grid.d - 1) * half * w[None, :]
    return nodes.reshape(grid.N, -1), weights.reshape(grid.N, -1)


def shell_volume(d: int, r_lo: float, r_hi: float) -> float:
    return unit_ball_volume(d) * (r_hi ** d - r_lo ** d)


__all__ = [
    "RadialGrid", "DensityField", "build_grid", "project", "normalize", "field_norms",
    "l1_distance", "bump", "random_field", "write_field_csv", "read_field_csv", "gauss_cell_rule",
    "shell_volume",
]
