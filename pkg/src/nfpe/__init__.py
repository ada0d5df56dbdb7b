"""Radial finite-volume laboratory for degenerate nonlinear Fokker-Planck equations."""

__version__ = "0.1.0"

from .coefficients import make_builtin, log_quadratic_potential, verify_hypotheses  # noqa: E402
from .grid import DensityField, RadialGrid, build_grid, field_norms, normalize, project  # noqa: E402
from .resolvent import apply_resolvent  # noqa: E402
from .semigroup import evolve, exponential_formula_probe  # noqa: E402
from .stationary import g_eval, g_inverse, solve_mu, stationary_limit, stationary_state  # noqa: E402

__all__ = [
    "make_builtin", "log_quadratic_potential", "verify_hypotheses", "DensityField", "RadialGrid",
    "build_grid", "field_norms", "normalize", "project", "apply_resolvent", "evolve",
    "exponential_formula_probe", "g_eval", "g_inverse", "solve_mu", "stationary_limit",
    "stationary_state",
]
