import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nfpe.coefficients import make_builtin, log_quadratic_potential
from nfpe.errors import InvalidParameterError, NonConvergenceError
from nfpe.grid import DensityField, build_grid, bump, l1_distance, random_field
from nfpe.resolvent import ResolventOperator, apply_resolvent

POT = log_quadratic_potential(d=3)
GRID = build_grid(3, 20.0, 60)
CASES = {"boltzmann": 0.0, "remark33_log": 0.0, "nondegenerate": 0.0, "power_degenerate": 0.0}
OPS = {name: ResolventOperator(GRID, *make_builtin(name), POT, eps) for name, eps in CASES.items()}
seeds = st.integers(0, 2 ** 32 - 1)
lams = st.sampled_from([1e-3, 1e-2, 1e-1, 1.0])


def _linear_boltzmann(grid, pot, f, lam):
    """Direct solve of the linear scheme F = K max(1, e^-p) (x - e^p y)."""
    r = grid.r_mid
    K = grid.face_areas[1:-1] / np.diff(r)
    p = np.diff(pot.phi(r))
    c = K * np.maximum(1.0, np.exp(-p))
    N = grid.N
    A = np.diag(grid.cell_volumes)
    for i in range(N - 1):
        ex = math.exp(p[i])
        A[i, i] += lam * c[i]
        A[i, i + 1] -= lam * c[i] * ex
        A[i + 1, i] -= lam * c[i]
        A[i + 1, i + 1] += lam * c[i] * ex
    return np.linalg.solve(A, grid.cell_volumes * f)


@pytest.mark.parametrize("lam", [1e-3, 0.1, 10.0])
def test_boltzmann_matches_linear_solve(lam):
    op = OPS["boltzmann"]
    f = bump(GRID, 3.0, 1.0)
    u, rep = op.solve(f, lam)
    ref = _linear_boltzmann(GRID, POT, f.values, lam)
    np.testing.assert_allclose(u.values, ref, rtol=1e-9, atol=1e-14)
    assert rep.converged and not rep.fallback_used


def test_flux_first_order_consistency():
    # with beta = id the flux approaches -A (u' + phi' u) as the cells shrink
    diff, mob = make_builtin("boltzmann")
    errs = []
    for N in (200, 400, 800):
        g = build_grid(3, 10.0, N)
        op = ResolventOperator(g, diff, mob, POT)
        r = g.r_mid
        u = np.exp(-(r - 2.0) ** 2)
        F, _, _ = op.fluxes.evaluate(u, derivatives=False)
        rf = g.edges[1:-1]
        uf, du = np.exp(-(rf - 2.0) ** 2), -2 * (rf - 2.0) * np.exp(-(rf - 2.0) ** 2)
        exact = -g.face_areas[1:-1] * (du + POT.phi_prime(rf) * uf)
        errs.append(np.max(np.abs(F - exact)))
    assert errs[0] / errs[1] > 1.8 and errs[1] / errs[2] > 1.8


@pytest.mark.parametrize("name", list(CASES))
@given(seed=seeds, lam=lams)
def test_contraction(name, seed, lam):
    rng = np.random.default_rng(seed)
    f, g = random_field(GRID, rng), random_field(GRID, rng)
    op = OPS[name]
    uf, _ = op.solve(f, lam)
    ug, _ = op.solve(g, lam)
    assert l1_distance(uf, ug) <= l1_distance(f, g) + 1e-8


@pytest.mark.parametrize("name", list(CASES))
@given(seed=seeds, lam=lams)
def test_mass_and_positivity(name, seed, lam):
    f = random_field(GRID, np.random.default_rng(seed))
    u, rep = OPS[name].solve(f, lam)
    assert abs(u.mass - f.mass) <= 1e-10
    assert u.values.min() >= -1e-12
    assert rep.final_residual <= 1e-10


@pytest.mark.parametrize("name", ["boltzmann", "remark33_log"])
@given(seed=seeds, lam=lams)
def test_order_preserving(name, seed, lam):
    rng = np.random.default_rng(seed)
    f = random_field(GRID, rng)
    g = f.with_values(f.values + 0.05 * rng.random(GRID.N) * f.values.max())
    uf, _ = OPS[name].solve(f, lam)
    ug, _ = OPS[name].solve(g, lam)
    assert np.all(ug.values >= uf.values - 1e-10)


def test_zero_is_fixed():
    u, rep = OPS["remark33_log"].solve(DensityField(np.zeros(GRID.N), GRID), 0.1)
    assert not np.any(u.values) and rep.converged


def test_signed_data_contract():
    rng = np.random.default_rng(3)
    f = random_field(GRID, rng)
    g = random_field(GRID, rng)
    d = f - g
    op = OPS["boltzmann"]
    u, _ = op.solve(d, 0.1)
    assert abs(u.mass - d.mass) < 1e-12
    assert u.l1() <= d.l1() + 1e-10


def test_regularized_solve_and_report():
    diff, mob = make_builtin("remark33_log")
    f = bump(GRID, 2.0, 0.5)
    u, rep = apply_resolvent(f, 0.05, diff, mob, POT, eps=1e-3)
    assert rep.eps_effective == 1e-3
    d = rep.to_dict()
    assert {"iterations", "final_residual", "damping_events", "fallback_used"} <= set(d)


def test_compact_equilibrium_is_fixed_when_g_finite_at_zero():
    op = OPS["power_degenerate"]
    assert op.eps_effective == 0.0 and op.fluxes.vacuum is not None
    cp = op.cp
    mu = float(cp(0.5)) + float(POT.phi(0.0))
    a = cp.inverse(mu - POT.phi(GRID.r_mid))
    assert a[0] > 0 and a[-1] == 0.0
    assert np.abs(op.residual(a, a, 0.5)).sum() < 1e-12
    u, _ = op.solve(DensityField(a, GRID), 0.5)
    np.testing.assert_allclose(u.values, a, atol=1e-12)


def test_invalid_arguments():
    f = bump(GRID, 2.0, 1.0)
    with pytest.raises(InvalidParameterError):
        OPS["boltzmann"].solve(f, 0.0)
    other = bump(build_grid(3, 21.0, 60), 2.0, 1.0)
    with pytest.raises(InvalidParameterError):
        OPS["boltzmann"].solve(other, 0.1)


def test_nonconvergence_is_reported():
    diff, mob = make_builtin("remark33_log")
    op = ResolventOperator(GRID, diff, mob, POT)
    f = bump(GRID, 1.0, 0.2)
    with pytest.raises(NonConvergenceError) as info:
        op.solve(f, 50.0, solver_tol=1e-30, max_iter=1, step=7)
    assert info.value.step == 7
    assert info.value.report is not None and info.value.report.fallback_used
