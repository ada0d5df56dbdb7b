import numpy as np
import pytest
from hypothesis import given, strategies as st

from nfpe.coefficients import make_builtin, log_quadratic_potential
from nfpe.diagnostics import entropy_production, free_energy, omega_probe, write_omega_report
from nfpe.errors import InvalidParameterError
from nfpe.grid import DensityField, build_grid, bump, random_field
from nfpe.semigroup import evolve
from nfpe.stationary import stationary_state

POT = log_quadratic_potential(d=3)
GRID = build_grid(3, 25.0, 100)


def test_free_energy_parts(boltzmann):
    u = bump(GRID, 3.0, 1.0)
    V = free_energy(u, *boltzmann, POT)
    vals, vol = u.values, GRID.cell_volumes
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = np.where(vals > 0, vals * np.log(vals) - vals, 0.0)
    assert V.entropy == pytest.approx(float(vol @ ent), rel=1e-12)
    assert V.internal == pytest.approx(float(vol @ (POT.phi(GRID.r_mid) * vals)), rel=1e-12)
    assert V.total == pytest.approx(V.entropy + V.internal)


def test_free_energy_rejects_negative(boltzmann):
    u = DensityField(-np.ones(GRID.N), GRID)
    with pytest.raises(InvalidParameterError):
        free_energy(u, *boltzmann, POT)


@pytest.mark.parametrize("name", ["boltzmann", "remark33_log", "nondegenerate"])
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_entropy_production_finite(name, seed):
    diff, mob = make_builtin(name)
    u = random_field(GRID, np.random.default_rng(seed))
    assert np.isfinite(entropy_production(u, diff, mob, POT))


def test_entropy_production_vanishes_at_equilibrium_under_refinement(boltzmann):
    # the discrete current at the equilibrium is a first-order truncation error
    vals = []
    for N in (100, 200, 400):
        g = build_grid(3, 25.0, N)
        a = stationary_state(*boltzmann, POT, g, sampling="point")
        vals.append(abs(entropy_production(a.field, *boltzmann, POT)))
    assert vals[0] / vals[1] > 1.8 and vals[1] / vals[2] > 1.8


def test_omega_probe_on_converging_run(nondegenerate, tmp_path):
    a = stationary_state(*nondegenerate, POT, GRID, sampling="point")
    traj = evolve(bump(GRID, 3.0, 1.0), 4.0, 0.1, *nondegenerate, POT, stride=5,
                  stationary=a, with_energy=False)
    rep = omega_probe(traj, a, restart_horizon=1.0)
    assert rep.monotone_violations == 0
    assert all(b <= a_ + 1e-8 for a_, b in zip(rep.radii, rep.radii[1:]))
    assert len(rep.isometry_pairs) == 2
    for p in rep.isometry_pairs:
        # the semigroup is a contraction, so restarted distances cannot grow
        assert p["restarted_distance"] <= p["initial_distance"] + 1e-10
    path = write_omega_report(rep, tmp_path / "omega.json")
    assert path.exists()
