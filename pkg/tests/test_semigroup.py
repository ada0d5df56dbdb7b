import json
import math

import numpy as np
import pytest

from nfpe.coefficients import make_builtin, log_quadratic_potential
from nfpe.errors import InvalidParameterError
from nfpe.grid import bump, build_grid, l1_distance
from nfpe.semigroup import (
    DIAG_COLUMNS, auto_step, continue_trajectory, evolve, exponential_formula_probe,
    write_trajectory,
)
from nfpe.stationary import stationary_state

POT = log_quadratic_potential(d=3)
GRID = build_grid(3, 25.0, 120)


@pytest.fixture(scope="module", params=["boltzmann", "remark33_log", "nondegenerate", "power_degenerate"])
def run(request):
    diff, mob = make_builtin(request.param)
    eps = 0.0
    a = None
    if request.param != "power_degenerate":
        a = stationary_state(diff, mob, POT, GRID, eps=eps, sampling="point")
    u0 = bump(GRID, 4.0, 1.0)
    return request.param, evolve(u0, 1.0, 0.05, diff, mob, POT, eps, stride=5, stationary=a)


def test_mass_positivity_and_monotone_quantities(run):
    name, traj = run
    d = traj.diagnostics
    assert np.max(np.abs(d["mass"] - 1.0)) <= 1e-10
    assert min(s.values.min() for s in traj.snapshots) >= -1e-12
    assert np.all(np.diff(d["V"]) <= 1e-8)
    if name != "power_degenerate":
        assert np.all(np.diff(d["dist_to_a"]) <= 1e-8)
        assert np.all(np.diff(d["weighted"]) <= 1e-8)


def test_record_layout(run):
    _, traj = run
    assert len(traj.times) == 21 and traj.times[-1] == pytest.approx(1.0)
    assert traj.snapshot_times == pytest.approx([0.0, 0.25, 0.5, 0.75, 1.0])
    assert set(traj.diagnostics) == set(DIAG_COLUMNS)
    assert traj.step_tolerance() <= 1e-10


def test_stationary_start_stays_put():
    diff, mob = make_builtin("remark33_log")
    a = stationary_state(diff, mob, POT, GRID, eps=1e-3, sampling="point")
    traj = evolve(a.field, 1.0, 0.1, diff, mob, POT, 1e-3, stationary=a, with_energy=False)
    assert np.max(traj.diagnostics["dist_to_a"]) <= 1e-10


def test_semigroup_property_in_steps():
    diff, mob = make_builtin("nondegenerate")
    u0 = bump(GRID, 3.0, 1.0)
    full = evolve(u0, 1.0, 0.1, diff, mob, POT, with_energy=False)
    half = evolve(u0, 0.5, 0.1, diff, mob, POT, with_energy=False)
    rest = continue_trajectory(half, half.final, 0.5)
    assert l1_distance(rest, full.final) <= 1e-12


def test_exponential_formula_boltzmann():
    diff, mob = make_builtin("boltzmann")
    res = exponential_formula_probe(bump(GRID, 3.0, 1.0), 1.0, [4, 8, 16, 32], diff, mob, POT)
    assert res.decreasing
    ratios = [a / b for a, b in zip(res.gaps, res.gaps[1:])]
    assert all(1.6 < r < 2.4 for r in ratios)  # first order in t/n


def test_auto_step_returns_working_step():
    diff, mob = make_builtin("boltzmann")
    assert auto_step(bump(GRID, 3.0, 1.0), diff, mob, POT, h0=0.2) == 0.2


def test_step_validation():
    diff, mob = make_builtin("boltzmann")
    with pytest.raises(InvalidParameterError):
        evolve(bump(GRID, 3.0, 1.0), 1.0, 0.0, diff, mob, POT)
    with pytest.raises(InvalidParameterError):
        exponential_formula_probe(bump(GRID, 3.0, 1.0), 1.0, [0], diff, mob, POT)


def test_write_trajectory(tmp_path, run):
    _, traj = run
    paths = write_trajectory(traj, tmp_path, "t")
    head = (tmp_path / "t_diagnostics.csv").read_text().splitlines()
    assert head[0] == ",".join(DIAG_COLUMNS) and len(head) == 22
    meta = json.loads((tmp_path / "t.json").read_text())
    assert meta["params"]["steps"] == 20
    assert len([p for p in paths if "snap" in p.name]) == len(traj.snapshots)
