import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nfpe.coefficients import constant_potential
from nfpe.errors import InvalidParameterError
from nfpe.grid import (
    DensityField, build_grid, bump, field_norms, gauss_cell_rule, l1_distance, normalize,
    project, random_field, read_field_csv, shell_volume, write_field_csv,
)


@given(d=st.integers(3, 6), R=st.floats(1.0, 100.0), N=st.integers(2, 300),
       refine=st.one_of(st.none(), st.floats(1.5, 50.0)))
def test_cell_volumes_tile_the_ball(d, R, N, refine):
    g = build_grid(d, R, N, refine)
    assert g.edges[0] == 0.0 and g.edges[-1] == R
    assert np.all(np.diff(g.edges) > 0)
    assert g.cell_volumes.sum() == pytest.approx(g.total_volume, rel=1e-12)


def test_refine_grades_toward_origin():
    g = build_grid(3, 10.0, 50, refine=10.0)
    w = np.diff(g.edges)
    assert w[-1] / w[0] == pytest.approx(10.0, rel=1e-10)


@pytest.mark.parametrize("args", [(2, 1.0, 10), (3, 0.0, 10), (3, 1.0, 1)])
def test_build_grid_rejects(args):
    with pytest.raises(InvalidParameterError):
        build_grid(*args)


def test_field_validation(grid200):
    with pytest.raises(InvalidParameterError):
        DensityField(np.zeros(3), grid200)
    with pytest.raises(InvalidParameterError):
        DensityField(np.full(200, np.nan), grid200)
    u = DensityField(np.ones(200), grid200)
    with pytest.raises(ValueError):
        u.values[0] = 2.0


@given(seed=st.integers(0, 2 ** 32 - 1))
def test_normalize_and_metric(seed):
    g = build_grid(3, 20.0, 80)
    rng = np.random.default_rng(seed)
    u, v, w = (random_field(g, rng) for _ in range(3))
    assert u.mass == pytest.approx(1.0, abs=1e-13)
    assert l1_distance(u, u) == 0.0
    assert l1_distance(u, v) == pytest.approx(l1_distance(v, u))
    assert l1_distance(u, w) <= l1_distance(u, v) + l1_distance(v, w) + 1e-14
    assert l1_distance(u, v) <= 2.0 + 1e-12


def test_l1_distance_requires_same_grid():
    a, b = build_grid(3, 10.0, 10), build_grid(3, 11.0, 10)
    with pytest.raises(InvalidParameterError):
        l1_distance(DensityField(np.ones(10), a), DensityField(np.ones(10), b))


def test_normalize_zero_raises(grid200):
    with pytest.raises(InvalidParameterError):
        normalize(DensityField(np.zeros(200), grid200))


def test_constant_potential_norm(grid200):
    u = bump(grid200, 3.0, 1.0)
    n = field_norms(u, constant_potential(2.5))
    assert n["weighted"] == pytest.approx(2.5 * n["l1"])
    assert n["mass"] == pytest.approx(1.0)


def test_project_uses_midpoints(grid200):
    u = project(lambda r: r, grid200)
    np.testing.assert_array_equal(u.values, grid200.r_mid)


def test_csv_round_trip(tmp_path, grid200, rng):
    u = random_field(grid200, rng)
    p = write_field_csv(u, tmp_path / "u.csv")
    assert p.read_text().splitlines()[0] == "cell_index,r_mid,volume,value"
    v = read_field_csv(p, grid200)
    np.testing.assert_array_equal(u.values, v.values)


@pytest.mark.parametrize("bp", [(), (0.37,), (1.234,)])
def test_gauss_rule_integrates_radial_polynomials(bp):
    g = build_grid(3, 5.0, 13)
    x, w = gauss_cell_rule(g, 6, bp)
    for k in range(5):
        exact = 4 * math.pi * (g.edges[1:] ** (k + 3) - g.edges[:-1] ** (k + 3)) / (k + 3)
        np.testing.assert_allclose((w * x ** k).sum(axis=1), exact, rtol=1e-12)


def test_gauss_rule_handles_kink():
    g = build_grid(3, 2.0, 7)
    kink = 0.5
    f = lambda r: np.abs(r - kink)
    x, w = gauss_cell_rule(g, 8, (kink,))
    from scipy import integrate
    ref = [integrate.quad(lambda r: 4 * math.pi * r * r * f(r), a, b, points=[kink] if a < kink < b else None)[0]
           for a, b in zip(g.edges[:-1], g.edges[1:])]
    np.testing.assert_allclose((w * f(x)).sum(axis=1), ref, rtol=1e-12)


def test_shell_volume():
    assert shell_volume(3, 1.0, 2.0) == pytest.approx(4 * math.pi / 3 * 7)
