import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from nfpe.coefficients import (
    SamplingPlan, as_regularized, constant_mobility, constant_potential, make_builtin,
    log_quadratic_potential, saturating_mobility, unit_ball_volume, verify_hypotheses,
)
from nfpe.errors import InvalidParameterError

NAMES = ["boltzmann", "remark33_log", "nondegenerate", "power_degenerate"]
radii = st.floats(min_value=1e-6, max_value=50.0)


@pytest.mark.parametrize("name", NAMES)
def test_beta_odd_zero_at_origin(name):
    diff, _ = make_builtin(name)
    r = np.geomspace(1e-6, 100, 200)
    assert float(diff.beta(0.0)) == 0.0
    np.testing.assert_allclose(diff.beta(-r), -diff.beta(r), rtol=0, atol=1e-14)
    np.testing.assert_allclose(diff.beta_prime(-r), diff.beta_prime(r), rtol=0, atol=1e-14)


@pytest.mark.parametrize("name", NAMES)
@given(r=radii)
def test_beta_prime_matches_difference_quotient(name, r):
    diff, _ = make_builtin(name)
    h = 1e-6 * max(r, 1e-3)
    if any(abs(r - p) < 10 * h for p in diff.breakpoints):
        return
    fd = (float(diff.beta(r + h)) - float(diff.beta(r - h))) / (2 * h)
    assert fd == pytest.approx(float(diff.beta_prime(r)), rel=1e-5, abs=1e-7)


@pytest.mark.parametrize("name", ["boltzmann", "remark33_log", "nondegenerate"])
@given(r=st.floats(min_value=1e-4, max_value=30.0))
def test_log_integral_matches_quadrature(name, r):
    diff, _ = make_builtin(name)
    ref, _ = integrate.quad(lambda s: float(diff.beta_prime(s)) / s, 1.0, r,
                            points=[p for p in diff.breakpoints if min(1, r) < p < max(1, r)] or None,
                            epsabs=1e-12, limit=200)
    assert float(diff.log_integral(r)) == pytest.approx(ref, abs=1e-9)


def test_remark33_slope_near_zero(remark33):
    diff, _ = remark33
    s = np.array([1e-3, 1e-6, 1e-12])
    np.testing.assert_allclose(diff.beta_prime(s), -1.0 / np.log(s), rtol=1e-14)
    assert float(diff.beta_prime(0.0)) == 0.0


def test_nondegenerate_lower_bound(nondegenerate):
    diff, _ = nondegenerate
    r = np.geomspace(1e-8, 1e6, 1000)
    assert np.all(diff.beta_prime(r) >= 0.1 - 1e-15)
    assert float(diff.beta_prime(0.0)) == pytest.approx(0.1)


@given(eps=st.floats(min_value=0.0, max_value=1.0), r=st.floats(min_value=-100, max_value=100))
def test_regularization_adds_eps_slope(eps, r):
    diff, _ = make_builtin("remark33_log")
    rd = as_regularized(diff, eps)
    assert float(rd.beta(r)) == pytest.approx(float(diff.beta(r)) + eps * r, abs=1e-12)


def test_cap_is_affine_and_c1():
    diff, _ = make_builtin("power_degenerate")
    rd = as_regularized(diff, 0.0, 2.0)
    for M in (2.0, -2.0):
        lo, hi = M - 1e-7, M + 1e-7
        assert float(rd.beta(hi)) == pytest.approx(float(rd.beta(lo)), abs=1e-6)
    assert float(rd.beta_prime(5.0)) == pytest.approx(float(diff.beta_prime(2.0)))
    assert math.isfinite(rd.lipschitz_bound())


def test_regularization_rejects_bad_parameters():
    diff, _ = make_builtin("boltzmann")
    with pytest.raises(InvalidParameterError):
        as_regularized(diff, -0.1)
    with pytest.raises(InvalidParameterError):
        as_regularized(diff, 0.0, 0.5)


def test_unknown_builtin_and_params():
    with pytest.raises(InvalidParameterError):
        make_builtin("nope")
    with pytest.raises(InvalidParameterError):
        make_builtin("boltzmann", zeta=1.0)


def test_potential_is_c1_at_glue(pot):
    delta = pot.params["delta"]
    h = 1e-8
    assert float(pot.phi(delta + h)) == pytest.approx(float(pot.phi(delta - h)), abs=1e-7)
    assert float(pot.phi_prime(delta + h)) == pytest.approx(float(pot.phi_prime(delta - h)), abs=1e-6)
    # inner branch is r^2 log r + shift
    r = 0.3
    assert float(pot.phi(r)) == pytest.approx(r * r * math.log(r) + 2.0, rel=1e-14)


@given(r=st.floats(min_value=1e-3, max_value=100.0))
def test_potential_derivatives_consistent(r):
    pot = log_quadratic_potential(d=3)
    if abs(r - pot.params["delta"]) < 1e-4:
        return
    h = 1e-6 * max(r, 1.0)
    fd = (float(pot.phi(r + h)) - float(pot.phi(r - h))) / (2 * h)
    assert fd == pytest.approx(float(pot.phi_prime(r)), rel=1e-6, abs=1e-8)
    fd2 = (float(pot.phi_prime(r + h)) - float(pot.phi_prime(r - h))) / (2 * h)
    assert fd2 == pytest.approx(float(pot.phi_second(r)), rel=1e-5, abs=1e-6)


def test_potential_confines(pot):
    r = np.linspace(5, 500, 100)
    assert np.all(np.diff(pot.phi(r)) > 0)
    assert float(pot.phi_prime(1e4)) == pytest.approx(1.0, abs=1e-3)


def test_potential_rejects_low_dimension():
    with pytest.raises(InvalidParameterError):
        log_quadratic_potential(d=2)


def test_unit_ball_volume():
    assert unit_ball_volume(3) == pytest.approx(4 * math.pi / 3)
    assert unit_ball_volume(4) == pytest.approx(math.pi ** 2 / 2)


def test_mobility_builders():
    m = constant_mobility(2.0)
    assert float(m.b(3.0)) == 2.0 and m.constant == 2.0
    s = saturating_mobility(1.0, 2.0, 1.0)
    r = np.linspace(0, 50, 100)
    assert np.all(s.b(r) >= 1.0) and np.all(s.b(r) <= 2.0)
    with pytest.raises(InvalidParameterError):
        constant_mobility(0.0)


def test_hypotheses_boltzmann_structure(boltzmann, pot):
    diff, mob = boltzmann
    rep = verify_hypotheses(diff, mob, pot, SamplingPlan(n=2000))
    for name in ("beta_zero", "beta_prime_positive", "nu_range"):
        assert rep[name].passed
    # a confining potential has Delta Phi > 0 somewhere, so this inequality is reported as failed
    fails = {c.name for c in rep.failures()}
    assert fails, "expected at least one reported failure"
    for c in rep.failures():
        assert c.margin < 0 and c.witness is not None


def test_hypotheses_report_failure_not_raise(pot):
    diff, mob = make_builtin("power_degenerate")
    rep = verify_hypotheses(diff, mob, constant_potential(1.0), SamplingPlan(n=500))
    assert isinstance(rep.passed, bool)
    assert set(rep.to_dict()) == {c.name for c in rep.checks}
