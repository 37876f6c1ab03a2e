import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from blowuplab.errors import ConfigurationError, DomainError
from blowuplab.profiles import (BACKWARD, BLOWUP_IN_RHO, COLLAPSE, FORWARD, GLOBAL_DECAY, STEADY, ProfileFamily,
                                bracket_c_sharp, find_backward_profiles, fit_tail, forward_tail_constant,
                                map_alpha_to_C, residual, scaled_steady, shoot, singular_profile, solve_forward_beta,
                                steady_closed_form)
from blowuplab.sturm import zero_number


def test_family_validation():
    with pytest.raises(ConfigurationError):
        ProfileFamily("sideways", 3)
    with pytest.raises(ConfigurationError):
        ProfileFamily(BACKWARD, 2.5)


def test_backward_zero_center_is_the_zero_solution():
    s = shoot(ProfileFamily(BACKWARD, 3), 0.0, 10.0)
    assert s.outcome == GLOBAL_DECAY
    assert np.max(np.abs(s.values)) == 0.0


@pytest.mark.parametrize("N", [1, 2])
def test_steady_closed_forms(N):
    s = shoot(ProfileFamily(STEADY, N), 0.0, 10.0)
    assert np.max(np.abs(s.values - steady_closed_form(N, s.rho))) < 1e-6


def test_closed_form_two_dimensions_value():
    assert steady_closed_form(2, np.array([2.0]))[0] == pytest.approx(-2 * math.log(1.5))
    with pytest.raises(DomainError):
        steady_closed_form(3, np.array([1.0]))


@pytest.mark.parametrize("kind", [BACKWARD, FORWARD, STEADY])
def test_singular_profile_residual_is_second_order(kind):
    fam = ProfileFamily(kind, 3)
    res = []
    for h in (0.02, 0.01, 0.005):
        rho = np.arange(0.5, 5.0 + 0.5 * h, h)
        res.append(residual(fam, rho, singular_profile(3, rho)))
    rates = [math.log2(res[0] / res[1]), math.log2(res[1] / res[2])]
    assert all(1.8 <= r <= 2.2 for r in rates)


def test_residual_on_nonuniform_samples():
    fam = ProfileFamily(STEADY, 2)
    res = []
    for n in (100, 200, 400):
        rho = np.geomspace(0.1, 5.0, n)
        res.append(residual(fam, rho, steady_closed_form(2, rho)))
    assert math.log2(res[1] / res[2]) == pytest.approx(2.0, abs=0.2)


def test_residual_domain_errors():
    fam = ProfileFamily(BACKWARD, 3)
    rho = np.linspace(0.0, 1.0, 11)
    with pytest.raises(DomainError):
        residual(fam, rho, np.zeros_like(rho))
    with pytest.raises(DomainError):
        residual(fam, rho, np.zeros_like(rho), window=(0.55, 0.6))
    with pytest.raises(DomainError):
        singular_profile(3, np.array([0.0]))
    with pytest.raises(DomainError):
        singular_profile(2, np.array([1.0]))


@pytest.mark.parametrize("kind", [BACKWARD, FORWARD, STEADY])
def test_series_launch_matches_integration(kind):
    fam = ProfileFamily(kind, 3)
    s = shoot(fam, 0.7, 2.0, tol=1e-12)
    r = 1e-3
    F = float(fam.forcing(0.7))
    # second order series plus the quartic term scale
    assert s(np.array([r]))[0] == pytest.approx(0.7 - F * r * r / 6, abs=1e-9)
    assert s.derivative(np.array([0.0]))[0] == 0.0
    assert s(np.array([0.0]))[0] == 0.7


def test_shot_evaluation_outside_interval():
    s = shoot(ProfileFamily(STEADY, 2), 0.0, 3.0)
    with pytest.raises(DomainError):
        s(np.array([4.0]))


@pytest.mark.parametrize("a", [-1.0, 1.0, 2.0])
def test_steady_scaling_covariance(a):
    base = shoot(ProfileFamily(STEADY, 3), 0.0, 20.0, tol=1e-12)
    direct = shoot(ProfileFamily(STEADY, 3), a, 5.0, tol=1e-12)
    scaled = scaled_steady(base, a)
    rho = np.linspace(0.0, 5.0, 101)
    np.testing.assert_allclose(direct(rho), scaled(rho), atol=1e-7)


@pytest.mark.parametrize("a,b", [(0.0, -1.0), (0.0, 1.0), (1.0, 2.0), (-1.0, 2.0), (0.5, -0.5)])
def test_steady_profiles_cross(a, b):
    rho = np.linspace(0.0, 15.0, 3001)
    pa = shoot(ProfileFamily(STEADY, 3), a, 15.0)(rho)
    pb = shoot(ProfileFamily(STEADY, 3), b, 15.0)(rho)
    assert zero_number(pa - pb).count >= 1


def test_outcomes_of_extreme_shots():
    assert shoot(ProfileFamily(BACKWARD, 3), 30.0, 10.0).outcome in (BLOWUP_IN_RHO, COLLAPSE)
    # an untuned negative center falls off the logarithmic tail
    s = shoot(ProfileFamily(BACKWARD, 3), -5.0, 10.0)
    assert s.outcome == COLLAPSE and s.tail_constant is None


def test_alpha_map_rows():
    rows = map_alpha_to_C([0.0, 1.0], N=3)
    assert rows[0].trivial and rows[0].C_alpha is None
    assert not rows[1].trivial
    assert map_alpha_to_C([1.0], N=12)[0].exploratory


def test_fit_tail_recovers_model():
    rho = np.linspace(5.0, 10.0, 50)
    C, b, rms = fit_tail(rho, -2 * np.log(rho) + 0.3 + 1.7 / rho ** 2)
    assert C == pytest.approx(0.3, abs=1e-12) and b == pytest.approx(1.7, abs=1e-10) and rms < 1e-12


def test_first_backward_profile():
    found = find_backward_profiles(3, alpha_range=(5.0, 6.0), grid=6)
    assert len(found) == 1
    alpha, sol = found[0]
    assert alpha == pytest.approx(5.5151227846, abs=1e-6)
    assert sol.tail_constant == pytest.approx(0.28648, abs=2e-3)
    # the profile meets the singular one at least twice
    rho = sol.rho[sol.rho > 0.05]
    assert zero_number(sol(rho) - singular_profile(3, rho)).count >= 2


def test_forward_tail_constant_and_inverse():
    c = forward_tail_constant(3, 0.0)
    assert math.isfinite(c)
    beta, sol = solve_forward_beta(3, 0.8, beta_range=(-1.0, 2.0), grid=13)
    assert beta == pytest.approx(0.58204, abs=1e-4)
    assert sol.tail_constant == pytest.approx(0.8, abs=1e-8)


def test_threshold_brackets_nest():
    kw = dict(beta_range=(-1.0, 2.0), grid=13)
    coarse = bracket_c_sharp(3, tol=1e-2, **kw)
    fine = bracket_c_sharp(3, tol=1e-3, **kw)
    assert not coarse.flags and not fine.flags
    assert coarse.c_lo <= fine.c_lo <= fine.c_hi <= coarse.c_hi
    assert fine.above_lower_bound
    assert fine.c_lo == pytest.approx(0.9147, abs=2e-3)


def test_threshold_domain():
    with pytest.raises(DomainError):
        bracket_c_sharp(2)


@settings(max_examples=20, deadline=None)
@given(a=st.floats(-2.0, 2.0), rho=st.floats(0.1, 4.0))
def test_steady_closed_form_scaling_in_two_dimensions(a, rho):
    # psi_a(rho) = a + psi(e^{a/2} rho) solves the same steady equation
    psi_a = scaled_steady(lambda x: steady_closed_form(2, x), a)
    rr = rho + np.linspace(-0.05, 0.05, 201)
    assert residual(ProfileFamily(STEADY, 2), rr, psi_a(rr)) < 1e-3


@settings(max_examples=20, deadline=None)
@given(c=st.floats(-3.0, 3.0))
def test_tail_constant_of_shifted_singular_tail(c):
    rho = np.linspace(10.0, 20.0, 200)
    assert fit_tail(rho, -2 * np.log(rho) + c)[0] == pytest.approx(c, abs=1e-10)
