import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contactsys import (ONE, DeformationJet, Point, SearchConfig, find_systole, first_return_action,
                        invariant_upper_bound, noncritical_isosystolic_field, parse_field, systolic_volume)
from contactsys.errors import InvarianceError, RegularModelError
from contactsys.systole import (_series_pow, first_return_batch, fitted_exponent, set_threads,
                                volume_corrected_jet, volume_polynomial)

TWO_PI = 2 * math.pi


def test_round_hopf_systole_is_degenerate(hopf):
    est = find_systole(hopf, ONE)
    assert abs(est.value - TWO_PI) < 1e-9
    assert est.degenerate and "degenerate" in est.note
    assert est.orbit.closure_gap < 1e-8


def test_first_return_at_unit_density(hopf):
    x = Point("hopf1", [0.6, 0.0, 0.0, 0.8])
    y, tau, action = first_return_action(hopf, ONE, x)
    assert abs(tau - TWO_PI) < 1e-9 and abs(action - TWO_PI) < 1e-9
    assert np.max(np.abs(y.coords - x.coords)) < 1e-8


@settings(max_examples=10, deadline=None)
@given(st.floats(0.05, 1.5), st.floats(0, 2 * math.pi), st.floats(0, 2 * math.pi))
def test_action_equals_period_on_closed_orbits(a, b, c):
    # |z1|^2 + |z2|^2 = 1, so rho = 1.2 everywhere and every orbit is a slowed Hopf circle
    hopf_pt = np.array([math.cos(a) * math.cos(b), math.cos(a) * math.sin(b),
                        math.sin(a) * math.cos(c), math.sin(a) * math.sin(c)])
    from contactsys import HopfSphere
    M = HopfSphere(1)
    rho = parse_field("1 + 0.2*abs_z1sq + 0.2*abs_z2sq", "hopf1")   # constant 1.2 on S^3
    _, tau, action = first_return_action(M, rho, hopf_pt)
    assert abs(tau - 1.2 * TWO_PI) < 1e-8
    assert abs(action - tau) < 1e-8


@pytest.mark.parametrize("s", [-0.05, 0.05])
def test_invariant_perturbation_law(hopf, s):
    mu = parse_field("re_z1z2bar", "hopf1")
    est = find_systole(hopf, 1 + s * mu, SearchConfig(grid_size=600))
    assert abs(est.value - (1 - abs(s) / 2) * TWO_PI) < 1e-6
    bound = invariant_upper_bound(hopf, mu, s)
    assert est.value <= bound + est.error_budget


def test_upper_bound_needs_invariant_field(hopf):
    with pytest.raises(InvarianceError):
        invariant_upper_bound(hopf, parse_field("re_z1sq", "hopf1"), 0.1)
    assert invariant_upper_bound(hopf, parse_field("0", "hopf1"), 0.3) == TWO_PI


def test_systolic_volumes_are_integers(hopf, ut, rp2):
    assert abs(systolic_volume(hopf).value - 1.0) < 1e-8
    assert abs(systolic_volume(ut).value - 2.0) < 1e-8
    sv = systolic_volume(rp2)
    assert abs(sv.systole.value - math.pi) < 1e-8
    assert abs(sv.value - 4.0) < 1e-8


def test_systole_is_seed_stable(hopf):
    rho = parse_field("1 + 0.1*re_z1z2bar + 0.05*abs_z1sq", "hopf1")
    a = find_systole(hopf, rho, SearchConfig(grid_size=400, seed=0)).value
    b = find_systole(hopf, rho, SearchConfig(grid_size=400, seed=3)).value
    assert abs(a - b) < 1e-8


def test_threads_give_identical_returns(hopf):
    rho = parse_field("1 + 0.1*re_z1z2bar", "hopf1")
    X = hopf.random_points(520, np.random.default_rng(2))
    try:
        set_threads(1)
        one = first_return_batch(hopf, rho, X, strict=False)
        set_threads(2)
        two = first_return_batch(hopf, rho, X, strict=False)
    finally:
        set_threads(1)
    assert one.ok.sum() > 300
    assert np.array_equal(one.ok, two.ok)
    assert np.array_equal(one.action, two.action, equal_nan=True)
    assert np.array_equal(one.x_return, two.x_return, equal_nan=True)


def test_noncritical_rejects_zoll(ut):
    with pytest.raises(RegularModelError):
        noncritical_isosystolic_field(ut, 0.05, samples=200)


def test_series_power_matches_binomial():
    a = np.array([1.0, 0.3, -0.2, 0.05])
    s = 1e-2
    exact = np.polyval(a[::-1], s) ** (-0.5)
    approx = np.polyval(_series_pow(a, -0.5, 3)[::-1], s)
    assert abs(exact - approx) < 1e-8


def test_volume_corrected_jet_preserves_volume(hopf):
    jet = DeformationJet([ONE, parse_field("re_z1z2bar + 0.3*abs_z1sq", "hopf1"), parse_field("x1^2", "hopf1")])
    v = volume_polynomial(hopf, volume_corrected_jet(hopf, jet))
    assert np.all(np.abs(v[1:3]) / v[0] < 1e-12)


def test_fitted_exponent_recovers_power():
    s = np.array([0.025, 0.05, 0.075, 0.1])
    assert abs(fitted_exponent(s, 3.0 * s ** 2) - 2.0) < 1e-12
    assert fitted_exponent([0.1], [0.2]) == float("inf")
