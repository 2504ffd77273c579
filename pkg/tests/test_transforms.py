import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contactsys import (DeformationJet, ONE, ZERO, funk_transform, metric_to_contact_jet, parse_field,
                        reparametrize_jet, zero_energy_test)
from contactsys.errors import FormallyTrivialError, NonPositiveMetricError, NonRegularFlowError
from contactsys.manifolds import MetricSpec
from contactsys.transforms import (GreatCircle, SymmetricTensor2, conformal_family, conformal_tensor,
                                   direct_rho, funk_many, harmonic_tensor, homothety_family, lie_rotation,
                                   round_metric, zero_tensor)

NORTH = np.array([0.0, 0.0, 1.0])
Y20_NORTH = math.sqrt(5 / (4 * math.pi))


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def test_funk_of_constant_is_circumference():
    assert abs(funk_transform(ONE, unit([0.3, -1, 2])) - 2 * math.pi) < 1e-12


def test_funk_of_y20_at_north():
    # P_2(0) = -1/2
    got = funk_transform(parse_field("Y(2,0)", "ut"), NORTH)
    assert abs(got - (-math.pi * Y20_NORTH)) < 1e-12


def test_funk_rejects_non_unit_pole():
    with pytest.raises(ValueError):
        funk_transform(ONE, [0, 0, 2.0])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 6), st.floats(-1, 1), st.floats(0, 2 * math.pi))
def test_funk_is_legendre_multiplier(l, z, phi):
    # Funk-Hecke: funk(Y_l^m)(n) = 2 pi P_l(0) Y_l^m(n)
    r = math.sqrt(1 - z * z)
    n = np.array([r * math.cos(phi), r * math.sin(phi), z])
    m = min(l, 1)
    u = parse_field(f"Y({l},{m})", "ut")
    p0 = np.polynomial.legendre.legval(0.0, [0] * l + [1])
    from contactsys.fields import harmonic_evaluator
    want = 2 * math.pi * p0 * harmonic_evaluator(l, m)(*n)
    assert abs(funk_transform(u, n) - want) < 1e-10


@settings(max_examples=20, deadline=None)
@given(st.floats(-1, 1), st.floats(0, 2 * math.pi))
def test_funk_kills_odd_and_sees_even_part(z, phi):
    r = math.sqrt(1 - z * z)
    n = np.array([r * math.cos(phi), r * math.sin(phi), z])
    odd = parse_field("Y(1,0) - 0.7*Y(3,2) + x*y*z", "ut")
    even = parse_field("Y(2,0) + 0.4*Y(4,1)", "ut")
    assert abs(funk_transform(odd, n)) < 1e-10
    assert abs(funk_transform(odd + even, n) - funk_transform(even, n)) < 1e-10


def test_great_circle_lies_in_pole_plane():
    c = GreatCircle(unit([1, 2, 3]))
    t = np.linspace(0, 2 * math.pi, 17)
    assert np.max(np.abs(c(t) @ c.pole)) < 1e-14
    assert np.max(np.abs(np.linalg.norm(c.velocity(t), axis=1) - 1)) < 1e-14
    with pytest.raises(ValueError):
        GreatCircle([0, 0, 3.0])


def test_tensor_quadratic_homogeneity(rng):
    h = harmonic_tensor(2, 1) + lie_rotation([1.0, 0.0, 0.0])
    x = np.array([unit(rng.normal(size=3)) for _ in range(10)])
    v = np.cross(x, rng.normal(size=(10, 3)))
    assert np.max(np.abs(h(x, 2.5 * v) - 2.5 ** 2 * h(x, v))) < 1e-10


@pytest.mark.parametrize("axis", [[1, 0, 0], [0, 1, 0], [0.6, 0, 0.8]])
def test_killing_deformations_have_zero_energy(axis):
    res = zero_energy_test(lie_rotation(axis), samples=60, poles=60)
    assert res.max_abs < 1e-8


def test_zero_energy_of_conformal_y20():
    res = zero_energy_test(harmonic_tensor(2, 0), samples=0, poles=2000)
    # nearest Fibonacci pole sits at z ~ 1 - 1/2000, which costs ~3 pi Y20(north) / 2000
    assert abs(res.max_abs - math.pi * Y20_NORTH) < 5e-3
    assert isinstance(res.witness, GreatCircle)
    assert abs(res.witness.pole[2]) > 0.999


def test_zero_energy_of_zero_tensor():
    assert zero_energy_test(zero_tensor(), samples=20, poles=20).max_abs == 0.0


def test_zero_energy_on_zoll_revolution():
    metric = MetricSpec("revolution", h=parse_field("0.2*x*(1-x^2)", "profile"))
    res = zero_energy_test(zero_tensor(), metric=metric, samples=10)
    assert res.max_abs == 0.0


def test_zero_energy_rejects_non_zoll():
    metric = MetricSpec("revolution", h=parse_field("0.2*x^2*(1-x^2)", "profile"))
    with pytest.raises(NonRegularFlowError):
        zero_energy_test(zero_tensor(), metric=metric, samples=10)


def test_metric_jet_of_constant_family(ut, rng):
    jet = metric_to_contact_jet([round_metric(), zero_tensor(), zero_tensor()], 2)
    X = ut.random_points(20, rng)
    assert jet.order == 2
    assert np.max(np.abs(jet[1](X))) == 0.0 and np.max(np.abs(jet[2](X))) == 0.0


def test_metric_jet_of_homothety(ut, rng):
    jet = metric_to_contact_jet(homothety_family(), 2)
    X = ut.random_points(20, rng)
    assert np.max(np.abs(jet[1](X) - 1.0)) < 1e-12
    assert np.max(np.abs(jet[2](X))) < 1e-12


def test_metric_jet_first_coefficient_sign(ut, rng):
    # rho_1 = +1/2 gdot(#p, #p); conformal e^{s u}: rho_1 = u / 2
    u = parse_field("Y(2,0) + 0.3*Y(1,1)", "ut")
    X = ut.random_points(50, rng)
    jet = metric_to_contact_jet(conformal_family(u, 2), 2)
    assert np.max(np.abs(jet[1](X) - 0.5 * u(X))) < 1e-8
    assert np.max(np.abs(jet[2](X) - 0.125 * u(X) ** 2)) < 1e-8


def test_metric_jet_against_direct_inversion(ut, rng):
    # general (non-conformal) deformation against explicit 2x2 inversion
    g = [round_metric(), harmonic_tensor(2, 1) + lie_rotation([0.0, 0.0, 1.0]).scale(0.5), harmonic_tensor(1, 0).scale(0.3)]
    jet = metric_to_contact_jet(g, 2)
    X = ut.random_points(40, rng)
    for s in (1e-3, 1e-2):
        err = np.max(np.abs(jet.rho(s)(X) - direct_rho(g, s, X)))
        assert err < 20 * s ** 3


def test_metric_jet_rejects_non_positive():
    g = [round_metric(), harmonic_tensor(0, 0).scale(-40.0)]
    with pytest.raises(NonPositiveMetricError):
        metric_to_contact_jet(g, 1)


def test_reparametrize_orders():
    nu = parse_field("Y(2,0)", "ut")
    rep = reparametrize_jet(DeformationJet([ONE, ZERO, nu]))
    assert rep.order == 2 and rep.leading is nu
    assert abs(rep.scale(0.04) - 0.2) < 1e-15 and abs(rep.scale(-0.04) + 0.2) < 1e-15
    assert reparametrize_jet(DeformationJet([ONE, nu])).order == 1
    with pytest.raises(FormallyTrivialError):
        reparametrize_jet(DeformationJet([ONE, ZERO, ZERO]))


def test_funk_many_matches_single():
    u = parse_field("Y(2,1) + 0.2*Y(4,0)", "ut")
    P = np.array([unit([1, 0, 1]), unit([0.2, -0.3, 0.9])])
    many = funk_many(u, P)
    assert np.allclose(many, [funk_transform(u, p) for p in P], atol=1e-14)


def test_conformal_tensor_is_scaled_round(rng):
    u = parse_field("Y(2,0)", "ut")
    h = conformal_tensor(u)
    x = np.array([unit(rng.normal(size=3)) for _ in range(5)])
    v = np.cross(x, rng.normal(size=(5, 3)))
    X = np.concatenate([x, np.zeros_like(x)], axis=1)
    assert isinstance(h, SymmetricTensor2)
    assert np.allclose(h(x, v), u(X) * np.sum(v * v, axis=1), atol=1e-14)
