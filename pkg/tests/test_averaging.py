import numpy as np
import pytest

from contactsys import (ONE, ZERO, DeformationJet, average_along_flow, hamiltonian_field, normal_form,
                        parse_field, solve_homological)
from contactsys.averaging import hamiltonian_residuals, invariance_residual
from contactsys.errors import AverageNotZeroError, JetOrderError, NonRegularFlowError


def test_average_of_invariant_field_is_itself(hopf, rng):
    f = parse_field("abs_z1sq + re_z1z2bar", "hopf1")
    X = hopf.random_points(30, rng)
    assert np.max(np.abs(average_along_flow(hopf, f)(X) - f(X))) < 1e-13


def test_average_kills_charged_monomials(hopf, rng):
    X = hopf.random_points(30, rng)
    for name in ("re_z1sq", "im_z1z2", "x1"):
        assert np.max(np.abs(average_along_flow(hopf, parse_field(name, "hopf1"))(X))) < 1e-13


def test_average_on_round_geodesics(ut, rng):
    # the average of z^2 over a great circle with pole n is (1 - n_z^2) / 2
    X = ut.random_points(20, rng)
    n = np.cross(X[:, :3], X[:, 3:])
    got = average_along_flow(ut, parse_field("z^2", "ut"))(X)
    assert np.max(np.abs(got - 0.5 * (1 - n[:, 2] ** 2))) < 1e-12


def test_homological_closed_form(hopf, rng):
    f = parse_field("re_z1sq", "hopf1")
    h = solve_homological(hopf, f)
    X = hopf.random_points(100, rng)
    assert np.max(np.abs(h(X) - 0.5 * parse_field("im_z1sq", "hopf1")(X))) < 1e-7
    _, g = h.value_and_grad(X)
    Rh = np.einsum("nd,nd->n", g, hopf.reeb0(X))
    assert np.max(np.abs(Rh - f(X))) < 1e-6


def test_homological_rejects_nonzero_average(hopf):
    with pytest.raises(AverageNotZeroError):
        solve_homological(hopf, parse_field("abs_z1sq", "hopf1"))


def test_homological_subtract_mode(hopf, rng):
    f = parse_field("abs_z1sq + re_z1sq", "hopf1")
    h = solve_homological(hopf, f, subtract_average=True)
    X = hopf.random_points(40, rng)
    assert np.max(np.abs(h.removed_average(X) - parse_field("abs_z1sq", "hopf1")(X))) < 1e-12
    assert np.max(np.abs(h(X) - 0.5 * parse_field("im_z1sq", "hopf1")(X))) < 1e-7


def test_averaging_requires_regular_flow():
    from contactsys import parse_model
    model = parse_model("ut_sphere(metric=revolution, h=0.2*x^2*(1-x^2))")
    with pytest.raises(NonRegularFlowError):
        average_along_flow(model, parse_field("z", "ut"))


def test_hamiltonian_of_one_is_reeb(hopf, rng):
    X = hopf.random_points(20, rng)
    assert np.max(np.abs(hamiltonian_field(hopf, ONE)(X) - hopf.reeb0(X))) < 1e-14


def test_hamiltonian_defining_identities(hopf, rng):
    h = parse_field("re_z1sq + 0.3*im_z1z2bar", "hopf1")
    X = hopf.random_points(40, rng)
    assert max(np.max(r) for r in hamiltonian_residuals(hopf, h, X)) < 1e-10


def test_normal_form_of_invariant_jet_is_fixed(hopf, rng):
    mu = parse_field("re_z1z2bar", "hopf1")
    nf = normal_form(hopf, DeformationJet([ONE, mu]), 1)
    X = hopf.random_points(20, rng)
    assert np.max(np.abs(nf.mu[0](X) - mu(X))) < 1e-14
    assert nf.generators[0] is ZERO


def test_normal_form_rejects_orders(hopf):
    jet = DeformationJet([ONE, parse_field("re_z1sq", "hopf1")])
    with pytest.raises(JetOrderError):
        normal_form(hopf, jet, 2)
    long = DeformationJet([ONE] + [ZERO] * 4)
    with pytest.raises(JetOrderError):
        normal_form(hopf, long, 4)


def test_normal_form_second_order_is_invariant(hopf):
    jet = DeformationJet([ONE, parse_field("re_z1sq", "hopf1"), ZERO])
    nf = normal_form(hopf, jet, 2, residual_samples=60)
    assert nf.mu[0] is ZERO
    assert max(nf.invariance_residuals) < 1e-8
    # mu2 genuinely nonzero for this jet
    X = hopf.random_points(40, np.random.default_rng(5))
    assert np.max(np.abs(nf.mu[1](X))) > 1e-3


def test_invariance_residual_detects_noninvariant(hopf):
    assert invariance_residual(hopf, parse_field("re_z1sq", "hopf1"), samples=20) > 0.1
    assert invariance_residual(hopf, parse_field("abs_z1sq", "hopf1"), samples=20) < 1e-12
