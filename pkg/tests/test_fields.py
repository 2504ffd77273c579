import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contactsys import (ONE, ZERO, DeformationJet, Point, TangentVector, constant,
                        directional_derivative, evaluate, jet_compose, parse_field)
from contactsys.errors import ConfigError, ModelMismatchError, NotTangentError, PointOffManifoldError


def _hopf_point(a, b):
    # (cos a e^{ib}, sin a) style point on S^3
    return np.array([math.cos(a) * math.cos(b), math.cos(a) * math.sin(b), math.sin(a), 0.0])


def test_builtin_values(hopf, rng):
    X = hopf.random_points(50, rng)
    z1 = X[:, 0] + 1j * X[:, 1]
    z2 = X[:, 2] + 1j * X[:, 3]
    assert np.allclose(parse_field("abs_z1sq", "hopf1")(X), abs(z1) ** 2, atol=1e-15)
    assert np.allclose(parse_field("re_z1z2bar", "hopf1")(X), (z1 * z2.conj()).real, atol=1e-15)
    assert np.allclose(parse_field("im_z1sq", "hopf1")(X), (z1 ** 2).imag, atol=1e-15)


def test_expression_grammar_arithmetic(hopf, rng):
    X = hopf.random_points(20, rng)
    f = parse_field("1 + 0.5*re_z1sq - abs_z1sq^2/4 + exp(0.1*x1)", "hopf1")
    x1 = X[:, 0]
    z1 = X[:, 0] + 1j * X[:, 1]
    want = 1 + 0.5 * (z1 ** 2).real - abs(z1) ** 4 / 4 + np.exp(0.1 * x1)
    assert np.allclose(f(X), want, atol=1e-14)


@pytest.mark.parametrize("text", ["re_z1sq +", "unknown_name", "(1 + x1", "2 ^ x1", "1 $ 2"])
def test_bad_expressions_are_rejected(text):
    with pytest.raises(ConfigError):
        parse_field(text, "hopf1")


def test_harmonics_are_orthonormal_on_sphere():
    # Gauss x trapezoid rule on S^2, exact for these degrees
    from contactsys.fields import harmonic_evaluator
    t, w = np.polynomial.legendre.leggauss(24)
    ph = np.arange(48) * 2 * math.pi / 48
    T, P = np.meshgrid(t, ph, indexing="ij")
    W = (w[:, None] * np.ones_like(P)) * (2 * math.pi / 48)
    s = np.sqrt(1 - T ** 2)
    x, y, z = s * np.cos(P), s * np.sin(P), T
    ys = [harmonic_evaluator(l, m)(x, y, z) for l, m in [(1, 0), (2, 0), (2, 1), (2, -2), (3, 1)]]
    gram = np.array([[np.sum(W * a * b) for b in ys] for a in ys])
    assert np.allclose(gram, np.eye(len(ys)), atol=1e-12)


def test_point_evaluation_and_off_manifold(hopf):
    f = parse_field("abs_z1sq", "hopf1")
    assert evaluate(f, Point("hopf1", [1, 0, 0, 0])) == 1.0
    with pytest.raises(PointOffManifoldError):
        evaluate(f, Point("hopf1", [1.1, 0, 0, 0]))
    with pytest.raises(ModelMismatchError):
        evaluate(f, Point("ut", [1, 0, 0, 0, 1, 0]))


def test_directional_derivative_matches_finite_difference(hopf, rng):
    f = parse_field("re_z1sq + 0.3*x2*y1 + exp(x1)", "hopf1")
    X = hopf.random_points(30, rng)
    g_dual = f.grad(X)
    g_fd = f.fd_grad(X)
    assert np.max(np.abs(g_dual - g_fd)) < 1e-8


def test_directional_derivative_rejects_normal_vector():
    x = Point("hopf1", [1, 0, 0, 0])
    with pytest.raises(NotTangentError):
        directional_derivative(parse_field("x1", "hopf1"), x, TangentVector(x, [1, 0, 0, 0]))
    # i x is the Reeb direction, tangent
    assert directional_derivative(parse_field("y1", "hopf1"), x, TangentVector(x, [0, 1, 0, 0])) == 1.0


def test_jet_must_start_with_one():
    with pytest.raises(ValueError):
        DeformationJet([constant(2.0), ZERO])


def test_jet_compose_multiply_truncates(hopf, rng):
    f = parse_field("re_z1sq", "hopf1")
    a = DeformationJet([ONE, f, ZERO])
    b = DeformationJet([ONE, -f, ZERO])
    c = jet_compose(a, b, "multiply")
    X = hopf.random_points(10, rng)
    assert c.order == 2
    assert np.allclose(c[1](X), 0.0)
    assert np.allclose(c[2](X), -f(X) ** 2)


def test_jet_compose_rejects_other_models():
    a = DeformationJet([ONE, parse_field("x1", "hopf1")])
    b = DeformationJet([ONE, parse_field("x", "ut")])
    with pytest.raises(ModelMismatchError):
        jet_compose(a, b, "add")


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-2, 2))
def test_linear_combination_evaluates_pointwise(a, b, c):
    f, g = parse_field("re_z1sq", "hopf1"), parse_field("x1*y2", "hopf1")
    X = np.array([_hopf_point(0.3, 1.1), _hopf_point(1.2, -0.4)])
    h = a * f + b * g + c
    assert np.allclose(h(X), a * f(X) + b * g(X) + c, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 2 * math.pi), st.floats(0, 2 * math.pi), st.floats(-5, 5))
def test_derivative_is_linear_in_vector(a, b, scale):
    f = parse_field("re_z1z2bar + x1^3", "hopf1")
    x = Point("hopf1", _hopf_point(a, b))
    c = x.coords
    iv = np.array([-c[1], c[0], -c[3], c[2]])          # Reeb direction
    jv = np.array([-c[2], c[3], c[0], -c[1]])          # j x, also tangent
    d1 = directional_derivative(f, x, TangentVector(x, iv))
    d2 = directional_derivative(f, x, TangentVector(x, jv))
    d12 = directional_derivative(f, x, TangentVector(x, scale * iv + jv))
    assert abs(d12 - (scale * d1 + d2)) < 1e-10


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 2 * math.pi), st.floats(-1, 1), st.floats(0, 2 * math.pi))
def test_even_fields_are_antipodally_symmetric(theta, z, psi):
    u = parse_field("Y(2,0) + 0.3*Y(4,3) + px*py", "ut")
    v = parse_field("Y(1,0) + Y(3,-2)", "ut")
    r = math.sqrt(1 - z * z)
    x = np.array([r * math.cos(theta), r * math.sin(theta), z])
    e = np.cross(x, [0.3, -0.5, 0.8])
    e /= np.linalg.norm(e)
    p = math.cos(psi) * e + math.sin(psi) * np.cross(x, e)
    X = np.array([np.r_[x, p], -np.r_[x, p]])
    assert abs(u(X)[0] - u(X)[1]) < 1e-12
    assert abs(v(X)[0] + v(X)[1]) < 1e-12
    assert (u.parity, v.parity) == ("even", "odd")
