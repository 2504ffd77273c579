import math

import numpy as np
import pytest

from contactsys import (ONE, Point, VolumeScheme, contact_volume, flow, parse_field, parse_model,
                        quotient_flag, reeb_field, trajectory)
from contactsys.errors import ConfigError, ModelMismatchError, NotAntipodalError, PointOffManifoldError
from contactsys.manifolds import flow_array, reeb_residuals

TWO_PI = 2 * math.pi


def test_hopf_reeb_is_complex_rotation(hopf, rng):
    X = hopf.random_points(40, rng)
    R = hopf.reeb_vectors(ONE, X)
    iX = np.stack([-X[:, 1], X[:, 0], -X[:, 3], X[:, 2]], -1)
    assert np.max(np.abs(R - iX)) < 1e-14


def test_reeb_scales_inversely_with_constant(hopf, rng):
    X = hopf.random_points(10, rng)
    R1 = hopf.reeb_vectors(ONE, X)
    R3 = hopf.reeb_vectors(parse_field("3", "hopf1"), X)
    assert np.max(np.abs(R3 - R1 / 3)) < 1e-15


@pytest.mark.parametrize("model_desc,rho", [
    ("hopf(n=1)", "1 + 0.2*re_z1z2bar + 0.1*x1^2"),
    ("ut_sphere(metric=round)", "1 + 0.2*Y(2,1) + 0.1*px*z"),
    ("ut_sphere(metric=revolution, h=0.2*x*(1-x^2))", "1"),
])
def test_reeb_defining_equations(model_desc, rho, rng):
    model = parse_model(model_desc)
    f = parse_field(rho, model.domain)
    X = model.random_points(60, rng)
    R = model.reeb_vectors(f, X)
    pairing, kernel = reeb_residuals(model, f, X, R)
    assert pairing.max() < 1e-10 and kernel.max() < 1e-10


def test_reeb_field_rejects_off_manifold(hopf):
    with pytest.raises(PointOffManifoldError):
        reeb_field(hopf, ONE, Point("hopf1", [2.0, 0, 0, 0]))


def test_flow_matches_closed_form(hopf, rng):
    X = hopf.random_points(25, rng)
    for t in (0.7, 3.0, TWO_PI):
        Y = flow_array(hopf, ONE, X, t, 1e-11)
        Z = hopf.closed_form_flow(X, t)
        assert np.max(np.abs(Y - Z)) < 1e-8


def test_flow_time_zero_and_group_law(hopf):
    rho = parse_field("1 + 0.2*re_z1z2bar", "hopf1")
    x = Point("hopf1", [0.6, 0.0, 0.0, 0.8])
    assert np.array_equal(flow(hopf, rho, x, 0.0).coords, x.coords)
    a = flow(hopf, rho, flow(hopf, rho, x, 0.9), 1.6)
    b = flow(hopf, rho, x, 2.5)
    assert np.max(np.abs(a.coords - b.coords)) < 1e-8
    back = flow(hopf, rho, b, -2.5)
    assert np.max(np.abs(back.coords - x.coords)) < 1e-8


def test_trajectory_preserves_pairing(hopf):
    rho = parse_field("1 + 0.1*re_z1z2bar", "hopf1")
    tr = trajectory(hopf, rho, Point("hopf1", [0.6, 0.0, 0.0, 0.8]), 5.0)
    assert tr.times[0] == 0.0 and abs(tr.times[-1] - 5.0) < 1e-12
    assert np.max(np.abs(np.linalg.norm(tr.points, axis=1) - 1)) < 1e-10
    assert tr.pairing_residual(hopf, rho) < 1e-10


def test_round_geodesics_close_at_two_pi(ut, rng):
    X = ut.random_points(30, rng)
    Y = flow_array(ut, ONE, X, TWO_PI, 1e-11)
    assert np.max(np.linalg.norm(Y - X, axis=1)) < 1e-8


@pytest.mark.parametrize("c", [0.1, 0.3])
def test_zoll_revolution_geodesics_close(c, rng):
    model = parse_model(f"ut_sphere(metric=revolution, h={c}*x*(1-x^2))")
    X = model.random_points(20, rng)
    Y = flow_array(model, ONE, X, TWO_PI, 1e-11)
    assert np.max(np.linalg.norm(Y - X, axis=1)) < 1e-5


def test_volumes_of_standard_models(hopf, ut, rp2):
    assert abs(contact_volume(hopf, ONE).value - 4 * math.pi ** 2) < 1e-9
    assert abs(contact_volume(ut, ONE).value - 8 * math.pi ** 2) < 1e-9
    assert abs(contact_volume(rp2, ONE).value - 4 * math.pi ** 2) < 1e-9


def test_volume_is_homogeneous(hopf):
    rho = parse_field("1 + 0.2*re_z1z2bar", "hopf1")
    v1 = contact_volume(hopf, rho).value
    v2 = contact_volume(hopf, 1.5 * rho).value
    assert abs(v2 - 1.5 ** 2 * v1) < 1e-9


def test_volume_montecarlo_agrees_with_product(hopf):
    rho = parse_field("1 + 0.3*abs_z1sq", "hopf1")
    prod = contact_volume(hopf, rho)
    mc = contact_volume(hopf, rho, VolumeScheme("montecarlo", samples=200000, seed=1))
    assert abs(mc.value - prod.value) < 5 * mc.error
    assert prod.error < 1e-8


def test_volume_rejects_mismatched_field(ut):
    with pytest.raises(ModelMismatchError):
        contact_volume(ut, parse_field("x1", "hopf1"))


def test_quotient_requires_symmetric_metric():
    model = parse_model("ut_sphere(metric=conformal, u=0.1*Y(1,0))")
    with pytest.raises(NotAntipodalError):
        quotient_flag(model, True)
    even = parse_model("ut_sphere(metric=conformal, u=0.1*Y(2,0))")
    assert quotient_flag(even, True).quotient


@pytest.mark.parametrize("desc", ["sphere(n=1)", "hopf(n=7)", "ut_sphere(metric=flat)", "hopf(n=1, quotient=antipodal)",
                                  "ut_sphere(metric=round, colour=red)"])
def test_bad_model_descriptors(desc):
    with pytest.raises(ConfigError):
        parse_model(desc)
