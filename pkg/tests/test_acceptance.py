"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL ...`` line with the measured
quantity, the tolerance it was judged against and the wall time, then asserts.
Run with ``pytest tests/test_acceptance.py -v`` (lines appear in the output
even when capture is on).
"""

import math
import time

import numpy as np
import pytest

from contactsys import (ONE, ZERO, DeformationJet, HopfSphere, SearchConfig, UnitCotangentSphere,
                        contact_volume, find_systole, normal_form, parse_field, parse_model,
                        noncritical_isosystolic_field, solve_homological, strict_max_experiment,
                        systolic_volume)
from contactsys.averaging import pullback_orbit_average
from contactsys.manifolds import flow_array
from contactsys.systole import field_extrema, fitted_exponent, volume_corrected_jet
from contactsys.transforms import fibonacci_sphere, funk_many

TWO_PI = 2 * math.pi


@pytest.fixture
def report(capsys):
    """Collects (label, ok, detail) items and prints one line for the criterion."""
    t0 = time.perf_counter()
    items = []

    def add(label, ok, detail):
        items.append((label, bool(ok), detail))

    def emit(number, budget_s):
        elapsed = time.perf_counter() - t0
        add("runtime", elapsed < budget_s, f"{elapsed:.1f}s < {budget_s}s")
        ok = all(i[1] for i in items)
        body = "; ".join(f"{'' if o else '!'}{lab} {det}" for lab, o, det in items)
        with capsys.disabled():
            print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'}  {body}")
        failed = [f"{lab} {det}" for lab, o, det in items if not o]
        assert not failed, failed

    add.emit = emit
    return add


def test_criterion_1_systolic_volume_integers(report):
    cases = [("hopf S3", HopfSphere(1), 1.0, 1e-4),
             ("UT S2 round", UnitCotangentSphere(), 2.0, 1e-3),
             ("RP2 quotient", parse_model("ut_sphere(metric=round, quotient=antipodal)"), 4.0, 1e-3)]
    slowest = 0.0
    for name, model, want, tol in cases:
        t = time.perf_counter()
        sv = systolic_volume(model)
        slowest = max(slowest, time.perf_counter() - t)
        err = abs(sv.value - want)
        report(name, err <= tol, f"|{sv.value:.10f} - {want:g}| = {err:.1e} <= {tol:g}")
    report("slowest case", slowest < 120, f"{slowest:.1f}s < 120s")
    report.emit(1, 3 * 120)


def test_criterion_2_invariant_perturbation_law(report):
    M = HopfSphere(1)
    mu = parse_field("re_z1z2bar", "hopf1")
    cfg = SearchConfig(grid_size=1000)
    worst = 0.0
    vol_sys = {}
    for s in (-0.1, -0.05, -0.025, 0.025, 0.05, 0.1):
        rho = 1 + s * mu
        ell = find_systole(M, rho, cfg).value
        worst = max(worst, abs(ell - (1 - abs(s) / 2) * TWO_PI))
        vol_sys[s] = contact_volume(M, rho).value / ell ** 2
    vol_sys[0.0] = contact_volume(M, ONE).value / TWO_PI ** 2
    report("systole law", worst <= 5e-3, f"max |l1 - (1-|s|/2) 2pi| = {worst:.1e} <= 5e-3")
    mono = all(vol_sys[math.copysign(b, sg)] > vol_sys[math.copysign(a, sg)]
               for sg in (1, -1) for a, b in ((0.0, 0.025), (0.025, 0.05), (0.05, 0.1)))
    report("strictly increasing in |s|", mono,
           "S(|s|) = " + ", ".join(f"{vol_sys[s]:.5f}" for s in (0.0, 0.025, 0.05, 0.1)))
    gain = min(vol_sys[0.1], vol_sys[-0.1]) - vol_sys[0.0]
    report("gain at |s| = 0.1", gain >= 1e-3, f"{gain:.4f} >= 1e-3")
    report.emit(2, 600)


def test_criterion_3_homological_equation(report):
    M = HopfSphere(1)
    f = parse_field("re_z1sq", "hopf1")
    h = solve_homological(M, f)
    X = M.random_points(100, np.random.default_rng(11))
    err_h = float(np.max(np.abs(h(X) - 0.5 * parse_field("im_z1sq", "hopf1")(X))))
    _, g = h.value_and_grad(X)
    err_r = float(np.max(np.abs(np.einsum("nd,nd->n", g, M.reeb0(X)) - f(X))))
    report("h vs Im(z1^2)/2", err_h < 1e-7, f"{err_h:.1e} < 1e-7")
    report("R(h) - f", err_r < 1e-6, f"{err_r:.1e} < 1e-6")
    report.emit(3, 60)


def test_criterion_4_normal_form_against_pullback(report):
    M = HopfSphere(1)
    nu1 = parse_field("re_z1sq", "hopf1")
    jet = DeformationJet([ONE, nu1, ZERO])
    nf = normal_form(M, jet, 2)
    X = M.random_points(200, np.random.default_rng(4))
    sup1 = float(np.max(np.abs(nf.mu[0](X))))
    report("mu1 sup", sup1 < 1e-6, f"{sup1:.1e} < 1e-6")
    # oracle: flow of X_h1 integrated numerically, s^2 coefficient fitted on 4 values of s
    h1 = solve_homological(M, -1.0 * nu1)
    oracle = pullback_orbit_average(M, [nu1, ZERO], h1, X, order=2)
    err = float(np.max(np.abs(oracle - nf.mu[1](X))))
    report("mu2 vs pullback oracle", err < 1e-4, f"{err:.1e} < 1e-4 (|mu2| up to {np.max(np.abs(oracle)):.3f})")
    report.emit(4, 900)


def test_criterion_5_strict_local_maximum(report):
    M = HopfSphere(1)
    grid = [-0.1, -0.05, -0.025, 0.0, 0.025, 0.05, 0.1]
    jet = DeformationJet([ONE, parse_field("re_z1z2bar", "hopf1")])
    rep = strict_max_experiment(M, jet, grid, 1)
    mu1 = normal_form(M, volume_corrected_jet(M, jet), 1).mu[0]
    ext = field_extrema(M, mu1)
    worst = math.inf
    for s, ell in zip(rep.s_grid, rep.systoles):
        if s == 0.0:
            continue
        e = abs(ext.minimum if s > 0 else ext.maximum)
        margin = rep.baseline - 0.5 * abs(s) * e * TWO_PI * (1 - 0.2)
        worst = min(worst, margin - ell)
    report("invariant jet", rep.order == 1 and worst > 0,
           f"min_s [l1(0) - |s||ext|pi(0.8) - l1(s)] = {worst:.4f} > 0")
    triv = DeformationJet([ONE, parse_field("re_z1sq", "hopf1")])
    s_grid = [0.0, 0.025, 0.05, 0.075, 0.1]
    rep2 = strict_max_experiment(M, triv, s_grid, 1)
    deltas = [abs(v - rep2.baseline) for s, v in zip(rep2.s_grid, rep2.systoles) if s != 0.0]
    expo = fitted_exponent([s for s in s_grid if s != 0.0], deltas)
    report("trivial-looking jet exponent", rep2.order is None and expo >= 1.9, f"{expo:.3f} >= 1.9")
    report.emit(5, 1200)


def _conformal_systole(model, u_expr, s, cfg):
    family = parse_field(f"exp({0.5 * s!r}*({u_expr}))", "ut")
    return find_systole(model, family, cfg).value


def test_criterion_6_two_sphere_dichotomy(report):
    M = UnitCotangentSphere()
    cfg = SearchConfig()
    for s in (-0.1, 0.1):
        ell = _conformal_systole(M, "Y(2,0)", s, cfg)
        report(f"Y20 s={s:+g}", ell < TWO_PI - 0.05 * abs(s), f"l1 = {ell:.5f} < 2pi - {0.05 * abs(s):g}")
    y10 = parse_field("Y(1,0)", "ut")
    funk_max = float(np.max(np.abs(funk_many(y10, fibonacci_sphere(500)))))
    report("funk Y10", funk_max < 1e-10, f"max |funk| = {funk_max:.1e} < 1e-10")
    s_vals = [0.025, 0.05, 0.075, 0.1]
    deltas = [abs(_conformal_systole(M, "Y(1,0)", s, cfg) - TWO_PI) for s in s_vals]
    expo = fitted_exponent(s_vals, deltas)
    report("Y10 exponent", expo >= 1.9, f"{expo:.3f} >= 1.9")
    report.emit(6, 1200)


def test_criterion_7_zoll_family_flat(report):
    values = []
    worst_gap = 0.0
    for c in (0.1, 0.2, 0.3):
        model = parse_model(f"ut_sphere(metric=revolution, h={c}*x*(1-x^2))")
        X = model.random_points(50, np.random.default_rng(int(c * 10)))
        Y = flow_array(model, ONE, X, TWO_PI, 1e-11)
        worst_gap = max(worst_gap, float(np.max(np.linalg.norm(Y - X, axis=1))))
        values.append(systolic_volume(model).value)
    spread = max(values) - min(values)
    report("geodesic closure", worst_gap < 1e-5, f"max gap {worst_gap:.1e} < 1e-5")
    report("systolic volume spread", spread < 2e-3,
           f"{spread:.1e} < 2e-3 (values {', '.join(f'{v:.8f}' for v in values)})")
    report.emit(7, 600)


def test_criterion_8_noncritical_construction(report):
    model = parse_model("ut_sphere(metric=revolution, h=0.2*x^2*(1-x^2))")
    base = find_systole(model, ONE)
    nc = noncritical_isosystolic_field(model, 0.05, period=base.value)
    step = 0.02
    dvol = (contact_volume(model, 1 + step * nc.field).value
            - contact_volume(model, 1 - step * nc.field).value) / (2 * step)
    report("dvol/ds", dvol < -0.01, f"{dvol:.3f} < -0.01")
    for s in (-0.02, 0.02):
        est = find_systole(model, 1 + s * nc.field)
        diff = abs(est.value - base.value)
        tol = 2 * max(est.error_budget, base.error_budget)
        report(f"systole s={s:+g}", diff <= tol, f"|shift| {diff:.1e} <= {tol:.1e}")
    report.emit(8, 900)


def test_criterion_9_selftest(report):
    from contactsys.selftest import CHECKS, run_selftest
    ok = run_selftest(verbose=False)
    report("selftest", ok, f"{len(CHECKS)} checks")
    report.emit(9, 600)
