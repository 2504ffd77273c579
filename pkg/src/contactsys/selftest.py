"""Built-in checks run by ``contactsys selftest``.

Two groups: the small worked examples with exact answers (constants,
symmetries, identities) and the structural properties of each module
(flow composition, projection identities, refinement, reproducibility).
Every check raises ``AssertionError`` with the measured quantity on failure.
"""

import math
import tempfile
import time
import traceback

import numpy as np

from .averaging import (average_along_flow, hamiltonian_field, normal_form,
                        solve_homological)
from .errors import (AverageNotZeroError, ContactError, FormallyTrivialError,
                     NotTangentError, RegularModelError)
from .fields import (ONE, ZERO, DeformationJet, Point, TangentVector, constant, directional_derivative,
                     evaluate, jet_compose, parse_field)
from .manifolds import (HopfSphere, UnitCotangentSphere, VolumeScheme, contact_volume, flow,
                        flow_array, parse_model, quotient_flag, reeb_field, reeb_residuals)
from .quadrature import fibonacci_sphere

TWO_PI = 2.0 * math.pi
CHECKS = []


def check(group):
    def deco(fn):
        CHECKS.append((group, fn.__name__, fn))
        return fn
    return deco


def _close(value, target, tol, what):
    err = abs(value - target)
    assert err <= tol, f"{what}: |{value!r} - {target!r}| = {err:.3e} > {tol:g}"
    return f"{what} err {err:.1e}"


def _hopf():
    return HopfSphere(1)


def _ut():
    return UnitCotangentSphere()


def _pts(model, n, seed=0):
    return model.random_points(n, np.random.default_rng(seed))


# ---------------------------------------------------------------------------
# worked examples
# ---------------------------------------------------------------------------

@check("example")
def fields_constant_value():
    x = Point("hopf1", np.array([1.0, 0.0, 0.0, 0.0]))
    return _close(evaluate(ONE, x), 1.0, 0.0, "1(x)")


@check("example")
def fields_abs_z1_squared():
    x = Point("hopf1", np.array([1.0, 0.0, 0.0, 0.0]))
    return _close(evaluate(parse_field("abs_z1sq", "hopf1"), x), 1.0, 1e-15, "|z1|^2")


@check("example")
def fields_re_z1_z2bar():
    c = 1 / math.sqrt(2)
    x = Point("hopf1", np.array([c, 0.0, c, 0.0]))
    return _close(evaluate(parse_field("re_z1z2bar", "hopf1"), x), 0.5, 1e-15, "Re z1 z2bar")


@check("example")
def fields_constant_derivative():
    x = Point("hopf1", np.array([1.0, 0.0, 0.0, 0.0]))
    v = TangentVector(x, np.array([0.0, 1.0, 0.0, 0.0]))
    return _close(directional_derivative(constant(3.0), x, v), 0.0, 0.0, "d(const)")


@check("example")
def fields_normal_vector_rejected():
    x = Point("hopf1", np.array([1.0, 0.0, 0.0, 0.0]))
    v = TangentVector(x, np.array([1.0, 0.0, 0.0, 0.0]))
    try:
        directional_derivative(parse_field("x1", "hopf1"), x, v)
    except NotTangentError:
        return "NotTangentError raised"
    raise AssertionError("normal vector accepted as tangent")


@check("example")
def jets_cancellation():
    f = parse_field("re_z1sq", "hopf1")
    J = jet_compose(DeformationJet([ONE, f]), DeformationJet([ONE, -f]), "multiply")
    X = _pts(_hopf(), 20)
    return _close(float(np.max(np.abs(J[1](X)))), 0.0, 1e-15, "(1+sf)(1-sf) order 1")


@check("example")
def jets_add_keeps_leading_one():
    f, g = parse_field("re_z1sq", "hopf1"), parse_field("x2", "hopf1")
    J = jet_compose(DeformationJet([ONE, f]), DeformationJet([ONE, g]), "add")
    X = _pts(_hopf(), 20)
    assert J[0].constant == 1.0
    return _close(float(np.max(np.abs(J[1](X) - f(X) - g(X)))), 0.0, 1e-15, "[1, f+g]")


@check("example")
def jets_binomial_square():
    f = parse_field("re_z1sq", "hopf1")
    J = jet_compose(DeformationJet([ONE, f, ZERO]), DeformationJet([ONE, f, ZERO]), "multiply")
    X = _pts(_hopf(), 20)
    e1 = float(np.max(np.abs(J[1](X) - 2 * f(X))))
    e2 = float(np.max(np.abs(J[2](X) - f(X) ** 2)))
    return _close(max(e1, e2), 0.0, 1e-15, "[1, 2f, f^2]")


@check("example")
def reeb_constant_rescaling():
    M = _hopf()
    X = _pts(M, 50)
    R1 = reeb_field(M, ONE, X)
    R3 = reeb_field(M, constant(3.0), X)
    return _close(float(np.max(np.abs(R3 - R1 / 3.0))), 0.0, 1e-15, "R_{3a} - R_a/3")


@check("example")
def flow_time_zero():
    M = _ut()
    x = M.point(_pts(M, 1)[0])
    y = flow(M, parse_field("1 + 0.1*x", "ut"), x, 0.0)
    return _close(float(np.max(np.abs(y.coords - x.coords))), 0.0, 0.0, "flow(x, 0) - x")


@check("example")
def volume_homogeneity():
    M = _hopf()
    v1 = contact_volume(M, ONE).value
    v2 = contact_volume(M, constant(1.5)).value
    return _close(v2, 1.5 ** 2 * v1, 1e-10, "vol(1.5 a)")


@check("example")
def volume_quotient_half():
    Q = quotient_flag(_ut())
    return _close(contact_volume(Q, ONE).value, 4 * math.pi ** 2, 1e-9, "vol(RP2 quotient)")


@check("example")
def average_of_invariant_field():
    M = _hopf()
    f = parse_field("re_z1z2bar", "hopf1")
    X = _pts(M, 50)
    return _close(float(np.max(np.abs(average_along_flow(M, f)(X) - f(X)))), 0.0, 1e-13, "avg(f) - f")


@check("example")
def average_of_re_z1_squared():
    M = _hopf()
    X = _pts(M, 50)
    return _close(float(np.max(np.abs(average_along_flow(M, parse_field("re_z1sq", "hopf1"))(X)))), 0.0,
                  1e-13, "avg Re z1^2")


@check("example")
def homological_zero():
    h = solve_homological(_hopf(), ZERO)
    assert h.constant == 0.0
    return "h = 0"


@check("example")
def homological_rejects_invariant():
    try:
        solve_homological(_hopf(), parse_field("re_z1z2bar", "hopf1"))
    except AverageNotZeroError:
        return "AverageNotZeroError raised"
    raise AssertionError("invariant field accepted")


@check("example")
def hamiltonian_one_is_reeb():
    M = _hopf()
    X = _pts(M, 50)
    V = hamiltonian_field(M, ONE)(X)
    return _close(float(np.max(np.abs(V - M.reeb0(X)))), 0.0, 1e-14, "X_1 - R0")


@check("example")
def hamiltonian_zero():
    M = _hopf()
    return _close(float(np.max(np.abs(hamiltonian_field(M, ZERO)(_pts(M, 10))))), 0.0, 0.0, "X_0")


@check("example")
def normal_form_fixed_point():
    M = _hopf()
    mu = parse_field("re_z1z2bar", "hopf1")
    nf = normal_form(M, DeformationJet([ONE, mu]), 1)
    X = _pts(M, 50)
    assert nf.generators[0].constant == 0.0
    return _close(float(np.max(np.abs(nf.mu[0](X) - mu(X)))), 0.0, 1e-13, "mu1 - mu")


@check("example")
def funk_odd_vanishes():
    from .transforms import funk_many
    vals = funk_many(parse_field("Y(1,0)", "ut"), fibonacci_sphere(50))
    return _close(float(np.max(np.abs(vals))), 0.0, 1e-10, "funk Y10")


@check("example")
def funk_of_one():
    from .transforms import funk_transform
    return _close(funk_transform(ONE, np.array([0.0, 0.0, 1.0])), TWO_PI, 1e-12, "funk 1")


@check("example")
def zero_energy_of_zero():
    from .transforms import zero_energy_test, zero_tensor
    return _close(zero_energy_test(zero_tensor(), samples=20, poles=20).max_abs, 0.0, 0.0, "xray 0")


@check("example")
def metric_jet_constant_family():
    from .transforms import metric_to_contact_jet, round_metric, zero_tensor
    J = metric_to_contact_jet([round_metric(), zero_tensor(), zero_tensor()])
    X = _pts(_ut(), 20)
    return _close(max(float(np.max(np.abs(J[i](X)))) for i in (1, 2)), 0.0, 1e-15, "[1, 0, 0]")


@check("example")
def metric_jet_homothety():
    from .transforms import homothety_family, metric_to_contact_jet
    J = metric_to_contact_jet(homothety_family(), 2)
    X = _pts(_ut(), 20)
    e = max(float(np.max(np.abs(J[1](X) - 1))), float(np.max(np.abs(J[2](X)))))
    return _close(e, 0.0, 1e-12, "[1, 1, 0]")


@check("example")
def reparametrize_orders():
    from .transforms import reparametrize_jet
    nu = parse_field("re_z1sq", "hopf1")
    a = reparametrize_jet(DeformationJet([ONE, ZERO, nu]))
    b = reparametrize_jet(DeformationJet([ONE, nu]))
    assert (a.order, b.order) == (2, 1), (a.order, b.order)
    try:
        reparametrize_jet(DeformationJet([ONE, ZERO, ZERO]))
    except FormallyTrivialError:
        return "orders 2, 1 and trivial rejected"
    raise AssertionError("formally trivial jet accepted")


@check("example")
def upper_bound_of_zero():
    from .systole import invariant_upper_bound
    return _close(invariant_upper_bound(_hopf(), ZERO, 0.1, 1), TWO_PI, 0.0, "bound(mu=0)")


@check("example")
def noncritical_rejects_regular():
    from .systole import noncritical_isosystolic_field
    try:
        noncritical_isosystolic_field(_hopf(), 0.05, samples=200, period=TWO_PI)
    except RegularModelError:
        return "RegularModelError raised"
    raise AssertionError("regular model accepted")


@check("example")
def noncritical_support():
    from .systole import noncritical_isosystolic_field
    M = parse_model("ut_sphere(metric=revolution, h=0.2*x^2*(1-x^2))")
    nc = noncritical_isosystolic_field(M, 0.05, samples=1500, period=TWO_PI)
    near = nc.return_distance <= nc.eps
    leak = float(np.max(np.abs(nc.field(nc.samples[near])))) if near.any() else 0.0
    return _close(leak, 0.0, 0.0, "rho_dot on M_T(eps)")


@check("example")
def cli_funk_config():
    from .config import parse_config
    from .experiments import CATALOG, run
    rep = run(parse_config("kind: funk\nparams: {u: 'Y(1,0)', expected_max_abs: 0.0, tolerance: 1.0e-10}\n",
                           CATALOG))
    assert rep.passed, [v.to_dict() for v in rep.verdicts]
    return "funk Y10 verdict pass"


@check("example")
def catalog_listing():
    from .experiments import list_catalog
    kinds = [line.split()[0] for line in list_catalog().splitlines() if not line.startswith(" ")]
    assert "strict-max" in kinds and "zoll-family" in kinds, kinds
    assert kinds == sorted(kinds), kinds
    return f"{len(kinds)} kinds, alphabetical"


# ---------------------------------------------------------------------------
# properties
# ---------------------------------------------------------------------------

@check("property")
def parity_on_antipodal_pairs():
    M = _hopf()
    X = _pts(M, 100)
    worst = 0.0
    for name in ("x1", "y2", "x2"):
        f = parse_field(name, "hopf1")
        assert f.parity == "odd"
        worst = max(worst, float(np.max(np.abs(f(X) + f(-X)))))
    f = parse_field("Y(3,1)", "ut")
    Xu = _pts(_ut(), 100)
    worst = max(worst, float(np.max(np.abs(f(Xu) + f(np.concatenate([-Xu[:, :3], Xu[:, 3:]], 1))))))
    return _close(worst, 0.0, 1e-10, "|f(x) + f(-x)|")


@check("property")
def derivative_linear_in_vector():
    M = _hopf()
    rng = np.random.default_rng(4)
    f = parse_field("re_z1sq + 0.3*x1*y2", "hopf1")
    worst = 0.0
    for x in _pts(M, 20):
        p = Point("hopf1", x)
        E = M.frame(x[None])[0]
        v = TangentVector(p, rng.normal(size=2) @ E)
        w = TangentVector(p, M.reeb_lambda(x[None])[0] * rng.normal())
        a, b = rng.normal(size=2)
        lhs = directional_derivative(f, p, TangentVector(p, a * v.components + b * w.components))
        rhs = a * directional_derivative(f, p, v) + b * directional_derivative(f, p, w)
        worst = max(worst, abs(lhs - rhs))
    return _close(worst, 0.0, 1e-9, "linearity defect")


@check("property")
def jet_product_associative_commutative():
    X = _pts(_hopf(), 20)
    lib = ["re_z1sq", "x1", "im_z1z2bar", "abs_z1sq", "y2"]
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(3):
        jets = [DeformationJet([ONE] + [parse_field(lib[i], "hopf1") for i in rng.integers(0, 5, 2)])
                for _ in range(3)]
        a, b, c = jets
        ab_c = jet_compose(jet_compose(a, b, "multiply"), c, "multiply")
        a_bc = jet_compose(a, jet_compose(b, c, "multiply"), "multiply")
        ba = jet_compose(b, a, "multiply")
        ab = jet_compose(a, b, "multiply")
        for i in range(3):
            worst = max(worst, float(np.max(np.abs(ab_c[i](X) - a_bc[i](X)))),
                        float(np.max(np.abs(ab[i](X) - ba[i](X)))))
    return _close(worst, 0.0, 1e-13, "jet product defect")


@check("property")
def flow_composition():
    M = _hopf()
    rho = parse_field("1 + 0.1*re_z1z2bar + 0.05*x1", "hopf1")
    X = _pts(M, 50)
    tol = 1e-10
    A = flow_array(M, rho, X, 1.7, tol)
    B = flow_array(M, rho, flow_array(M, rho, X, 0.9, tol), 0.8, tol)
    return _close(float(np.max(np.abs(A - B))), 0.0, 5 * tol, "flow(t1+t2) vs composition")


@check("property")
def volume_refinement():
    M = _hopf()
    rho = parse_field("1 + 0.1*re_z1z2bar + 0.1*x1^2", "hopf1")
    a = contact_volume(M, rho, VolumeScheme(order=(24, 48)))
    b = contact_volume(M, rho, VolumeScheme(order=(48, 96)))
    d = abs(a.value - b.value)
    assert d <= max(a.error, 1e-12 * abs(a.value)), (d, a.error)
    return f"change {d:.1e} <= estimate {a.error:.1e}"


@check("property")
def reeb_residuals_small():
    worst = 0.0
    for M, expr in ((_hopf(), "1 + 0.05*re_z1sq - 0.04*x2 + 0.03*im_z1z2bar"),
                    (_ut(), "1 + 0.05*x - 0.04*y*pz + 0.03*Y(2,1)")):
        X = _pts(M, 1000, 6)
        rho = parse_field(expr, M.domain)
        R = reeb_field(M, rho, X)
        worst = max(worst, float(np.max(reeb_residuals(M, rho, X, R))))
    return _close(worst, 0.0, 1e-9, "Reeb residual")


@check("property")
def regularity_witness():
    worst = 0.0
    for M in (_hopf(), _ut(), parse_model("ut_sphere(metric=revolution, h=0.2*x*(1-x^2))")):
        X = _pts(M, 100, 7)
        worst = max(worst, float(np.max(np.abs(flow_array(M, ONE, X, TWO_PI, 1e-11) - X))))
    return _close(worst, 0.0, 1e-6, "return gap at 2pi")


@check("property")
def averaging_is_projection():
    M = _hopf()
    f = parse_field("re_z1sq + x1^2 + 0.3*im_z1z2bar*x2", "hopf1")
    a = average_along_flow(M, f)
    aa = average_along_flow(M, a)
    X = _pts(M, 100)
    return _close(float(np.max(np.abs(aa(X) - a(X)))), 0.0, 1e-8, "avg(avg f) - avg f")


@check("property")
def decomposition_identity():
    M = _hopf()
    f = parse_field("re_z1sq + x1*x2 + 0.5*abs_z1sq - 0.2*y1^3", "hopf1")
    fbar = average_along_flow(M, f)
    h = solve_homological(M, f - fbar)
    X = _pts(M, 100)
    _, g = h.value_and_grad(X)
    Rh = np.einsum("nd,nd->n", g, M.reeb0(X))
    return _close(float(np.max(np.abs(f(X) - fbar(X) - Rh))), 0.0, 1e-6, "f - avg f - R0(h)")


@check("property")
def normal_form_invariance_and_volume():
    from .systole import volume_corrected_jet
    M = _hopf()
    f = parse_field("re_z1sq", "hopf1")
    jet = volume_corrected_jet(M, DeformationJet([ONE, f, ZERO]))
    nf = normal_form(M, jet, 2)
    assert max(nf.invariance_residuals) < 1e-5, nf.invariance_residuals
    # mu are low-degree trigonometric polynomials; (12, 16) already agrees with (12, 24) to 1e-16
    X, w = M.volume_nodes((12, 16))
    integrals = [float(np.dot(w, mu(X) * np.ones(len(X)))) for mu in nf.mu]
    return _close(max(abs(i) for i in integrals), 0.0, 1e-9,
                  f"residuals {max(nf.invariance_residuals):.1e}; int mu")


@check("property")
def funk_linear_and_even():
    from .transforms import funk_many
    P = fibonacci_sphere(100)
    ev = parse_field("Y(2,0) + 0.4*Y(4,1)", "ut")
    od = parse_field("Y(1,0) - 0.7*Y(3,2)", "ut")
    u = parse_field("Y(2,0) + 0.4*Y(4,1) + Y(1,0) - 0.7*Y(3,2)", "ut")
    fu, fe, fo = funk_many(u, P), funk_many(ev, P), funk_many(od, P)
    lin = float(np.max(np.abs(fu - fe - fo)))
    return _close(max(lin, float(np.max(np.abs(fu - fe)))), 0.0, 1e-10, "funk(u) - funk(even u)")


@check("property")
def xray_matches_funk():
    from .transforms import conformal_tensor, funk_many, zero_energy_test
    u = parse_field("Y(2,0) + 0.5*Y(3,1) + 0.2", "ut")
    res = zero_energy_test(conformal_tensor(u), samples=60, poles=0, seed=3)
    starts = _ut().random_points(60, np.random.default_rng(3))
    poles = np.cross(starts[:, :3], starts[:, 3:])
    return _close(float(np.max(np.abs(res.values - funk_many(u, poles)))), 0.0, 1e-8, "xray(u g0) - funk(u)")


@check("property")
def holmes_thompson_round():
    from .transforms import metric_to_contact_jet, round_metric
    J = metric_to_contact_jet([round_metric()], 0)
    return _close(contact_volume(_ut(), J.rho(0.0)).value, TWO_PI * 4 * math.pi, 1e-9, "vol(S*S2)")


@check("property")
def systole_bound_and_action_identity():
    from .systole import SearchConfig, find_systole, invariant_upper_bound
    M = _hopf()
    mu = parse_field("re_z1z2bar", "hopf1")
    cfg = SearchConfig(grid_size=400)
    est = find_systole(M, 1 + 0.05 * mu, cfg)
    bound = invariant_upper_bound(M, mu, 0.05, 1)
    assert est.value <= bound + est.error_budget, (est.value, bound)
    base = find_systole(M, ONE, SearchConfig(grid_size=200))
    d = abs(base.orbit.action - base.orbit.period)
    assert d < 1e-8, d
    return f"l1 {est.value:.9f} <= bound {bound:.9f}; |action - period| {d:.1e}"


@check("property")
def systole_monotone_refinement():
    from .systole import SearchConfig, find_systole
    M = _hopf()
    rho = parse_field("1 + 0.05*re_z1z2bar + 0.03*abs_z1sq", "hopf1")
    a = find_systole(M, rho, SearchConfig(grid_size=250))
    b = find_systole(M, rho, SearchConfig(grid_size=500))
    assert b.value <= a.value + a.error_budget, (a.value, b.value)
    return f"{a.value:.10f} -> {b.value:.10f}"


@check("property")
def systole_lipschitz_sanity():
    from .systole import SearchConfig, find_systole
    M = _hopf()
    X = _pts(M, 400, 8)
    base = parse_field("re_z1z2bar + 0.5*abs_z1sq", "hopf1")
    pert = parse_field("x1*x2 - 0.5*re_z1sq", "hopf1")
    cfg = SearchConfig(grid_size=300)
    rhos = [1 + 0.04 * base + a * pert for a in (0.0, 0.01, 0.02, 0.03, 0.04)]
    ells = [find_systole(M, r, cfg).value for r in rhos]

    def norm(f):
        v, g = f.value_and_grad(X)
        return float(np.max(np.abs(v)) + np.max(np.linalg.norm(g, axis=1)))

    ratios = []
    for i in range(len(rhos)):
        for j in range(i + 1, len(rhos)):
            ratios.append(abs(ells[i] - ells[j]) / norm(rhos[i] - rhos[j]))
    L = max(ratios[:4])                 # fitted on the pairs with the base point
    worst = max(ratios[4:])
    assert worst <= 1.5 * L + 1e-6, (L, worst)
    return f"fitted L = {L:.3f}, held-out ratio {worst:.3f}"


@check("property")
def zoll_family_flat():
    from .systole import systolic_volume
    vals, ells = [], []
    for c in (0.1, 0.2, 0.3):
        sv = systolic_volume(parse_model(f"ut_sphere(metric=revolution, h={c}*x*(1-x^2))"))
        vals.append(sv.value)
        ells.append(sv.systole.value)
    assert max(abs(e - TWO_PI) for e in ells) < 1e-4, ells
    return _close(max(vals) - min(vals), 0.0, 2e-3, "systolic volume spread")


@check("property")
def config_round_trip():
    from .config import parse_config, serialize_config
    from .experiments import CATALOG
    text = "kind: strict-max\ns_grid: [0.1, 0, -0.1]\njet: ['1', re_z1z2bar]\nseed: 3\n"
    c = parse_config(text, CATALOG)
    canon = serialize_config(c)
    assert serialize_config(parse_config(canon, CATALOG)) == canon
    assert parse_config(canon, CATALOG) == c
    return "parse(serialize(c)) == c"


@check("property")
def run_reproducible():
    import json
    from .cli import main
    with tempfile.TemporaryDirectory() as d:
        path = f"{d}/cfg.yaml"
        with open(path, "w") as fh:
            fh.write("kind: systole\nmodel: ut_sphere(metric=round, quotient=antipodal)\n"
                     "params: {expected: 3.141592653589793, search: {grid_size: 200}}\n")
        outs = []
        for k in range(2):
            code = main(["run", path, "--out", f"{d}/o{k}"])
            assert code == 0, code
            with open(f"{d}/o{k}/cfg.json") as fh:
                js = json.load(fh)
            js.pop("wall_time")
            with open(f"{d}/o{k}/cfg_landscape.csv") as fh:
                outs.append((js, fh.read()))
    assert outs[0] == outs[1]
    return "identical JSON and CSV"


def run_selftest(verbose=False, groups=("example", "property")):
    """Run every check; returns True when all pass."""
    ok = True
    t_all = time.perf_counter()
    for group, name, fn in CHECKS:
        if group not in groups:
            continue
        t0 = time.perf_counter()
        try:
            detail = fn()
            status = "PASS"
        except (AssertionError, ContactError, ValueError) as exc:
            detail = f"{type(exc).__name__}: {exc}"
            status = "FAIL"
            ok = False
        except Exception:  # report, keep going
            detail = traceback.format_exc(limit=3).strip().splitlines()[-1]
            status = "FAIL"
            ok = False
        if verbose:
            print(f"{status} {group:8s} {name:40s} {time.perf_counter() - t0:6.1f}s  {detail}", flush=True)
    if verbose:
        print(f"selftest {'passed' if ok else 'FAILED'} in {time.perf_counter() - t_all:.1f}s")
    return ok
