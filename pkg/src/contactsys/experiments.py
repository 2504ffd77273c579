"""Experiment catalog: one runner per experiment kind.

Every runner takes an :class:`~contactsys.config.ExperimentConfig` and
returns an :class:`ExperimentReport` holding a results table, extra
plot-ready tables and a list of verdicts, each with the tolerance it was
judged against.
"""

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .averaging import normal_form, pullback_orbit_average
from .config import ExperimentConfig
from .errors import ConfigError
from .fields import DeformationJet, ONE, parse_field
from .manifolds import (UnitCotangentSphere, VolumeScheme, contact_volume, flow_array,
                        parse_model)
from .systole import (SearchConfig, find_systole, noncritical_isosystolic_field, orbit_trajectory,
                      strict_max_experiment, systolic_volume)
from .transforms import (conformal_family, conformal_tensor, funk_many, harmonic_tensor, lie_rotation,
                         metric_to_contact_jet, zero_energy_test, zero_tensor)
from .quadrature import fibonacci_sphere

TWO_PI = 2.0 * math.pi


@dataclass
class Verdict:
    name: str
    value: float
    tolerance: float
    rule: str
    passed: bool

    def to_dict(self):
        return {"name": self.name, "value": self.value, "tolerance": self.tolerance,
                "rule": self.rule, "passed": self.passed}


@dataclass
class ExperimentReport:
    kind: str
    inputs: dict
    columns: list
    rows: list
    verdicts: list = field(default_factory=list)
    budgets: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    wall_time: float = 0.0
    notes: list = field(default_factory=list)

    @property
    def passed(self):
        return all(v.passed for v in self.verdicts)

    def check(self, name, value, tolerance, rule, passed=None):
        """Record a verdict. ``rule`` is one of ``abs<=``, ``<``, ``>``, ``<=`` or free text
        with an explicit ``passed``."""
        value = float(value)
        if passed is None:
            if rule == "abs<=":
                passed = abs(value) <= tolerance
            elif rule == "<":
                passed = value < tolerance
            elif rule == ">":
                passed = value > tolerance
            elif rule == "<=":
                passed = value <= tolerance
            elif rule == ">=":
                passed = value >= tolerance
            else:
                raise ValueError(f"unknown rule {rule!r}")
        self.verdicts.append(Verdict(name, value, float(tolerance), rule, bool(passed)))

    def to_json(self):
        return {"kind": self.kind, "inputs": self.inputs, "columns": self.columns, "rows": self.rows,
                "verdicts": [v.to_dict() for v in self.verdicts], "passed": self.passed,
                "budgets": self.budgets, "notes": self.notes, "wall_time": self.wall_time}


@dataclass
class CatalogEntry:
    kind: str
    summary: str
    runner: Callable
    defaults: dict


# -- config helpers ------------------------------------------------------------

def _default(cfg, key, fallback=None):
    val = getattr(cfg, key)
    if val is None:
        val = CATALOG[cfg.kind].defaults.get(key, fallback)
    return val


def _model(cfg):
    try:
        return parse_model(_default(cfg, "model", "hopf(n=1)"))
    except ConfigError as exc:
        raise ConfigError(f"model: {exc}") from None


def _field(expr, domain, key):
    try:
        return parse_field(expr, domain)
    except ConfigError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def _search(cfg):
    opts = dict(cfg.params.get("search", {}))
    opts.setdefault("seed", cfg.seed)
    opts.setdefault("tol", cfg.tol("integrator"))
    try:
        return SearchConfig(**opts)
    except TypeError as exc:
        raise ConfigError(f"params.search: {exc}") from None


def _jet(cfg, domain):
    exprs = _default(cfg, "jet")
    if not exprs:
        raise ConfigError("jet: this experiment needs a jet")
    cs = [_field(c, domain, f"jet[{i}]") for i, c in enumerate(exprs)]
    try:
        return DeformationJet(cs, label="[" + ", ".join(exprs) + "]")
    except ValueError as exc:
        raise ConfigError(f"jet: {exc}") from None


def _expected(report, name, value, cfg, budget=0.0):
    exp = cfg.params.get("expected")
    if exp is None:
        return
    tol = float(cfg.params.get("tolerance", cfg.tol("verdict")))
    report.check(f"{name} - expected", value - float(exp), tol + budget, "abs<=")


# -- runners -----------------------------------------------------------------------

def run_systole(cfg):
    model = _model(cfg)
    rho = _field(cfg.rho, model.domain, "rho")
    est = find_systole(model, rho, _search(cfg))
    rep = ExperimentReport(cfg.kind, cfg.to_dict(), ["quantity", "value", "error_budget", "degenerate"], [])
    rep.rows.append({"quantity": "systole", "value": est.value, "error_budget": est.error_budget,
                     "degenerate": est.degenerate})
    rep.budgets["systole"] = est.error_budget
    if est.degenerate:
        rep.notes.append(est.note)
    d = model.ambient_dim
    coord_cols = [f"x{i}" for i in range(d)]
    land = []
    for i in range(len(est.grid)):
        land.append([i] + list(est.grid[i]) + [est.grid_tau[i], est.grid_actions[i]])
    rep.tables["landscape"] = (["sample_id"] + coord_cols + ["tau", "action"], land)
    traj = orbit_trajectory(model, rho, est.orbit, cfg.tol("integrator"))
    rep.tables["orbit"] = (["t"] + coord_cols, [[t] + list(p) for t, p in zip(traj.times, traj.points)])
    _expected(rep, "systole", est.value, cfg, est.error_budget)
    return rep


def run_volume(cfg):
    model = _model(cfg)
    rho = _field(cfg.rho, model.domain, "rho")
    opts = cfg.params.get("scheme", {})
    scheme = VolumeScheme(**opts) if opts else None
    if scheme is not None and scheme.seed is None:
        scheme.seed = cfg.seed
    vol = contact_volume(model, rho, scheme)
    rep = ExperimentReport(cfg.kind, cfg.to_dict(), ["quantity", "value", "error"], [])
    rep.rows.append({"quantity": "volume", "value": vol.value, "error": vol.error})
    rep.budgets["volume"] = vol.error
    _expected(rep, "volume", vol.value, cfg, vol.error)
    return rep


def run_systolic_volume(cfg):
    model = _model(cfg)
    rho = _field(cfg.rho, model.domain, "rho")
    sv = systolic_volume(model, rho, _search(cfg))
    rep = ExperimentReport(cfg.kind, cfg.to_dict(), ["quantity", "value", "error"], [])
    rep.rows += [{"quantity": "volume", "value": sv.volume, "error": float("nan")},
                 {"quantity": "systole", "value": sv.systole.value, "error": sv.systole.error_budget},
                 {"quantity": "systolic_volume", "value": sv.value, "error": sv.error}]
    rep.budgets["systolic_volume"] = sv.error
    _expected(rep, "systolic_volume", sv.value, cfg, sv.error)
    return rep


def run_pu_round(cfg):
    cfg.params.setdefault("expected", 4.0)
    cfg.params.setdefault("tolerance", 1e-3)
    return run_systolic_volume(cfg)


def run_normal_form(cfg):
    model = _model(cfg)
    jet = _jet(cfg, model.domain)
    k = int(cfg.params.get("k", jet.order))
    nf = normal_form(model, jet, k)
    X = model.random_points(int(cfg.params.get("samples", 200)), np.random.default_rng(cfg.seed))
    rep = ExperimentReport(cfg.kind, cfg.to_dict(), ["order", "mu_sup", "invariance_residual"], [])
    res_tol = float(cfg.params.get("residual_tolerance", 1e-5))
    for i, (mu, res) in enumerate(zip(nf.mu, nf.invariance_residuals), start=1):
        sup = float(np.max(np.abs(mu(X))))
        rep.rows.append({"order": i, "mu_sup": sup, "invariance_residual": res})
        rep.check(f"mu{i} invariance residual", res, res_tol, "<")
    for i, bound in (cfg.params.get("mu_sup_below") or {}).items():
        rep.check(f"mu{i} sup", rep.rows[int(i) - 1]["mu_sup"], float(bound), "<")
    if cfg.params.get("oracle") and k >= 2 and nf.generators[0].constant is None:
        n_or = int(cfg.params.get("oracle_samples", 200))
        Xo = X[:n_or]
        nus = [jet[i] for i in range(1, k + 1)]
        orc = pullback_orbit_average(model, nus, nf.generators[0], Xo, order=2)
        err = float(np.max(np.abs(orc - nf.mu[1](Xo))))
        rep.rows.append({"order": "2-oracle", "mu_sup": err, "invariance_residual": float("nan")})
        rep.check("mu2 vs pullback oracle", err, float(cfg.params.get("oracle_tolerance", 1e-4)), "<")
    return rep


def run_funk(cfg):
    u = _field(cfg.params.get("u", "Y(1,0)"), "ut", "params.u")
    poles = fibonacci_sphere(int(cfg.params.get("poles", 200)))
    vals = funk_many(u, poles)
    rep = ExperimentReport(cfg.kind, cfg.to_dict(), ["pole_x", "pole_y", "pole_z", "funk"], [])
    for p, v in zip(poles, vals):
        rep.rows.append({"pole_x": p[0], "pole_y": p[1], "pole_z": p[2], "funk": v})
    mx = float(np.max(np.abs(vals)))
    if "expected_max_abs" in cfg.params:
        tol = float(cfg.params.get("tolerance", 1e-10))
        rep.check("max |funk| - expected", mx - float(cfg.params["expected_max_abs"]), tol, "abs<=")
    return rep


def _tensor(desc):
    desc = str(desc).strip()
    if desc == "zero":
        return zero_tensor()
    if desc.startswith("rotation(") and desc.endswith(")"):
        axis = {"x": (1, 0, 0), "y": (0, 1, 0), "z": (0, 0, 1)}.get(desc[9:-1].strip())
        if axis is None:
            raise ConfigError(f"params.tensor: unknown rotation axis in {desc!r}")
        return lie_rotation(np.array(axis, dtype=float))
    if desc.startswith("harmonic(") and desc.endswith(")"):
        try:
            l, m = (int(a) for a in desc[9:-1].split(","))
        except ValueError:
            raise ConfigError(f"params.tensor: malformed {desc!r}") from None
        return harmonic_tensor(l, m)
    if desc.startswith("conformal(") and desc.endswith(")"):
        return conformal_tensor(_field(desc[10:-1], "ut", "params.tensor"))
    raise ConfigError(f"params.tensor: unknown tensor {desc!r}")


def run_zero_energy(cfg):
    tensor = _tensor(cfg.params.get("tensor", "zero"))
    model = _model(cfg)
    if not isinstance(model, UnitCotangentSphere):
        raise ConfigError("model: zero-energy needs a ut_sphere model")
    res = zero_energy_test(tensor, model.metric, samples=int(cfg.params.get("samples", 200)), seed=cfg.seed,
                           poles=int(cfg.params.get("poles", 500)))
    rep = ExperimentReport(cfg.kind, cfg.to_dict(), ["geodesic", "xray"], [])
    rep.rows = [{"geodesic": i, "xray": float(v)} for i, v in enumerate(res.values)]
    if "expected_max_abs" in cfg.params:
        tol = float(cfg.params.get("tolerance", 1e-8))
        rep.check("max |xray| - expected", res.max_abs - float(cfg.params["expected_max_abs"]), tol, "abs<=")
    return rep


def run_strict_max(cfg):
    model = _model(cfg)
    k_max = int(cfg.params.get("k_max", 1))
    family = None
    if cfg.params.get("family") == "conformal":
        u_expr = str(cfg.params.get("u", "Y(2,0)"))
        u = _field(u_expr, model.domain, "params.u")
        jet = metric_to_contact_jet(conformal_family(u, k_max), k_max)

        def conformal(s):
            # e^{s u} g0 has rho_s = e^{s u / 2}
            return parse_field(f"exp({0.5 * s!r}*({u_expr}))", model.domain) if s else ONE
        family = conformal
    else:
        jet = _jet(cfg, model.domain)
    grid = [float(s) for s in _default(cfg, "s_grid", [0.0])]
    rep_ = strict_max_experiment(model, jet, grid, k_max,
                                 volume_correct=bool(cfg.params.get("volume_correct", True)),
                                 search=_search(cfg), family=family)
    rep = ExperimentReport(cfg.kind, cfg.to_dict(), ["s", "systole", "predicted_change", "error_budget"], [])
    for s, v, p, b in zip(rep_.s_grid, rep_.systoles, rep_.predicted, rep_.budgets):
        rep.rows.append({"s": s, "systole": v, "predicted_change": p, "error_budget": b})
    rep.notes.append(rep_.note)
    for i, sup in enumerate(rep_.mu_sup, start=1):
        rep.budgets[f"mu{i}_sup"] = sup
    if rep_.order is not None:
        rep.check(f"strict maximum at order {rep_.order}", 1.0 if rep_.verdict else 0.0, 0.2,
                  "drop >= (1 - slack) * predicted", passed=rep_.verdict)
    else:
        rep.check("fitted exponent", rep_.exponent, k_max + 1 - 0.1, ">=")
    below = cfg.params.get("drop_at_least")
    if below is not None:
        # explicit margin: l1(s) < l1(0) - below * |s| for every s != 0
        worst = min((rep_.baseline - v) - float(below) * abs(s)
                    for s, v in zip(rep_.s_grid, rep_.systoles) if s != 0.0)
        rep.check("min over s of (l1(0) - l1(s) - margin)", worst, 0.0, ">")
    return rep


def run_zoll_family(cfg):
    cs = [float(c) for c in cfg.params.get("c_values", [0.1, 0.2, 0.3])]
    n_geo = int(cfg.params.get("geodesics", 50))
    close_tol = float(cfg.params.get("closure_tolerance", 1e-5))
    sv_tol = float(cfg.params.get("systolic_volume_tolerance", 2e-3))
    sys_tol = float(cfg.params.get("systole_tolerance", 1e-4))
    rep = ExperimentReport(cfg.kind, cfg.to_dict(),
                           ["c", "max_closure_gap", "systole", "systolic_volume", "error"], [])
    svs = []
    for c in cs:
        model = parse_model(f"ut_sphere(metric=revolution, h={c!r}*x*(1-x^2))")
        X = model.random_points(n_geo, np.random.default_rng(cfg.seed))
        Y = flow_array(model, ONE, X, TWO_PI, cfg.tol("integrator"))
        gap = float(np.max(np.linalg.norm(Y - X, axis=1)))
        sv = systolic_volume(model, ONE, _search(cfg))
        svs.append(sv.value)
        rep.rows.append({"c": c, "max_closure_gap": gap, "systole": sv.systole.value,
                         "systolic_volume": sv.value, "error": sv.error})
        rep.check(f"closure gap c={c:g}", gap, close_tol, "<")
        rep.check(f"systole - 2pi c={c:g}", sv.systole.value - TWO_PI, sys_tol, "abs<=")
    rep.check("systolic volume spread", max(svs) - min(svs), sv_tol, "<")
    return rep


def run_noncritical(cfg):
    model = _model(cfg)
    eps = float(cfg.params.get("eps", 0.05))
    strength = float(cfg.params.get("strength", 1.0))
    s_values = [float(s) for s in cfg.params.get("s_values", [-0.02, 0.02])]
    search = _search(cfg)
    base = find_systole(model, ONE, search)
    nc = noncritical_isosystolic_field(model, eps, strength=strength, seed=cfg.seed, period=base.value,
                                       tol=cfg.tol("integrator"))
    h = float(cfg.params.get("fd_step", 0.02))
    vp = contact_volume(model, 1 + h * nc.field)
    vm = contact_volume(model, 1 - h * nc.field)
    dvol = (vp.value - vm.value) / (2 * h)
    rep = ExperimentReport(cfg.kind, cfg.to_dict(), ["s", "systole", "error_budget", "difference"], [])
    rep.rows.append({"s": 0.0, "systole": base.value, "error_budget": base.error_budget, "difference": 0.0})
    rep.budgets["dvol_fd"] = dvol
    rep.check("dvol/ds at 0", dvol, float(cfg.params.get("dvol_threshold", -0.01)), "<")
    for s in s_values:
        est = find_systole(model, 1 + s * nc.field, search)
        diff = est.value - base.value
        tol = 2 * max(est.error_budget, base.error_budget)
        rep.rows.append({"s": s, "systole": est.value, "error_budget": est.error_budget, "difference": diff})
        rep.check(f"systole shift s={s:g}", diff, tol, "abs<=")
    # support check on the construction samples
    on_set = nc.return_distance <= eps
    leak = float(np.max(np.abs(nc.field(nc.samples[on_set])))) if on_set.any() else 0.0
    rep.check("rho_dot on M_T(eps)", leak, 0.0, "<=")
    return rep


CATALOG = {e.kind: e for e in [
    CatalogEntry("funk", "great-circle integrals of a function on the round sphere", run_funk,
                 {"params": {"u": "Y(1,0)", "poles": 200, "expected_max_abs": 0.0, "tolerance": 1e-10}}),
    CatalogEntry("noncritical", "volume-decreasing deformation that keeps the systole (non-Zoll metric)",
                 run_noncritical,
                 {"model": "ut_sphere(metric=revolution, h=0.2*x^2*(1-x^2))",
                  "params": {"eps": 0.05, "strength": 1.0, "s_values": [-0.02, 0.02]}}),
    CatalogEntry("normal-form", "normal form of a contact-form jet, with a pullback oracle", run_normal_form,
                 {"model": "hopf(n=1)", "jet": ["1", "re_z1sq", "0"],
                  "params": {"k": 2, "oracle": True, "oracle_samples": 200}}),
    CatalogEntry("pu-round", "systolic volume of the round projective plane (expected 4)", run_pu_round,
                 {"model": "ut_sphere(metric=round, quotient=antipodal)", "params": {"expected": 4.0}}),
    CatalogEntry("strict-max", "strict local maximum of the systole along a deformation", run_strict_max,
                 {"model": "hopf(n=1)", "jet": ["1", "re_z1z2bar"],
                  "s_grid": [-0.1, -0.05, -0.025, 0.0, 0.025, 0.05, 0.1], "params": {"k_max": 1}}),
    CatalogEntry("systole", "shortest periodic Reeb orbit", run_systole,
                 {"model": "hopf(n=1)", "rho": "1", "params": {"expected": TWO_PI}}),
    CatalogEntry("systolic-volume", "contact volume over systole^(n+1)", run_systolic_volume,
                 {"model": "hopf(n=1)", "params": {"expected": 1.0, "tolerance": 1e-4}}),
    CatalogEntry("volume", "contact volume of rho * alpha0", run_volume,
                 {"model": "hopf(n=1)", "params": {"expected": 4 * math.pi ** 2}}),
    CatalogEntry("zero-energy", "X-ray transform of a symmetric 2-tensor on a Zoll metric", run_zero_energy,
                 {"model": "ut_sphere(metric=round)",
                  "params": {"tensor": "rotation(z)", "expected_max_abs": 0.0, "tolerance": 1e-8}}),
    CatalogEntry("zoll-family", "closure and flat systolic volume along a Zoll family", run_zoll_family,
                 {"params": {"c_values": [0.1, 0.2, 0.3], "geodesics": 50}}),
]}


def list_catalog():
    """Experiment kinds, alphabetically, with summary and default config."""
    import yaml
    lines = []
    for kind in sorted(CATALOG):
        e = CATALOG[kind]
        lines.append(f"{kind:16s} {e.summary}")
        body = yaml.safe_dump({"kind": kind, **e.defaults}, sort_keys=True, default_flow_style=True).strip()
        lines.append(f"{'':16s} default: {body}")
    return "\n".join(lines)


def default_config(kind):
    from .config import parse_config
    import yaml
    return parse_config(yaml.safe_dump({"kind": kind, **CATALOG[kind].defaults}), CATALOG)


def run(cfg: ExperimentConfig) -> ExperimentReport:
    if cfg.kind not in CATALOG:
        raise ConfigError(f"kind: unknown experiment kind {cfg.kind!r}")
    t0 = time.perf_counter()
    rep = CATALOG[cfg.kind].runner(cfg)
    rep.wall_time = time.perf_counter() - t0
    return rep
