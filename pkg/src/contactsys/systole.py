"""Shortest periodic Reeb orbits, systolic volume and deformation experiments.

The systole is located through the first-return action functional: from a
point ``x`` the Reeb flow of ``rho * alpha0`` is followed until it crosses
the affine section through ``x`` spanned by the contact hyperplane of the
unperturbed form. The action is the return time plus the integral of
``rho * alpha0`` along the straight segment that closes the arc. Critical
points of this functional lie on closed orbits; its minimum over the model
is the systole when ``rho`` is close to 1.
"""

import logging
import math
import warnings
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import norm, qmc

from .averaging import invariance_residual, normal_form
from .errors import (DescentError, InvarianceError, NoSectionCrossingError, RegularModelError)
from .fields import ONE, DeformationJet, Point, ScalarField, constant
from .integrate import SectionEvent, integrate
from .manifolds import ReebTrajectory, VolumeScheme, contact_volume, trajectory
from .quadrature import segment_rule

log = logging.getLogger(__name__)

NEWTON_TOL = 1e-8
FD_STEP = 1e-5


@dataclass
class SearchConfig:
    grid_size: int = 2000
    descent_iters: int = 60
    seed: int = 0
    tol: float = 1e-10
    eps: float = 0.3
    max_candidates: int = 64
    polish: int = 4
    step0: float = 0.05
    step_min: float = 1e-4


@dataclass
class PeriodicOrbit:
    start: Point
    period: float
    action: float
    closure_gap: float
    trajectory: Optional[ReebTrajectory] = None


@dataclass
class SystoleEstimate:
    value: float
    method: str
    orbit: Optional[PeriodicOrbit]
    error_budget: float
    samples: int
    seed: int
    degenerate: bool = False
    candidates: list = dc_field(default_factory=list)
    grid: Optional[np.ndarray] = None
    grid_actions: Optional[np.ndarray] = None
    grid_tau: Optional[np.ndarray] = None

    @property
    def note(self):
        return "degenerate minimum - regular up to resolution" if self.degenerate else ""


def expected_period(model):
    return model.reference_period / (2.0 if model.quotient else 1.0)


def _targets(model, X):
    return model.antipode(X) if model.quotient else X


def _weight_only(model, rho, X):
    W = rho(X)
    if model.weight is not None:
        W = W * model.weight(X)
    return W


def closing_correction(model, rho, Y, A, nodes=8):
    """``int rho alpha0`` along the straight segments from rows of ``Y`` to ``A``."""
    u, w = segment_rule(nodes)
    D = A - Y
    P = (Y[:, None, :] + u[None, :, None] * D[:, None, :]).reshape(-1, Y.shape[1])
    vals = _weight_only(model, rho, P) * np.einsum("nd,nd->n", model.lam(P), np.repeat(D, nodes, axis=0))
    return vals.reshape(len(Y), nodes) @ w


@dataclass
class ReturnBatch:
    x_return: np.ndarray
    tau: np.ndarray
    action: np.ndarray
    closure: np.ndarray
    budget: np.ndarray
    ok: np.ndarray


_THREADS = 1


def set_threads(n):
    """Cap on worker threads for batched first-return evaluations."""
    global _THREADS
    _THREADS = max(1, int(n))


def first_return_batch(model, rho, X, tol=1e-10, eps=0.3, strict=True, anchors=None):
    """First return to the section through each row's anchor (``x``, or its
    antipodal lift on the quotient). Rows without a crossing by ``2T`` get
    NaN unless ``strict``, which raises :class:`NoSectionCrossingError`.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if _THREADS > 1 and len(X) >= 256 * _THREADS:
        from concurrent.futures import ThreadPoolExecutor
        parts = np.array_split(np.arange(len(X)), _THREADS)
        A = _targets(model, X) if anchors is None else anchors
        with ThreadPoolExecutor(_THREADS) as pool:
            outs = list(pool.map(lambda ix: _first_return(model, rho, X[ix], tol, eps, strict, A[ix]), parts))
        # rows are integrated independently, so the split does not change any value
        return ReturnBatch(*(np.concatenate([getattr(o, f) for o in outs])
                             for f in ("x_return", "tau", "action", "closure", "budget", "ok")))
    return _first_return(model, rho, X, tol, eps, strict, anchors)


def _first_return(model, rho, X, tol, eps, strict, anchors):
    T = expected_period(model)
    A = _targets(model, X) if anchors is None else anchors
    Nrm = model.reeb_lambda(A)

    def g(Y, rows):
        return np.einsum("nd,nd->n", Nrm[rows], Y - A[rows])

    def accept(Y, rows):
        return np.linalg.norm(Y - A[rows], axis=1) < eps

    ev = SectionEvent(g=g, accept=accept, t_min=0.5 * T)
    res = integrate(model.rhs(rho), X, 2.0 * T, tol, project=model.project,
                    residual=model.residual, event=ev)
    ok = np.isfinite(res.event_t)
    if strict and not ok.all():
        raise NoSectionCrossingError(
            f"{int((~ok).sum())} of {len(X)} orbits did not cross their section within 2T")
    tau = res.event_t
    xr = res.event_y
    action = np.full(len(X), np.nan)
    closure = np.full(len(X), np.nan)
    if ok.any():
        action[ok] = tau[ok] + closing_correction(model, rho, xr[ok], A[ok])
        closure[ok] = np.linalg.norm(xr[ok] - A[ok], axis=1)
    return ReturnBatch(xr, tau, action, closure, res.error_budget, ok)


def first_return_action(model, rho, x, tol=1e-10, eps=0.3):
    """``(x_return, tau, action)`` of the first-return functional at a point."""
    X = x.coords[None, :] if isinstance(x, Point) else np.atleast_2d(x)
    model.check(X)
    r = first_return_batch(model, rho, X, tol, eps)
    return Point(model.domain, r.x_return[0]), float(r.tau[0]), float(r.action[0])


# ---------------------------------------------------------------------------
# systole search
# ---------------------------------------------------------------------------

def sobol_points(model, count, seed):
    d = model.ambient_dim
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        U = qmc.Sobol(d, scramble=True, seed=seed).random(count)
    G = norm.ppf(np.clip(U, 1e-12, 1 - 1e-12))
    return model.project(G)


def _chart(model, x0, U, iters=3):
    """Points on the manifold and on the section through ``x0``: ``x0 + u . E``
    corrected along ``R_lam`` and retracted."""
    x0 = np.atleast_2d(x0)
    E = model.frame(x0)[0]
    n = model.reeb_lambda(x0)[0]
    Y = x0 + U @ E
    Y = model.project(Y)
    for _ in range(iters):
        c = (Y - x0) @ n / (n @ n)
        Y = model.project(Y - c[:, None] * n[None, :])
    return Y


def _pattern_search(model, rho, X, A, cfg):
    X, A = X.copy(), A.copy()
    step = np.full(len(X), cfg.step0)
    k = 2 * model.n
    for _ in range(cfg.descent_iters):
        act = np.nonzero(step >= cfg.step_min)[0]
        if not len(act):
            break
        E = model.frame(X[act])
        dirs = np.concatenate([E, -E], axis=1)
        trial = X[act][:, None, :] + step[act][:, None, None] * dirs
        trial = model.project(trial.reshape(-1, X.shape[1]))
        r = first_return_batch(model, rho, trial, cfg.tol, cfg.eps, strict=False)
        At = r.action.reshape(len(act), 2 * k)
        At = np.where(np.isfinite(At), At, np.inf)
        best = np.argmin(At, axis=1)
        bestA = At[np.arange(len(act)), best]
        better = bestA < A[act] - 1e-13
        mv = act[better]
        X[mv] = trial.reshape(len(act), 2 * k, -1)[better, best[better]]
        A[mv] = bestA[better]
        step[act[~better]] *= 0.5
    return X, A


def _poincare(model, rho, x0, U, cfg):
    """Chart coordinates of the first return of section points ``U`` (rows)."""
    Y = _chart(model, x0, U)
    A0 = _targets(model, np.atleast_2d(x0))
    anchors = np.repeat(A0, len(Y), axis=0)
    r = first_return_batch(model, rho, Y, min(cfg.tol, 1e-11), cfg.eps, strict=False, anchors=anchors)
    back = _targets(model, r.x_return)          # the antipode is an involution
    E = model.frame(np.atleast_2d(x0))[0]
    Uret = (back - x0) @ E.T
    return Y, r, Uret


def newton_polish(model, rho, x0, cfg, max_iter=12):
    """Newton iteration on ``P(u) - u`` for the return map of the section through ``x0``.

    Returns ``(start, tau, action, gap)``; ``gap`` is the final closure distance.
    """
    x0 = np.atleast_2d(x0)
    k = 2 * model.n
    u = np.zeros(k)
    best = None
    for _ in range(max_iter):
        H = FD_STEP * np.eye(k)
        U = np.concatenate([u[None, :], u + H, u - H], axis=0)
        Y, r, Uret = _poincare(model, rho, x0, U, cfg)
        if not r.ok.all():
            break
        F = Uret - U
        gap = float(np.linalg.norm(r.x_return[0] - _targets(model, Y[:1])[0]))
        if best is None or gap < best[3]:
            best = (Y[0], float(r.tau[0]), float(r.action[0]), gap)
        if gap < NEWTON_TOL * 0.1:
            break
        J = (F[1:k + 1] - F[k + 1:]).T / (2 * FD_STEP)
        du, *_ = np.linalg.lstsq(J, -F[0], rcond=1e-10)
        if np.linalg.norm(du) > 0.2:
            du *= 0.2 / np.linalg.norm(du)
        u = u + du
    return best


def find_systole(model, rho=ONE, search=None, **kw):
    """Minimum of the first-return action over the model, polished to a closed orbit.

    Parameters
    ----------
    search : SearchConfig, optional
        Grid size, descent iterations, seed and tolerances; keyword
        arguments override its fields.
    """
    cfg = search or SearchConfig()
    for key, val in kw.items():
        setattr(cfg, key, val)
    T = expected_period(model)
    X = sobol_points(model, cfg.grid_size, cfg.seed)
    r = first_return_batch(model, rho, X, cfg.tol, cfg.eps, strict=False)
    if not r.ok.any():
        raise NoSectionCrossingError("no grid point returned to its section")
    budget = max(1e-8, 50 * cfg.tol * T, float(np.nanmax(r.budget[r.ok])))
    Aok = np.where(r.ok, r.action, np.inf)
    spread = float(np.max(Aok[r.ok]) - np.min(Aok[r.ok]))
    degenerate = spread < budget
    order = np.argsort(Aok)
    if degenerate:
        C, CA = X[order[:1]], Aok[order[:1]]
    else:
        ncand = max(1, min(cfg.max_candidates, int(math.ceil(0.1 * r.ok.sum()))))
        C, CA = _pattern_search(model, rho, X[order[:ncand]], Aok[order[:ncand]], cfg)
    corder = np.argsort(CA)
    picked = []
    for i in corder:
        if len(picked) >= cfg.polish:
            break
        if all(np.linalg.norm(C[i] - C[j]) > 1e-3 for j in picked):
            picked.append(i)
    candidates = []
    for i in picked:
        res = newton_polish(model, rho, C[i], cfg)
        if res is None:
            candidates.append({"start": C[i], "action": float(CA[i]), "converged": False, "gap": float("inf")})
            continue
        start, tau, action, gap = res
        candidates.append({"start": start, "action": action, "tau": tau, "gap": gap,
                           "converged": gap < NEWTON_TOL, "grid_action": float(CA[i])})
    for c in candidates:
        log.debug("systole candidate action=%.12f gap=%.2e converged=%s", c["action"], c["gap"], c["converged"])
    conv = [c for c in candidates if c["converged"]]
    if not conv:
        bestc = min(candidates, key=lambda c: c["action"])
        raise DescentError(f"no candidate orbit closed to {NEWTON_TOL:g} "
                           f"(best gap {bestc['gap']:.2e}, action {bestc['action']:.9f})", best=bestc)
    win = min(conv, key=lambda c: c["action"])
    budget = max(budget, win["gap"])
    start = Point(model.domain, win["start"])
    orbit = PeriodicOrbit(start, win["tau"], win["action"], win["gap"])
    return SystoleEstimate(value=win["action"], method="ginzburg_min", orbit=orbit, error_budget=budget,
                           samples=cfg.grid_size, seed=cfg.seed, degenerate=degenerate,
                           candidates=candidates, grid=X, grid_actions=r.action, grid_tau=r.tau)


def orbit_trajectory(model, rho, orbit, tol=1e-10):
    orbit.trajectory = trajectory(model, rho, orbit.start, orbit.period, tol)
    return orbit.trajectory


# ---------------------------------------------------------------------------
# bounds and volumes
# ---------------------------------------------------------------------------

@dataclass
class Extrema:
    minimum: float
    maximum: float
    argmin: np.ndarray
    argmax: np.ndarray
    resolution: float


def field_extrema(model, f, grid=4000, seed=0, iters=200):
    """Minimum and maximum of ``f`` by a Sobol grid and projected gradient steps."""
    X = sobol_points(model, grid, seed)
    v = f(X)
    out = []
    for sign in (1.0, -1.0):
        idx = np.argsort(sign * v)[:16]
        Y = X[idx].copy()
        val = sign * v[idx]
        step = np.full(len(Y), 0.1)
        for _ in range(iters):
            _, g = f.value_and_grad(Y)
            g = sign * g
            # tangential part via the frame (including the Reeb direction)
            B = np.concatenate([model.reeb_lambda(Y)[:, None, :], model.frame(Y)], axis=1)
            B = B / np.linalg.norm(B, axis=2)[:, :, None]
            gt = np.einsum("nkd,nd->nk", B, g)
            dirn = -np.einsum("nk,nkd->nd", gt, B)
            Z = model.project(Y + step[:, None] * dirn)
            zv = sign * f(Z)
            good = zv < val
            Y[good], val[good] = Z[good], zv[good]
            step = np.where(good, step * 1.5, step * 0.5)
            if np.all(step < 1e-10):
                break
        j = int(np.argmin(val))
        out.append((sign * val[j], Y[j], float(step[j])))
    (mn, amn, r1), (mx, amx, r2) = out
    return Extrema(mn, mx, amn, amx, max(r1, r2))


def invariant_upper_bound(model, mu, s, k=1, check_samples=100, tol=1e-6):
    """``(1 + s^k ext mu) T`` for a flow-invariant ``mu``; ``ext`` is the min
    when ``s^k >= 0`` and the max otherwise."""
    T = expected_period(model)
    if mu.constant is not None:
        return (1.0 + s ** k * mu.constant) * T
    res = invariance_residual(model, mu, samples=check_samples, times=16)
    if res > tol:
        raise InvarianceError(f"field is not flow-invariant (residual {res:.3e} > {tol:g})")
    ext = field_extrema(model, mu)
    e = ext.minimum if s ** k >= 0 else ext.maximum
    return (1.0 + s ** k * e) * T


@dataclass
class SystolicVolume:
    value: float
    error: float
    volume: float
    systole: SystoleEstimate


def systolic_volume(model, rho=ONE, search=None, volume_scheme=None, **kw):
    """``vol / l1^{n+1}`` with the propagated error budget."""
    est = find_systole(model, rho, search, **kw)
    vol = contact_volume(model, rho, volume_scheme)
    p = model.n + 1
    val = vol.value / est.value ** p
    err = vol.error / est.value ** p + p * vol.value * est.error_budget / est.value ** (p + 1)
    return SystolicVolume(val, err, vol.value, est)


# ---------------------------------------------------------------------------
# non-criticality deformation
# ---------------------------------------------------------------------------

def _bump(q):
    out = np.zeros_like(q)
    m = q < 1.0
    out[m] = np.exp(1.0 - 1.0 / (1.0 - q[m]))
    return out


def _bump_grad(q):
    # d/dq exp(1 - 1/(1-q)) = -exp(...) / (1-q)^2
    out = np.zeros_like(q)
    m = q < 1.0
    out[m] = -np.exp(1.0 - 1.0 / (1.0 - q[m])) / (1.0 - q[m]) ** 2
    return out


def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (t * (6 * t - 15) + 10)


class KernelBumpField(ScalarField):
    """``sum_j w_j K(|y - x_j|^2 / r_j^2) / C`` with compactly supported ``K``.

    ``radius`` may be a scalar or one radius per centre.
    """

    def __init__(self, model, centers, weights, radius, scale=1.0, label="bump"):
        keep = weights > 0
        self.centers = centers[keep]
        self.weights = weights[keep]
        self.radii = np.broadcast_to(np.asarray(radius, dtype=float), weights.shape)[keep].copy()
        self.scale = scale
        self.tree = cKDTree(self.centers) if len(self.centers) else None
        self._cache = (None, None)
        super().__init__(self._value, domain=model.domain, parity="unknown", label=label,
                         dual=False, grad_fn=self._grad)

    def _pairs(self, X):
        key = hash(X.tobytes())
        ck, cv = self._cache                 # one read: safe under worker threads
        if ck == key:
            return cv
        fin = np.nonzero(np.all(np.isfinite(X), axis=1))[0]
        sp = cKDTree(X[fin]).sparse_distance_matrix(self.tree, float(self.radii.max()),
                                                     output_type="coo_matrix")
        i, j = fin[sp.row], sp.col
        d = X[i] - self.centers[j]
        q = np.sum(d * d, axis=1) / self.radii[j] ** 2
        m = q < 1.0
        out = (i[m], j[m], d[m], q[m])
        self._cache = (key, out)
        return out

    def _value(self, X):
        X = np.atleast_2d(X)
        out = np.zeros(len(X))
        if self.tree is None:
            return out
        i, j, _, q = self._pairs(X)
        np.add.at(out, i, self.weights[j] * _bump(q))
        return out / self.scale

    def _grad(self, X):
        X = np.atleast_2d(X)
        out = np.zeros_like(X)
        if self.tree is None:
            return out
        i, j, d, q = self._pairs(X)
        coef = self.weights[j] * _bump_grad(q) * 2.0 / self.radii[j] ** 2
        np.add.at(out, i, coef[:, None] * d)
        return out / self.scale


@dataclass
class NoncriticalField:
    field: ScalarField
    period: float
    eps: float
    radii: np.ndarray
    lipschitz: float
    witnesses: np.ndarray
    return_distance: np.ndarray
    samples: np.ndarray
    strength: float


def noncritical_isosystolic_field(model, eps, strength=1.0, samples=3000, seed=0, tol=1e-10,
                                  period=None, search=None):
    """``rho_dot = -b chi`` with ``0 <= chi <= 1`` supported away from
    ``M_T(eps) = {x : |phi_T(x) - x| <= eps}``, ``T`` the systole.

    ``chi`` is a sum of compact kernel bumps centred at sample points whose
    return distance ``d_j`` exceeds ``2 eps``. A bump of radius
    ``0.9 (d_j - eps) / L``, with ``L`` an empirical Lipschitz constant of the
    return distance (inflated by 1.5), cannot reach a point returning within
    ``eps``.
    """
    if period is None:
        period = find_systole(model, ONE, search).value
    X = sobol_points(model, samples, seed + 1)
    from .manifolds import flow_array
    Y = flow_array(model, ONE, X, period, tol)
    d = np.linalg.norm(Y - _targets(model, X), axis=1)
    if np.max(d) <= eps:
        raise RegularModelError(f"every sample returns within eps = {eps:g} after T = {period:.6g}")
    pairs = cKDTree(X).query_pairs(0.15, output_type="ndarray")
    if len(pairs):
        lip = float(np.max(np.abs(d[pairs[:, 0]] - d[pairs[:, 1]])
                           / np.linalg.norm(X[pairs[:, 0]] - X[pairs[:, 1]], axis=1)))
    else:
        lip = 1.0
    lip = max(lip, 1.0) * 1.5
    w = _smoothstep((d - 2.0 * eps) / eps)
    radii = 0.9 * np.maximum(d - eps, 0.0) / lip
    chi = KernelBumpField(model, X, w, radii, label="chi")
    peak = float(np.max(chi(X)))
    chi.scale = peak if peak > 0 else 1.0
    field = chi * (-strength)
    field.label = f"-{strength:g}*chi(eps={eps:g})"
    return NoncriticalField(field, period, eps, radii, lip, X[w > 0], d, X, strength)


# ---------------------------------------------------------------------------
# deformation families and the strict-maximum experiment
# ---------------------------------------------------------------------------

def jet_family(jet, s, scale=1.0):
    """``scale * (1 + s c_1 + ... + s^k c_k)`` as a field."""
    f = jet.rho(s)
    return f * scale if scale != 1.0 else f


def volume_polynomial(model, jet, scheme=None):
    """Coefficients ``v_m`` with ``vol(rho_s) = sum v_m s^m`` (exact, degree (n+1)k)."""
    scheme = scheme or VolumeScheme()
    order = tuple(scheme.order or model.default_volume_order())
    X, w = model.volume_nodes(order)
    p = model.n + 1
    wt = np.ones(len(X)) if model.weight is None else model.weight(X) ** p
    C = [np.broadcast_to(np.asarray(c(X), dtype=float), (len(X),)) for c in jet.coefficients]
    poly = [np.ones(len(X))]
    for _ in range(p):
        nxt = [np.zeros(len(X)) for _ in range(len(poly) + len(C) - 1)]
        for a, pa in enumerate(poly):
            for b, cb in enumerate(C):
                nxt[a + b] = nxt[a + b] + pa * cb
        poly = nxt
    q = 0.5 if model.quotient else 1.0
    return np.array([q * float(np.dot(w, pm * wt)) for pm in poly])


def volume_correction(model, jet, s, scheme=None):
    """Constant ``lambda(s)`` with ``vol(lambda(s) rho_s) = vol(rho_0)``."""
    v = volume_polynomial(model, jet, scheme)
    return (v[0] / np.polyval(v[::-1], s)) ** (1.0 / (model.n + 1))


def volume_corrected_jet(model, jet, scheme=None):
    """Jet of ``lambda(s) rho_s`` truncated at the jet order (constant corrections)."""
    v = volume_polynomial(model, jet, scheme)
    k = jet.order
    p = model.n + 1
    # lambda(s) = (V(s)/V0)^(-1/p), series via log/exp on power series
    a = np.zeros(k + 1)
    a[:min(k + 1, len(v))] = v[:k + 1] / v[0]
    lam = _series_pow(a, -1.0 / p, k)
    cs = []
    for m in range(k + 1):
        acc = None
        for i in range(m + 1):
            if lam[m - i] == 0.0:
                continue
            term = jet[i] * float(lam[m - i])
            acc = term if acc is None else acc + term
        cs.append(acc if acc is not None else constant(0.0))
    cs[0] = ONE
    return DeformationJet(cs, label=f"volume_corrected({jet.label})")


def _series_pow(a, e, k):
    """Power series of ``(a_0 + a_1 s + ...)^e`` with ``a_0 = 1``, to order k."""
    out = np.zeros(k + 1)
    out[0] = 1.0
    for m in range(1, k + 1):
        acc = 0.0
        for j in range(1, m + 1):
            acc += (e * j - (m - j)) * a[j] * out[m - j]
        out[m] = acc / m
    return out


def fitted_exponent(s_values, deltas):
    s = np.abs(np.asarray(s_values, dtype=float))
    d = np.abs(np.asarray(deltas, dtype=float))
    m = (s > 0) & (d > 0)
    if m.sum() < 2:
        return float("inf")
    slope, _ = np.polyfit(np.log(s[m]), np.log(d[m]), 1)
    return float(slope)


@dataclass
class StrictMaxReport:
    order: Optional[int]
    mu_sup: list
    residuals: list
    s_grid: list
    systoles: list
    baseline: float
    predicted: list
    verdict: bool
    exponent: Optional[float]
    note: str
    budgets: list


def strict_max_experiment(model, jet, s_grid, k_max, volume_correct=True, search=None,
                          scheme=None, slack=0.2, volume_tol=1e-8, family=None):
    """Check that ``l1(s)`` has a strict local maximum at ``s = 0`` (or is flat
    to order ``k_max`` when the normal form is trivial to that order)."""
    s_grid = [float(s) for s in s_grid]
    if volume_correct:
        njet = volume_corrected_jet(model, jet, scheme)
    else:
        njet = jet
    v = volume_polynomial(model, njet.__class__(njet.coefficients[:k_max + 1]), scheme)
    rel = np.abs(v[1:k_max + 1]) / abs(v[0])
    if np.any(rel > volume_tol):
        raise ValueError(f"jet is not volume preserving to order {k_max} (relative {rel.max():.2e})")
    nf = normal_form(model, njet, k_max)
    X = model.random_points(400, np.random.default_rng(7))
    sups = [float(np.max(np.abs(mu(X)))) if mu.constant is None else abs(mu.constant) for mu in nf.mu]
    order = None
    for i, (sup, res) in enumerate(zip(sups, nf.invariance_residuals), start=1):
        if sup > max(10 * res, 1e-8):
            order = i
            break

    v0 = contact_volume(model, family(0.0) if family is not None else ONE, scheme).value

    def rho_at(s):
        if family is not None:
            f = family(s)
            if not volume_correct or s == 0.0:
                return f
            lam = (v0 / contact_volume(model, f, scheme).value) ** (1.0 / (model.n + 1))
            return f * lam
        lam = volume_correction(model, jet, s, scheme) if volume_correct else 1.0
        return jet_family(jet, s, lam)

    base = find_systole(model, rho_at(0.0), search)
    ell0 = base.value
    vals, budgets, pred = [], [], []
    for s in s_grid:
        if s == 0.0:
            vals.append(ell0)
            budgets.append(base.error_budget)
            pred.append(0.0)
            continue
        est = find_systole(model, rho_at(s), search)
        vals.append(est.value)
        budgets.append(est.error_budget)
        if order is not None:
            ext = field_extrema(model, nf.mu[order - 1])
            e = ext.minimum if s ** order >= 0 else ext.maximum
            pred.append(ell0 * s ** order * e)
        else:
            pred.append(0.0)
    if order is not None:
        ok = True
        for s, val, p in zip(s_grid, vals, pred):
            if s == 0.0:
                continue
            drop = ell0 - val
            ok &= (drop > 0) and (p < 0) and (drop >= (1.0 - slack) * (-p))
        return StrictMaxReport(order, sups, nf.invariance_residuals, s_grid, vals, ell0, pred, bool(ok),
                               None, f"strict local maximum at order {order}", budgets)
    nz = [(s, val - ell0) for s, val in zip(s_grid, vals) if s != 0.0]
    expo = fitted_exponent([a for a, _ in nz], [b for _, b in nz])
    ok = expo >= (k_max + 1) - 0.1
    return StrictMaxReport(None, sups, nf.invariance_residuals, s_grid, vals, ell0, pred, bool(ok), expo,
                           f"formally trivial to order {k_max}", budgets)
