"""Model contact manifolds: contact forms, Reeb fields, flows and volumes.

Every model carries a "standard" form ``lam`` with an explicit Reeb field
``R_lam``, a frame ``E_1..E_2n`` of ``ker lam`` and the matrix
``Omega_jk = d lam(E_j, E_k)``. The model's own contact form is
``alpha0 = w * lam`` for a positive weight ``w`` (``w = 1`` for the Hopf
spheres and the round unit cotangent bundle; metric deformations of the
two-sphere enter through ``w = g*(p, p)^(-1/2)``). A deformation ``rho``
gives ``rho * alpha0 = (rho w) lam``, so every Reeb or Hamiltonian field is a
pointwise ``2n x 2n`` linear solve in the frame.
"""

import math
import re
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (ConfigError, ModelMismatchError, NonFiniteIntegrandError,
                     NonPositiveMetricError, NotAntipodalError, SingularSystemError)
from .fields import (ONE, Point, ScalarField, TangentVector, check_points, constraint_residual,
                     parse_field)
from .integrate import integrate
from .quadrature import gauss_legendre, periodic_trapezoid

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# metrics on the two-sphere
# ---------------------------------------------------------------------------

def _clenshaw(c, x):
    b1 = 0.0 * x
    b2 = 0.0 * x
    for ck in c[:0:-1]:
        b1, b2 = 2.0 * x * b1 - b2 + ck, b1
    return x * b1 - b2 + c[0]


@dataclass
class MetricSpec:
    """Riemannian metric on S^2: ``round``, ``conformal`` (``e^u g0``) or
    ``revolution`` (``(1 + h(cos t))^2 dt^2 + sin^2 t dphi^2``)."""

    kind: str = "round"
    u: Optional[ScalarField] = None
    h: Optional[ScalarField] = None
    cheb_degree: int = 64

    def __post_init__(self):
        if self.kind not in ("round", "conformal", "revolution"):
            raise ValueError(f"unknown metric kind {self.kind!r}")
        if self.kind == "conformal" and self.u is None:
            raise ValueError("conformal metric needs a conformal factor u")
        if self.kind == "revolution":
            if self.h is None:
                raise ValueError("revolution metric needs a profile h")
            self._setup_profile()

    @property
    def label(self):
        if self.kind == "conformal":
            return f"conformal(u={self.u.label})"
        if self.kind == "revolution":
            return f"revolution(h={self.h.label})"
        return "round"

    def _setup_profile(self):
        C = np.polynomial.chebyshev
        hfun = lambda t: self.h(np.asarray(t, dtype=float)[:, None])
        c = C.chebinterpolate(hfun, self.cheb_degree)
        c[np.abs(c) < 1e-15 * max(1.0, np.abs(c).max())] = 0.0
        grid = np.cos(np.linspace(0.0, math.pi, 2001))
        hv = C.chebval(grid, c)
        if np.max(np.abs(hv)) >= 1.0:
            raise NonPositiveMetricError(f"profile reaches |h| = {np.max(np.abs(hv)):.3f} >= 1")
        ends = C.chebval(np.array([-1.0, 1.0]), c)
        if np.max(np.abs(ends)) > 1e-10:
            raise ValueError(f"profile must vanish at +-1 (h(-1), h(1)) = ({ends[0]:.3g}, {ends[1]:.3g})")
        # h = (1 - x^2) k with k polynomial; (1 - x^2) = 0.5 T0 - 0.5 T2
        k, _ = C.chebdiv(c, np.array([0.5, 0.0, -0.5]))
        self._h_cheb = np.trim_zeros(c, "b") if np.any(c) else np.zeros(1)
        self._k_cheb = np.trim_zeros(k, "b") if np.any(k) else np.zeros(1)

    def profile(self, z):
        return _clenshaw(self._h_cheb, z)

    def weight_field(self):
        """``w(x, p) = g*(p, p)^(-1/2)``, or ``None`` for the round metric."""
        if self.kind == "round":
            return None
        if self.kind == "conformal":
            u = self.u
            return ScalarField(lambda X: np.exp(0.5 * u.fn(X) + 0.0 * X[:, 0]), domain="ut",
                               parity=u.parity, label=f"exp({u.label}/2)", dual=u.dual)
        hc, kc = self._h_cheb, self._k_cheb

        def w(X):
            z = X[:, 2]
            hv = _clenshaw(hc, z)
            kv = _clenshaw(kc, z)
            q = -kv * (2.0 + hv) / ((1.0 + hv) * (1.0 + hv))
            pz = X[:, 5]
            gstar = X[:, 3] * X[:, 3] + X[:, 4] * X[:, 4] + pz * pz * (1.0 + q)
            return gstar ** -0.5
        return ScalarField(w, domain="ut", label=f"rev_weight({self.h.label})")


# ---------------------------------------------------------------------------
# contact models
# ---------------------------------------------------------------------------

@dataclass
class VolumeScheme:
    kind: str = "product"       # "product" or "montecarlo"
    order: Optional[tuple] = None
    samples: int = 200000
    seed: int = 0


@dataclass
class VolumeResult:
    value: float
    error: float
    scheme: VolumeScheme


class ContactModel:
    """Common interface of the model contact manifolds."""

    n = 1
    domain = ""
    ambient_dim = 0
    reference_period = TWO_PI
    quotient = False
    weight: Optional[ScalarField] = None

    @property
    def contact_dim(self):
        return 2 * self.n + 1

    @property
    def unit_weight(self):
        return self.weight is None

    def __repr__(self):
        return self.label

    # -- standard form -----------------------------------------------------
    def residual(self, X):
        return constraint_residual(self.domain, X)

    def check(self, X):
        check_points(self.domain, X)

    def point(self, coords):
        p = Point(self.domain, coords)
        check_points(self.domain, p.coords)
        return p

    def reeb_lambda(self, X):
        return np.atleast_2d(X) @ self.jmat.T

    def alpha0(self, X, V):
        """``alpha0(V)`` at rows of ``X``."""
        X = np.atleast_2d(X)
        w, _ = self.weight_values(X)
        return w * np.einsum("ij,ij->i", self.lam(X), np.atleast_2d(V))

    def dalpha0(self, X, U, V):
        X, U, V = np.atleast_2d(X), np.atleast_2d(U), np.atleast_2d(V)
        w, dw = self.weight_values(X)
        lam = self.lam(X)
        lu = np.einsum("ij,ij->i", lam, U)
        lv = np.einsum("ij,ij->i", lam, V)
        return (np.einsum("ij,ij->i", dw, U) * lv - np.einsum("ij,ij->i", dw, V) * lu
                + w * self.dlam(X, U, V))

    def reeb0(self, X):
        return self.reeb_vectors(ONE, X)

    def weight_values(self, X):
        X = np.atleast_2d(X)
        if self.weight is None:
            return np.ones(len(X)), np.zeros_like(X)
        return self.weight.value_and_grad(X)

    def total_weight(self, rho, X):
        """Values and ambient gradients of ``rho * w``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if rho.domain is not None and rho.domain != self.domain:
            raise ModelMismatchError(f"field on {rho.domain} used on model {self.label}")
        r, dr = rho.value_and_grad(X)
        if self.weight is None:
            return r, dr
        w, dw = self.weight_values(X)
        return r * w, dr * w[:, None] + dw * r[:, None]

    # -- vector fields -----------------------------------------------------
    def reeb_vectors(self, rho, X, W=None):
        """Reeb field of ``rho * alpha0`` at the rows of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if W is None:
            with np.errstate(invalid="ignore"):
                W, dW = self.total_weight(rho, X)
        else:
            W, dW = W
        bad = ~np.isfinite(W) | (W <= 0)
        if bad.any():
            # trial stages far off the manifold just get rejected by the integrator
            if np.any(self.residual(X[bad]) < 1e-6):
                raise SingularSystemError("rho * alpha0 is not a contact form here (weight <= 0)")
            W = np.where(bad, np.nan, W)
        Rl = self.reeb_lambda(X)
        if not np.any(dW):
            return Rl / W[:, None]
        E = self.frame(X)
        rhs = np.einsum("nkd,nd->nk", E, dW) / (W * W)[:, None]
        y = self._solve_omega_t(X, rhs)
        return Rl / W[:, None] + np.einsum("nk,nkd->nd", y, E)

    def hamiltonian_vectors(self, h_vals, h_grad, X):
        """Contact Hamiltonian field of ``h`` for ``alpha0``.

        Solves ``alpha0(X_h) = h`` and ``i_{X_h} d alpha0 = R0(h) alpha0 - dh``.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        w, dw = self.weight_values(X)
        a = h_vals / w
        E = self.frame(X)
        dwE = np.einsum("nkd,nd->nk", E, dw)
        dhE = np.einsum("nkd,nd->nk", E, h_grad)
        y = self._solve_omega_t(X, (a[:, None] * dwE - dhE) / w[:, None])
        return a[:, None] * self.reeb_lambda(X) + np.einsum("nk,nkd->nd", y, E)

    def _solve_omega_t(self, X, rhs):
        Om = self.omega(X)
        det = np.linalg.det(Om)
        if np.any(np.abs(det) < 1e-12):
            raise SingularSystemError("d(lambda) is degenerate on the frame")
        return np.linalg.solve(np.swapaxes(Om, 1, 2), rhs[..., None])[..., 0]

    # -- flows ---------------------------------------------------------------
    def closed_form_flow(self, X, t):
        """Reeb flow of ``lam``: ``X cos t + (J X) sin t``; ``t`` scalar or (N,)."""
        X = np.atleast_2d(X)
        t = np.asarray(t, dtype=float)
        c, s = np.cos(t), np.sin(t)
        if t.ndim:
            c, s = c[:, None], s[:, None]
        return X * c + (X @ self.jmat.T) * s

    def reference_samples(self, X, times, tol=1e-11):
        """Points ``phi_t(x)`` of the ``rho = 1`` flow, shape (N, len(times), D)."""
        X = np.atleast_2d(X)
        times = np.asarray(times, dtype=float)
        if self.unit_weight:
            c, s = np.cos(times), np.sin(times)
            JX = X @ self.jmat.T
            return X[:, None, :] * c[None, :, None] + JX[:, None, :] * s[None, :, None]
        res = integrate(lambda Y: self.reeb_vectors(ONE, Y), X, float(times.max()), tol,
                        project=self.project, record_times=times)
        return res.samples

    def rhs(self, rho):
        if rho.constant == 1.0 and self.unit_weight:
            jt = self.jmat.T
            return lambda Y: Y @ jt
        if rho.constant is not None and self.unit_weight:
            jt = self.jmat.T / rho.constant
            return lambda Y: Y @ jt
        return lambda Y: self.reeb_vectors(rho, Y)

    # -- random sampling -----------------------------------------------------
    def random_points(self, count, rng):
        raise NotImplementedError

    # -- volume ----------------------------------------------------------------
    def volume_nodes(self, order):
        raise NotImplementedError

    def default_volume_order(self):
        raise NotImplementedError

    @property
    def total_volume(self):
        raise NotImplementedError


class HopfSphere(ContactModel):
    """Unit sphere S^{2n+1} in C^{n+1} with ``lam = sum x dy - y dx``."""

    def __init__(self, n=1):
        if n not in (1, 2):
            raise ValueError("HopfSphere supports n in {1, 2}")
        self.n = n
        self.domain = f"hopf{n}"
        self.ambient_dim = 2 * n + 2
        J = np.zeros((self.ambient_dim, self.ambient_dim))
        for k in range(n + 1):
            J[2 * k + 1, 2 * k] = 1.0
            J[2 * k, 2 * k + 1] = -1.0
        self.jmat = J
        self.weight = None
        self.label = f"hopf(n={n})"

    def project(self, X):
        return X / np.linalg.norm(X, axis=1)[:, None]

    def lam(self, X):
        return np.atleast_2d(X) @ self.jmat.T

    def dlam(self, X, U, V):
        return 2.0 * np.einsum("ij,ij->i", U @ self.jmat.T, V)

    def frame(self, X):
        X = np.atleast_2d(X)
        if self.n == 1:
            x1, y1, x2, y2 = X.T
            jz = np.stack([-x2, y2, x1, -y1], axis=1)
            kz = np.stack([-y2, -x2, y1, x1], axis=1)
            return np.stack([jz, kz], axis=1)
        # Hermitian complement of z, spanned by u1, i u1, u2, i u2
        Z = X[:, 0::2] + 1j * X[:, 1::2]
        Z = Z / np.linalg.norm(Z, axis=1)[:, None]
        order = np.argsort(np.abs(Z), axis=1)
        basis = []
        rows = np.arange(len(Z))
        for col in (0, 1):
            e = np.zeros_like(Z)
            e[rows, order[:, col]] = 1.0
            for b in [Z] + basis:
                e = e - np.sum(np.conj(b) * e, axis=1)[:, None] * b
            e = e / np.linalg.norm(e, axis=1)[:, None]
            basis.append(e)
        out = []
        for b in basis:
            for v in (b, 1j * b):
                r = np.empty((len(Z), 6))
                r[:, 0::2], r[:, 1::2] = v.real, v.imag
                out.append(r)
        return np.stack(out, axis=1)

    def omega(self, X):
        E = self.frame(X)
        JE = E @ self.jmat.T
        return 2.0 * np.einsum("njd,nkd->njk", JE, E)

    def random_points(self, count, rng):
        X = rng.standard_normal((count, self.ambient_dim))
        return self.project(X)

    @property
    def total_volume(self):
        return (2.0 * math.pi) ** (self.n + 1)

    def default_volume_order(self):
        return (24, 48) if self.n == 1 else (12, 16)

    def volume_nodes(self, order):
        nb, nt = order
        beta, wb = gauss_legendre(0.0, 0.5 * math.pi, nb)
        th, wt = periodic_trapezoid(TWO_PI, nt)
        scale = math.factorial(self.n) * 2.0 ** self.n
        if self.n == 1:
            B, T1, T2 = np.meshgrid(beta, th, th, indexing="ij")
            Wt = (wb * np.cos(beta) * np.sin(beta))[:, None, None] * wt[None, :, None] * wt[None, None, :]
            r1, r2 = np.cos(B), np.sin(B)
            X = np.stack([r1 * np.cos(T1), r1 * np.sin(T1), r2 * np.cos(T2), r2 * np.sin(T2)], -1)
            return X.reshape(-1, 4), scale * Wt.ravel()
        B1, B2, T1, T2, T3 = np.meshgrid(beta, beta, th, th, th, indexing="ij")
        dens = (wb * np.cos(beta) * np.sin(beta) ** 3)[:, None] * (wb * np.cos(beta) * np.sin(beta))[None, :]
        Wt = dens[:, :, None, None, None] * (wt[0] ** 3)
        r1 = np.cos(B1)
        r2 = np.sin(B1) * np.cos(B2)
        r3 = np.sin(B1) * np.sin(B2)
        X = np.stack([r1 * np.cos(T1), r1 * np.sin(T1), r2 * np.cos(T2), r2 * np.sin(T2),
                      r3 * np.cos(T3), r3 * np.sin(T3)], -1)
        return X.reshape(-1, 6), scale * np.broadcast_to(Wt, B1.shape).ravel()


class UnitCotangentSphere(ContactModel):
    """Unit cotangent bundle of S^2 in coordinates ``(x, p)`` of the round bundle.

    The canonical form is ``lam = p . dx``; a metric ``g`` is represented by
    the weight ``w = g*(p, p)^(-1/2)`` (radial rescaling of covectors).
    """

    n = 1
    domain = "ut"
    ambient_dim = 6

    def __init__(self, metric=None, quotient=False):
        self.metric = metric if metric is not None else MetricSpec("round")
        self.weight = self.metric.weight_field()
        self.quotient = quotient
        J = np.zeros((6, 6))
        J[0:3, 3:6] = np.eye(3)     # x' = p
        J[3:6, 0:3] = -np.eye(3)    # p' = -x
        self.jmat = J
        self.label = f"ut_sphere(metric={self.metric.label}{', quotient=antipodal' if quotient else ''})"

    def project(self, X):
        x = X[:, :3] / np.linalg.norm(X[:, :3], axis=1)[:, None]
        p = X[:, 3:] - np.einsum("ij,ij->i", X[:, 3:], x)[:, None] * x
        p = p / np.linalg.norm(p, axis=1)[:, None]
        return np.concatenate([x, p], axis=1)

    def lam(self, X):
        X = np.atleast_2d(X)
        return np.concatenate([X[:, 3:], np.zeros_like(X[:, :3])], axis=1)

    def dlam(self, X, U, V):
        return (np.einsum("ij,ij->i", U[:, 3:], V[:, :3]) - np.einsum("ij,ij->i", V[:, 3:], U[:, :3]))

    def frame(self, X):
        X = np.atleast_2d(X)
        nrm = np.cross(X[:, :3], X[:, 3:])
        z = np.zeros_like(nrm)
        return np.stack([np.concatenate([z, nrm], 1), np.concatenate([nrm, z], 1)], axis=1)

    def omega(self, X):
        return np.broadcast_to(np.array([[0.0, 1.0], [-1.0, 0.0]]), (len(np.atleast_2d(X)), 2, 2))

    def _solve_omega_t(self, X, rhs):
        # Omega^T = [[0, -1], [1, 0]], inverse is Omega
        return np.stack([rhs[:, 1], -rhs[:, 0]], axis=1)

    def antipode(self, X):
        return -np.atleast_2d(X)

    def random_points(self, count, rng):
        x = rng.standard_normal((count, 3))
        p = rng.standard_normal((count, 3))
        return self.project(np.concatenate([x, p], axis=1))

    @property
    def total_volume(self):
        return 8.0 * math.pi ** 2 / (2.0 if self.quotient else 1.0)

    def default_volume_order(self):
        return (32, 64, 32)

    def volume_nodes(self, order):
        nth, nph, nps = order
        th, wth = gauss_legendre(0.0, math.pi, nth)
        ph, wph = periodic_trapezoid(TWO_PI, nph)
        ps, wps = periodic_trapezoid(TWO_PI, nps)
        T, P, S = np.meshgrid(th, ph, ps, indexing="ij")
        st, ct, sp, cp = np.sin(T), np.cos(T), np.sin(P), np.cos(P)
        x = np.stack([st * cp, st * sp, ct], -1)
        e_th = np.stack([ct * cp, ct * sp, -st], -1)
        e_ph = np.stack([-sp, cp, np.zeros_like(sp)], -1)
        p = np.cos(S)[..., None] * e_th + np.sin(S)[..., None] * e_ph
        Wt = (wth * np.sin(th))[:, None, None] * wph[0] * wps[0] * np.ones(T.shape)
        X = np.concatenate([x, p], -1).reshape(-1, 6)
        # lam ^ dlam = sin(theta) dtheta dpsi dphi on the round bundle
        return X, Wt.ravel()


# ---------------------------------------------------------------------------
# module-level operations
# ---------------------------------------------------------------------------

def _as_batch(model, x):
    if isinstance(x, Point):
        if x.model_id != model.domain:
            raise ModelMismatchError(f"point of {x.model_id} used on model {model.label}")
        X = x.coords[None, :]
    else:
        X = np.atleast_2d(np.asarray(x, dtype=float))
    model.check(X)
    return X


def reeb_field(model, rho, x):
    """Reeb vector of ``rho * alpha0`` at a point (or rows of an array)."""
    X = _as_batch(model, x)
    R = model.reeb_vectors(rho, X)
    if isinstance(x, Point):
        return TangentVector(x, R[0])
    return R


def reeb_residuals(model, rho, X, R):
    """Largest violations of ``beta(R) = 1`` and ``i_R d beta = 0`` for ``beta = rho alpha0``."""
    X = np.atleast_2d(X)
    W, dW = model.total_weight(rho, X)
    lam = model.lam(X)
    E = model.frame(X)
    basis = np.concatenate([model.reeb_lambda(X)[:, None, :], E], axis=1)
    lr = np.einsum("nd,nd->n", lam, R)
    r1 = np.abs(W * lr - 1.0)
    r2 = np.zeros(len(X))
    for j in range(basis.shape[1]):
        V = basis[:, j]
        lv = np.einsum("nd,nd->n", lam, V)
        val = (np.einsum("nd,nd->n", dW, R) * lv - np.einsum("nd,nd->n", dW, V) * lr
               + W * model.dlam(X, R, V))
        r2 = np.maximum(r2, np.abs(val))
    return r1, r2


def flow_array(model, rho, X, t, tol=1e-10, **kw):
    """Flow rows of ``X`` by times ``t`` (scalar or per-row, any sign)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    t = np.broadcast_to(np.asarray(t, dtype=float), (len(X),))
    out = X.copy()
    f = model.rhs(rho)
    for sign in (1.0, -1.0):
        rows = np.nonzero(sign * t > 0)[0]
        if not len(rows):
            continue
        rhs = f if sign > 0 else (lambda Y: -f(Y))
        res = integrate(rhs, X[rows], sign * t[rows], tol, project=model.project,
                        residual=model.residual, **kw)
        out[rows] = res.y
    return out


def flow(model, rho, x, t, tol=1e-10):
    """Point reached from ``x`` after time ``t`` of the Reeb flow of ``rho * alpha0``."""
    X = _as_batch(model, x)
    if t == 0:
        return x if isinstance(x, Point) else X.copy()
    Y = flow_array(model, rho, X, t, tol)
    return Point(model.domain, Y[0]) if isinstance(x, Point) else Y


@dataclass
class ReebTrajectory:
    times: np.ndarray
    points: np.ndarray
    rho_label: str
    integrator_tol: float

    def pairing_residual(self, model, rho):
        """Max ``|(rho alpha0)(velocity) - 1|`` along the samples."""
        R = model.reeb_vectors(rho, self.points)
        W, _ = model.total_weight(rho, self.points)
        return float(np.max(np.abs(W * np.einsum("nd,nd->n", model.lam(self.points), R) - 1.0)))


def trajectory(model, rho, x, t, tol=1e-10):
    X = _as_batch(model, x)
    res = integrate(model.rhs(rho), X, t, tol, project=model.project, residual=model.residual,
                    keep_steps=True)
    steps = res.steps[0]
    return ReebTrajectory(np.array([s[0] for s in steps]), np.array([s[1] for s in steps]),
                          rho.label, tol)


def contact_volume(model, rho, scheme=None):
    """``int (rho w)^{n+1} lam ^ dlam^n`` with an error estimate.

    ``product`` uses Gauss-Legendre x periodic trapezoid rules in Hopf /
    spherical coordinates; the estimate is the change from the half-order
    rule. ``montecarlo`` uses uniform samples and reports the standard error.
    """
    scheme = scheme or VolumeScheme()
    if rho.domain is not None and rho.domain != model.domain:
        raise ModelMismatchError(f"field on {rho.domain} used on model {model.label}")
    q = 0.5 if model.quotient else 1.0

    def integrand(X):
        W = rho(X)
        if model.weight is not None:
            W = W * model.weight(X)
        vals = W ** (model.n + 1)
        if not np.all(np.isfinite(vals)):
            raise NonFiniteIntegrandError("volume integrand is not finite")
        return vals

    if scheme.kind == "montecarlo":
        rng = np.random.default_rng(scheme.seed)
        full = model.total_volume / q
        vals = np.concatenate([integrand(model.random_points(min(50000, scheme.samples - i), rng))
                               for i in range(0, scheme.samples, 50000)])
        val = full * vals.mean()
        err = full * vals.std(ddof=1) / math.sqrt(len(vals))
        return VolumeResult(q * val, q * err, scheme)
    if scheme.kind != "product":
        raise ValueError(f"unknown volume scheme {scheme.kind!r}")
    order = tuple(scheme.order or model.default_volume_order())

    def rule(o):
        X, w = model.volume_nodes(o)
        out = 0.0
        for i in range(0, len(X), 100000):
            out += float(np.dot(w[i:i + 100000], integrand(X[i:i + 100000])))
        return out

    val = rule(order)
    coarse = rule(tuple(max(2, o // 2) for o in order))
    err = max(abs(val - coarse), 1e-12 * abs(val))
    return VolumeResult(q * val, q * err, VolumeScheme("product", order))


def quotient_flag(model, antipodal=True, samples=50, seed=0):
    """The antipodal quotient ``S* RP^2`` of a symmetric unit cotangent model."""
    if not antipodal:
        return model
    if not isinstance(model, UnitCotangentSphere):
        raise ModelMismatchError("only unit cotangent bundles of S^2 have an antipodal quotient")
    if model.weight is not None:
        X = model.random_points(samples, np.random.default_rng(seed))
        gap = np.max(np.abs(model.weight(X) - model.weight(-X)))
        if gap > 1e-10:
            raise NotAntipodalError(f"metric is not antipodally symmetric (gap {gap:.3e})")
    return UnitCotangentSphere(model.metric, quotient=True)


# ---------------------------------------------------------------------------
# descriptors:  hopf(n=1) | ut_sphere(metric=round|conformal|revolution, u=.., h=..)
# ---------------------------------------------------------------------------

_DESC = re.compile(r"^\s*(\w+)\s*\((.*)\)\s*$", re.S)


def _split_args(body):
    out, depth, cur = [], 0, ""
    for ch in body:
        if ch == "," and depth == 0:
            out.append(cur)
            cur = ""
            continue
        depth += ch == "("
        depth -= ch == ")"
        cur += ch
    if cur.strip():
        out.append(cur)
    args = {}
    for a in out:
        if "=" not in a:
            raise ConfigError(f"expected key=value in model descriptor, got {a.strip()!r}")
        k, v = a.split("=", 1)
        args[k.strip()] = v.strip()
    return args


def parse_model(desc, quotient=None):
    """Build a model from a descriptor such as ``ut_sphere(metric=revolution, h=0.2*x)``."""
    m = _DESC.match(str(desc))
    if not m:
        raise ConfigError(f"malformed model descriptor {desc!r}")
    name, args = m.group(1), _split_args(m.group(2))
    quot = args.pop("quotient", quotient)
    if name == "hopf":
        n = int(args.pop("n", 1))
        if args:
            raise ConfigError(f"unknown hopf arguments {sorted(args)}")
        if quot not in (None, "none"):
            raise ConfigError("hopf models have no quotient option")
        try:
            return HopfSphere(n)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if name == "ut_sphere":
        kind = args.pop("metric", "round")
        if kind == "round":
            metric = MetricSpec("round")
        elif kind == "conformal":
            metric = MetricSpec("conformal", u=parse_field(args.pop("u", "0"), "ut"))
        elif kind == "revolution":
            metric = MetricSpec("revolution", h=parse_field(args.pop("h", "0"), "profile"))
        else:
            raise ConfigError(f"unknown metric {kind!r}")
        if args:
            raise ConfigError(f"unknown ut_sphere arguments {sorted(args)}")
        model = UnitCotangentSphere(metric)
        if quot in (None, "none"):
            return model
        if quot != "antipodal":
            raise ConfigError(f"unknown quotient {quot!r}")
        return quotient_flag(model, True)
    raise ConfigError(f"unknown model {name!r}")
