"""Funk and X-ray transforms on the two-sphere and metric-to-contact jets.

Symmetric 2-tensors on S^2 are evaluated on (base point, tangent vector)
pairs in ambient R^3 coordinates. A metric family ``g_s = sum s^i g_i`` with
``g_0`` round turns into a contact deformation of the round unit cotangent
bundle through ``rho_s = g*_s(p, p)^(-1/2)``.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import FormallyTrivialError, NonPositiveMetricError, NonRegularFlowError
from .fields import ONE, DeformationJet, ScalarField, harmonic_evaluator
from .manifolds import MetricSpec, UnitCotangentSphere
from .quadrature import fibonacci_sphere, gauss_legendre

FUNK_NODES = 64


@dataclass
class SymmetricTensor2:
    """Quadratic form ``v -> h(x, v)`` on tangent vectors of the unit sphere.

    ``evaluator(x, v)`` takes arrays of shape (N, 3) and returns (N,).
    """

    evaluator: object
    label: str = "tensor"

    def __call__(self, x, v):
        return self.evaluator(x, v)

    def bilinear(self, x, u, v):
        """Polarized value ``h(x; u, v)``."""
        return 0.25 * (self.evaluator(x, u + v) - self.evaluator(x, u - v))

    def __add__(self, other):
        return SymmetricTensor2(lambda x, v: self.evaluator(x, v) + other.evaluator(x, v),
                                f"({self.label} + {other.label})")

    def scale(self, c):
        return SymmetricTensor2(lambda x, v: c * self.evaluator(x, v), f"{c:g}*{self.label}")


def round_metric():
    return SymmetricTensor2(lambda x, v: _sq(v), "g0")


def _sq(v):
    return v[:, 0] * v[:, 0] + v[:, 1] * v[:, 1] + v[:, 2] * v[:, 2]


def conformal_tensor(u):
    """``u(x) |v|^2`` for a field ``u`` on the unit cotangent model (base-only)."""
    def ev(x, v):
        X = _join(x, v)
        return u.fn(X) * _sq(v)
    return SymmetricTensor2(ev, f"conformal({u.label})")


def harmonic_tensor(l, m):
    """``Y_l^m(x) g0``."""
    y = harmonic_evaluator(l, m)
    return SymmetricTensor2(lambda x, v: y(x[:, 0], x[:, 1], x[:, 2]) * _sq(v), f"harmonic_tensor({l},{m})")


def lie_derivative_tensor(vector_field, step=1e-5, label="lie"):
    """``(L_X g0)(v, v) = 2 <D_v X, v>`` with ``D_v X`` by central differences.

    ``vector_field`` maps (N, 3) -> (N, 3) and is tangent to the sphere.
    """
    def ev(x, v):
        x, v = np.asarray(x, float), np.asarray(v, float)
        dX = (vector_field(x + step * v) - vector_field(x - step * v)) / (2 * step)
        return 2.0 * np.einsum("ij,ij->i", dX, v)
    return SymmetricTensor2(ev, label)


def lie_rotation(axis):
    """Lie derivative of the round metric along the rotation field ``a x x``."""
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    return lie_derivative_tensor(lambda x: np.cross(a, x), label=f"lie_rotation({a.round(6).tolist()})")


def zero_tensor():
    return SymmetricTensor2(lambda x, v: 0.0 * v[:, 0], "0")


def _join(x, v):
    if isinstance(x, np.ndarray) and isinstance(v, np.ndarray):
        return np.concatenate([x, v], axis=-1)
    from .dual import stack
    return stack([x[:, 0], x[:, 1], x[:, 2], v[:, 0], v[:, 1], v[:, 2]], axis=-1)


# ---------------------------------------------------------------------------
# great circles and the Funk transform
# ---------------------------------------------------------------------------

def _orthonormal_pair(pole):
    pole = np.atleast_2d(pole)
    helper = np.where((np.abs(pole[:, 0]) < 0.9)[:, None], [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
    e1 = np.cross(pole, helper)
    e1 /= np.linalg.norm(e1, axis=1)[:, None]
    e2 = np.cross(pole, e1)
    return e1, e2


@dataclass
class GreatCircle:
    pole: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pole, dtype=float)
        if abs(np.linalg.norm(p) - 1.0) > 1e-12:
            raise ValueError("great-circle pole must be a unit vector")
        self.pole = p

    def __call__(self, t):
        e1, e2 = _orthonormal_pair(self.pole)
        t = np.asarray(t, dtype=float)[:, None]
        return np.cos(t) * e1 + np.sin(t) * e2

    def velocity(self, t):
        e1, e2 = _orthonormal_pair(self.pole)
        t = np.asarray(t, dtype=float)[:, None]
        return -np.sin(t) * e1 + np.cos(t) * e2


def funk_many(u, poles, nodes=FUNK_NODES):
    """``int_0^{2 pi} u(c(t)) dt`` over the great circles with the given poles."""
    poles = np.atleast_2d(np.asarray(poles, dtype=float))
    e1, e2 = _orthonormal_pair(poles)
    t, w = gauss_legendre(0.0, 2 * math.pi, nodes, panels=4)
    c, s = np.cos(t), np.sin(t)
    pts = e1[:, None, :] * c[None, :, None] + e2[:, None, :] * s[None, :, None]
    vel = -e1[:, None, :] * s[None, :, None] + e2[:, None, :] * c[None, :, None]
    X = np.concatenate([pts, vel], axis=-1).reshape(-1, 6)
    vals = np.asarray(u(X), dtype=float).reshape(len(poles), nodes)
    return vals @ w


def funk_transform(u, pole, nodes=FUNK_NODES):
    """Great-circle integral of a base field ``u`` (a field on the unit cotangent
    model that depends on the base point only)."""
    pole = np.asarray(pole, dtype=float)
    if abs(np.linalg.norm(pole) - 1.0) > 1e-12:
        raise ValueError("pole must be a unit vector")
    return float(funk_many(u, pole[None, :], nodes)[0])


# ---------------------------------------------------------------------------
# X-ray transform along Zoll geodesic flows
# ---------------------------------------------------------------------------

@dataclass
class ZeroEnergyResult:
    max_abs: float
    witness: object
    values: np.ndarray


def xray_values(h, model, starts, nodes=FUNK_NODES, tol=1e-11):
    """``int_0^T h(x_t, dx_t/dt) dt`` along the ``rho = 1`` Reeb orbits of ``model``."""
    T = model.reference_period
    t, w = gauss_legendre(0.0, T, nodes, panels=4)
    times = np.append(t, T)
    if model.unit_weight:
        Y = model.reference_samples(starts, times)
    else:
        from .integrate import integrate
        res = integrate(lambda Z: model.reeb_vectors(ONE, Z), starts, T, tol,
                        project=model.project, record_times=times)
        Y = res.samples
    gap = np.max(np.linalg.norm(Y[:, -1] - starts, axis=1))
    if gap > 1e-6:
        raise NonRegularFlowError(f"geodesic fails to close after T = {T:.6g} (gap {gap:.3e}); metric is not Zoll")
    P = Y[:, :-1].reshape(-1, 6)
    V = model.reeb_vectors(ONE, P)[:, :3]
    vals = np.asarray(h(P[:, :3], V), dtype=float).reshape(len(starts), nodes)
    return vals @ w


def zero_energy_test(h, metric=None, samples=200, seed=0, poles=500, nodes=FUNK_NODES):
    """Maximum of ``|X-ray of h|`` over sampled geodesics of a Zoll metric.

    Samples are ``samples`` random unit covectors plus, for the round metric,
    the great circles with poles on a Fibonacci grid. The witness is the
    maximizing :class:`GreatCircle` (round) or starting covector.
    """
    metric = metric or MetricSpec("round")
    model = UnitCotangentSphere(metric)
    starts = model.random_points(samples, np.random.default_rng(seed))
    if metric.kind == "round" and poles:
        P = fibonacci_sphere(poles)
        e1, e2 = _orthonormal_pair(P)
        starts = np.concatenate([starts, np.concatenate([e1, e2], axis=1)], axis=0)
    vals = xray_values(h, model, starts, nodes)
    i = int(np.argmax(np.abs(vals)))
    witness = starts[i]
    if metric.kind == "round":
        witness = GreatCircle(np.cross(starts[i, :3], starts[i, 3:]))
    return ZeroEnergyResult(float(abs(vals[i])), witness, vals)


# ---------------------------------------------------------------------------
# metric families -> contact jets
# ---------------------------------------------------------------------------

def _mat_mul(A, B):
    a, b, c, d = A
    e, f, g, h = B
    return (a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h)


def _mat_add(A, B):
    return tuple(x + y for x, y in zip(A, B))


def _frame_entries(g, x, e1, e2):
    return (g(x, e1), g.bilinear(x, e1, e2), g.bilinear(x, e1, e2), g(x, e2))


def _rho_series(g_jet, X, k):
    """Coefficients of ``g*_s(p, p)^(-1/2)`` up to ``s^k`` at rows ``X = (x, p)``."""
    x, p = X[:, :3], X[:, 3:]
    n = _cross(x, p)
    # metric matrices in the round orthonormal frame (p, x cross p)
    E = [None] + [_frame_entries(g, x, p, n) for g in g_jet[1:k + 1]]
    zero = 0.0 * x[:, 0]
    # inverse of I + sum s^i G_i by the Neumann series, as a matrix-valued jet
    inv = [(1.0 + zero, zero, zero, 1.0 + zero)] + [(zero, zero, zero, zero)] * k
    power = [(1.0 + zero, zero, zero, 1.0 + zero)] + [(zero, zero, zero, zero)] * k
    for j in range(1, k + 1):
        new = [(zero, zero, zero, zero)] * (k + 1)
        for a in range(k + 1):
            for i in range(1, k + 1 - a):
                if E[i] is None:
                    continue
                term = _mat_mul(power[a], E[i])
                new[a + i] = _mat_add(new[a + i], tuple(-t for t in term))
        power = new
        inv = [_mat_add(inv[m], power[m]) for m in range(k + 1)]
    a = [inv[m][0] for m in range(k + 1)]       # g*_s(p, p) = 1 + sum a_m s^m
    # (1 + A)^(-1/2) with A = sum_{m>=1} a_m s^m
    out = [1.0 + zero] + [zero] * k
    Apow = [1.0 + zero] + [zero] * k
    for j in range(1, k + 1):
        nxt = [zero] * (k + 1)
        for m in range(k + 1):
            for i in range(1, k + 1 - m):
                nxt[m + i] = nxt[m + i] + Apow[m] * a[i]
        Apow = nxt
        coef = _binom_half(j)
        out = [out[m] + coef * Apow[m] for m in range(k + 1)]
    return out


def _binom_half(j):
    # binomial(-1/2, j)
    c = 1.0
    for i in range(j):
        c *= (-0.5 - i) / (i + 1)
    return c


def _cross(a, b):
    if isinstance(a, np.ndarray) and isinstance(b, np.ndarray):
        return np.cross(a, b)
    from .dual import stack
    return stack([a[:, 1] * b[:, 2] - a[:, 2] * b[:, 1],
                  a[:, 2] * b[:, 0] - a[:, 0] * b[:, 2],
                  a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]], axis=-1)


def metric_to_contact_jet(g_jet, k=None, check_range=0.1, samples=200, seed=0):
    """Contact jet ``rho_s = g*_s(p, p)^(-1/2)`` on the round unit cotangent bundle.

    Parameters
    ----------
    g_jet : list of SymmetricTensor2
        ``[g_0, g_1, ..., g_K]`` with ``g_s = sum s^i g_i`` and ``g_0`` round.
    k : int, optional
        Truncation order, at most ``K``.
    check_range : float
        Positive-definiteness of ``g_s`` is verified for ``|s| <= check_range``.
    """
    K = len(g_jet) - 1
    k = K if k is None else k
    if k > K:
        raise ValueError(f"order {k} exceeds the metric jet order {K}")
    model = UnitCotangentSphere()
    X = model.random_points(samples, np.random.default_rng(seed))
    x, p = X[:, :3], X[:, 3:]
    n = np.cross(x, p)
    G0 = _frame_entries(g_jet[0], x, p, n)
    if max(np.max(np.abs(G0[0] - 1)), np.max(np.abs(G0[1])), np.max(np.abs(G0[3] - 1))) > 1e-10:
        raise ValueError("the base metric of the family must be round")
    for s in np.linspace(-check_range, check_range, 21):
        G = [sum(s ** i * _frame_entries(g, x, p, n)[c] for i, g in enumerate(g_jet)) for c in range(4)]
        det = G[0] * G[3] - G[1] * G[2]
        if np.min(G[0]) <= 0 or np.min(det) <= 0:
            raise NonPositiveMetricError(f"g_s is not positive definite at s = {s:.3g}")

    coeffs = [ONE]
    for i in range(1, k + 1):
        coeffs.append(ScalarField(lambda X, i=i: _rho_series(g_jet, X, k)[i], domain="ut",
                                  label=f"rho_{i}[{', '.join(g.label for g in g_jet[1:k + 1])}]"))
    return DeformationJet(coeffs, label="metric_jet")


def conformal_family(u, k):
    """``e^{s u} g0`` as the metric jet ``[g0, u g0, u^2/2 g0, ...]``."""
    jet = [round_metric()]
    for i in range(1, k + 1):
        jet.append(SymmetricTensor2(lambda x, v, i=i: u.fn(_join(x, v)) ** i / math.factorial(i) * _sq(v)
                                    if i > 1 else u.fn(_join(x, v)) * _sq(v), f"u^{i}/{i}! g0"))
    return jet


def homothety_family():
    """``(1 + s)^2 g0``."""
    g0 = round_metric()
    return [g0, g0.scale(2.0), g0]


def direct_rho(g_jet, s, X):
    """Oracle: ``g*_s(p, p)^(-1/2)`` by explicit 2x2 inversion at parameter ``s``."""
    x, p = X[:, :3], X[:, 3:]
    n = np.cross(x, p)
    G = [sum(s ** i * _frame_entries(g, x, p, n)[c] for i, g in enumerate(g_jet)) for c in range(4)]
    M = np.stack([np.stack([G[0], G[1]], -1), np.stack([G[2], G[3]], -1)], -2)
    return np.linalg.inv(M)[:, 0, 0] ** -0.5


@dataclass
class Reparametrization:
    order: int
    leading: ScalarField

    def scale(self, s):
        """Parameter ``t = s^(1/k)`` (sign-preserving) of the reparametrized family."""
        return np.sign(s) * np.abs(s) ** (1.0 / self.order)


def reparametrize_jet(jet, samples=200, seed=0, tol=1e-12, domain_model=None):
    """Order and leading coefficient of the first nonvanishing jet term."""
    from .manifolds import HopfSphere
    dom = jet.domain
    model = domain_model
    if model is None:
        model = UnitCotangentSphere() if dom in (None, "ut") else HopfSphere(int(dom[-1]))
    X = model.random_points(samples, np.random.default_rng(seed))
    for i in range(1, jet.order + 1):
        c = jet[i]
        if c.constant is not None:
            if c.constant != 0.0:
                return Reparametrization(i, c)
            continue
        if float(np.max(np.abs(c(X)))) > tol:
            return Reparametrization(i, c)
    raise FormallyTrivialError(f"jet is formally trivial to the available order {jet.order}")
