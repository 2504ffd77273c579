"""Flow averaging, the homological equation, contact Hamiltonian fields and
the Dragt-Finn normal form of a deformation jet.

Averaged and homological fields are quadrature-backed evaluators along the
closed reference orbit ``t -> phi_t(x)`` of the ``rho = 1`` Reeb flow. On the
models with a linear reference flow (Hopf spheres, round unit cotangent
bundle) the orbit is ``x cos t + J x sin t``, which is linear in ``x``; the
evaluators then accept dual numbers and their gradients are exact.
"""

import math
import threading
from dataclasses import dataclass, field as dc_field

import numpy as np

from .dual import Dual
from .errors import AverageNotZeroError, JetOrderError, NonRegularFlowError
from .fields import ZERO, DeformationJet, ScalarField, TangentVector, check_points
from .quadrature import gauss_legendre

DEFAULT_NODES = 64
PANELS = 4
AGREE_TOL = 1e-9
MAX_NODES = 1024
CHUNK = 1 << 16          # orbit points per vectorized evaluation
PROBE_SEED = 20240611
CLOSURE_TOL = 1e-6


def _closed_form_orbit(model, X, times):
    """``phi_t(x)`` for all (x, t), shape (N*M, D); works for duals."""
    c, s = np.cos(times), np.sin(times)
    JX = X @ model.jmat.T
    Y = X[:, None, :] * c[None, :, None] + JX[:, None, :] * s[None, :, None]
    return Y.reshape(len(X) * len(times), X.shape[1])


def orbit_values(model, f, X, times):
    """Values of ``f`` along the reference orbits, shape (N, M)."""
    n, m = len(X), len(times)
    if model.unit_weight:
        vals = f.fn(_closed_form_orbit(model, X, times))
        if not isinstance(vals, Dual):
            vals = np.broadcast_to(np.asarray(vals, dtype=float), (n * m,))
        return vals.reshape(n, m)
    if isinstance(X, Dual):
        raise TypeError("numerical reference flows do not propagate duals")
    Y = model.reference_samples(X, times)
    return np.asarray(f(Y.reshape(n * m, -1)), dtype=float).reshape(n, m)


def _check_regular(model):
    if model.unit_weight:
        return
    rng = np.random.default_rng(PROBE_SEED)
    X = model.random_points(8, rng)
    Y = model.reference_samples(X, np.array([model.reference_period]))[:, 0]
    gap = np.max(np.linalg.norm(Y - X, axis=1))
    if gap > CLOSURE_TOL:
        raise NonRegularFlowError(f"reference orbit fails to close after T (gap {gap:.3e})")


class OrbitIntegralField(ScalarField):
    """``x -> (1/T) int_0^T k(t) f(phi_t x) dt`` with kernel ``k``.

    ``kind='average'`` uses ``k = 1``; ``kind='homological'`` uses the
    centered kernel ``k = t - T/2``, whose output ``h`` satisfies
    ``R0(h) = f - avg(f)`` exactly and has zero orbit average.
    """

    def __init__(self, model, source, kind="average", nodes=DEFAULT_NODES, calibrate=True):
        self.model = model
        self.source = source
        self.kind = kind
        self.nodes = nodes
        self._cache = {}
        self._cache_lock = threading.Lock()
        self._calibrated = not calibrate
        parity = source.parity
        super().__init__(self._evaluate, domain=model.domain if source.domain else None,
                         parity=parity, label=f"{kind}[{source.label}]", dual=model.unit_weight)

    def _rule(self, nodes):
        T = self.model.reference_period
        t, w = gauss_legendre(0.0, T, nodes, panels=PANELS if nodes % PANELS == 0 else 1)
        if self.kind == "homological":
            w = w * (t - 0.5 * T)
        return t, w / T

    def _raw(self, X, nodes):
        t, w = self._rule(nodes)
        n = len(X)
        step = max(1, CHUNK // len(t))
        if n <= step:
            return (orbit_values(self.model, self.source, X, t) * w).sum(axis=1)
        parts = [(orbit_values(self.model, self.source, X[i:i + step], t) * w).sum(axis=1)
                 for i in range(0, n, step)]
        if isinstance(parts[0], Dual):
            return Dual(np.concatenate([p.val for p in parts]), np.concatenate([p.der for p in parts]))
        return np.concatenate(parts)

    def calibrate(self):
        """Double the node count until two successive rules agree to 1e-9 on probes."""
        with self._cache_lock:
            if self._calibrated:
                return self.nodes
            X = self.model.random_points(8, np.random.default_rng(PROBE_SEED))
            n = self.nodes
            prev = self._raw(X, n)
            while n < MAX_NODES:
                cur = self._raw(X, 2 * n)
                if np.max(np.abs(cur - prev)) <= AGREE_TOL:
                    break
                n, prev = 2 * n, cur
            self.nodes = n
            self._calibrated = True
            return n

    def _evaluate(self, X):
        if not self._calibrated:
            self.calibrate()
        if self.source.constant is not None:
            c = self.source.constant
            out = c if self.kind == "average" else 0.0
            return out + 0.0 * X[:, 0]
        if isinstance(X, Dual):
            return self._raw(X, self.nodes)
        keys = [row.tobytes() for row in X]
        with self._cache_lock:
            hits = [self._cache.get(k) for k in keys]
        miss = [i for i, v in enumerate(hits) if v is None]
        out = np.array([np.nan if v is None else v for v in hits], dtype=float)
        if miss:
            vals = self._raw(X[miss], self.nodes)
            out[miss] = vals
            with self._cache_lock:
                for i, v in zip(miss, vals):
                    self._cache[keys[i]] = float(v)
        return out


def average_along_flow(model, f, nodes=DEFAULT_NODES):
    """Orbit average ``(1/T) int_0^T f(phi_t x) dt`` as a memoized field."""
    _check_regular(model)
    if f.constant is not None:
        return f
    return OrbitIntegralField(model, f, "average", nodes)


def solve_homological(model, f, subtract_average=False, samples=100, seed=0, tol=1e-8,
                      nodes=DEFAULT_NODES):
    """Solve ``R0(h) = f`` for a field with vanishing orbit average.

    Parameters
    ----------
    subtract_average : bool
        If true, ``f`` is replaced by ``f - avg(f)`` first; the removed
        average is stored on the result as ``h.removed_average``.

    Raises
    ------
    AverageNotZeroError
        If ``avg(f)`` exceeds ``tol`` on the random probe sample (after
        subtraction, if requested).
    """
    _check_regular(model)
    if f.constant == 0.0:
        h = ZERO
        return h
    fbar = average_along_flow(model, f, nodes)
    X = model.random_points(samples, np.random.default_rng(seed))
    removed = None
    worst = float(np.max(np.abs(fbar(X))))
    if worst > tol:
        if not subtract_average:
            raise AverageNotZeroError(
                f"orbit average of {f.label} reaches {worst:.3e} (> {tol:g}); no preimage under R0")
        removed = fbar
        f = f - fbar
        worst = float(np.max(np.abs(average_along_flow(model, f, nodes)(X))))
        if worst > tol:
            raise AverageNotZeroError(f"average still {worst:.3e} after subtraction")
    h = OrbitIntegralField(model, f, "homological", nodes)
    h.removed_average = removed
    return h


# ---------------------------------------------------------------------------
# contact Hamiltonian fields
# ---------------------------------------------------------------------------

class HamiltonianField:
    """Vector field ``X_h`` with ``alpha0(X_h) = h`` and ``L_{X_h} alpha0 = R0(h) alpha0``."""

    def __init__(self, model, h):
        self.model = model
        self.h = h

    def __call__(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.h.constant == 0.0:
            return np.zeros_like(X)
        hv, hg = self.h.value_and_grad(X)
        return self.model.hamiltonian_vectors(hv, hg, X)

    def at(self, x):
        check_points(x.model_id, x.coords)
        return TangentVector(x, self(x.coords[None, :])[0])


def hamiltonian_field(model, h):
    return HamiltonianField(model, h)


def hamiltonian_residuals(model, h, X, V=None):
    """Largest violations of the two defining equations of ``X_h`` on a frame."""
    X = np.atleast_2d(X)
    V = HamiltonianField(model, h)(X) if V is None else V
    hv, hg = h.value_and_grad(X)
    R0 = model.reeb0(X)
    Rh = np.einsum("nd,nd->n", hg, R0)
    r1 = np.abs(model.alpha0(X, V) - hv)
    basis = np.concatenate([R0[:, None, :], model.frame(X)], axis=1)
    r2 = np.zeros(len(X))
    for j in range(basis.shape[1]):
        B = basis[:, j]
        lhs = model.dalpha0(X, V, B)
        rhs = Rh * model.alpha0(X, B) - np.einsum("nd,nd->n", hg, B)
        r2 = np.maximum(r2, np.abs(lhs - rhs))
    return r1, r2


# ---------------------------------------------------------------------------
# Dragt-Finn normal form
# ---------------------------------------------------------------------------

class LieDerivativeField(ScalarField):
    """``D(g) = X_h(g) + g * r`` where ``r`` represents ``R0(h)``.

    This is the generator of ``phi^*(g alpha0) = (exp(tau D) g) alpha0`` for the
    time-``tau`` flow of the contact Hamiltonian field ``X_h``.
    """

    def __init__(self, model, g, h, r):
        self.model, self.g, self.h, self.r = model, g, h, r
        self.xh = HamiltonianField(model, h)
        super().__init__(self._evaluate, domain=model.domain, parity="unknown",
                         label=f"D[{g.label}]", dual=False)

    def _evaluate(self, X):
        out = np.empty(len(X))
        step = 4096
        for i in range(0, len(X), step):
            Xi = X[i:i + step]
            gv, gg = self.g.value_and_grad(Xi)
            V = self.xh(Xi)
            out[i:i + step] = np.einsum("nd,nd->n", V, gg) + gv * self.r(Xi)
        return out


def _lie_power(model, g, h, r, j, memo):
    key = (id(g), j)
    if key not in memo:
        if j == 0:
            memo[key] = g
        else:
            prev = _lie_power(model, g, h, r, j - 1, memo)
            if prev.constant == 0.0:
                memo[key] = ZERO
            elif prev.constant == 1.0:
                memo[key] = r
            else:
                memo[key] = LieDerivativeField(model, prev, h, r)
    return memo[key]


@dataclass
class NormalFormResult:
    mu: list
    generators: list
    transformed: DeformationJet
    invariance_residuals: list
    removed_averages: list = dc_field(default_factory=list)


def invariance_residual(model, f, samples=200, times=16, seed=1):
    """``sup |f(phi_t x) - f(x)|`` over random x and equally spaced t in [0, T)."""
    if f.constant is not None:
        return 0.0
    X = model.random_points(samples, np.random.default_rng(seed))
    t = np.arange(times) * model.reference_period / times
    base = f(X)
    vals = orbit_values(model, f, X, t) if model.unit_weight else None
    if vals is None:
        Y = model.reference_samples(X, t)
        vals = f(Y.reshape(-1, X.shape[1])).reshape(len(X), len(t))
    return float(np.max(np.abs(vals - base[:, None])))


def normal_form(model, jet, k, nodes=DEFAULT_NODES, max_order=3, residual_samples=200, check=True):
    """Normalize ``jet`` to order ``k`` by a composition of contact isotopies.

    At step ``i`` the order-``i`` coefficient ``nu`` is split into its orbit
    average and the rest; ``h_i`` solves ``R0(h_i) = -(nu - avg(nu))`` and the
    jet is pulled back by the time-``s^i`` flow of ``X_{h_i}`` through the
    truncated Lie series ``c'_m = sum_j D^j(c_{m - i j}) / j!``.
    """
    if k > jet.order:
        raise JetOrderError(f"requested order {k} exceeds the jet order {jet.order}")
    if k > max_order:
        raise JetOrderError(f"order {k} exceeds the configured cap {max_order}")
    _check_regular(model)
    coeffs = list(jet.coefficients[:k + 1])
    mus, gens, removed = [], [], []
    for i in range(1, k + 1):
        nu = coeffs[i]
        nubar = _snap_zero(model, average_along_flow(model, nu, nodes))
        mus.append(nubar)
        if nu.constant is not None or _is_invariant(model, nu, nubar):
            gens.append(ZERO)
            coeffs[i] = nubar
            continue
        r = nubar - nu                      # = R0(h_i)
        # the centered kernel annihilates invariant fields, so the
        # homological solution of nubar - nu is that of -nu
        h = OrbitIntegralField(model, -nu, "homological", nodes)
        gens.append(h)
        new = list(coeffs)
        memo = {}
        for m in range(i, k + 1):
            acc = coeffs[m]
            j = 1
            while m - i * j >= 0:
                term = _lie_power(model, coeffs[m - i * j], h, r, j, memo)
                if term.constant != 0.0:
                    acc = acc + term * (1.0 / math.factorial(j))
                j += 1
            new[m] = acc
        new[i] = nubar
        coeffs = new
    transformed = DeformationJet(coeffs, label=f"normal_form({jet.label})")
    res = [invariance_residual(model, mu, samples=residual_samples) if check else float("nan")
           for mu in mus]
    return NormalFormResult(mus, gens, transformed, res, removed)


def _snap_zero(model, f, samples=64, tol=1e-14):
    # an average that vanishes to rounding on random probes is the zero field
    if f.constant is not None:
        return f
    X = model.random_points(samples, np.random.default_rng(PROBE_SEED + 2))
    if float(np.max(np.abs(f(X)))) <= tol:
        return ZERO
    return f


def _is_invariant(model, nu, nubar, samples=32, tol=1e-12):
    X = model.random_points(samples, np.random.default_rng(PROBE_SEED + 1))
    return float(np.max(np.abs(nu(X) - nubar(X)))) <= tol


def pullback_oracle(model, nu_list, h, s_values, X, tol=1e-12):
    """Numerical pullback of ``(1 + s nu_1 + s^2 nu_2 + ...) alpha0`` by the
    time-``s`` flow of ``X_h``; returns the factor ``rho~_s(x)`` per (s, x).

    The conformal factor ``exp(int_0^s R0(h)(phi_sigma x) d sigma)`` is carried
    as an extra ODE component, with ``R0(h)`` taken as ``dh(R0)``.
    """
    from .integrate import integrate

    X = np.atleast_2d(X)
    d = X.shape[1]
    xh = HamiltonianField(model, h)

    def rhs(Z):
        Y = Z[:, :d]
        V = xh(Y)
        _, hg = h.value_and_grad(Y)
        Rh = np.einsum("nd,nd->n", hg, model.reeb0(Y))
        return np.concatenate([V, Rh[:, None]], axis=1)

    def project(Z):
        return np.concatenate([model.project(Z[:, :d]), Z[:, d:]], axis=1)

    out = np.empty((len(s_values), len(X)))
    for a, s in enumerate(s_values):
        Z0 = np.concatenate([X, np.zeros((len(X), 1))], axis=1)
        if s >= 0:
            Z = integrate(rhs, Z0, s, tol, project=project).y
        else:
            Z = integrate(lambda W: -rhs(W), Z0, -s, tol, project=project).y
        rho = np.ones(len(X))
        for i, nu in enumerate(nu_list, start=1):
            rho = rho + s ** i * nu(Z[:, :d])
        out[a] = rho * np.exp(Z[:, d])
    return out


def pullback_coefficient(model, nu_list, h, X, order=2, s_values=(-0.1, -0.05, 0.05, 0.1), tol=1e-12):
    """The ``s^order`` coefficient of the numerical pullback, by least squares
    of ``rho~_s - 1`` on ``s, ..., s^len(s_values)``."""
    s = np.asarray(s_values, dtype=float)
    vals = pullback_oracle(model, nu_list, h, s, X, tol) - 1.0
    V = np.stack([s ** p for p in range(1, len(s) + 1)], axis=1)
    coef, *_ = np.linalg.lstsq(V, vals, rcond=None)
    return coef[order - 1]


def pullback_orbit_average(model, nu_list, h, X, order=2, nodes=16, **kw):
    """Orbit average of :func:`pullback_coefficient`; the oracle for ``mu^(order)``
    when only the first generator is flowed."""
    X = np.atleast_2d(X)
    t = np.arange(nodes) * model.reference_period / nodes
    Y = model.reference_samples(X, t).reshape(-1, X.shape[1])
    c = pullback_coefficient(model, nu_list, h, Y, order, **kw)
    return c.reshape(len(X), nodes).mean(axis=1)
