"""Scalar fields, deformation jets and differentiation on the model manifolds.

Fields are closed-form evaluators acting on batches of ambient coordinates
``X`` of shape ``(N, D)``. Three coordinate domains exist:

``hopf1`` / ``hopf2``
    S^3 in C^2 = R^4 and S^5 in C^3 = R^6, coordinates ``(x1, y1, x2, y2, ...)``
    with ``z_k = x_k + i y_k``.
``ut``
    The unit cotangent bundle of S^2, coordinates ``(x, y, z, px, py, pz)``:
    a base point on the unit sphere and a unit covector tangent to it.
"""

import math
import re
import threading
from dataclasses import dataclass

import numpy as np

from .dual import Dual, seed
from .errors import ModelMismatchError, NotTangentError, PointOffManifoldError, ConfigError

OFF_MANIFOLD_TOL = 1e-8
TANGENT_TOL = 1e-10
FD_STEP = 1e-5

DOMAIN_DIMS = {"hopf1": 4, "hopf2": 6, "ut": 6}


# ---------------------------------------------------------------------------
# constraint geometry of the embedded models
# ---------------------------------------------------------------------------

def constraint_residual(domain, X):
    """Largest violation of the embedding constraints at each row of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if domain in ("hopf1", "hopf2"):
        return np.abs(np.linalg.norm(X, axis=1) - 1.0)
    if domain == "ut":
        x, p = X[:, :3], X[:, 3:]
        return np.maximum.reduce([
            np.abs(np.linalg.norm(x, axis=1) - 1.0),
            np.abs(np.einsum("ij,ij->i", x, p)),
            np.abs(np.linalg.norm(p, axis=1) - 1.0),
        ])
    raise ModelMismatchError(f"unknown domain {domain!r}")


def constraint_normals(domain, X):
    """Gradients of the defining constraints, shape (N, c, D)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if domain in ("hopf1", "hopf2"):
        return X[:, None, :]
    x, p = X[:, :3], X[:, 3:]
    z = np.zeros_like(x)
    return np.stack([np.concatenate([x, z], 1),
                     np.concatenate([p, x], 1),
                     np.concatenate([z, p], 1)], axis=1)


def tangent_residual(domain, X, V):
    """Norm of the component of ``V`` normal to the manifold at ``X``."""
    Nrm = constraint_normals(domain, X)
    V = np.atleast_2d(V)
    res = np.empty(len(V))
    for i in range(len(V)):
        A = Nrm[i].T
        coef, *_ = np.linalg.lstsq(A, V[i], rcond=None)
        res[i] = np.linalg.norm(A @ coef)
    return res


# ---------------------------------------------------------------------------
# points and tangent vectors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Point:
    model_id: str
    coords: np.ndarray
    chart_id: str = "ambient"

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float).copy()
        if c.ndim != 1 or not np.all(np.isfinite(c)):
            raise ValueError("point coordinates must be a finite 1-d vector")
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)

    def residual(self):
        return float(constraint_residual(self.model_id, self.coords)[0])

    def __eq__(self, other):
        return (isinstance(other, Point) and self.model_id == other.model_id
                and np.array_equal(self.coords, other.coords))

    def __hash__(self):
        return hash((self.model_id, self.coords.tobytes()))


@dataclass(frozen=True)
class TangentVector:
    base: Point
    components: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.components, dtype=float).copy()
        if c.shape != self.base.coords.shape:
            raise ValueError("tangent vector and base point differ in length")
        c.setflags(write=False)
        object.__setattr__(self, "components", c)

    def residual(self):
        return float(tangent_residual(self.base.model_id, self.base.coords, self.components)[0])


def check_points(domain, X, tol=OFF_MANIFOLD_TOL):
    res = constraint_residual(domain, X)
    if np.any(res > tol):
        raise PointOffManifoldError(
            f"point violates the {domain} constraint by {res.max():.3e} (> {tol:g})")


# ---------------------------------------------------------------------------
# scalar fields
# ---------------------------------------------------------------------------

def _combine_domain(a, b):
    if a is None:
        return b
    if b is None or a == b:
        return a
    raise ModelMismatchError(f"fields live on different models: {a} vs {b}")


def _parity_sum(a, b):
    return a if a == b else "unknown"


def _parity_prod(a, b):
    if "unknown" in (a, b):
        return "unknown"
    return "even" if a == b else "odd"


def fd_gradient(fn, X, step=FD_STEP):
    """Central differences with one Richardson extrapolation, batched."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, d = X.shape
    eye = np.eye(d)
    offs = np.concatenate([step * eye, -step * eye, 2 * step * eye, -2 * step * eye])
    pts = (X[None, :, :] + offs[:, None, :]).reshape(-1, d)
    vals = np.asarray(fn(pts), dtype=float).reshape(4 * d, n)
    d1 = (vals[:d] - vals[d:2 * d]) / (2 * step)
    d2 = (vals[2 * d:3 * d] - vals[3 * d:]) / (4 * step)
    return ((4.0 * d1 - d2) / 3.0).T


class ScalarField:
    """A real function on one of the model manifolds.

    Parameters
    ----------
    fn : callable
        Batch evaluator ``(N, D) -> (N,)``. If ``dual`` is true it must also
        accept :class:`~contactsys.dual.Dual` input.
    domain : str or None
        Coordinate domain; ``None`` means the field makes sense everywhere
        (constants).
    parity : {"unknown", "even", "odd"}
        Behaviour under ``X -> -X``.
    grad_fn : callable, optional
        Analytic ambient gradient ``(N, D) -> (N, D)``.
    """

    def __init__(self, fn, *, domain=None, parity="unknown", label="", dual=True,
                 grad_fn=None, constant=None):
        if parity not in ("unknown", "even", "odd"):
            raise ValueError(f"bad parity {parity!r}")
        self.fn = fn
        self.domain = domain
        self.parity = parity
        self.label = label or getattr(fn, "__name__", "field")
        self.dual = dual
        self.grad_fn = grad_fn
        self.constant = constant
        self._lock = threading.Lock()

    def __repr__(self):
        return f"ScalarField({self.label!r}, domain={self.domain}, parity={self.parity})"

    # evaluation ---------------------------------------------------------
    def __call__(self, X):
        if isinstance(X, Dual):
            return self.fn(X)
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X2 = np.atleast_2d(X)
        out = np.asarray(self.fn(X2), dtype=float)
        out = np.broadcast_to(out, (len(X2),)).copy() if out.shape != (len(X2),) else out
        return out[0] if single else out

    def grad(self, X):
        """Ambient gradient of the evaluator at each row of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.value_and_grad(X)[1]

    def value_and_grad(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.constant is not None:
            return np.full(len(X), float(self.constant)), np.zeros_like(X)
        if self.grad_fn is not None:
            return self(X), np.asarray(self.grad_fn(X), dtype=float)
        if self.dual:
            try:
                out = self.fn(seed(X))
            except (TypeError, NotImplementedError, AttributeError):
                with self._lock:
                    self.dual = False
            else:
                if isinstance(out, Dual):
                    return (np.broadcast_to(out.val, (len(X),)).copy(),
                            np.broadcast_to(out.der, X.shape).copy())
                return np.broadcast_to(np.asarray(out, float), (len(X),)).copy(), np.zeros_like(X)
        return self(X), fd_gradient(self, X)

    def fd_grad(self, X, step=FD_STEP):
        """Finite-difference gradient; the cross-check oracle for :meth:`grad`."""
        return fd_gradient(self, X, step)

    # algebra ------------------------------------------------------------
    def _wrap(self, other):
        if isinstance(other, ScalarField):
            return other
        return constant(float(other))

    def __add__(self, other):
        o = self._wrap(other)
        a = self
        if a.constant is not None and o.constant is not None:
            return constant(a.constant + o.constant)
        gf = None if (a.dual and o.dual) else (lambda X: a.grad(X) + o.grad(X))
        return ScalarField(lambda X: a.fn(X) + o.fn(X), domain=_combine_domain(a.domain, o.domain),
                           parity=_parity_sum(a.parity, o.parity), label=f"({a.label} + {o.label})",
                           dual=a.dual and o.dual, grad_fn=gf)

    __radd__ = __add__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-self._wrap(other))

    def __rsub__(self, other):
        return self._wrap(other) + (-self)

    def __mul__(self, other):
        o = self._wrap(other)
        a = self
        if a.constant is not None and o.constant is not None:
            return constant(a.constant * o.constant)
        if o.constant is not None:
            c = o.constant
            gf = None if a.dual else (lambda X: c * a.grad(X))
            return ScalarField(lambda X: a.fn(X) * c, domain=a.domain, parity=a.parity,
                               label=f"{c:g}*{a.label}", dual=a.dual, grad_fn=gf)
        if a.constant is not None:
            return o * a
        gf = None
        if not (a.dual and o.dual):
            def gf(X):
                va, ga = a.value_and_grad(X)
                vo, go = o.value_and_grad(X)
                return ga * vo[:, None] + go * va[:, None]
        return ScalarField(lambda X: a.fn(X) * o.fn(X), domain=_combine_domain(a.domain, o.domain),
                           parity=_parity_prod(a.parity, o.parity), label=f"{a.label}*{o.label}",
                           dual=a.dual and o.dual, grad_fn=gf)

    __rmul__ = __mul__

    def __truediv__(self, c):
        if isinstance(c, ScalarField):
            raise TypeError("division by a field is not supported")
        return self * (1.0 / float(c))

    def __pow__(self, k):
        k = int(k)
        if k < 0:
            raise ValueError("negative powers are not supported")
        out = constant(1.0)
        for _ in range(k):
            out = out * self
        return out

    def with_label(self, label):
        self.label = label
        return self


def constant(c):
    c = float(c)
    return ScalarField(lambda X: c, domain=None, parity="even", label=f"{c:g}", constant=c)


ONE = constant(1.0)
ZERO = constant(0.0)


def evaluate(field, x):
    """Value of ``field`` at the :class:`Point` ``x``."""
    if field.domain is not None and field.domain != x.model_id:
        raise ModelMismatchError(f"field on {field.domain} evaluated at a point of {x.model_id}")
    check_points(x.model_id, x.coords)
    return float(field(x.coords[None, :])[0])


def directional_derivative(field, x, v):
    """``df_x(v)`` for a tangent vector ``v`` based at ``x``."""
    if v.base != x:
        raise ModelMismatchError("tangent vector is not based at the given point")
    if field.domain is not None and field.domain != x.model_id:
        raise ModelMismatchError(f"field on {field.domain} used at a point of {x.model_id}")
    check_points(x.model_id, x.coords)
    res = v.residual()
    if res > TANGENT_TOL * max(1.0, float(np.linalg.norm(v.components))):
        raise NotTangentError(f"vector is not tangent at the base point (normal part {res:.3e})")
    g = field.grad(x.coords[None, :])[0]
    return float(g @ v.components)


# ---------------------------------------------------------------------------
# jets in the deformation parameter
# ---------------------------------------------------------------------------

@dataclass
class DeformationJet:
    """Truncated family ``rho_s = 1 + s c_1 + ... + s^k c_k``."""

    coefficients: list
    label: str = ""

    def __post_init__(self):
        cs = [c if isinstance(c, ScalarField) else constant(c) for c in self.coefficients]
        if not cs or cs[0].constant != 1.0:
            raise ValueError("a deformation jet must start with the constant field 1")
        doms = {c.domain for c in cs if c.domain is not None}
        if len(doms) > 1:
            raise ModelMismatchError(f"jet coefficients live on different models: {sorted(doms)}")
        self.coefficients = cs

    @property
    def order(self):
        return len(self.coefficients) - 1

    @property
    def domain(self):
        return next((c.domain for c in self.coefficients if c.domain is not None), None)

    def __getitem__(self, i):
        return self.coefficients[i]

    def rho(self, s):
        """The field ``rho_s`` obtained by evaluating the polynomial at ``s``."""
        out = self.coefficients[0]
        for i, c in enumerate(self.coefficients[1:], start=1):
            if c.constant == 0.0:
                continue
            out = out + c * (s ** i)
        return out.with_label(f"jet({self.label or 'rho'})@s={s:g}")


def jet_compose(a, b, op):
    """Multiply or add two jets, truncated at ``min(a.order, b.order)``.

    ``add`` adds the perturbations: ``(1 + A) (+) (1 + B) = 1 + A + B``, which
    keeps the leading coefficient equal to one.
    """
    if a.domain is not None and b.domain is not None and a.domain != b.domain:
        raise ModelMismatchError(f"jets on different models: {a.domain} vs {b.domain}")
    k = min(a.order, b.order)
    if op == "add":
        cs = [ONE] + [a[i] + b[i] for i in range(1, k + 1)]
    elif op == "multiply":
        cs = []
        for m in range(k + 1):
            acc = None
            for i in range(m + 1):
                term = a[i] * b[m - i]
                acc = term if acc is None else acc + term
            cs.append(acc)
    else:
        raise ValueError(f"unknown jet operation {op!r}")
    return DeformationJet(cs, label=f"{a.label or 'a'} {op} {b.label or 'b'}")


# ---------------------------------------------------------------------------
# built-in field library
# ---------------------------------------------------------------------------

def _coord(i):
    return lambda X: X[:, i]


def _hopf_fields(n):
    dom = f"hopf{n}"
    out = {}
    for k in range(n + 1):
        out[f"x{k + 1}"] = (_coord(2 * k), "odd")
        out[f"y{k + 1}"] = (_coord(2 * k + 1), "odd")

    def zz(j, k, conj):
        # z_j * z_k  or  z_j * conj(z_k)
        def re(X):
            a, b, c, d = X[:, 2 * j], X[:, 2 * j + 1], X[:, 2 * k], X[:, 2 * k + 1]
            return a * c + b * d if conj else a * c - b * d

        def im(X):
            a, b, c, d = X[:, 2 * j], X[:, 2 * j + 1], X[:, 2 * k], X[:, 2 * k + 1]
            return b * c - a * d if conj else a * d + b * c
        return re, im

    for j in range(n + 1):
        re, im = zz(j, j, False)
        out[f"re_z{j + 1}sq"] = (re, "even")
        out[f"im_z{j + 1}sq"] = (im, "even")
        re, _ = zz(j, j, True)
        out[f"abs_z{j + 1}sq"] = (re, "even")
        for k in range(j + 1, n + 1):
            re, im = zz(j, k, True)
            out[f"re_z{j + 1}z{k + 1}bar"] = (re, "even")
            out[f"im_z{j + 1}z{k + 1}bar"] = (im, "even")
            re, im = zz(j, k, False)
            out[f"re_z{j + 1}z{k + 1}"] = (re, "even")
            out[f"im_z{j + 1}z{k + 1}"] = (im, "even")
    return {name: ScalarField(f, domain=dom, parity=par, label=name) for name, (f, par) in out.items()}


def _horner(coefs, t):
    out = 0.0 * t + coefs[-1]
    for c in coefs[-2::-1]:
        out = out * t + c
    return out


def harmonic_evaluator(l, m):
    """Real orthonormal spherical harmonic ``Y_l^m`` of ambient ``(x, y, z)``.

    Uses ``P_l^|m|(z) / sin^|m|`` (a polynomial) times ``Re / Im (x + i y)^|m|``,
    without the Condon-Shortley phase; ``m < 0`` selects the sine branch.
    """
    if l < 0 or abs(m) > l:
        raise ValueError(f"invalid harmonic degree/order ({l}, {m})")
    am = abs(m)
    pl = np.polynomial.legendre.leg2poly([0] * l + [1])
    q = np.polynomial.polynomial.polyder(pl, am) if am else pl
    norm = math.sqrt((2 * l + 1) / (4 * math.pi) * math.factorial(l - am) / math.factorial(l + am))
    if am:
        norm *= math.sqrt(2.0)
    q = tuple(float(c) * norm for c in np.atleast_1d(q))

    def ylm(x, y, z):
        radial = _horner(q, z)
        if am == 0:
            return radial
        c, s = x, y
        for _ in range(am - 1):
            c, s = c * x - s * y, s * x + c * y
        return radial * (c if m > 0 else s)

    return ylm


def harmonic_field(l, m, domain="ut"):
    ylm = harmonic_evaluator(l, m)
    return ScalarField(lambda X: ylm(X[:, 0], X[:, 1], X[:, 2]), domain=domain,
                       parity="odd" if l % 2 else "even", label=f"Y_{l}_{m}")


def _ut_fields():
    names = ["x", "y", "z", "px", "py", "pz"]
    return {nm: ScalarField(_coord(i), domain="ut", parity="odd", label=nm)
            for i, nm in enumerate(names)}


_LIBRARY_CACHE = {}


def library(domain):
    """Named built-in fields available on a coordinate domain."""
    if domain not in _LIBRARY_CACHE:
        if domain == "hopf1":
            lib = _hopf_fields(1)
        elif domain == "hopf2":
            lib = _hopf_fields(2)
        elif domain == "ut":
            lib = _ut_fields()
        elif domain == "profile":
            lib = {"x": ScalarField(lambda X: X[:, 0], domain="profile", parity="odd", label="x")}
        else:
            raise ModelMismatchError(f"unknown domain {domain!r}")
        _LIBRARY_CACHE[domain] = lib
    return _LIBRARY_CACHE[domain]


# ---------------------------------------------------------------------------
# expression grammar
#
#   expr   := ['+'|'-'] term (('+'|'-') term)*
#   term   := power (('*'|'/') power)*
#   power  := atom ['^' INT]
#   atom   := NUMBER | NAME | FUNC '(' expr ')' | 'Y' '(' INT ',' INT ')' | '(' expr ')'
#   NAME   := builtin identifier, or Y_l_m (m < 0 written m1, m2, ...)
#   FUNC   := exp | sin | cos | sqrt
# ---------------------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(?P<num>\d+\.\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?|\d+(?:[eE][-+]?\d+)?)"
                    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[-+*/^(),]))")

_FUNCS = {"exp": np.exp, "sin": np.sin, "cos": np.cos, "sqrt": np.sqrt}
_HARMONIC = re.compile(r"^Y_(\d+)_(m?)(\d+)$")


def _tokenize(text):
    pos, toks = 0, []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ConfigError(f"unexpected character {text[pos]!r} in field expression", 1, pos + 1)
        kind = m.lastgroup
        toks.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    toks.append(("end", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text, domain):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0
        self.domain = domain
        self.lib = library(domain)

    def peek(self):
        return self.toks[self.i]

    def take(self, value=None):
        tok = self.toks[self.i]
        if value is not None and tok[1] != value:
            self.fail(f"expected {value!r}", tok)
        self.i += 1
        return tok

    def fail(self, msg, tok=None):
        tok = tok or self.peek()
        raise ConfigError(f"{msg} in field expression {self.text!r}", 1, tok[2] + 1)

    def parse(self):
        out = self.expr()
        if self.peek()[0] != "end":
            self.fail(f"unexpected token {self.peek()[1]!r}")
        return out

    def expr(self):
        sign = 1.0
        if self.peek()[1] in "+-" and self.peek()[0] == "op":
            sign = -1.0 if self.take()[1] == "-" else 1.0
        out = self.term()
        if sign < 0:
            out = -out
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            rhs = self.term()
            out = out + rhs if op == "+" else out - rhs
        return out

    def term(self):
        out = self.power()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()
            rhs = self.power()
            if op[1] == "*":
                out = out * rhs
            else:
                if rhs.constant is None:
                    self.fail("division is only allowed by constants", op)
                out = out / rhs.constant
        return out

    def power(self):
        base = self.atom()
        if self.peek()[1] == "^" and self.peek()[0] == "op":
            tok = self.take()
            e = self.take()
            if e[0] != "num" or not e[1].isdigit():
                self.fail("exponent must be a non-negative integer", tok)
            base = base ** int(e[1])
        return base

    def atom(self):
        kind, val, pos = tok = self.take()
        if kind == "num":
            return constant(float(val))
        if kind == "op" and val == "(":
            out = self.expr()
            self.take(")")
            return out
        if kind == "op" and val == "-":
            return -self.atom()
        if kind == "name":
            if val in _FUNCS and self.peek()[1] == "(":
                self.take("(")
                inner = self.expr()
                self.take(")")
                f = _FUNCS[val]
                return ScalarField(lambda X, g=inner, f=f: f(g.fn(X) + 0.0 * X[:, 0]), domain=inner.domain,
                                   parity="even" if inner.parity == "even" else "unknown",
                                   label=f"{val}({inner.label})", dual=inner.dual)
            if val == "Y" and self.peek()[1] == "(":
                self.take("(")
                l = self._int()
                self.take(",")
                m = self._int()
                self.take(")")
                return self._harmonic(l, m, tok)
            hm = _HARMONIC.match(val)
            if hm:
                l, neg, m = int(hm.group(1)), hm.group(2), int(hm.group(3))
                return self._harmonic(l, -m if neg else m, tok)
            if val in self.lib:
                return self.lib[val]
            self.fail(f"unknown field name {val!r}", tok)
        self.fail(f"unexpected token {val!r}", tok)

    def _int(self):
        sign = 1
        if self.peek()[1] == "-":
            self.take()
            sign = -1
        tok = self.take()
        if tok[0] != "num" or not tok[1].isdigit():
            self.fail("expected an integer", tok)
        return sign * int(tok[1])

    def _harmonic(self, l, m, tok):
        if self.domain != "ut":
            self.fail("spherical harmonics live on the unit cotangent bundle model", tok)
        try:
            return harmonic_field(l, m)
        except ValueError as exc:
            self.fail(str(exc), tok)


def parse_field(text, domain):
    """Build a :class:`ScalarField` from an expression such as ``"0.5*Y_2_0 + 1"``."""
    f = _Parser(str(text), domain).parse()
    f.label = str(text).strip()
    return f
