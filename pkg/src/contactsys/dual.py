"""Forward-mode automatic differentiation on numpy arrays.

A :class:`Dual` carries a value array of shape ``S`` and a derivative array of
shape ``S + (K,)`` holding ``K`` directional derivatives at once. Field
evaluators written with ordinary arithmetic, indexing, ``@`` against constant
matrices and the numpy ufuncs listed in ``_UNARY`` work unchanged on duals.
"""

import numpy as np

__all__ = ["Dual", "seed", "value_of", "stack", "where", "is_dual"]


def _d(u):
    return u.der if isinstance(u, Dual) else None


def _v(u):
    return u.val if isinstance(u, Dual) else u


def _lift(c):
    # constant broadcast against a derivative array
    return np.asarray(c)[..., None]


class Dual:
    __slots__ = ("val", "der")
    __array_priority__ = 100

    def __init__(self, val, der):
        self.val = np.asarray(val, dtype=float)
        self.der = np.asarray(der, dtype=float)

    # -- array protocol -------------------------------------------------
    @property
    def shape(self):
        return self.val.shape

    @property
    def ndim(self):
        return self.val.ndim

    def __len__(self):
        return len(self.val)

    def __repr__(self):
        return f"Dual(val={self.val!r}, nder={self.der.shape[-1]})"

    def __getitem__(self, idx):
        t = idx if isinstance(idx, tuple) else (idx,)
        didx = t + (slice(None),) if any(i is Ellipsis for i in t) else t
        return Dual(self.val[idx], self.der[didx])

    @property
    def T(self):
        if self.ndim != 2:
            raise ValueError("transpose only defined for 2-d duals")
        return Dual(self.val.T, np.swapaxes(self.der, 0, 1))

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        v = self.val.reshape(shape)
        return Dual(v, self.der.reshape(v.shape + (self.der.shape[-1],)))

    def sum(self, axis=None, **_):
        if axis is None:
            return Dual(self.val.sum(), self.der.reshape(-1, self.der.shape[-1]).sum(axis=0))
        ax = axis % self.val.ndim
        return Dual(self.val.sum(axis=ax), self.der.sum(axis=ax))

    # -- arithmetic -----------------------------------------------------
    def __neg__(self):
        return Dual(-self.val, -self.der)

    def __pos__(self):
        return self

    def __add__(self, o):
        if isinstance(o, Dual):
            return Dual(self.val + o.val, self.der + o.der)
        v = self.val + o
        return Dual(v, np.broadcast_to(self.der, v.shape + self.der.shape[-1:]))

    __radd__ = __add__

    def __sub__(self, o):
        return self + (-o)

    def __rsub__(self, o):
        return (-self) + o

    def __mul__(self, o):
        if isinstance(o, Dual):
            return Dual(self.val * o.val,
                        self.der * o.val[..., None] + o.der * self.val[..., None])
        return Dual(self.val * o, self.der * _lift(o))

    __rmul__ = __mul__

    def __truediv__(self, o):
        if isinstance(o, Dual):
            return self * o.reciprocal()
        return Dual(self.val / o, self.der / _lift(o))

    def __rtruediv__(self, o):
        return self.reciprocal() * o

    def reciprocal(self):
        r = 1.0 / self.val
        return Dual(r, -self.der * (r * r)[..., None])

    def __pow__(self, p):
        if isinstance(p, Dual):
            return np.exp(np.log(self) * p)
        p = float(p)
        if p == 2.0:
            return self * self
        return Dual(self.val ** p, self.der * (p * self.val ** (p - 1.0))[..., None])

    def __rpow__(self, base):
        return np.exp(self * np.log(base))

    def __matmul__(self, A):
        A = np.asarray(A, dtype=float)
        return Dual(self.val @ A, np.einsum("...ik,ij->...jk", self.der, A))

    # -- comparisons act on values only ---------------------------------
    def __lt__(self, o):
        return self.val < _v(o)

    def __le__(self, o):
        return self.val <= _v(o)

    def __gt__(self, o):
        return self.val > _v(o)

    def __ge__(self, o):
        return self.val >= _v(o)

    # -- numpy ufunc dispatch ---------------------------------------------
    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        if method != "__call__" or kwargs.get("out") is not None:
            return NotImplemented
        if ufunc in _BINARY:
            a, b = inputs
            return _BINARY[ufunc](a, b)
        if ufunc in _UNARY and len(inputs) == 1:
            x = inputs[0]
            f, df = _UNARY[ufunc]
            return Dual(f(x.val), x.der * df(x.val)[..., None])
        if ufunc is np.arctan2:
            y, x = inputs
            yv, xv = _v(y), _v(x)
            r2 = xv * xv + yv * yv
            der = 0.0
            if _d(y) is not None:
                der = der + _d(y) * (xv / r2)[..., None]
            if _d(x) is not None:
                der = der - _d(x) * (yv / r2)[..., None]
            return Dual(np.arctan2(yv, xv), der)
        return NotImplemented


def _pow_any(a, b):
    if isinstance(a, Dual):
        return a ** b
    return Dual.__rpow__(b, a)


_BINARY = {
    np.add: lambda a, b: a + b if isinstance(a, Dual) else b + a,
    np.subtract: lambda a, b: a - b if isinstance(a, Dual) else b.__rsub__(a),
    np.multiply: lambda a, b: a * b if isinstance(a, Dual) else b * a,
    np.true_divide: lambda a, b: a / b if isinstance(a, Dual) else b.__rtruediv__(a),
    np.power: _pow_any,
    np.matmul: lambda a, b: a @ b if isinstance(a, Dual) else NotImplemented,
}

_UNARY = {
    np.sin: (np.sin, np.cos),
    np.cos: (np.cos, lambda x: -np.sin(x)),
    np.exp: (np.exp, np.exp),
    np.log: (np.log, lambda x: 1.0 / x),
    np.sqrt: (np.sqrt, lambda x: 0.5 / np.sqrt(x)),
    np.square: (np.square, lambda x: 2.0 * x),
    np.tanh: (np.tanh, lambda x: 1.0 - np.tanh(x) ** 2),
    np.negative: (np.negative, lambda x: -np.ones_like(x)),
    np.absolute: (np.absolute, np.sign),
    np.arctan: (np.arctan, lambda x: 1.0 / (1.0 + x * x)),
    np.expm1: (np.expm1, np.exp),
    np.log1p: (np.log1p, lambda x: 1.0 / (1.0 + x)),
}


def is_dual(x):
    return isinstance(x, Dual)


def value_of(x):
    return x.val if isinstance(x, Dual) else np.asarray(x, dtype=float)


def seed(X):
    """Seed a batch of points ``X`` (N, D) with the identity tangent basis."""
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    der = np.broadcast_to(np.eye(d), (n, d, d)).copy()
    return Dual(X, der)


def stack(items, axis=-1):
    """``np.stack`` that understands duals (mixing with plain arrays is fine)."""
    if not any(isinstance(u, Dual) for u in items):
        return np.stack(items, axis=axis)
    k = next(u.der.shape[-1] for u in items if isinstance(u, Dual))
    shape = np.broadcast_shapes(*[np.shape(_v(u)) for u in items])
    vals = [np.broadcast_to(_v(u), shape) for u in items]
    ders = [np.broadcast_to(u.der, shape + (k,)) if isinstance(u, Dual)
            else np.zeros(shape + (k,)) for u in items]
    vax = axis if axis >= 0 else len(shape) + 1 + axis
    return Dual(np.stack(vals, axis=vax), np.stack(ders, axis=vax))


def where(cond, a, b):
    cond = np.asarray(cond)
    if not (isinstance(a, Dual) or isinstance(b, Dual)):
        return np.where(cond, a, b)
    k = (a if isinstance(a, Dual) else b).der.shape[-1]
    shape = np.broadcast_shapes(cond.shape, np.shape(_v(a)), np.shape(_v(b)))

    def der(u):
        return np.broadcast_to(u.der, shape + (k,)) if isinstance(u, Dual) else np.zeros(shape + (k,))

    return Dual(np.where(cond, _v(a), _v(b)), np.where(cond[..., None], der(a), der(b)))
