"""Quadrature rules shared by the averaging, volume and transform code."""

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=64)
def _leggauss(n):
    return np.polynomial.legendre.leggauss(n)


def gauss_legendre(a, b, n, panels=1):
    """Composite Gauss-Legendre rule on ``[a, b]``.

    ``n`` is the total number of nodes; it is split evenly over ``panels``.

    Returns
    -------
    nodes, weights : ndarray
    """
    if n % panels:
        raise ValueError("node count must be divisible by the number of panels")
    m = n // panels
    x, w = _leggauss(m)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def periodic_trapezoid(period, n, offset=0.5):
    """Equal-weight rule for smooth periodic integrands (spectrally accurate)."""
    nodes = (np.arange(n) + offset) * (period / n)
    return nodes, np.full(n, period / n)


def fibonacci_sphere(n):
    """Deterministic, nearly uniform unit vectors on S^2."""
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    phi = np.pi * (3.0 - np.sqrt(5.0)) * i
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)


def segment_rule(n=8):
    """Gauss-Legendre nodes/weights on [0, 1] for straight-segment line integrals."""
    return gauss_legendre(0.0, 1.0, n)
