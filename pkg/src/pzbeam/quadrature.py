"""Gauss quadrature on reference tetrahedra and triangles.

Rules are conical (collapsed Gauss-Jacobi) products, exact for any requested
polynomial degree, with all-positive weights.  Reference domains:

* tetrahedron: x, y, z >= 0, x + y + z <= 1 (volume 1/6)
* triangle: x, y >= 0, x + y <= 1 (area 1/2)

Weights integrate directly over the reference domain (no extra volume
factor).
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


def _shifted_jacobi(m: int, alpha: int):
    """Nodes/weights for int_0^1 f(x) (1-x)^alpha dx."""
    if alpha == 0:
        t, w = roots_legendre(m)
        return 0.5 * (t + 1.0), 0.5 * w
    t, w = roots_jacobi(m, alpha, 0.0)
    return 0.5 * (t + 1.0), w / 2.0 ** (alpha + 1)


@lru_cache(maxsize=None)
def tetrahedron_rule(degree: int):
    """(points (n,3), weights (n,)) exact for polynomials up to `degree`."""
    m = degree // 2 + 1
    x2, w2 = _shifted_jacobi(m, 2)
    x1, w1 = _shifted_jacobi(m, 1)
    x0, w0 = _shifted_jacobi(m, 0)
    pts = []
    wts = []
    for a, wa in zip(x2, w2):
        for b, wb in zip(x1, w1):
            for c, wc in zip(x0, w0):
                x = a
                y = b * (1.0 - a)
                z = c * (1.0 - a) * (1.0 - b)
                pts.append((x, y, z))
                wts.append(wa * wb * wc)
    return np.array(pts), np.array(wts)


@lru_cache(maxsize=None)
def triangle_rule(degree: int):
    """(points (n,2), weights (n,)) exact for polynomials up to `degree`."""
    m = degree // 2 + 1
    x1, w1 = _shifted_jacobi(m, 1)
    x0, w0 = _shifted_jacobi(m, 0)
    pts = []
    wts = []
    for a, wa in zip(x1, w1):
        for b, wb in zip(x0, w0):
            pts.append((a, b * (1.0 - a)))
            wts.append(wa * wb)
    return np.array(pts), np.array(wts)


def barycentric_from_reference(points: np.ndarray) -> np.ndarray:
    """Barycentric coordinates (n, d+2) for reference simplex points (n, d+1)."""
    points = np.atleast_2d(points)
    lam0 = 1.0 - points.sum(axis=1)
    return np.column_stack([lam0, points])
