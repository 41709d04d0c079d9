"""Fixed quadrature rules and polygon helpers for exact piecewise integration.

Gauss-Legendre with ``n`` nodes integrates polynomials up to degree
``2n - 1`` exactly; the 7-point triangle rule is exact up to total
degree 5.  Both are degree-exact for every integrand the expectation
engine produces, so "quadrature" here means exact integration up to
floating-point rounding.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss


@lru_cache(maxsize=None)
def gauss_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [-1, 1]."""
    nodes, weights = leggauss(order)
    return nodes, weights


def interval_rule(a: float, b: float, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped to [a, b]."""
    t, w = gauss_rule(order)
    half = 0.5 * (b - a)
    return a + half * (t + 1.0), half * w


def axis_rule(edges: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite per-cell Gauss rule over consecutive edge intervals."""
    t, w = gauss_rule(order)
    lefts = edges[:-1, None]
    halves = 0.5 * np.diff(edges)[:, None]
    nodes = lefts + halves * (t[None, :] + 1.0)
    weights = halves * w[None, :]
    return nodes.ravel(), weights.ravel()


def cell_rule_2d(x0: float, x1: float, y0: float, y1: float,
                 order: int = 3) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Tensor Gauss rule on a rectangle; returns flat (X, Y, W)."""
    xn, xw = interval_rule(x0, x1, order)
    yn, yw = interval_rule(y0, y1, order)
    X, Y = np.meshgrid(xn, yn, indexing="ij")
    W = np.outer(xw, yw)
    return X.ravel(), Y.ravel(), W.ravel()


# Degree-5 symmetric 7-point rule on the triangle (weights sum to 1,
# to be scaled by the triangle area).
_TRI_A = (6.0 - math.sqrt(15.0)) / 21.0
_TRI_B = (6.0 + math.sqrt(15.0)) / 21.0
_TRI_WA = (155.0 - math.sqrt(15.0)) / 1200.0
_TRI_WB = (155.0 + math.sqrt(15.0)) / 1200.0

TRIANGLE_BARY = np.array([
    [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
    [1.0 - 2.0 * _TRI_A, _TRI_A, _TRI_A],
    [_TRI_A, 1.0 - 2.0 * _TRI_A, _TRI_A],
    [_TRI_A, _TRI_A, 1.0 - 2.0 * _TRI_A],
    [1.0 - 2.0 * _TRI_B, _TRI_B, _TRI_B],
    [_TRI_B, 1.0 - 2.0 * _TRI_B, _TRI_B],
    [_TRI_B, _TRI_B, 1.0 - 2.0 * _TRI_B],
])
TRIANGLE_WEIGHTS = np.array([9.0 / 40.0, _TRI_WA, _TRI_WA, _TRI_WA,
                             _TRI_WB, _TRI_WB, _TRI_WB])


def triangle_rule(v0, v1, v2) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """7-point rule on a triangle given by vertex pairs; W sums to its area."""
    verts = np.array([v0, v1, v2], dtype=float)
    area = 0.5 * abs((verts[1, 0] - verts[0, 0]) * (verts[2, 1] - verts[0, 1])
                     - (verts[2, 0] - verts[0, 0]) * (verts[1, 1] - verts[0, 1]))
    pts = TRIANGLE_BARY @ verts
    return pts[:, 0], pts[:, 1], TRIANGLE_WEIGHTS * area


def clip_convex_polygon(vertices: np.ndarray, hvals: np.ndarray) -> np.ndarray:
    """Keep the part of a convex polygon where the linear function h >= 0.

    ``vertices`` is (n, 2) in boundary order, ``hvals`` the values of h at
    those vertices.  Returns the clipped polygon (possibly empty).
    """
    out: list[np.ndarray] = []
    n = len(vertices)
    for i in range(n):
        p, hp = vertices[i], hvals[i]
        q, hq = vertices[(i + 1) % n], hvals[(i + 1) % n]
        if hp >= 0.0:
            out.append(p)
        if (hp > 0.0 > hq) or (hp < 0.0 < hq):
            t = hp / (hp - hq)
            out.append(p + t * (q - p))
    return np.array(out) if out else np.empty((0, 2))


def fan_triangles(polygon: np.ndarray):
    """Fan-triangulate a convex polygon; yields vertex triples."""
    for i in range(1, len(polygon) - 1):
        yield polygon[0], polygon[i], polygon[i + 1]
