"""Quadrature rules on the reference triangle and on edges.

Triangle rules return barycentric points ``(Q, 3)`` and weights summing to 1
(multiply by the triangle area).  Edge rules live on ``[0, 1]`` with weights
summing to 1 (multiply by the edge length).
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np


def _orbit(a: float) -> list:
    """The three permutations of (1 - 2a, a, a)."""
    b = 1.0 - 2.0 * a
    return [(b, a, a), (a, b, a), (a, a, b)]


@lru_cache(maxsize=None)
def triangle_rule(degree: int):
    """Symmetric triangle rule exact for polynomials of the given degree.

    Degrees up to 5 use the classical 1-, 3-, 6- and 7-point rules; higher
    degrees fall back to a collapsed Gauss-Legendre product rule.
    """
    if degree <= 1:
        pts = [(1 / 3, 1 / 3, 1 / 3)]
        w = [1.0]
    elif degree == 2:
        pts = _orbit(1 / 6)
        w = [1 / 3] * 3
    elif degree <= 4:
        a1, w1 = 0.44594849091596488632, 0.22338158967801146570
        a2, w2 = 0.09157621350977074346, 0.10995174365532186764
        pts = _orbit(a1) + _orbit(a2)
        w = [w1] * 3 + [w2] * 3
    elif degree == 5:
        s = np.sqrt(15.0)
        a1, a2 = (6 - s) / 21, (6 + s) / 21
        pts = [(1 / 3, 1 / 3, 1 / 3)] + _orbit(a1) + _orbit(a2)
        w = [9 / 40] + [(155 - s) / 1200] * 3 + [(155 + s) / 1200] * 3
    else:
        return collapsed_gauss_rule((degree + 3) // 2)
    pts = np.array(pts)
    w = np.array(w)
    pts.setflags(write=False)
    w.setflags(write=False)
    return pts, w


@lru_cache(maxsize=None)
def collapsed_gauss_rule(n: int):
    """``n * n`` point Duffy-collapsed Gauss-Legendre rule (degree ``2n - 2``)."""
    x, wx = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    wx = 0.5 * wx
    s, t = np.meshgrid(x, x, indexing="ij")
    ws, wt = np.meshgrid(wx, wx, indexing="ij")
    l1 = s * (1.0 - t)
    l2 = t
    pts = np.column_stack([(1.0 - l1 - l2).ravel(), l1.ravel(), l2.ravel()])
    # Jacobian (1 - t) of the collapse; factor 2 normalises to unit total weight
    w = (2.0 * ws * wt * (1.0 - t)).ravel()
    pts.setflags(write=False)
    w.setflags(write=False)
    return pts, w


@lru_cache(maxsize=None)
def edge_rule(n: int = 3):
    """``n``-point Gauss-Legendre rule on [0, 1] (exact to degree ``2n - 1``)."""
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w
