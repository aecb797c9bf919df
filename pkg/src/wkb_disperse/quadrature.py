"""Composite Gauss-Legendre panel quadrature shared across modules.

Every heavy integrand in this package (potential roots, phase integrals,
oscillatory tails) is smooth on each panel, so fixed moderate-order panels
reach near machine accuracy while staying fully vectorized. Edge builders
scale panel width with distance from the origin because all integrands vary
on the scale of <x>.
"""

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=8)
def gauss_rule(n):
    """Cached Legendre nodes and weights on [-1, 1]."""
    return np.polynomial.legendre.leggauss(n)


def panel_nodes(edges, n=12):
    """Nodes and weights for composite Gauss-Legendre over ``edges``.

    Parameters
    ----------
    edges : array_like
        Panel boundaries, strictly monotone, length m + 1.
    n : int
        Points per panel.

    Returns
    -------
    nodes, weights : ndarray, shape (m * n,)
        ``f(nodes) @ weights`` integrates f from edges[0] to edges[-1].
    """
    edges = np.asarray(edges, dtype=float)
    x, w = gauss_rule(n)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = mid[:, None] + half[:, None] * x[None, :]
    weights = half[:, None] * w[None, :]
    return nodes.ravel(), weights.ravel()


def integrate_panels(f, edges, n=12):
    """Integral of a vectorized callable over the panel edges."""
    nodes, weights = panel_nodes(edges, n)
    return f(nodes) @ weights


def cumulative_panels(values, edges, weights, n=12):
    """Cumulative integral at every edge from pre-evaluated node values.

    ``values`` has shape (..., m * n) matching ``panel_nodes(edges, n)``;
    the result has shape (..., m + 1) with a leading zero column.
    """
    m = len(edges) - 1
    per_panel = (values * weights).reshape(*values.shape[:-1], m, n).sum(axis=-1)
    out = np.zeros(values.shape[:-1] + (m + 1,), dtype=per_panel.dtype)
    np.cumsum(per_panel, axis=-1, out=out[..., 1:])
    return out


def walk_edges(a, b, base_width=0.4, rel_width=0.04):
    """Edges from a to b with width max(base_width, rel_width * |x|)."""
    a = float(a)
    b = float(b)
    if a == b:
        return np.array([a])
    sgn = 1.0 if b > a else -1.0
    pts = [a]
    x = a
    while True:
        w = max(base_width, rel_width * abs(x))
        x = x + sgn * w
        if (b - x) * sgn <= 0.25 * w:
            break
        pts.append(x)
    pts.append(b)
    return np.array(pts)


def edges_through(points, base_width=0.4, rel_width=0.04):
    """Ascending edges that pass exactly through the given sorted points."""
    points = np.asarray(points, dtype=float)
    pieces = [points[:1]]
    for u, v in zip(points[:-1], points[1:]):
        if v == u:
            continue
        pieces.append(walk_edges(u, v, base_width, rel_width)[1:])
    return np.concatenate(pieces)


def geometric_edges(a, b, per_decade=8):
    """Geometrically spaced edges on 0 < a < b."""
    count = max(2, int(np.ceil(np.log10(b / a) * per_decade)) + 1)
    return np.geomspace(a, b, count)
