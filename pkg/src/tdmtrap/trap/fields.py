"""Gapless-plane potential of rectangular electrodes and its derivatives.

A unit-voltage rectangle ``[x1, x2] x [y1, y2]`` in an otherwise grounded
plane produces, above the plane,

    phi = (F(x2, y2) - F(x1, y2) - F(x2, y1) + F(x1, y1)) / (2 pi)
    F(a, b) = arctan((a - x)(b - y) / (z sqrt((a - x)^2 + (b - y)^2 + z^2)))

Derivatives up to third order are generated symbolically once and compiled to
numpy functions; everything broadcasts over points and rectangles.
"""

from __future__ import annotations

import functools
import itertools

import numpy as np

# multi-indices (sorted axis tuples) for each derivative order
ORDERS = {
    1: [(i,) for i in range(3)],
    2: list(itertools.combinations_with_replacement(range(3), 2)),
    3: list(itertools.combinations_with_replacement(range(3), 3)),
}

_SIGNS = np.array([1.0, -1.0, -1.0, 1.0])  # corners (x2,y2), (x1,y2), (x2,y1), (x1,y1)


@functools.lru_cache(maxsize=None)
def _corner_functions():
    import sympy as sp

    # corner-relative coordinates u = a - x, v = b - y; d/dx = -d/du, d/dy = -d/dv
    u, v, z = sp.symbols("u v z", real=True)
    R = sp.sqrt(u**2 + v**2 + z**2)
    first = {
        (0,): -v * z / ((u**2 + z**2) * R),
        (1,): -u * z / ((v**2 + z**2) * R),
        (2,): -u * v * (R**2 + z**2) / (R * (u**2 + z**2) * (v**2 + z**2)),
    }
    dpoint = (lambda e: -sp.diff(e, u), lambda e: -sp.diff(e, v), lambda e: sp.diff(e, z))
    exprs = {(): sp.atan(u * v / (z * R)), **first}
    for order in (2, 3):
        for idx in ORDERS[order]:
            exprs[idx] = dpoint[idx[-1]](exprs[idx[:-1]])
    return {k: sp.lambdify((u, v, z), e, "numpy", cse=True) for k, e in exprs.items()}


def _corners(rects: np.ndarray):
    """Corner coordinates, shape ``(n_rect, 4)`` each, in ``_SIGNS`` order."""
    x1, x2, y1, y2 = rects.T
    a = np.stack([x2, x1, x2, x1], axis=-1)
    b = np.stack([y2, y2, y1, y1], axis=-1)
    return a, b


def rect_derivatives(points, rects: np.ndarray, max_order: int = 0) -> dict:
    """Potential of each rectangle and its derivatives at ``points``.

    Parameters
    ----------
    points : array_like, shape (..., 3)
        Positions with ``z > 0``.
    rects : ndarray, shape (n_rect, 4)
        Rows ``(x1, x2, y1, y2)``.
    max_order : int
        Highest derivative order to compute (0..3).

    Returns
    -------
    dict
        Keys are sorted axis tuples (``()`` for the value, ``(0,)`` for d/dx,
        ``(0, 2)`` for d2/dxdz, ...); values have shape ``(..., n_rect)``.
    """
    p = np.asarray(points, dtype=float)
    if np.any(p[..., 2] <= 0):
        raise ValueError("field points must lie above the electrode plane (z > 0)")
    funcs = _corner_functions()
    a, b = _corners(np.asarray(rects, dtype=float))
    u = a - p[..., 0, None, None]
    v = b - p[..., 1, None, None]
    z = p[..., 2, None, None]
    shape = np.broadcast_shapes(u.shape, z.shape)
    out = {}
    keys = [()] + [k for o in range(1, max_order + 1) for k in ORDERS[o]]
    for key in keys:
        vals = np.broadcast_to(funcs[key](u, v, z), shape)
        out[key] = vals @ _SIGNS / (2 * np.pi)
    return out


def assemble(derivs: dict, weights: np.ndarray, order: int):
    """Contract per-rectangle derivatives of one order into a dense tensor.

    ``weights`` has shape ``(n_rect,)`` or ``(n_rect, k)``; the result has
    shape ``(..., [k,] 3, ..., 3)`` with ``order`` trailing axes.
    """
    first = derivs[()]
    extra = weights.shape[1:]
    shape = first.shape[:-1] + extra + (3,) * order
    out = np.empty(shape)
    if order == 0:
        return first @ weights
    for idx in itertools.product(range(3), repeat=order):
        out[(...,) + idx] = derivs[tuple(sorted(idx))] @ weights
    return out


class PointGradient:
    """Fast gradient of a weighted rectangle sum at one point.

    Used in the time-stepping loop where the generic broadcasting path is
    dominated by call overhead. ``weights(t)`` are per-rectangle voltages.
    """

    def __init__(self, rects: np.ndarray):
        a, b = _corners(np.asarray(rects, dtype=float))
        self.a = a.ravel()
        self.b = b.ravel()
        self.signs = np.tile(_SIGNS, len(rects)) / (2 * np.pi)
        self.n_rect = len(rects)

    def per_rect(self, r) -> np.ndarray:
        """Gradient of every rectangle's unit potential, shape ``(3, n_rect)``."""
        x, y, z = r
        if z <= 0:
            raise ValueError("field point below the electrode plane")
        u = self.a - x
        v = self.b - y
        u2z = u * u + z * z
        v2z = v * v + z * z
        R = np.sqrt(u2z + v * v)
        s = self.signs / R
        gx = -(v * z / u2z) * s
        gy = -(u * z / v2z) * s
        gz = -(u * v * (R * R + z * z) / (u2z * v2z)) * s
        g = np.stack([gx, gy, gz]).reshape(3, self.n_rect, 4)
        return g.sum(axis=-1)
