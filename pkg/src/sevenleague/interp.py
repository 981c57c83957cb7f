"""Barycentric Lagrange interpolation.

The second (true) barycentric form

    p(x) = sum_j w_j y_j / (x - x_j)  /  sum_j w_j / (x - x_j)

needs the weights ``w_j = 1 / prod_{k != j} (x_j - x_k)`` only, which depend
on the nodes alone. For a fixed collocation grid they are computed once and
reused for every path and time step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DegenerateNodesError",
    "BarycentricInterpolant",
    "bary_weights",
    "build_gm",
    "bary_eval",
    "bary_eval_rows",
    "lagrange_basis",
    "NODE_HIT_RTOL",
]

NODE_HIT_RTOL = 1e-14


class DegenerateNodesError(ValueError):
    """Raised when interpolation nodes are not pairwise distinct."""


def bary_weights(nodes) -> np.ndarray:
    x = np.asarray(nodes, dtype=float)
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    if np.any(diff == 0.0):
        raise DegenerateNodesError("interpolation nodes must be pairwise distinct")
    return 1.0 / np.prod(diff, axis=1)


@dataclass(frozen=True, eq=False)
class BarycentricInterpolant:
    nodes: np.ndarray
    values: np.ndarray
    weights: np.ndarray

    def __call__(self, x):
        return bary_eval(self, x)


def build_gm(grid, points, weights=None) -> BarycentricInterpolant:
    """Interpolant of the map from standard-normal draws to collocation points."""
    points = np.asarray(points, dtype=float)
    if points.shape != (grid.m,):
        raise ValueError(f"expected {grid.m} collocation points, got shape {points.shape}")
    if weights is None:
        weights = bary_weights(grid.nodes)
    return BarycentricInterpolant(np.asarray(grid.nodes, dtype=float), points, weights)


def bary_eval(f: BarycentricInterpolant, x):
    """Evaluate ``f`` at scalar or array ``x``."""
    xs = np.asarray(x, dtype=float)
    values = np.broadcast_to(f.values, xs.shape + f.values.shape)
    out = bary_eval_rows(f.nodes, f.weights, values, xs)
    return float(out) if np.ndim(out) == 0 else out


def bary_eval_rows(nodes, weights, values, x) -> np.ndarray:
    """Row-wise evaluation: row ``r`` of ``values`` interpolated at ``x[r]``.

    ``values`` has shape ``x.shape + (m,)``. The node sum runs as an explicit
    loop so each output depends only on its own row (results are identical no
    matter how rows are batched).
    """
    x = np.asarray(x, dtype=float)
    values = np.asarray(values, dtype=float)
    num = np.zeros(x.shape)
    den = np.zeros(x.shape)
    hit = np.zeros(x.shape, dtype=bool)
    hit_value = np.zeros(x.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        for j, (xj, wj) in enumerate(zip(nodes, weights)):
            d = x - xj
            close = np.abs(d) < NODE_HIT_RTOL * max(1.0, abs(xj))
            if close.any():
                hit |= close
                hit_value = np.where(close, values[..., j], hit_value)
            c = wj / d
            num += c * values[..., j]
            den += c
        out = num / den
    # the quotient form does not reproduce constant data bit for bit
    first = values[..., 0]
    const = np.all(values == first[..., None], axis=-1)
    out = np.where(const, first, out)
    return np.where(hit, hit_value, out)


def lagrange_basis(nodes, weights, x, return_hits: bool = False):
    """Values of the ``m`` Lagrange basis polynomials at each ``x``; shape ``x.shape + (m,)``.

    With ``return_hits`` also returns the index of the node each ``x`` hits
    (``-1`` where it hits none).
    """
    x = np.asarray(x, dtype=float)
    m = len(nodes)
    basis = np.empty(x.shape + (m,))
    hit_row = np.zeros(x.shape, dtype=bool)
    hit_col = np.zeros(x.shape, dtype=np.intp)
    den = np.zeros(x.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        for j, (xj, wj) in enumerate(zip(nodes, weights)):
            d = x - xj
            close = np.abs(d) < NODE_HIT_RTOL * max(1.0, abs(xj))
            hit_col = np.where(close & ~hit_row, j, hit_col)
            hit_row |= close
            basis[..., j] = wj / d
            den += basis[..., j]
        basis /= den[..., None]
    if hit_row.any():
        basis[hit_row] = 0.0
        basis[hit_row, hit_col[hit_row]] = 1.0
    if return_hits:
        return basis, np.where(hit_row, hit_col, -1)
    return basis
