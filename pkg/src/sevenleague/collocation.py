"""Gauss-Hermite collocation grids and empirical collocation points."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

__all__ = [
    "CollocationGrid",
    "gauss_hermite_grid",
    "normal_cdf",
    "empirical_collocation",
    "MAX_NODES",
]

MAX_NODES = 20


@dataclass(frozen=True, eq=False)
class CollocationGrid:
    """Standard-normal collocation nodes ``x_j`` and their levels ``Phi(x_j)``."""

    nodes: np.ndarray
    levels: np.ndarray

    @property
    def m(self) -> int:
        return len(self.nodes)


def normal_cdf(x):
    """Standard normal CDF (erfc based, accurate in both tails)."""
    out = ndtr(np.asarray(x, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def gauss_hermite_grid(m: int = 5) -> CollocationGrid:
    """Probabilists' Gauss-Hermite nodes from the eigenvalues of the Jacobi matrix.

    The three-term recurrence ``He_{k+1} = x He_k - k He_{k-1}`` gives a
    symmetric tridiagonal matrix with zero diagonal and off-diagonal
    ``sqrt(k)``; its eigenvalues are the roots of ``He_m``.
    """
    if not isinstance(m, (int, np.integer)) or not 1 <= m <= MAX_NODES:
        raise ValueError(f"number of collocation points must be in [1, {MAX_NODES}], got {m!r}")
    off = np.sqrt(np.arange(1, m, dtype=float))
    jacobi = np.diag(off, 1) + np.diag(off, -1)
    nodes = np.sort(np.linalg.eigvalsh(jacobi))
    # exact mirror symmetry; eigensolver noise is ~1e-15
    nodes = 0.5 * (nodes - nodes[::-1])
    levels = ndtr(nodes)
    nodes.setflags(write=False)
    levels.setflags(write=False)
    return CollocationGrid(nodes=nodes, levels=levels)


def empirical_collocation(samples, grid: CollocationGrid) -> np.ndarray:
    """Empirical quantiles of ``samples`` at the grid levels.

    Order statistic ``k`` (1-based) sits at plotting position ``(k - 0.5)/M``
    and values in between are linearly interpolated (the Hazen rule).
    """
    s = np.asarray(samples, dtype=float).ravel()
    if s.size < grid.m:
        raise ValueError(f"need at least {grid.m} samples, got {s.size}")
    if not np.all(np.isfinite(s)):
        raise ValueError("samples contain non-finite values")
    return np.quantile(s, grid.levels, method="hazen")
