"""Numpy fallback for the compiled kernels. Same contracts as _native."""

from __future__ import annotations

import numpy as np


def power_iteration(
    a: np.ndarray, v0: np.ndarray, tol: float, max_iters: int
) -> tuple[np.ndarray, int, bool]:
    """Dominant right-singular direction of a via Gram-operator iteration.

    Iterates v <- normalize(A^T A v) until the direction moves less than tol
    between steps. Returns (direction, iterations used, converged flag).
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    v = np.asarray(v0, dtype=np.float64).copy()
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise ValueError("start vector is zero")
    v /= norm
    for iteration in range(1, max_iters + 1):
        w = a.T @ (a @ v)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            # null matrix: every direction is (trivially) dominant
            return v, iteration, True
        w /= norm
        delta = min(np.linalg.norm(w - v), np.linalg.norm(w + v))
        v = w
        if delta < tol:
            return v, iteration, True
    return v, max_iters, False


def nearest_centroids(x: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Index of the closest centroid per row, plus the squared distance.

    Ties go to the lowest centroid index.
    """
    x = np.asarray(x, dtype=np.float64)
    centroids = np.asarray(centroids, dtype=np.float64)
    x_sq = np.einsum("ij,ij->i", x, x)
    c_sq = np.einsum("ij,ij->i", centroids, centroids)
    sq = x_sq[:, None] + c_sq[None, :] - 2.0 * (x @ centroids.T)
    np.maximum(sq, 0.0, out=sq)
    labels = np.argmin(sq, axis=1).astype(np.int64)
    # the expanded form suffers cancellation; recompute the winners exactly
    exact = np.sum((x - centroids[labels]) ** 2, axis=1)
    return labels, exact
