"""Independent reference routines used only for cross-checking.

These implement the same quantities as the production code by different
algorithms (sorting instead of bisection, finite differences instead of
analytic gradients) so the self-test and the test suite can compare two
routes that share no code.
"""

from __future__ import annotations

import numpy as np

__all__ = ["project_simplex_sort", "central_difference"]


def project_simplex_sort(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex, sort-based.

    Non-iterative algorithm: sort descending, find the largest prefix
    whose shifted average stays positive, subtract that prefix's
    threshold and clip.
    """
    x = np.asarray(v, dtype=float).ravel()
    u = np.sort(x)[::-1]
    css = np.cumsum(u)
    j = np.arange(1, x.size + 1)
    rho = np.nonzero(u + (1.0 - css) / j > 0)[0][-1]
    theta = (1.0 - css[rho]) / (rho + 1.0)
    return np.maximum(x + theta, 0.0)


def central_difference(fn, x, step: float = 1e-7) -> np.ndarray:
    """Central finite-difference gradient of a scalar function.

    ``x`` may have any shape; the result matches it.
    """
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    flat = x.ravel().copy()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = fn(flat.reshape(x.shape))
        flat[i] = orig - step
        down = fn(flat.reshape(x.shape))
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * step)
    return grad
