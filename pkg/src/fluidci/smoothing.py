"""Smooth surrogate of the worst-case margin objective.

The pointwise maximum over all candidate columns is replaced by a
quadratically penalized maximization over the probability simplex. The
surrogate never exceeds the true maximum and undershoots it by at most
half the smoothing weight, is differentiable in both the precoders and
the antenna positions, and its inner maximizer is available in closed
form up to one scalar root found by bisection.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .model import (
    ChannelRealization,
    CiGeometry,
    SystemConfig,
    SymbolBlock,
    _xbar_array,
    _z_array,
    build_ci_geometry,
    ci_cotangent,
    ci_position_jacobian,
    ci_position_jacobian_block,
)

__all__ = [
    "solve_lambda",
    "smoothing_parameter",
    "spectral_norm",
    "SmoothedMinMax",
    "sandwich_check",
]


def solve_lambda(c, mu: float) -> tuple[np.ndarray, float]:
    """Inner simplex maximizer of the smoothed objective.

    Returns the weight vector and the scalar multiplier; the weights equal
    the Euclidean projection of ``c / mu`` onto the probability simplex.
    """
    cv = np.ascontiguousarray(np.asarray(c, dtype=float).ravel())
    if cv.size == 0:
        raise ValueError("candidate vector must be non-empty")
    if not np.all(np.isfinite(cv)):
        raise ValueError("candidate vector must be finite")
    if not (mu > 0):
        raise ValueError("smoothing weight must be positive")
    lam, gamma = _kernels.simplex_weights(cv, float(mu))
    total = lam.sum()
    if abs(total - 1.0) > 1e-8:
        raise RuntimeError(
            f"simplex bisection failed: sum(lam)={total!r}, gamma={gamma!r}, "
            f"bracket=[{-cv.max() - mu!r}, {-cv.min() + mu!r}]"
        )
    return lam, float(gamma)


def smoothing_parameter(noise_std: float, log_base: str = "e") -> float:
    """Default smoothing weight, 0.3 plus log(1 + sigma).

    The logarithm base is configurable because the rule is only pinned up
    to that choice; natural log is the default.
    """
    if noise_std < 0:
        raise ValueError("noise_std must be nonnegative")
    if log_base == "e":
        return 0.3 + float(np.log1p(noise_std))
    if log_base == "10":
        return 0.3 + float(np.log10(1.0 + noise_std))
    raise ValueError(f"log_base must be 'e' or '10', got {log_base!r}")


def spectral_norm(matrix, tol: float = 1e-8, max_iters: int = 5000, method: str = "auto") -> float:
    """Largest singular value of a real matrix.

    ``method='svd'`` computes it exactly; ``'power'`` runs power iteration
    on the Gram matrix from a deterministic start until the relative
    change drops below ``tol``. ``'auto'`` picks SVD at the small sizes
    this package works with. If power iteration fails to settle within
    ``max_iters`` the Frobenius norm is returned instead, which is a
    valid (conservative) upper bound.
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    if method not in ("auto", "svd", "power"):
        raise ValueError(f"unknown method {method!r}")
    if method == "auto":
        method = "svd" if min(a.shape) <= 128 else "power"
    if method == "svd":
        if min(a.shape) == 0:
            return 0.0
        return float(np.linalg.svd(a, compute_uv=False)[0])
    v = np.ones(a.shape[1]) / np.sqrt(a.shape[1])
    sigma = 0.0
    for _ in range(max_iters):
        av = a @ v
        new_sigma = float(np.linalg.norm(av))
        if new_sigma == 0.0:
            return 0.0
        w = a.T @ av
        v = w / np.linalg.norm(w)
        if abs(new_sigma - sigma) <= tol * new_sigma:
            return new_sigma
        sigma = new_sigma
    return float(np.linalg.norm(a))  # Frobenius fallback, upper bound


def sandwich_check(psi: float, candidate_values: np.ndarray, mu: float) -> None:
    """Hard range check: cmax - mu/2 <= psi <= cmax (with float slack)."""
    cmax = float(np.max(candidate_values))
    tol = _kernels.SANDWICH_RTOL * max(1.0, abs(cmax), mu)
    if not (cmax - 0.5 * mu - tol <= psi <= cmax + tol):
        raise AssertionError(
            f"smoothing sandwich violated: psi={psi!r} outside "
            f"[{cmax - 0.5 * mu!r}, {cmax!r}] (mu={mu!r})"
        )


@dataclass
class SmoothedMinMax:
    """Smoothed worst-margin objective for one channel/symbol instance.

    Bundles the channel realization, the symbol block, the scenario
    constants and the smoothing weight; everything the two block solvers
    need to evaluate the surrogate and its gradients at any feasible
    point. Geometry is rebuilt whenever the position vector changes and
    memoized for the most recent one, since a gradient call typically
    follows a value call at the same positions.
    """

    realization: ChannelRealization
    symbols: SymbolBlock
    cfg: SystemConfig
    mu: float
    last_lambda: Optional[np.ndarray] = field(default=None, repr=False)
    last_gamma: Optional[float] = field(default=None, repr=False)
    _cached_key: Optional[bytes] = field(default=None, repr=False)
    _cached_geometry: Optional[CiGeometry] = field(default=None, repr=False)

    def __post_init__(self):
        if not (self.mu > 0):
            raise ValueError("smoothing weight must be positive")
        # Contiguous copies for the compiled candidate kernel.
        self._gains = np.ascontiguousarray(self.realization.gains)
        self._wavenumbers = np.ascontiguousarray(
            (2.0 * np.pi / self.cfg.wavelength) * np.cos(self.realization.angles)
        )
        self._conj_symbols = np.ascontiguousarray(np.conj(self.symbols.symbols))
        self._cot = ci_cotangent(self.cfg.M)

    def geometry(self, z) -> CiGeometry:
        zv = _z_array(z)
        key = zv.tobytes()
        if key != self._cached_key:
            self._cached_geometry = build_ci_geometry(
                self.realization, zv, self.symbols, self.cfg
            )
            self._cached_key = key
        return self._cached_geometry

    def candidate_values(self, xbar, z) -> np.ndarray:
        """T x 2K column responses, computed without materializing columns."""
        x = np.ascontiguousarray(np.asarray(_xbar_array(xbar), dtype=float))
        zv = np.ascontiguousarray(_z_array(z))
        return _kernels.candidate_matrix(
            self._gains, self._wavenumbers, self._conj_symbols, zv, x, self._cot
        )

    def _weights(self, xbar, z) -> tuple[np.ndarray, np.ndarray]:
        c = self.candidate_values(xbar, z)
        lam, gamma = solve_lambda(c.ravel(), self.mu)
        self.last_lambda = lam
        self.last_gamma = gamma
        return c, lam.reshape(c.shape)

    def psi_value(self, xbar, z) -> float:
        """Surrogate value; always range-checked against the sandwich bound."""
        x = np.ascontiguousarray(np.asarray(_xbar_array(xbar), dtype=float))
        zv = np.ascontiguousarray(_z_array(z))
        return self.psi_fast(x, zv)

    def psi_fast(self, x, zv) -> float:
        """Validation-free value path for line searches.

        Caller guarantees contiguous float64 inputs of the right shapes;
        the sandwich range check still runs on every evaluation.
        """
        psi, lam, gamma, ok = _kernels.psi_at_point(
            self._gains, self._wavenumbers, self._conj_symbols, zv, x, self._cot, self.mu
        )
        self.last_lambda = lam
        self.last_gamma = float(gamma)
        if not ok:
            # Recompute through the checked path for a readable diagnostic.
            sandwich_check(psi, self.candidate_values(x, zv), self.mu)
        return float(psi)

    def grad_precoder(self, xbar, z) -> np.ndarray:
        """Gradient in the lifted precoders, one length-2N row per slot."""
        _, lam = self._weights(xbar, z)
        return np.einsum("tnj,tj->tn", self.geometry(z).columns, lam)

    def grad_precoder_t(self, xbar, z, t: int) -> np.ndarray:
        return self.grad_precoder(xbar, z)[t]

    def grad_position(self, xbar, z) -> np.ndarray:
        """Gradient in the antenna coordinates.

        Contracts the dense per-column position Jacobians with the
        precoders; per slot this costs O(K N^2) like the per-iteration
        complexity accounting of the position solver.
        """
        x = _xbar_array(xbar)
        zv = _z_array(z)
        _, lam = self._weights(x, zv)
        cfg = self.cfg
        block_floats = cfg.T * 2 * cfg.K * 2 * cfg.N * cfg.N
        if block_floats <= 4_000_000:
            jac = ci_position_jacobian_block(self.realization, zv, self.symbols, cfg)
            per_column = np.einsum("tjmn,tm->tjn", jac, x)
            return np.einsum("tj,tjn->n", lam, per_column)
        grad = np.zeros(cfg.N)
        for t in range(cfg.T):
            jac_t = ci_position_jacobian(self.realization, zv, self.symbols, cfg, t)
            per_column = np.einsum("jmn,m->jn", jac_t, x[t])
            grad += lam[t] @ per_column
        return grad

    def lipschitz_precoder(self, z, t: Optional[int] = None, method: str = "auto"):
        """Per-slot gradient Lipschitz constants, squared spectral norm / mu."""
        cols = self.geometry(z).columns
        if t is not None:
            return spectral_norm(cols[t], method=method) ** 2 / self.mu
        return np.array(
            [spectral_norm(cols[i], method=method) ** 2 / self.mu for i in range(cols.shape[0])]
        )
