"""Signal model for a MISO downlink with per-element movable antennas.

Line-of-sight channels whose phases depend on the antenna coordinates,
MPSK symbol handling, per-symbol safety margins, and the real-lifted
column geometry consumed by the precoding and position solvers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import erfc

__all__ = [
    "SUPPORTED_MPSK_ORDERS",
    "SystemConfig",
    "ChannelRealization",
    "PositionVector",
    "SymbolBlock",
    "PrecodingBlock",
    "CiGeometry",
    "make_config",
    "steering_vector",
    "channel_matrix",
    "mpsk_constellation",
    "mpsk_decide_index",
    "mpsk_decide",
    "ci_cotangent",
    "safety_margin",
    "block_margins",
    "build_ci_geometry",
    "ci_position_jacobian",
    "ci_position_jacobian_block",
    "gaussian_q",
    "sep_upper_bound",
    "real_lift",
    "complex_from_lift",
]

SUPPORTED_MPSK_ORDERS = (2, 4, 8, 16)


def _finite_array(x, name, dtype=float):
    arr = np.asarray(x, dtype=dtype)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must contain only finite values")
    return arr


def _freeze(arr):
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SystemConfig:
    """Scenario constants shared by every module.

    A base station with ``num_antennas`` movable elements on a line of
    length ``aperture_length`` serves ``num_users`` single-antenna users
    with blocks of ``block_length`` MPSK symbols. Element n may move
    inside its own interval of half-width ``adjust_factor * D / (2N)``
    around the uniform-grid point ``(2n-1) D / (2N)``; intervals stay
    disjoint for ``adjust_factor`` in [0, 0.5].

    ``aperture_length`` defaults to ``wavelength * num_antennas`` when
    omitted, which keeps the inter-interval spacing at or above half a
    wavelength for any allowed ``adjust_factor``.
    """

    num_antennas: int
    num_users: int
    block_length: int
    mpsk_order: int
    power_budget: float = 1.0
    aperture_length: Optional[float] = None
    adjust_factor: float = 0.1
    wavelength: float = 0.01
    noise_variance: float = 1.0

    def __post_init__(self):
        for name in ("num_antennas", "num_users", "block_length"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if self.mpsk_order not in SUPPORTED_MPSK_ORDERS:
            raise ValueError(
                f"mpsk_order must be one of {SUPPORTED_MPSK_ORDERS}, got {self.mpsk_order!r}"
            )
        if self.aperture_length is None:
            object.__setattr__(
                self, "aperture_length", float(self.wavelength * self.num_antennas)
            )
        for name in ("power_budget", "aperture_length", "wavelength", "noise_variance"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v <= 0.0:
                raise ValueError(f"{name} must be positive and finite, got {v!r}")
            object.__setattr__(self, name, v)
        delta = float(self.adjust_factor)
        if not (0.0 <= delta <= 0.5):
            raise ValueError(f"adjust_factor must lie in [0, 0.5], got {delta!r}")
        object.__setattr__(self, "adjust_factor", delta)

    # Terse aliases used throughout the numeric code.
    @property
    def N(self) -> int:
        return self.num_antennas

    @property
    def K(self) -> int:
        return self.num_users

    @property
    def T(self) -> int:
        return self.block_length

    @property
    def M(self) -> int:
        return self.mpsk_order

    @property
    def P(self) -> float:
        return self.power_budget

    @property
    def D(self) -> float:
        return self.aperture_length

    @property
    def noise_std(self) -> float:
        return float(np.sqrt(self.noise_variance))

    def interval_centers(self) -> np.ndarray:
        """Uniform-grid points (2n-1) D / (2N), the fixed-array layout."""
        n = np.arange(1, self.N + 1, dtype=float)
        return (2.0 * n - 1.0) * self.D / (2.0 * self.N)

    def position_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-element closed interval bounds (lower, upper)."""
        centers = self.interval_centers()
        half = self.adjust_factor * self.D / (2.0 * self.N)
        return centers - half, centers + half


def make_config(
    num_antennas: int,
    num_users: int,
    mpsk_order: int = 4,
    block_length: int = 5,
    *,
    adjust_factor: float = 0.1,
    wavelength: float = 0.01,
    power_budget: float = 1.0,
    snr_db: Optional[float] = None,
    noise_variance: Optional[float] = None,
    aperture_length: Optional[float] = None,
) -> SystemConfig:
    """Convenience constructor; aperture defaults to wavelength * N.

    Exactly one of ``snr_db`` / ``noise_variance`` may be given; the SNR
    is interpreted as power_budget / noise_variance.
    """
    if snr_db is not None and noise_variance is not None:
        raise ValueError("give either snr_db or noise_variance, not both")
    if snr_db is not None:
        noise_variance = power_budget / 10.0 ** (snr_db / 10.0)
    if noise_variance is None:
        noise_variance = 1.0
    return SystemConfig(
        num_antennas=num_antennas,
        num_users=num_users,
        block_length=block_length,
        mpsk_order=mpsk_order,
        power_budget=power_budget,
        aperture_length=aperture_length,
        adjust_factor=adjust_factor,
        wavelength=wavelength,
        noise_variance=noise_variance,
    )


@dataclass(frozen=True)
class ChannelRealization:
    """Per-user propagation gains and departure angles of the LOS model."""

    gains: np.ndarray
    angles: np.ndarray

    def __post_init__(self):
        gains = np.asarray(self.gains, dtype=complex)
        angles = _finite_array(self.angles, "angles")
        if gains.ndim != 1 or angles.ndim != 1 or gains.shape != angles.shape:
            raise ValueError("gains and angles must be 1-D arrays of equal length")
        if not np.all(np.isfinite(gains.view(float))):
            raise ValueError("gains must contain only finite values")
        if np.any(angles < 0.0) or np.any(angles > np.pi):
            raise ValueError("departure angles must lie in [0, pi]")
        object.__setattr__(self, "gains", _freeze(gains))
        object.__setattr__(self, "angles", _freeze(angles))

    @property
    def num_users(self) -> int:
        return self.gains.shape[0]


@dataclass(frozen=True)
class PositionVector:
    """Antenna coordinates together with their per-element box bounds."""

    z: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        z = _finite_array(self.z, "z")
        lower = _finite_array(self.lower, "lower")
        upper = _finite_array(self.upper, "upper")
        if not (z.shape == lower.shape == upper.shape) or z.ndim != 1:
            raise ValueError("z, lower, upper must be 1-D arrays of equal length")
        tol = 1e-12
        if np.any(z < lower - tol) or np.any(z > upper + tol):
            raise ValueError("positions violate their interval bounds")
        object.__setattr__(self, "z", _freeze(z))
        object.__setattr__(self, "lower", _freeze(lower))
        object.__setattr__(self, "upper", _freeze(upper))

    @classmethod
    def from_config(cls, z, cfg: SystemConfig) -> "PositionVector":
        lower, upper = cfg.position_bounds()
        return cls(np.asarray(z, dtype=float), lower, upper)


def _z_array(z) -> np.ndarray:
    if isinstance(z, PositionVector):
        return z.z
    return _finite_array(z, "z")


@dataclass(frozen=True)
class SymbolBlock:
    """K x T block of unit-modulus MPSK symbols."""

    symbols: np.ndarray
    order: int
    indices: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.order not in SUPPORTED_MPSK_ORDERS:
            raise ValueError(f"unsupported MPSK order {self.order!r}")
        s = np.asarray(self.symbols, dtype=complex)
        if s.ndim != 2:
            raise ValueError("symbols must be a K x T array")
        if np.max(np.abs(np.abs(s) - 1.0)) > 1e-12:
            raise ValueError("symbols must have unit modulus")
        if np.max(np.abs(s**self.order - 1.0)) > 1e-9:
            raise ValueError(f"symbols must be {self.order}-th roots of unity")
        if self.indices is None:
            idx = mpsk_decide_index(s, self.order)
        else:
            idx = np.asarray(self.indices, dtype=int)
            if idx.shape != s.shape:
                raise ValueError("indices must match the symbol array shape")
        object.__setattr__(self, "symbols", _freeze(s))
        object.__setattr__(self, "indices", _freeze(idx))

    @classmethod
    def from_indices(cls, indices, order: int) -> "SymbolBlock":
        idx = np.asarray(indices, dtype=int)
        if np.any(idx < 0) or np.any(idx >= order):
            raise ValueError("symbol indices must lie in [0, order)")
        return cls(np.exp(2j * np.pi * idx / order), order, idx)

    @property
    def num_users(self) -> int:
        return self.symbols.shape[0]

    @property
    def block_length(self) -> int:
        return self.symbols.shape[1]


@dataclass(frozen=True)
class PrecodingBlock:
    """T real-lifted transmit vectors, one length-2N row per symbol time.

    Row t stacks the real part of the complex transmit vector on top of
    its imaginary part: ``vectors[t] = [Re(x_t); Im(x_t)]``.
    """

    vectors: np.ndarray
    power_budget: float

    def __post_init__(self):
        v = _finite_array(self.vectors, "vectors")
        if v.ndim != 2 or v.shape[1] % 2 != 0:
            raise ValueError("vectors must be a T x 2N array")
        p = float(self.power_budget)
        norms = np.sum(v * v, axis=1)
        if np.any(norms > p * (1.0 + 1e-9) + 1e-12):
            raise ValueError("per-slot transmit power exceeds the budget")
        object.__setattr__(self, "vectors", _freeze(v))
        object.__setattr__(self, "power_budget", p)

    @classmethod
    def from_complex(cls, signals, power_budget: float) -> "PrecodingBlock":
        x = np.asarray(signals, dtype=complex)
        return cls(real_lift(x), float(power_budget))

    def complex_signals(self) -> np.ndarray:
        """T x N complex transmit vectors."""
        return complex_from_lift(self.vectors)


def real_lift(signals) -> np.ndarray:
    """Stack Re over Im along the last axis: (..., N) complex -> (..., 2N)."""
    x = np.asarray(signals, dtype=complex)
    return np.concatenate([x.real, x.imag], axis=-1)


def complex_from_lift(vectors) -> np.ndarray:
    """Inverse of :func:`real_lift`."""
    v = np.asarray(vectors, dtype=float)
    n = v.shape[-1] // 2
    return v[..., :n] + 1j * v[..., n:]


def _xbar_array(xbar) -> np.ndarray:
    if isinstance(xbar, PrecodingBlock):
        return xbar.vectors
    return _finite_array(xbar, "precoding vectors")


# ---------------------------------------------------------------------------
# Channel and constellation
# ---------------------------------------------------------------------------


def steering_vector(z, departure_angle: float, wavelength: float) -> np.ndarray:
    """Array response for a linear layout at coordinates ``z``.

    Entry n is ``exp(-j 2 pi cos(angle) z_n / wavelength)``; all entries
    have unit modulus.
    """
    zv = _z_array(z)
    if wavelength <= 0:
        raise ValueError("wavelength must be positive")
    if not (0.0 <= departure_angle <= np.pi):
        raise ValueError("departure angle must lie in [0, pi]")
    phase = (2.0 * np.pi / wavelength) * np.cos(departure_angle) * zv
    return np.exp(-1j * phase)


def channel_matrix(realization: ChannelRealization, z, cfg: SystemConfig) -> np.ndarray:
    """K x N LOS channel; row i is gain_i times the steering vector at angle_i.

    The receive model uses the plain transpose of each row (no conjugation):
    user i observes ``h_i^T x_t`` plus noise.
    """
    zv = _z_array(z)
    wavenumbers = (2.0 * np.pi / cfg.wavelength) * np.cos(realization.angles)
    phases = np.outer(wavenumbers, zv)
    return realization.gains[:, None] * np.exp(-1j * phases)


def mpsk_constellation(order: int) -> np.ndarray:
    if order not in SUPPORTED_MPSK_ORDERS:
        raise ValueError(f"unsupported MPSK order {order!r}")
    return np.exp(2j * np.pi * np.arange(order) / order)


def mpsk_decide_index(y, order: int):
    """Index of the decision region containing each sample.

    Region m covers phases in ``[2 pi m / M - pi / M, 2 pi m / M + pi / M)``
    (lower edge inclusive). ``y == 0`` maps to region 0 by convention.
    """
    if order not in SUPPORTED_MPSK_ORDERS:
        raise ValueError(f"unsupported MPSK order {order!r}")
    y = np.asarray(y)
    theta = np.angle(y)
    m = np.floor((theta + np.pi / order) * order / (2.0 * np.pi)).astype(int)
    return np.mod(m, order)


def mpsk_decide(y, order: int):
    """Nearest constellation point under the MPSK decision rule."""
    m = mpsk_decide_index(y, order)
    return np.exp(2j * np.pi * m / order)


def ci_cotangent(order: int) -> float:
    """cot(pi / M); exactly zero for BPSK."""
    if order == 2:
        return 0.0
    return 1.0 / np.tan(np.pi / order)


def safety_margin(channel_row, signal, symbol, order: int) -> float:
    """Signed distance of the noiseless receive point from its decision cone.

    Computes ``Re(h^T x s*) - |Im(h^T x s*)| cot(pi/M)`` with the plain
    (unconjugated) transpose in ``h^T x``. Positive values mean the point
    lies strictly inside the symbol's decision region.
    """
    h = np.asarray(channel_row, dtype=complex)
    x = np.asarray(signal, dtype=complex)
    g = np.dot(h, x) * np.conj(symbol)
    return float(g.real - abs(g.imag) * ci_cotangent(order))


def block_margins(channel, signals, symbols: SymbolBlock) -> np.ndarray:
    """K x T safety margins for a whole block via the complex-valued path.

    ``channel`` is the K x N matrix, ``signals`` the T x N complex
    transmit vectors.
    """
    H = np.asarray(channel, dtype=complex)
    X = np.asarray(signals, dtype=complex)
    g = (H @ X.T) * np.conj(symbols.symbols)
    return g.real - np.abs(g.imag) * ci_cotangent(symbols.order)


# ---------------------------------------------------------------------------
# Real-lifted constructive-interference geometry
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CiGeometry:
    """Stacked candidate columns of the real-lifted min-max objective.

    ``columns[t]`` is a 2N x 2K matrix. Columns alternate per user: the
    even 0-based column 2i holds the half-plane vector with the positive
    imaginary-part weight for user i (odd in 1-based counting), column
    2i+1 the one with the negative weight. For any feasible lifted
    precoder, the larger of a user's two column responses equals the
    negated safety margin of that (user, time) pair.
    """

    columns: np.ndarray
    column_users: np.ndarray
    column_signs: np.ndarray

    def __post_init__(self):
        v = _finite_array(self.columns, "columns")
        if v.ndim != 3:
            raise ValueError("columns must have shape (T, 2N, 2K)")
        object.__setattr__(self, "columns", _freeze(v))
        object.__setattr__(self, "column_users", _freeze(np.asarray(self.column_users, dtype=int)))
        object.__setattr__(self, "column_signs", _freeze(np.asarray(self.column_signs, dtype=int)))

    @property
    def block_length(self) -> int:
        return self.columns.shape[0]

    @property
    def num_candidates(self) -> int:
        return self.columns.shape[2]

    def candidate_values(self, xbar) -> np.ndarray:
        """T x 2K inner products of every column with its slot's precoder."""
        x = _xbar_array(xbar)
        return np.einsum("tnj,tn->tj", self.columns, x)

    def max_candidate(self, xbar) -> float:
        """The exact nonsmooth objective: the largest column response."""
        return float(np.max(self.candidate_values(xbar)))

    def margins(self, xbar) -> np.ndarray:
        """K x T safety margins recovered from the column responses."""
        c = self.candidate_values(xbar)
        t_len, two_k = c.shape
        pairs = c.reshape(t_len, two_k // 2, 2)
        return -np.max(pairs, axis=2).T


def _lifted_rows(realization: ChannelRealization, z, symbols: SymbolBlock, cfg: SystemConfig):
    """Common precomputation: s* h rows and the CI cotangent."""
    H = channel_matrix(realization, z, cfg)
    c = np.conj(symbols.symbols)[:, :, None] * H[:, None, :]  # (K, T, N)
    return c, ci_cotangent(cfg.M)


def build_ci_geometry(
    realization: ChannelRealization, z, symbols: SymbolBlock, cfg: SystemConfig
) -> CiGeometry:
    """Assemble the per-slot candidate matrices of the lifted objective.

    For each user/time pair the construction follows the real lift of the
    margin: with row ``c = s* h^T``, the building blocks are
    ``b = [Re c; -Im c]`` and ``r = cot(pi/M) [Im c; Re c]``; the two
    candidate columns are ``-b + r`` and ``-b - r``.
    """
    if symbols.num_users != realization.num_users or symbols.num_users != cfg.K:
        raise ValueError("user-count mismatch between realization, symbols, config")
    if symbols.block_length != cfg.T:
        raise ValueError("block-length mismatch between symbols and config")
    c, cot = _lifted_rows(realization, z, symbols, cfg)
    b = np.concatenate([c.real, -c.imag], axis=2)  # (K, T, 2N)
    r = cot * np.concatenate([c.imag, c.real], axis=2)
    u = -b + r
    w = -b - r
    stacked = np.stack([u, w], axis=2)  # (K, T, 2, 2N)
    columns = stacked.transpose(1, 3, 0, 2).reshape(cfg.T, 2 * cfg.N, 2 * cfg.K)
    users = np.repeat(np.arange(cfg.K), 2)
    signs = np.tile([1, -1], cfg.K)
    return CiGeometry(columns=columns, column_users=users, column_signs=signs)


def ci_position_jacobian_block(
    realization: ChannelRealization, z, symbols: SymbolBlock, cfg: SystemConfig
) -> np.ndarray:
    """Dense per-column position Jacobians for every symbol time at once.

    Returns an array of shape (T, 2K, 2N, N); entry ``[t, j, m, n]`` is the
    derivative of column j's m-th element with respect to coordinate n at
    slot t. Each column element depends on exactly one coordinate, so the
    slice ``[t, j, :, n]`` is nonzero only at rows n and N + n.
    """
    c, cot = _lifted_rows(realization, z, symbols, cfg)  # (K, T, N)
    wavenumbers = (2.0 * np.pi / cfg.wavelength) * np.cos(realization.angles)
    dct = -1j * wavenumbers[:, None, None] * c  # d(s* h_n)/dz_n
    db_low, db_high = dct.real, -dct.imag
    dr_low, dr_high = cot * dct.imag, cot * dct.real
    du = np.stack([-db_low + dr_low, -db_high + dr_high], axis=2)  # (K, T, 2, N)
    dw = np.stack([-db_low - dr_low, -db_high - dr_high], axis=2)
    n, k, t_len = cfg.N, cfg.K, cfg.T
    jac = np.zeros((2 * k, 2 * n, n, t_len))
    idx = np.arange(n)
    for i in range(k):
        jac[2 * i, idx, idx, :] = du[i, :, 0].T
        jac[2 * i, n + idx, idx, :] = du[i, :, 1].T
        jac[2 * i + 1, idx, idx, :] = dw[i, :, 0].T
        jac[2 * i + 1, n + idx, idx, :] = dw[i, :, 1].T
    return jac.transpose(3, 0, 1, 2)


def ci_position_jacobian(
    realization: ChannelRealization, z, symbols: SymbolBlock, cfg: SystemConfig, t: int
) -> np.ndarray:
    """Dense per-column position Jacobians for one symbol time, (2K, 2N, N)."""
    if not (0 <= t < cfg.T):
        raise IndexError(f"time index {t} outside block of length {cfg.T}")
    return ci_position_jacobian_block(realization, z, symbols, cfg)[t]


# ---------------------------------------------------------------------------
# Error-probability bound
# ---------------------------------------------------------------------------


def gaussian_q(x):
    """Standard Gaussian tail probability via the complementary error function."""
    return 0.5 * erfc(np.asarray(x, dtype=float) / np.sqrt(2.0))


def sep_upper_bound(margin, noise_std: float, order: int):
    """Two-sided union bound on the symbol error probability.

    ``2 Q(sqrt(2) sin(pi/M) margin / sigma)``; the matching lower bound
    drops the factor two. Monotone decreasing in the margin.
    """
    if noise_std <= 0:
        raise ValueError("noise_std must be positive")
    if order not in SUPPORTED_MPSK_ORDERS:
        raise ValueError(f"unsupported MPSK order {order!r}")
    arg = np.sqrt(2.0) * np.sin(np.pi / order) * np.asarray(margin, dtype=float) / noise_std
    return 2.0 * gaussian_q(arg)
