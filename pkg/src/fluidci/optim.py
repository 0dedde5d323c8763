"""Block solvers: accelerated projected gradient for the precoders,
projected gradient descent with backtracking for the antenna positions,
and the alternating outer loop that couples them.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import _kernels
from .model import (
    ChannelRealization,
    SystemConfig,
    SymbolBlock,
    _xbar_array,
    _z_array,
    channel_matrix,
    real_lift,
)
from .smoothing import SmoothedMinMax

__all__ = [
    "ApgSettings",
    "PgdSettings",
    "BcdSettings",
    "SolveTrace",
    "project_power_ball",
    "project_positions",
    "matched_filter_precoder",
    "apg_solve_precoding",
    "pgd_solve_positions",
    "bcd_solve",
]

TERMINATION_CONVERGED = "converged"
TERMINATION_ITERATION_CAP = "iteration-cap"
TERMINATION_LINE_SEARCH_STALL = "line-search-stall"
TERMINATION_OUTER_CAP = "outer-iteration-cap"


@dataclass(frozen=True)
class ApgSettings:
    """Accelerated projected gradient controls for the precoding block."""

    eps: float = 1e-6
    max_iters: int = 2000
    tau0: float = 1.0
    momentum: bool = True
    adaptive_restart: bool = True

    def __post_init__(self):
        if not (self.eps > 0):
            raise ValueError("eps must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


@dataclass(frozen=True)
class PgdSettings:
    """Projected gradient descent controls for the position block."""

    eps: float = 1e-6
    max_iters: int = 500
    shrink: float = 0.5
    sufficient_decrease: float = 1e-4
    init_step: float = 1.0
    max_backtracks: int = 50

    def __post_init__(self):
        if not (self.eps > 0):
            raise ValueError("eps must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not (0.0 < self.shrink < 1.0):
            raise ValueError("shrink must lie in (0, 1)")
        if not (0.0 < self.sufficient_decrease < 1.0):
            raise ValueError("sufficient_decrease must lie in (0, 1)")
        if not (self.init_step > 0):
            raise ValueError("init_step must be positive")


@dataclass(frozen=True)
class BcdSettings:
    """Outer alternation controls."""

    eps: float = 1e-5
    max_outer_iters: int = 50
    update_precoders: bool = True
    update_positions: bool = True

    def __post_init__(self):
        if not (self.eps > 0):
            raise ValueError("eps must be positive")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be at least 1")


@dataclass
class SolveTrace:
    """Record of one solver run.

    ``psi`` holds objective values: per iteration for the inner solvers,
    at block boundaries for the outer loop. ``block_iterations`` is only
    filled by the outer loop and lists (precoder, position) inner
    iteration counts per round.
    """

    psi: np.ndarray
    iterations: int
    termination: str
    time_s: float
    block_iterations: list = field(default_factory=list)


def project_power_ball(xbar, power: float) -> np.ndarray:
    """Euclidean projection of each row onto the ball of squared norm <= power.

    Accepts a single vector or a stack of row vectors; idempotent.
    """
    if power <= 0:
        raise ValueError("power must be positive")
    x = np.asarray(xbar, dtype=float)
    single = x.ndim == 1
    rows = np.atleast_2d(x).copy()
    norms_sq = np.sum(rows * rows, axis=1)
    over = norms_sq > power
    if np.any(over):
        rows[over] *= np.sqrt(power / norms_sq[over])[:, None]
    return rows[0] if single else rows


def project_positions(z, cfg: SystemConfig) -> np.ndarray:
    """Clamp each coordinate to its own interval; idempotent and separable."""
    lower, upper = cfg.position_bounds()
    return np.clip(_z_array(z), lower, upper)


def matched_filter_precoder(
    realization: ChannelRealization, z, symbols: SymbolBlock, cfg: SystemConfig
) -> np.ndarray:
    """Full-power conjugate-beamforming start point, lifted to (T, 2N).

    Slot t points along sum_i conj(h_i) s_{i,t}, which aligns the plain
    transpose receive products with the intended symbols and avoids the
    zero start's vanishing gradient.
    """
    H = channel_matrix(realization, z, cfg)
    combined = H.conj().T @ symbols.symbols  # (N, T)
    norms = np.linalg.norm(combined, axis=0)
    scale = np.zeros_like(norms)
    nz = norms > 0
    scale[nz] = np.sqrt(cfg.P) / norms[nz]
    return real_lift((combined * scale).T)


def apg_solve_precoding(
    objective: SmoothedMinMax,
    xbar0,
    z,
    settings: ApgSettings = ApgSettings(),
) -> tuple[np.ndarray, SolveTrace]:
    """Minimize the surrogate over the per-slot power balls at fixed positions.

    Runs the momentum iteration with per-slot constant steps equal to the
    inverse gradient Lipschitz constants; every slot is updated in each
    iteration and the loop stops when the largest per-slot movement drops
    below ``settings.eps``.
    """
    start = time.perf_counter()
    zv = _z_array(z)
    x0 = project_power_ball(_xbar_array(xbar0), objective.cfg.P)
    columns = np.ascontiguousarray(objective.geometry(zv).columns)
    lipschitz = np.asarray(objective.lipschitz_precoder(zv), dtype=float)
    steps = 1.0 / np.maximum(lipschitz, 1e-300)
    x, iters, flag, psi_trace = _kernels.apg_precoding_loop(
        columns,
        np.ascontiguousarray(x0),
        steps,
        float(objective.cfg.P),
        float(objective.mu),
        float(settings.eps),
        int(settings.max_iters),
        bool(settings.momentum),
        bool(settings.adaptive_restart),
    )
    if flag == _kernels.FLAG_SANDWICH_VIOLATION:
        raise AssertionError("smoothing sandwich violated inside the precoding solver")
    termination = TERMINATION_CONVERGED if flag == _kernels.FLAG_CONVERGED else TERMINATION_ITERATION_CAP
    trace = SolveTrace(
        psi=np.asarray(psi_trace),
        iterations=int(iters),
        termination=termination,
        time_s=time.perf_counter() - start,
    )
    return x, trace


def pgd_solve_positions(
    objective: SmoothedMinMax,
    z0,
    xbar,
    settings: PgdSettings = PgdSettings(),
) -> tuple[np.ndarray, SolveTrace]:
    """Minimize the surrogate over the position box at fixed precoders.

    Each iteration takes a projected gradient step whose length starts at
    ``init_step`` and shrinks geometrically until the projected-step
    sufficient-decrease test passes; the run stops when an accepted step
    moves less than ``eps`` or the shrink budget is exhausted.
    """
    start = time.perf_counter()
    cfg = objective.cfg
    x = np.ascontiguousarray(_xbar_array(xbar))
    z = np.ascontiguousarray(project_positions(z0, cfg))
    lower, upper = cfg.position_bounds()
    psi = objective.psi_value(x, z)
    psi_vals = [psi]
    termination = TERMINATION_ITERATION_CAP
    iters = 0
    for _ in range(settings.max_iters):
        iters += 1
        grad = objective.grad_position(x, z)
        eta = settings.init_step
        accepted = False
        prev_candidate = None
        psi_new = psi
        for _ in range(settings.max_backtracks):
            z_new = np.clip(z - eta * grad, lower, upper)
            step_sq = float(np.sum((z_new - z) ** 2))
            if step_sq == 0.0:
                # Gradient cannot move the point inside the box.
                accepted = True
                psi_new = psi
                break
            # Large trial steps all clamp to the same box point; only new
            # candidates cost an objective evaluation.
            if prev_candidate is None or not np.array_equal(z_new, prev_candidate):
                psi_new = objective.psi_fast(x, z_new)
                prev_candidate = z_new
            if psi_new <= psi - settings.sufficient_decrease / eta * step_sq:
                accepted = True
                break
            eta *= settings.shrink
        if not accepted:
            termination = TERMINATION_LINE_SEARCH_STALL
            break
        movement = float(np.sqrt(step_sq))
        z = z_new
        psi = psi_new
        psi_vals.append(psi)
        if movement <= settings.eps:
            termination = TERMINATION_CONVERGED
            break
    trace = SolveTrace(
        psi=np.array(psi_vals),
        iterations=iters,
        termination=termination,
        time_s=time.perf_counter() - start,
    )
    return z, trace


def bcd_solve(
    realization: ChannelRealization,
    symbols: SymbolBlock,
    cfg: SystemConfig,
    mu: float,
    apg: ApgSettings = ApgSettings(),
    pgd: PgdSettings = PgdSettings(),
    bcd: BcdSettings = BcdSettings(),
    z0=None,
    xbar0=None,
) -> tuple[np.ndarray, np.ndarray, SolveTrace]:
    """Alternate precoder and position solves until both blocks stop moving.

    Starts from the interval centers and the matched-filter precoder
    unless told otherwise. Returns the final lifted precoders, the final
    positions and an outer trace whose objective values are recorded
    after every block update.
    """
    start = time.perf_counter()
    objective = SmoothedMinMax(realization, symbols, cfg, mu)
    z = project_positions(cfg.interval_centers() if z0 is None else z0, cfg)
    if xbar0 is None:
        xbar = matched_filter_precoder(realization, z, symbols, cfg)
    else:
        xbar = project_power_ball(_xbar_array(xbar0), cfg.P)

    psi_vals = [objective.psi_value(xbar, z)]
    block_iterations = []
    termination = TERMINATION_OUTER_CAP
    outer = 0
    for _ in range(bcd.max_outer_iters):
        outer += 1
        apg_iters = 0
        pgd_iters = 0
        if bcd.update_precoders:
            xbar_new, apg_trace = apg_solve_precoding(objective, xbar, z, apg)
            apg_iters = apg_trace.iterations
            psi_vals.append(apg_trace.psi[-1])
        else:
            xbar_new = xbar
        if bcd.update_positions:
            z_new, pgd_trace = pgd_solve_positions(objective, z, xbar_new, pgd)
            pgd_iters = pgd_trace.iterations
            psi_vals.append(pgd_trace.psi[-1])
        else:
            z_new = z
        block_iterations.append((apg_iters, pgd_iters))
        dx = float(np.max(np.linalg.norm(xbar_new - xbar, axis=1)))
        dz = float(np.linalg.norm(z_new - z))
        xbar, z = xbar_new, z_new
        if dx <= bcd.eps and dz <= bcd.eps:
            termination = TERMINATION_CONVERGED
            break
    trace = SolveTrace(
        psi=np.array(psi_vals),
        iterations=outer,
        termination=termination,
        time_s=time.perf_counter() - start,
        block_iterations=block_iterations,
    )
    return xbar, z, trace
