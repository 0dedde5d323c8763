"""Comparison schemes: the fixed-position array and a particle-swarm
position search wrapped around the same precoding solver.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .model import ChannelRealization, SystemConfig, SymbolBlock
from .optim import (
    ApgSettings,
    BcdSettings,
    PgdSettings,
    SolveTrace,
    apg_solve_precoding,
    bcd_solve,
    matched_filter_precoder,
)
from .smoothing import SmoothedMinMax

__all__ = ["PsoSettings", "PsoTrace", "fpa_solve", "pso_solve_positions"]


@dataclass(frozen=True)
class PsoSettings:
    """Swarm-search controls.

    The inertia/cognitive/social coefficients default to the standard
    constriction values. ``velocity_clamp`` caps per-coordinate speed at
    that fraction of the interval width. ``fitness_apg`` optionally runs
    the per-particle precoding solves with a cheaper budget than the
    final polish; when set, the best position is re-solved with the full
    settings before returning.
    """

    swarm_size: int = 50
    max_iters: int = 100
    inertia: float = 0.729
    cognitive: float = 1.494
    social: float = 1.494
    velocity_clamp: float = 0.2
    seed: int = 0
    fitness_apg: Optional[ApgSettings] = None

    def __post_init__(self):
        if self.swarm_size < 1:
            raise ValueError("swarm_size must be at least 1")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        for name in ("inertia", "cognitive", "social", "velocity_clamp"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass
class PsoTrace:
    """Best exact objective after initialization and after each swarm update."""

    best_fitness: np.ndarray
    evaluations: int
    time_s: float


def fpa_solve(
    realization: ChannelRealization,
    symbols: SymbolBlock,
    cfg: SystemConfig,
    mu: float,
    apg: ApgSettings = ApgSettings(),
    pgd: PgdSettings = PgdSettings(),
    bcd: BcdSettings = BcdSettings(),
) -> tuple[np.ndarray, np.ndarray, SolveTrace]:
    """Precoding-only baseline: antennas pinned to the interval centers.

    Implemented as the alternating solver on a zero-width position box so
    the two code paths cannot drift apart; the position block is then a
    no-op and only the precoders are optimized.
    """
    pinned = replace(cfg, adjust_factor=0.0)
    return bcd_solve(realization, symbols, pinned, mu, apg=apg, pgd=pgd, bcd=bcd)


def _particle_fitness(
    realization: ChannelRealization,
    symbols: SymbolBlock,
    cfg: SystemConfig,
    mu: float,
    z: np.ndarray,
    apg: ApgSettings,
) -> tuple[float, np.ndarray]:
    """Exact worst-candidate objective after a precoding solve at ``z``.

    Always restarts from the matched-filter point so a particle's fitness
    depends on its position only.
    """
    objective = SmoothedMinMax(realization, symbols, cfg, mu)
    x0 = matched_filter_precoder(realization, z, symbols, cfg)
    xbar, _ = apg_solve_precoding(objective, x0, z, apg)
    return objective.geometry(z).max_candidate(xbar), xbar


def pso_solve_positions(
    realization: ChannelRealization,
    symbols: SymbolBlock,
    cfg: SystemConfig,
    mu: float,
    pso: PsoSettings = PsoSettings(),
    apg: ApgSettings = ApgSettings(),
    rng: Optional[np.random.Generator] = None,
) -> tuple[np.ndarray, np.ndarray, PsoTrace]:
    """Swarm search over the position box with precoding-solve fitness.

    Particle 0 starts at the interval centers (the fixed-array layout) and
    the rest are uniform in the box; velocities start at zero. Fitness is
    the exact worst-candidate objective (not the smoothed surrogate), so
    comparisons against the alternating solver are on the true metric.
    Returns the best particle with its precoder.
    """
    start = time.perf_counter()
    if rng is None:
        rng = np.random.default_rng(pso.seed)
    lower, upper = cfg.position_bounds()
    width = upper - lower
    n = cfg.N
    fitness_apg = pso.fitness_apg if pso.fitness_apg is not None else apg

    positions = np.empty((pso.swarm_size, n))
    positions[0] = cfg.interval_centers()
    if pso.swarm_size > 1:
        positions[1:] = lower + rng.random((pso.swarm_size - 1, n)) * width
    velocities = np.zeros_like(positions)
    vmax = pso.velocity_clamp * width

    fitness = np.empty(pso.swarm_size)
    precoders = [None] * pso.swarm_size
    for p in range(pso.swarm_size):
        fitness[p], precoders[p] = _particle_fitness(
            realization, symbols, cfg, mu, positions[p], fitness_apg
        )
    evaluations = pso.swarm_size

    best_positions = positions.copy()
    best_fitness = fitness.copy()
    g = int(np.argmin(best_fitness))
    global_position = best_positions[g].copy()
    global_fitness = float(best_fitness[g])
    global_precoder = precoders[g]
    history = [global_fitness]

    for _ in range(pso.max_iters):
        r_cog = rng.random((pso.swarm_size, n))
        r_soc = rng.random((pso.swarm_size, n))
        velocities = (
            pso.inertia * velocities
            + pso.cognitive * r_cog * (best_positions - positions)
            + pso.social * r_soc * (global_position[None, :] - positions)
        )
        np.clip(velocities, -vmax, vmax, out=velocities)
        positions = np.clip(positions + velocities, lower, upper)
        for p in range(pso.swarm_size):
            value, xbar = _particle_fitness(
                realization, symbols, cfg, mu, positions[p], fitness_apg
            )
            evaluations += 1
            if value < best_fitness[p]:
                best_fitness[p] = value
                best_positions[p] = positions[p]
            if value < global_fitness:
                global_fitness = value
                global_position = positions[p].copy()
                global_precoder = xbar
        history.append(global_fitness)

    if pso.fitness_apg is not None:
        # Cheap-budget search; polish the winner with the full settings.
        objective = SmoothedMinMax(realization, symbols, cfg, mu)
        x0 = matched_filter_precoder(realization, global_position, symbols, cfg)
        global_precoder, _ = apg_solve_precoding(objective, x0, global_position, apg)

    trace = PsoTrace(
        best_fitness=np.array(history),
        evaluations=evaluations,
        time_s=time.perf_counter() - start,
    )
    return global_precoder, global_position, trace
