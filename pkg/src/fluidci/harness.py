"""Monte-Carlo evaluation: channel draws, noisy transmission, BER sweeps
over SNR, adjustment-range sweeps, and runtime/complexity benchmarks.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

import numpy as np

from .baselines import PsoSettings, fpa_solve, pso_solve_positions
from .model import (
    ChannelRealization,
    SystemConfig,
    SymbolBlock,
    build_ci_geometry,
    channel_matrix,
    ci_position_jacobian,
    complex_from_lift,
    make_config,
    mpsk_decide_index,
)
from .optim import ApgSettings, BcdSettings, PgdSettings, bcd_solve, project_power_ball
from .smoothing import smoothing_parameter

__all__ = [
    "METHODS",
    "ExperimentSpec",
    "TrialResult",
    "draw_realization",
    "simulate_transmission",
    "run_experiment",
    "aggregate_results",
    "wilson_interval",
    "benchmark_runtime",
    "benchmark_iteration_kernels",
    "fit_loglog_slope",
    "noise_std_for_snr",
]

METHODS = ("CIAP", "BCD-PSO", "FPA")
_METHOD_IDS = {name: i for i, name in enumerate(METHODS)}

# Stream tags keep the channel/noise/solver random draws independent.
_STREAM_CHANNEL = 11
_STREAM_NOISE = 17
_STREAM_SOLVER = 23

_POPCOUNT = np.array([bin(i).count("1") for i in range(32)], dtype=np.int64)


def noise_std_for_snr(power_budget: float, snr_db: float) -> float:
    """Noise standard deviation for SNR defined as power / noise variance."""
    return float(np.sqrt(power_budget / 10.0 ** (snr_db / 10.0)))


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything one sweep needs: scenario, grid, budgets, seeds.

    ``noise_reps`` controls how many independent noise realizations are
    simulated per solved instance; the solver work is done once per trial
    either way, so raising it only sharpens the BER estimate.
    """

    cfg: SystemConfig
    snr_db: tuple = (5.0, 10.0, 15.0, 20.0)
    num_trials: int = 500
    methods: tuple = METHODS
    seed: int = 0
    noise_reps: int = 1
    gain_mode: str = "unit-phase"
    mu_log_base: str = "e"
    share_noise: bool = True
    threads: int = 1
    apg: ApgSettings = ApgSettings()
    pgd: PgdSettings = PgdSettings()
    bcd: BcdSettings = BcdSettings()
    pso: PsoSettings = PsoSettings()

    def __post_init__(self):
        if len(self.snr_db) == 0:
            raise ValueError("snr_db grid must be non-empty")
        if self.num_trials < 1:
            raise ValueError("num_trials must be at least 1")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown methods {unknown}; choose from {METHODS}")
        if self.noise_reps < 1:
            raise ValueError("noise_reps must be at least 1")
        if self.gain_mode not in ("unit-phase", "unit"):
            raise ValueError("gain_mode must be 'unit-phase' or 'unit'")
        if self.seed < 0:
            raise ValueError("seed must be a nonnegative integer")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")
        object.__setattr__(self, "snr_db", tuple(float(s) for s in self.snr_db))
        object.__setattr__(self, "methods", tuple(self.methods))


@dataclass(frozen=True)
class TrialResult:
    """One solved-and-simulated channel realization."""

    method: str
    snr_db: float
    delta: float
    num_antennas: int
    num_users: int
    block_length: int
    mpsk_order: int
    trial: int
    bit_errors: int
    bits_sent: int
    min_margin: float
    solve_time_s: float
    seed: int
    termination: str = ""

    def __post_init__(self):
        if not (0 <= self.bit_errors <= self.bits_sent):
            raise ValueError("bit_errors must lie in [0, bits_sent]")


def draw_realization(
    rng: np.random.Generator, cfg: SystemConfig, gain_mode: str = "unit-phase"
) -> tuple[ChannelRealization, SymbolBlock]:
    """Independent channel and symbol draw.

    Departure angles are uniform on [0, pi]; symbol indices are uniform
    over the constellation. Gains default to unit magnitude with a
    uniform random phase per user ('unit-phase'); 'unit' pins them to 1.
    """
    angles = rng.uniform(0.0, np.pi, size=cfg.K)
    if gain_mode == "unit-phase":
        gains = np.exp(2j * np.pi * rng.random(cfg.K))
    elif gain_mode == "unit":
        gains = np.ones(cfg.K, dtype=complex)
    else:
        raise ValueError(f"unknown gain_mode {gain_mode!r}")
    indices = rng.integers(0, cfg.M, size=(cfg.K, cfg.T))
    return ChannelRealization(gains, angles), SymbolBlock.from_indices(indices, cfg.M)


def gray_code(indices):
    """Binary-reflected Gray code of each constellation index."""
    m = np.asarray(indices, dtype=np.int64)
    return m ^ (m >> 1)


def simulate_transmission(
    xbar,
    z,
    realization: ChannelRealization,
    symbols: SymbolBlock,
    noise_std: float,
    rng: np.random.Generator,
    cfg: SystemConfig,
    reps: int = 1,
) -> np.ndarray:
    """Bit errors per (user, symbol time), summed over ``reps`` noise draws.

    Receive samples are the plain-transpose channel products plus
    circularly symmetric Gaussian noise of variance ``noise_std**2``;
    bits are compared under the Gray labeling of constellation indices.
    """
    signals = complex_from_lift(np.asarray(xbar, dtype=float))
    H = channel_matrix(realization, z, cfg)
    noiseless = H @ signals.T  # (K, T)
    if noise_std > 0:
        noise = rng.standard_normal((2, reps, cfg.K, cfg.T))
        received = noiseless[None] + noise_std / np.sqrt(2.0) * (noise[0] + 1j * noise[1])
    else:
        received = np.broadcast_to(noiseless, (reps, cfg.K, cfg.T))
    decided = mpsk_decide_index(received, cfg.M)
    diff = gray_code(decided) ^ gray_code(symbols.indices)[None]
    return _POPCOUNT[diff].sum(axis=0)


def _rng_for(seed: int, tag: int, snr_idx: int, trial: int, extra: int = 0) -> np.random.Generator:
    return np.random.default_rng([seed, tag, snr_idx, trial, extra])


def _solve_method(method, realization, symbols, cfg, mu, spec, snr_idx, trial):
    """Dispatch one solver run; returns (xbar, z, termination)."""
    if method == "FPA":
        xbar, z, trace = fpa_solve(
            realization, symbols, cfg, mu, apg=spec.apg, pgd=spec.pgd, bcd=spec.bcd
        )
        return xbar, z, trace.termination
    if method == "CIAP":
        xbar, z, trace = bcd_solve(
            realization, symbols, cfg, mu, apg=spec.apg, pgd=spec.pgd, bcd=spec.bcd
        )
        return xbar, z, trace.termination
    if method == "BCD-PSO":
        rng = _rng_for(spec.seed, _STREAM_SOLVER, snr_idx, trial, _METHOD_IDS[method])
        xbar, z, _ = pso_solve_positions(
            realization, symbols, cfg, mu, pso=spec.pso, apg=spec.apg, rng=rng
        )
        return xbar, z, "fixed-budget"
    raise ValueError(f"unknown method {method!r}")


def _run_single(spec: ExperimentSpec, method: str, snr_idx: int, trial: int) -> TrialResult:
    snr = spec.snr_db[snr_idx]
    sigma = noise_std_for_snr(spec.cfg.P, snr)
    cfg = replace(spec.cfg, noise_variance=sigma**2)
    mu = smoothing_parameter(sigma, spec.mu_log_base)

    chan_rng = _rng_for(spec.seed, _STREAM_CHANNEL, snr_idx, trial)
    realization, symbols = draw_realization(chan_rng, cfg, spec.gain_mode)

    t0 = time.perf_counter()
    xbar, z, termination = _solve_method(
        method, realization, symbols, cfg, mu, spec, snr_idx, trial
    )
    solve_time = time.perf_counter() - t0
    xbar = project_power_ball(np.asarray(xbar, dtype=float), cfg.P)

    geometry = build_ci_geometry(realization, z, symbols, cfg)
    min_margin = float(geometry.margins(xbar).min())

    noise_extra = 0 if spec.share_noise else _METHOD_IDS[method]
    noise_rng = _rng_for(spec.seed, _STREAM_NOISE, snr_idx, trial, noise_extra)
    errors = simulate_transmission(
        xbar, z, realization, symbols, sigma, noise_rng, cfg, reps=spec.noise_reps
    )
    bits_per_symbol = int(np.log2(cfg.M))
    return TrialResult(
        method=method,
        snr_db=snr,
        delta=cfg.adjust_factor,
        num_antennas=cfg.N,
        num_users=cfg.K,
        block_length=cfg.T,
        mpsk_order=cfg.M,
        trial=trial,
        bit_errors=int(errors.sum()),
        bits_sent=cfg.K * cfg.T * bits_per_symbol * spec.noise_reps,
        min_margin=min_margin,
        solve_time_s=solve_time,
        seed=spec.seed,
        termination=termination,
    )


def _run_single_star(args) -> TrialResult:
    return _run_single(*args)


def run_experiment(spec: ExperimentSpec) -> list[TrialResult]:
    """Solve and simulate every (method, SNR, trial) cell of the sweep.

    All methods see the identical channel, symbols and (by default) noise
    for a given (SNR, trial) index, so per-trial differences are paired.
    Results come back ordered by (method order, SNR order, trial) and are
    reproducible from the seed regardless of the worker count.
    """
    jobs = [
        (spec, method, snr_idx, trial)
        for method in spec.methods
        for snr_idx in range(len(spec.snr_db))
        for trial in range(spec.num_trials)
    ]
    if spec.threads > 1:
        with ProcessPoolExecutor(max_workers=spec.threads) as pool:
            results = list(pool.map(_run_single_star, jobs, chunksize=4))
    else:
        results = [_run_single(*job) for job in jobs]
    return results


def wilson_interval(errors: int, total: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """Wilson 95% score interval for a binomial proportion."""
    if total <= 0:
        return 0.0, 1.0
    p = errors / total
    z2 = z * z
    denom = 1.0 + z2 / total
    center = (p + z2 / (2.0 * total)) / denom
    half = z * np.sqrt(p * (1.0 - p) / total + z2 / (4.0 * total * total)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def aggregate_results(results: Iterable[TrialResult]) -> list[dict]:
    """Per-(method, SNR, delta, size) BER with Wilson bounds and margin stats."""
    groups: dict[tuple, list[TrialResult]] = {}
    order: list[tuple] = []
    for r in results:
        key = (r.method, r.snr_db, r.delta, r.num_antennas, r.num_users, r.block_length, r.mpsk_order)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(r)
    rows = []
    for key in order:
        rs = groups[key]
        errors = sum(r.bit_errors for r in rs)
        bits = sum(r.bits_sent for r in rs)
        lo, hi = wilson_interval(errors, bits)
        rows.append(
            {
                "method": key[0],
                "snr_db": key[1],
                "delta": key[2],
                "N": key[3],
                "K": key[4],
                "T": key[5],
                "M": key[6],
                "trials": len(rs),
                "bit_errors": errors,
                "bits_sent": bits,
                "ber": errors / bits if bits else 0.0,
                "wilson_low": lo,
                "wilson_high": hi,
                "mean_min_margin": float(np.mean([r.min_margin for r in rs])),
            }
        )
    return rows


# ---------------------------------------------------------------------------
# Benchmarks
# ---------------------------------------------------------------------------


def benchmark_runtime(
    spec: ExperimentSpec,
    sizes: Iterable[int],
    num_realizations: int = 3,
    snr_db: float = 10.0,
) -> list[dict]:
    """Mean and median wall-clock per solved realization, per method and size.

    Sizes set the antenna and user counts jointly (N = K) with the
    aperture rescaled accordingly. One warm-up realization per method is
    solved (and discarded) before timing starts.
    """
    rows = []
    sigma = noise_std_for_snr(spec.cfg.P, snr_db)
    for size in sizes:
        cfg = make_config(
            int(size),
            int(size),
            mpsk_order=spec.cfg.M,
            block_length=spec.cfg.T,
            adjust_factor=spec.cfg.adjust_factor,
            wavelength=spec.cfg.wavelength,
            power_budget=spec.cfg.P,
            noise_variance=sigma**2,
        )
        mu = smoothing_parameter(sigma, spec.mu_log_base)
        for method in spec.methods:
            times = []
            for real_idx in range(num_realizations + 1):
                rng = _rng_for(spec.seed, _STREAM_CHANNEL, 1000 + int(size), real_idx)
                realization, symbols = draw_realization(rng, cfg, spec.gain_mode)
                t0 = time.perf_counter()
                _solve_method(method, realization, symbols, cfg, mu, spec, 1000 + int(size), real_idx)
                elapsed = time.perf_counter() - t0
                if real_idx > 0:  # realization 0 is warm-up
                    times.append(elapsed)
            rows.append(
                {
                    "method": method,
                    "N": cfg.N,
                    "K": cfg.K,
                    "T": cfg.T,
                    "M": cfg.M,
                    "realizations": num_realizations,
                    "mean_s": float(np.mean(times)),
                    "median_s": float(np.median(times)),
                }
            )
    return rows


def _time_kernel(fn, min_time: float = 0.05, max_rounds: int = 200) -> float:
    """Median per-call time over adaptive batches."""
    fn()  # warm caches
    reps = 1
    while True:
        t0 = time.perf_counter()
        for _ in range(reps):
            fn()
        elapsed = time.perf_counter() - t0
        if elapsed >= min_time / 5 or reps >= 1 << 16:
            break
        reps *= 4
    samples = []
    for _ in range(5):
        t0 = time.perf_counter()
        for _ in range(reps):
            fn()
        samples.append((time.perf_counter() - t0) / reps)
    return float(np.median(samples))


def benchmark_iteration_kernels(
    sizes: Iterable[int],
    num_users: int = 64,
    block_length: int = 64,
    mu: float = 0.5,
    seed: int = 0,
) -> list[dict]:
    """Per-iteration cost of the two block updates versus the antenna count.

    Times the gradient-plus-projection work that dominates one iteration
    of each solver (the per-iteration complexity accounting): for the
    precoder block the weighted column sum and the power-ball projection,
    for the position block the dense per-column Jacobian contraction and
    the box clamp. The inner simplex weights are held fixed since their
    cost does not depend on the antenna count.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for n in sizes:
        n = int(n)
        cfg = make_config(n, num_users, mpsk_order=8, block_length=block_length)
        angles = rng.uniform(0.0, np.pi, size=num_users)
        gains = np.exp(2j * np.pi * rng.random(num_users))
        realization = ChannelRealization(gains, angles)
        symbols = SymbolBlock.from_indices(
            rng.integers(0, cfg.M, size=(num_users, block_length)), cfg.M
        )
        z = cfg.interval_centers()
        geometry = build_ci_geometry(realization, z, symbols, cfg)
        columns = geometry.columns
        lam = rng.random((block_length, 2 * num_users))
        lam /= lam.sum()
        xbar = rng.standard_normal((block_length, 2 * n))
        grad_buf = np.empty_like(xbar)

        def apg_iteration():
            np.einsum("tnj,tj->tn", columns, lam, out=grad_buf)
            stepped = xbar - 0.01 * grad_buf
            project_power_ball(stepped, cfg.P)

        lower, upper = cfg.position_bounds()
        zgrad = np.empty(n)

        def pgd_iteration():
            # Jacobian construction is part of the position gradient work.
            zgrad[:] = 0.0
            for t in range(block_length):
                jac = ci_position_jacobian(realization, z, symbols, cfg, t)
                per_column = np.einsum("jmn,m->jn", jac, xbar[t])
                zgrad[:] += lam[t] @ per_column
            np.clip(z - 1e-6 * zgrad, lower, upper)

        rows.append(
            {
                "N": n,
                "K": num_users,
                "T": block_length,
                "apg_iter_s": _time_kernel(apg_iteration),
                "pgd_iter_s": _time_kernel(pgd_iteration),
            }
        )
    return rows


def fit_loglog_slope(sizes, times) -> float:
    """Least-squares slope of log(time) against log(size)."""
    x = np.log(np.asarray(sizes, dtype=float))
    y = np.log(np.asarray(times, dtype=float))
    return float(np.polyfit(x, y, 1)[0])
