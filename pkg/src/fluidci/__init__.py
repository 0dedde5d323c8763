"""Joint constructive-interference precoding and movable-antenna placement
for MPSK downlinks, with Monte-Carlo BER evaluation against fixed-array
and swarm-search baselines.
"""

from .model import (
    ChannelRealization,
    CiGeometry,
    PositionVector,
    PrecodingBlock,
    SymbolBlock,
    SystemConfig,
    make_config,
)
from .optim import ApgSettings, BcdSettings, PgdSettings, SolveTrace, bcd_solve
from .baselines import PsoSettings, fpa_solve, pso_solve_positions
from .smoothing import SmoothedMinMax, smoothing_parameter, solve_lambda
from .harness import ExperimentSpec, TrialResult, run_experiment

__version__ = "0.1.0"

__all__ = [
    "ApgSettings",
    "BcdSettings",
    "ChannelRealization",
    "CiGeometry",
    "ExperimentSpec",
    "PgdSettings",
    "PositionVector",
    "PrecodingBlock",
    "PsoSettings",
    "SmoothedMinMax",
    "SolveTrace",
    "SymbolBlock",
    "SystemConfig",
    "TrialResult",
    "bcd_solve",
    "fpa_solve",
    "make_config",
    "pso_solve_positions",
    "run_experiment",
    "smoothing_parameter",
    "solve_lambda",
    "__version__",
]
