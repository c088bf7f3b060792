"""Distributed energy beamforming and information transfer over multiway
amplify-and-forward relay networks: models, optimal and suboptimal
transceiver designs, closed-form bounds and Monte Carlo campaigns."""

__version__ = "0.1.0"

from .model import (Allocation, ChannelState, SystemParams, Targets, dbm_to_watts,
                    sample_channels, watts_to_dbm)
from .optimizers import (SearchConfig, Solution, solve_baseline_swipt, solve_p1_sum_rate,
                         solve_p2_suboptimal, solve_p3_harvest, solve_p4_suboptimal)

__all__ = [
    "Allocation", "ChannelState", "SystemParams", "Targets", "dbm_to_watts", "watts_to_dbm",
    "sample_channels", "SearchConfig", "Solution", "solve_p1_sum_rate", "solve_p2_suboptimal",
    "solve_p3_harvest", "solve_p4_suboptimal", "solve_baseline_swipt",
]
