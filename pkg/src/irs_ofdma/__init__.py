"""Pilot design and least-squares channel estimation for IRS-aided OFDMA uplinks.

Modules:
    channel: multipath channel generation and link budget.
    ofdm: frequency-domain pilot model.
    training: pilot-tone allocations, reflection patterns, feasibility rules.
    estimation: simultaneous and sequential least-squares estimators.
    analysis: MSE formulas, allocation-search objective, rank probing.
    harness: experiment configs, Monte-Carlo sweeps and CSV output.
"""

from __future__ import annotations

from .channel import ChannelRealization, SystemConfig, draw_realization
from .errors import (
    CapacityError,
    ConfigError,
    FeasibilityError,
    InstanceTooLargeError,
    InvalidArgumentError,
    IrsOfdmaError,
    RankDeficientError,
)
from .estimation import ChannelEstimate, estimate_seuce, estimate_siuce
from .training import (
    PilotAllocation,
    ReflectionPattern,
    check_feasibility,
    dft_pattern,
    k1_max,
    k2_max,
)

__all__ = [
    "CapacityError",
    "ChannelEstimate",
    "ChannelRealization",
    "ConfigError",
    "FeasibilityError",
    "InstanceTooLargeError",
    "InvalidArgumentError",
    "IrsOfdmaError",
    "PilotAllocation",
    "RankDeficientError",
    "ReflectionPattern",
    "SystemConfig",
    "check_feasibility",
    "dft_pattern",
    "draw_realization",
    "estimate_seuce",
    "estimate_siuce",
    "k1_max",
    "k2_max",
]
