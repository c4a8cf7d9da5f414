"""Throughput analysis and rate optimization of truncated HARQ (HARQ-I,
HARQ-IR and HARQ-CHASE) over Nakagami-m block fading."""

__version__ = "0.1.0"

from .channel import ChannelModel, ErgodicStats, ergodic_stats, single_outage
from .montecarlo import SimConfig, SimEstimate, simulate
from .optimizer import (
    DpTables,
    OptimizationResult,
    Surrogate,
    build_dp_tables,
    optimize_fixed_rate,
    optimize_vr,
    optimize_vr_chase,
    optimize_vr_ir,
)
from .outage import Method, OutageProfile, RedundancyPolicy, Scheme, outage_profile
from .special_math import ConvergenceError
from .throughput import ThroughputReport, evaluate, k_average, residual_throughput, throughput

__all__ = [
    "ChannelModel",
    "ConvergenceError",
    "DpTables",
    "ErgodicStats",
    "Method",
    "OptimizationResult",
    "OutageProfile",
    "RedundancyPolicy",
    "Scheme",
    "SimConfig",
    "SimEstimate",
    "Surrogate",
    "ThroughputReport",
    "build_dp_tables",
    "ergodic_stats",
    "evaluate",
    "k_average",
    "optimize_fixed_rate",
    "optimize_vr",
    "optimize_vr_chase",
    "optimize_vr_ir",
    "outage_profile",
    "residual_throughput",
    "simulate",
    "single_outage",
    "throughput",
]
