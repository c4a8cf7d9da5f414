"""Throughput, average attempt count and residual throughput.

All metrics are in the packet-normalized convention: one packet of
information bits is delivered per success, and attempt k costs ``rho_k``
channel uses per bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelModel, ErgodicStats, ergodic_stats
from .outage import (
    Method,
    OutageProfile,
    RedundancyPolicy,
    Scheme,
    outage_harq_i,
    outage_profile,
)

__all__ = [
    "ThroughputReport",
    "evaluate",
    "k_average",
    "residual_throughput",
    "throughput",
    "throughput_harq_i",
]

CAPACITY_TOL = 1e-6
_REPORTABLE = frozenset({Method.EXACT, Method.QUADRATURE, Method.CLOSED_FORM})


@dataclass(frozen=True)
class ThroughputReport:
    """Throughput of one policy under one outage method.

    ``chi`` is NaN until the report is tied to a channel through
    :func:`evaluate` or :func:`with_capacity`.
    """

    eta: float
    f_terminal: float
    k_avg: float
    chi: float
    policy: RedundancyPolicy
    scheme: Scheme
    method: Method
    f: tuple[float, ...] = ()

    def with_capacity(self, stats: ErgodicStats) -> "ThroughputReport":
        return ThroughputReport(
            eta=self.eta,
            f_terminal=self.f_terminal,
            k_avg=self.k_avg,
            chi=residual_throughput(self, stats),
            policy=self.policy,
            scheme=self.scheme,
            method=self.method,
            f=self.f,
        )


def k_average(profile: OutageProfile) -> float:
    """Expected number of attempts, ``1 + sum_{k<K} f_k``."""
    f = np.asarray(profile.f, dtype=float)
    return float(1.0 + f[:-1].sum())


def _eta(rho: np.ndarray, f: np.ndarray) -> float:
    # expected cost: attempt k is paid whenever the first k-1 failed
    cost = rho[0] + float(np.dot(f[:-1], rho[1:]))
    return float((1.0 - f[-1]) / cost)


def throughput(policy: RedundancyPolicy, profile: OutageProfile) -> ThroughputReport:
    """eta = (1 - f_K) / (rho_1 + sum_{k>=2} f_{k-1} rho_k)."""
    if profile.K != policy.K:
        raise ValueError(
            f"outage profile has {profile.K} entries but the policy has {policy.K} attempts"
        )
    rho = np.asarray(policy.rho, dtype=float)
    f = np.asarray(profile.f, dtype=float)
    return ThroughputReport(
        eta=_eta(rho, f),
        f_terminal=float(f[-1]),
        k_avg=k_average(profile),
        chi=math.nan,
        policy=policy,
        scheme=profile.scheme,
        method=profile.method,
        f=profile.f,
    )


def throughput_harq_i(model: ChannelModel, policy: RedundancyPolicy) -> ThroughputReport:
    report = throughput(policy, outage_harq_i(model, policy))
    return report.with_capacity(ergodic_stats(model))


def residual_throughput(report: ThroughputReport, stats: ErgodicStats) -> float:
    """chi = 1 - eta / c_bar, the relative gap to ergodic capacity."""
    if report.eta > stats.c_bar * (1.0 + CAPACITY_TOL):
        raise ValueError(
            f"throughput {report.eta!r} exceeds ergodic capacity {stats.c_bar!r}; "
            "the outage calculation is inconsistent"
        )
    return float(min(max(1.0 - report.eta / stats.c_bar, 0.0), 1.0))


def evaluate(
    model: ChannelModel,
    policy: RedundancyPolicy,
    scheme: Scheme,
    method: Method | None = None,
) -> ThroughputReport:
    """Outage profile plus throughput in one call (exact methods by default).

    ``chi`` is filled in for exact outage methods only; approximations are
    meant for the optimizers and are not reported against capacity.
    """
    profile = outage_profile(model, policy, scheme, method)
    report = throughput(policy, profile)
    if profile.method in _REPORTABLE:
        report = report.with_capacity(ergodic_stats(model))
    return report
