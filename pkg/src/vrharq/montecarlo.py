"""Attempt-by-attempt simulation of truncated HARQ.

Serves as an independent check of the analytic outage and throughput
routines. Trials are processed in fixed-size blocks; block ``b`` draws from
its own generator seeded by ``(seed, b)``, so results are bit-for-bit
reproducible and do not depend on how blocks are scheduled.

Throughput follows the renewal-reward argument: each packet earns reward 1
if delivered and costs the redundancies of the attempts it used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import LN2, ChannelModel
from .outage import RedundancyPolicy, Scheme

__all__ = ["SimConfig", "SimEstimate", "block_rng", "sample_snr", "simulate"]

BLOCK_TRIALS = 1 << 16
MAX_SIM_ATTEMPTS_CHASE = 8


@dataclass(frozen=True)
class SimConfig:
    scheme: Scheme
    policy: RedundancyPolicy
    model: ChannelModel
    trials: int
    seed: int = 0
    fixed_snr: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if int(self.trials) != self.trials or self.trials < 1:
            raise ValueError(f"trials must be a positive integer, got {self.trials!r}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        if self.fixed_snr is not None and not self.fixed_snr >= 0:
            raise ValueError("fixed_snr must be non-negative")
        if self.scheme is Scheme.HARQ_CHASE and self.policy.K > MAX_SIM_ATTEMPTS_CHASE:
            raise ValueError(
                f"Chase simulation supports K <= {MAX_SIM_ATTEMPTS_CHASE}, got {self.policy.K}"
            )


@dataclass(frozen=True)
class SimEstimate:
    f_hat: tuple[float, ...]
    f_stderr: tuple[float, ...]
    eta_hat: float
    eta_stderr: float
    k_avg_hat: float
    k_avg_stderr: float
    trials_used: int


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(block),)))


def sample_snr(model: ChannelModel, rng: np.random.Generator, size=None, fixed_snr=None):
    """Gamma(m, gamma_bar/m) SNR draws, or the constant ``fixed_snr``."""
    if fixed_snr is not None:
        return np.full(size, float(fixed_snr)) if size is not None else float(fixed_snr)
    return rng.standard_gamma(model.m, size) * model.scale


def _failed(scheme: Scheme, rho: np.ndarray, snr: np.ndarray) -> np.ndarray:
    """Boolean (K, n): packet still undecoded after attempt k."""
    info = np.log1p(snr) / LN2  # C(gamma), bits per channel use
    K = rho.size
    if scheme is Scheme.HARQ_I:
        fail = info * rho[:, None] < 1.0
    elif scheme is Scheme.HARQ_IR:
        fail = np.cumsum(info * rho[:, None], axis=0) < 1.0
    else:
        fail = np.empty(snr.shape, dtype=bool)
        for k in range(1, K + 1):
            order = np.argsort(rho[:k], kind="stable")
            r = rho[:k][order]
            d = np.diff(r, prepend=0.0)
            # chunk j is carried by every attempt at least r_j long
            T = np.cumsum(snr[:k][order][::-1], axis=0)[::-1]
            fail[k - 1] = d @ (np.log1p(T) / LN2) < 1.0
    # the protocol stops at the first success
    return np.logical_and.accumulate(fail, axis=0)


def simulate(config: SimConfig) -> SimEstimate:
    rho = np.asarray(config.policy.rho, dtype=float)
    K = rho.size
    n = int(config.trials)
    fail_counts = np.zeros(K, dtype=np.int64)
    # attempts[N-1] = number of packets that used exactly N attempts
    attempts = np.zeros(K, dtype=np.int64)
    for block, start in enumerate(range(0, n, BLOCK_TRIALS)):
        size = min(BLOCK_TRIALS, n - start)
        rng = block_rng(config.seed, block)
        snr = sample_snr(config.model, rng, (K, size), config.fixed_snr)
        failed = _failed(config.scheme, rho, snr)
        fail_counts += failed.sum(axis=1)
        used = 1 + failed[:-1].sum(axis=0)
        attempts += np.bincount(used - 1, minlength=K)

    f_hat = fail_counts / n
    f_se = np.sqrt(f_hat * (1.0 - f_hat) / n)

    N = np.arange(1, K + 1)
    p_n = attempts / n
    k_avg = float(p_n @ N)
    k_var = float(p_n @ (N - k_avg) ** 2)

    # renewal reward: A = delivered indicator, B = redundancy spent
    cost_by_n = np.cumsum(rho)
    successes = n - fail_counts[-1]
    total_cost = float(attempts @ cost_by_n)
    eta = successes / total_cost
    mean_a, mean_b = successes / n, total_cost / n
    e_b2 = float(p_n @ cost_by_n**2)
    # A = 1 except for packets that used all K attempts and failed
    e_ab = mean_b - fail_counts[-1] / n * cost_by_n[-1]
    var_a = mean_a * (1.0 - mean_a)
    var_b = e_b2 - mean_b**2
    cov = e_ab - mean_a * mean_b
    var_ratio = (var_a - 2.0 * eta * cov + eta**2 * var_b) / (mean_b**2 * n)
    return SimEstimate(
        f_hat=tuple(float(v) for v in f_hat),
        f_stderr=tuple(float(v) for v in f_se),
        eta_hat=float(eta),
        eta_stderr=math.sqrt(max(var_ratio, 0.0)),
        k_avg_hat=k_avg,
        k_avg_stderr=math.sqrt(k_var / n),
        trials_used=n,
    )
