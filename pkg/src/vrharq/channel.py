"""Nakagami-m block-fading channel.

The SNR of each block is gamma distributed with shape ``m`` and mean
``gamma_bar`` (linear scale). Blocks fade independently.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .special_math import ConvergenceError, regularized_lower_gamma

__all__ = [
    "ChannelModel",
    "ErgodicStats",
    "db_to_linear",
    "ergodic_stats",
    "mutual_information",
    "single_outage",
    "snr_cdf",
]

LN2 = math.log(2.0)
# Below this redundancy 2**(1/rho) overflows a double; the outage is 1 there.
_RHO_OVERFLOW = 1e-3


def db_to_linear(snr_db):
    return 10.0 ** (np.asarray(snr_db, dtype=float) / 10.0)


@dataclass(frozen=True)
class ChannelModel:
    """Nakagami-m fading with shape ``m`` and average SNR ``gamma_bar``."""

    m: float
    gamma_bar: float

    def __post_init__(self):
        if not self.m >= 0.5:
            raise ValueError(f"Nakagami shape must satisfy m >= 0.5, got {self.m!r}")
        if not (self.gamma_bar > 0 and math.isfinite(self.gamma_bar)):
            raise ValueError(f"average SNR must be positive, got {self.gamma_bar!r}")
        object.__setattr__(self, "m", float(self.m))
        object.__setattr__(self, "gamma_bar", float(self.gamma_bar))

    @classmethod
    def from_db(cls, m: float, snr_db: float) -> "ChannelModel":
        return cls(m=m, gamma_bar=float(db_to_linear(snr_db)))

    @property
    def scale(self) -> float:
        """Scale parameter of the SNR gamma law (mean / shape)."""
        return self.gamma_bar / self.m

    @property
    def snr_db(self) -> float:
        return 10.0 * math.log10(self.gamma_bar)

    def pdf(self, gamma):
        """SNR density p(gamma; m)."""
        g = np.asarray(gamma, dtype=float)
        m, s = self.m, self.scale
        with np.errstate(divide="ignore"):
            logp = (m - 1.0) * np.log(g) - g / s - m * math.log(s) - special.gammaln(m)
        out = np.where(g > 0, np.exp(logp), 0.0)
        if m == 1.0:
            out = np.where(g == 0, 1.0 / s, out)
        elif m < 1.0:
            out = np.where(g == 0, np.inf, out)
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ErgodicStats:
    """Mean and standard deviation of C(gamma) under the fading law."""

    c_bar: float
    sigma: float

    @property
    def xi(self) -> float:
        return self.c_bar / self.sigma


def mutual_information(gamma):
    """C(gamma) = log2(1 + gamma), in bits per channel use."""
    g = np.asarray(gamma, dtype=float)
    if np.any(~(g >= 0)):
        raise ValueError("SNR must be non-negative")
    out = np.log1p(g) / LN2
    return float(out) if out.ndim == 0 else out


def snr_cdf(model: ChannelModel, x):
    """P(gamma <= x) for the channel's SNR."""
    x = np.asarray(x, dtype=float)
    if np.any(~(x >= 0)):
        raise ValueError("SNR threshold must be non-negative")
    return regularized_lower_gamma(model.m, x / model.scale)


def single_outage(model: ChannelModel, rho):
    """Probability that one attempt with redundancy ``rho`` fails: P(C(gamma) rho < 1)."""
    r = np.asarray(rho, dtype=float)
    if np.any(~(r > 0)):
        raise ValueError("redundancy must be positive")
    small = r < _RHO_OVERFLOW
    safe = np.where(small, 1.0, r)
    threshold = np.expm1(LN2 / safe)
    out = np.where(small, 1.0, snr_cdf(model, threshold))
    return float(out) if out.ndim == 0 else out


def _expectation(model: ChannelModel, func) -> tuple[float, float]:
    # E[func(gamma)] on a log axis: gamma = scale * e^u, t = e^u ~ Gamma(m, 1).
    m, s = model.m, model.scale
    lg = special.gammaln(m)

    def integrand(u):
        return math.exp(m * u - math.exp(u) - lg) * func(s * math.exp(u))

    lo = -(745.0 / m) * 0.9
    hi = math.log(800.0 + 40.0 * m)
    pts = sorted({0.0, min(max(-math.log(s), lo + 1.0), hi - 1.0)})
    value, err = integrate.quad(
        integrand, lo, hi, points=pts, epsabs=0.0, epsrel=1e-12, limit=1000
    )
    return value, err


@functools.lru_cache(maxsize=4096)
def ergodic_stats(model: ChannelModel) -> ErgodicStats:
    """Ergodic capacity ``c_bar`` and standard deviation ``sigma`` of C(gamma)."""
    c_bar, err_c = _expectation(model, lambda g: math.log1p(g) / LN2)
    var, err_v = _expectation(model, lambda g: (math.log1p(g) / LN2 - c_bar) ** 2)
    if not (c_bar > 0 and var > 0):
        raise ConvergenceError(f"ergodic integrals degenerate for {model}")
    if err_c > 1e-8 * c_bar or err_v > 1e-8 * var:
        raise ConvergenceError(f"ergodic integrals missed 1e-8 accuracy for {model}")
    return ErgodicStats(c_bar=c_bar, sigma=math.sqrt(var))
