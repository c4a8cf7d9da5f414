"""Cumulative decoding-failure probabilities f_1..f_K of truncated HARQ.

``f[k-1]`` is the probability that the packet is still undecoded after ``k``
attempts. Three receivers are covered:

* HARQ-I keeps only the latest attempt, so failures multiply.
* HARQ-IR accumulates mutual information ``sum_l C(gamma_l) rho_l``.
* HARQ-CHASE repeats a prefix of one codeword and combines by MRC. Sorting
  the attempts by length splits the codeword into chunks, each seen through
  the sum of the SNRs of the attempts that carried it.
"""

from __future__ import annotations

import enum
import functools
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special

from .channel import LN2, ChannelModel, ergodic_stats, single_outage, snr_cdf
from .special_math import (
    ConvergenceError,
    DiscretizedDensity,
    convolve_densities,
    gauss_jacobi_unit,
    q_function,
    regularized_lower_gamma,
)

__all__ = [
    "MAX_CHASE_ATTEMPTS",
    "Method",
    "OutageProfile",
    "RedundancyPolicy",
    "Scheme",
    "chase_quadrature_order",
    "discretize_information",
    "outage_chase",
    "outage_harq_i",
    "outage_ir_bound",
    "outage_ir_exact",
    "outage_ir_gaussian",
    "outage_profile",
]

MAX_CHASE_ATTEMPTS = 4
IR_CONVERGENCE_TOL = 1e-4
_IR_MIN_BINS = 4096
_IR_MAX_BINS = 1 << 17
_IR_REFINEMENTS = 2
_CLAMP_WARN = 1e-6
CHASE_TOL = 1e-5
CHASE_MAX_NODES = 5_000_000
_CHASE_TAIL_FLOOR = 1e-18  # survival mass below this is dropped
_LOG_HALF = math.log(0.5)


class Scheme(str, enum.Enum):
    HARQ_I = "HARQ_I"
    HARQ_IR = "HARQ_IR"
    HARQ_CHASE = "HARQ_CHASE"


class Method(str, enum.Enum):
    EXACT = "EXACT"
    GAUSSIAN = "GAUSSIAN"
    BOUND = "BOUND"
    QUADRATURE = "QUADRATURE"
    CLOSED_FORM = "CLOSED_FORM"


@dataclass(frozen=True)
class RedundancyPolicy:
    """Per-attempt redundancies (channel uses per information bit)."""

    rho: tuple[float, ...]

    def __post_init__(self):
        rho = tuple(float(r) for r in np.atleast_1d(np.asarray(self.rho, dtype=float)))
        if not rho:
            raise ValueError("a policy needs at least one attempt")
        if not all(r > 0 and math.isfinite(r) for r in rho):
            raise ValueError(f"redundancies must be positive and finite, got {rho}")
        object.__setattr__(self, "rho", rho)

    @classmethod
    def fixed(cls, rho: float, K: int) -> "RedundancyPolicy":
        return cls((float(rho),) * int(K))

    @classmethod
    def from_normalized(cls, rho_prime, c_bar: float) -> "RedundancyPolicy":
        return cls(tuple(np.asarray(rho_prime, dtype=float) / c_bar))

    @property
    def K(self) -> int:
        return len(self.rho)

    @property
    def rates(self) -> np.ndarray:
        return 1.0 / np.asarray(self.rho)

    def normalized(self, c_bar: float) -> np.ndarray:
        """rho' = rho * c_bar."""
        return np.asarray(self.rho) * c_bar

    def partial_sums(self, c_bar: float) -> tuple[np.ndarray, np.ndarray]:
        """Accumulated normalized redundancy X_k and root-sum-square Y_k."""
        rp = self.normalized(c_bar)
        return np.cumsum(rp), np.sqrt(np.cumsum(rp * rp))

    def truncated(self, k: int) -> "RedundancyPolicy":
        return RedundancyPolicy(self.rho[:k])


@dataclass(frozen=True)
class OutageProfile:
    scheme: Scheme
    method: Method
    f: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "f", tuple(float(v) for v in self.f))

    @property
    def K(self) -> int:
        return len(self.f)

    @property
    def terminal(self) -> float:
        return self.f[-1]


def _clamp(values, label: str) -> tuple[float, ...]:
    arr = np.asarray(values, dtype=float)
    excess = float(np.max(np.maximum(arr - 1.0, -arr), initial=0.0))
    if excess > _CLAMP_WARN:
        warnings.warn(f"{label}: probability outside [0, 1] by {excess:.2e}", RuntimeWarning)
    return tuple(np.clip(arr, 0.0, 1.0))


# ---------------------------------------------------------------------------
# HARQ-I
# ---------------------------------------------------------------------------


def outage_harq_i(model: ChannelModel, policy: RedundancyPolicy) -> OutageProfile:
    nu = single_outage(model, np.asarray(policy.rho))
    return OutageProfile(Scheme.HARQ_I, Method.CLOSED_FORM, tuple(np.cumprod(nu)))


# ---------------------------------------------------------------------------
# HARQ-IR, lattice convolution
# ---------------------------------------------------------------------------


@functools.lru_cache(maxsize=2048)
def _cdf_bin_integrals(model: ChannelModel, rho: float, n_bins: int) -> np.ndarray:
    """int_{jh}^{(j+1)h} G(x) dx for j = 0..n_bins, G the CDF of C(gamma) * rho."""
    h = 1.0 / n_bins
    t, w = np.polynomial.legendre.leggauss(4)
    left = h * np.arange(n_bins + 1)
    x = left[:, None] + 0.5 * h * (t[None, :] + 1.0)
    with np.errstate(over="ignore"):
        snr = np.expm1(x * (LN2 / rho))
    G = snr_cdf(model, np.minimum(snr, 1e300))
    return 0.5 * h * (G @ w)


def discretize_information(model: ChannelModel, rho: float, n_bins: int) -> DiscretizedDensity:
    """Lattice version of ``v = C(gamma) * rho`` on the points ``j / n_bins``.

    Each bin's probability is split between its two end points so that the
    bin's mean is preserved (mass at point j is the second difference of the
    integrated CDF). Points ``0..n_bins`` cover [0, 1]; all mass beyond is
    lumped at point ``n_bins + 1``.
    """
    integrals = _cdf_bin_integrals(model, float(rho), int(n_bins))
    h = 1.0 / n_bins
    masses = np.empty(n_bins + 2)
    masses[0] = integrals[0] / h
    masses[1 : n_bins + 1] = np.diff(integrals) / h
    np.clip(masses[: n_bins + 1], 0.0, None, out=masses[: n_bins + 1])
    masses[n_bins + 1] = max(0.0, 1.0 - masses[: n_bins + 1].sum())
    return DiscretizedDensity(grid_origin=0.0, grid_step=h, masses=masses)


def _below_one(density: DiscretizedDensity, n_bins: int) -> float:
    # point n_bins sits exactly at 1 and represents mass on both sides of it
    p = density.masses
    return float(p[:n_bins].sum() + 0.5 * p[n_bins])


def _ir_profile_at(model: ChannelModel, rho: tuple[float, ...], n_bins: int) -> np.ndarray:
    f = np.empty(len(rho))
    acc = None
    for k, r in enumerate(rho):
        d = discretize_information(model, r, n_bins)
        acc = d if acc is None else convolve_densities(acc, d, max_bins=n_bins + 2)
        f[k] = _below_one(acc, n_bins)
    return f


def _initial_bins(model: ChannelModel, rho: tuple[float, ...]) -> int:
    c_bar = ergodic_stats(model).c_bar
    finest = min(rho) * c_bar / 512.0
    n = max(_IR_MIN_BINS, 1 << int(math.ceil(math.log2(1.0 / finest))))
    return min(n, _IR_MAX_BINS)


def outage_ir_exact(
    model: ChannelModel, policy: RedundancyPolicy, n_bins: int | None = None
) -> OutageProfile:
    """HARQ-IR failure probabilities by convolving the per-attempt laws.

    Only [0, 1] of the accumulated information matters, so the lattice spans
    that interval. The result is accepted once halving the step changes every
    ``f[k]`` by less than 1e-4; at most two further halvings are tried.
    """
    rho = policy.rho
    n = int(n_bins) if n_bins is not None else _initial_bins(model, rho)
    coarse = _ir_profile_at(model, rho, n)
    for _ in range(_IR_REFINEMENTS + 1):
        n *= 2
        fine = _ir_profile_at(model, rho, n)
        if np.max(np.abs(fine - coarse)) < IR_CONVERGENCE_TOL:
            return OutageProfile(Scheme.HARQ_IR, Method.EXACT, _clamp(fine, "exact IR"))
        coarse = fine
    raise ConvergenceError(
        f"exact IR outage not resolution-converged for {model}, rho={rho}"
    )


# ---------------------------------------------------------------------------
# HARQ-IR, Gaussian approximation and its bound
# ---------------------------------------------------------------------------


def outage_ir_gaussian(model: ChannelModel, policy: RedundancyPolicy) -> OutageProfile:
    stats = ergodic_stats(model)
    X, Y = policy.partial_sums(stats.c_bar)
    f = q_function(stats.xi * (X - 1.0) / Y)
    return OutageProfile(Scheme.HARQ_IR, Method.GAUSSIAN, tuple(np.atleast_1d(f)))


def outage_ir_bound(model: ChannelModel, policy: RedundancyPolicy) -> OutageProfile:
    """``Q(xi (1 - 1/X_k))``: the Gaussian form with Y_k replaced by X_k."""
    stats = ergodic_stats(model)
    X, _ = policy.partial_sums(stats.c_bar)
    f = q_function(stats.xi * (1.0 - 1.0 / X))
    return OutageProfile(Scheme.HARQ_IR, Method.BOUND, tuple(np.atleast_1d(f)))


# ---------------------------------------------------------------------------
# HARQ-CHASE
# ---------------------------------------------------------------------------


def chase_quadrature_order(m: float) -> int:
    """Points per nesting level: 10 for m >= 1, 40 below (m = 1/2)."""
    return 10 if m >= 1.0 else 40


def _chunks(rho_first_k, collapse: bool) -> tuple[np.ndarray, np.ndarray]:
    """Sorted distinct redundancies and how many attempts share each."""
    r = np.sort(np.asarray(rho_first_k, dtype=float))
    if not collapse:
        return r, np.ones(r.size, dtype=int)
    values, counts = np.unique(r, return_counts=True)
    return values, counts


def _chase_failure(model: ChannelModel, rho_first_k, order: int, collapse: bool) -> float:
    """P(sum_j d_j C(T_j) < 1) for one k at a fixed number of points per level.

    Attempts sharing a redundancy are merged: their SNR sum is gamma with
    shape ``count * m``. With sorted distinct lengths r_1 < ... < r_J, chunk
    j has length d_j = r_j - r_{j-1} and SNR T_j = G_j + ... + G_J. The
    outermost variable is G_J; the innermost one, G_1, is integrated in
    closed form through the gamma CDF. Every other level has a finite upper
    limit z, the largest G_j for which failure is still possible with
    G_1 = ... = G_{j-1} = 0.

    A level is integrated in probability space, u = P(a, g / theta) on
    [0, U] with U = P(a, z / theta), and then u = U s**a so that g is
    smooth in s near the origin; the Jacobian s**(a-1) goes into a
    Gauss-Jacobi weight. When U > 1/2 the rule covers [0, 1/2] only and the
    upper tail is integrated in t = log Q(a, g / theta) with Gauss-Legendre,
    so rare large SNRs (where successes live when f is close to 1) get
    nodes of their own.
    """
    values, counts = _chunks(rho_first_k, collapse)
    shapes = counts * model.m
    d = np.diff(values, prepend=0.0)
    theta = model.scale
    J = values.size
    x_leg, w_leg = gauss_jacobi_unit(order, 0.0, 0.0)

    weight = np.ones(1)
    t_above = np.zeros(1)  # T_{j+1}, SNR units
    info_above = np.zeros(1)  # sum_{i>j} d_i C(T_i)
    for j in range(J - 1, 0, -1):
        with np.errstate(over="ignore"):
            z = np.expm1((1.0 - info_above) * (LN2 / values[j])) - t_above
        z = np.clip(z, 0.0, 1e300)
        a = float(shapes[j])
        upper = np.atleast_1d(regularized_lower_gamma(a, z / theta))
        head = np.minimum(upper, 0.5)
        s, w = gauss_jacobi_unit(order, 0.0, a - 1.0)
        g_head = theta * special.gammaincinv(a, head[:, None] * s[None, :] ** a)
        w_head = head[:, None] * (a * w)[None, :]
        # tail: v = Q(a, g/theta) runs from Q(a, z/theta) up to 1/2
        has_tail = upper > 0.5
        lo = np.log(np.maximum(special.gammaincc(a, z / theta), _CHASE_TAIL_FLOOR))
        span = np.where(has_tail, _LOG_HALF - lo, 0.0)
        v = np.exp(lo[:, None] + span[:, None] * x_leg[None, :])
        g_tail = theta * special.gammainccinv(a, np.where(has_tail[:, None], v, 0.5))
        w_tail = span[:, None] * w_leg[None, :] * v
        g = np.minimum(np.hstack([g_head, g_tail]), z[:, None])
        weight = (weight[:, None] * np.hstack([w_head, w_tail])).ravel()
        t_new = t_above[:, None] + g
        info_above = (info_above[:, None] + d[j] * np.log1p(t_new) / LN2).ravel()
        t_above = t_new.ravel()
        live = weight > 0
        weight, t_above, info_above = weight[live], t_above[live], info_above[live]

    with np.errstate(over="ignore"):
        z1 = np.expm1((1.0 - info_above) * (LN2 / values[0])) - t_above
    z1 = np.clip(z1, 0.0, 1e300)
    inner = regularized_lower_gamma(shapes[0], z1 / theta)
    return float(np.dot(weight, np.atleast_1d(inner)))


def _chase_failure_adaptive(model, rho_first_k, order, collapse, tol) -> float:
    # Double the per-level order until two successive values agree to tol
    # (relative to min(f, 1 - f) once that drops below 1e-2).
    levels = len(_chunks(rho_first_k, collapse)[0]) - 1
    prev = _chase_failure(model, rho_first_k, order, collapse)
    if levels == 0:  # single chunk: closed form
        return prev
    while True:
        order *= 2
        # head and tail rules give up to 2 * order nodes per level
        if (2 * order) ** levels > CHASE_MAX_NODES:
            warnings.warn(
                f"Chase quadrature stopped at {order // 2} points per level "
                f"(last change above {tol:g})",
                RuntimeWarning,
                stacklevel=3,
            )
            return prev
        cur = _chase_failure(model, rho_first_k, order, collapse)
        # near 0 or 1 the tolerance follows the smaller of f and 1 - f
        scale = min(1.0, 100.0 * min(cur, 1.0 - cur))
        if abs(cur - prev) < max(tol * scale, 1e-10):
            return cur
        prev = cur


def outage_chase(
    model: ChannelModel,
    policy: RedundancyPolicy,
    order: int | None = None,
    collapse: bool = True,
    tol: float | None = CHASE_TOL,
) -> OutageProfile:
    """HARQ-CHASE failure probabilities by nested quadrature (K <= 4).

    ``order`` is the starting number of points per nesting level (10 for
    m >= 1, 40 below). With ``tol`` set the order is doubled until the
    result moves by less than ``tol`` (scaled down when f is within 1e-2 of
    0 or 1); ``tol=None`` evaluates once at
    ``order``, which is what the optimizers use inside their loops.
    ``collapse=False`` keeps equal-length attempts as separate integration
    dimensions; the default merges them, which makes the fixed-rate case a
    single gamma CDF.
    """
    if policy.K > MAX_CHASE_ATTEMPTS:
        raise ValueError(
            f"Chase quadrature supports at most {MAX_CHASE_ATTEMPTS} attempts, got {policy.K}"
        )
    order = chase_quadrature_order(model.m) if order is None else int(order)
    if order < 1:
        raise ValueError("quadrature order must be positive")
    f = []
    for k in range(1, policy.K + 1):
        if tol is None:
            f.append(_chase_failure(model, policy.rho[:k], order, collapse))
        else:
            f.append(_chase_failure_adaptive(model, policy.rho[:k], order, collapse, tol))
    one_chunk = collapse and len(set(policy.rho)) == 1
    method = Method.CLOSED_FORM if one_chunk else Method.QUADRATURE
    return OutageProfile(Scheme.HARQ_CHASE, method, _clamp(f, "Chase quadrature"))


# ---------------------------------------------------------------------------


def outage_profile(
    model: ChannelModel, policy: RedundancyPolicy, scheme: Scheme, method: Method | None = None
) -> OutageProfile:
    """Dispatch to the outage routine for ``scheme``; exact methods by default."""
    scheme = Scheme(scheme)
    if scheme is Scheme.HARQ_I:
        return outage_harq_i(model, policy)
    if scheme is Scheme.HARQ_CHASE:
        return outage_chase(model, policy)
    method = Method.EXACT if method is None else Method(method)
    if method is Method.EXACT:
        return outage_ir_exact(model, policy)
    if method is Method.GAUSSIAN:
        return outage_ir_gaussian(model, policy)
    if method is Method.BOUND:
        return outage_ir_bound(model, policy)
    raise ValueError(f"method {method} does not apply to HARQ-IR")
