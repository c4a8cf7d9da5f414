"""Throughput-maximizing redundancy sequences.

* Fixed rate (all attempts equal): log grid plus golden-section search on
  the exact throughput.
* Variable-rate HARQ-IR: dynamic programming on a surrogate whose outage
  after k attempts depends only on the accumulated normalized redundancy
  X_k, ``f_k(X) = Q(xi sqrt(k) (1 - 1/X))``.
* Variable-rate HARQ-CHASE (and HARQ-I, for checking that variable rates
  never help there): multi-start Nelder-Mead in log-redundancy.

Redundancies handled internally are normalized, ``rho' = rho * c_bar``,
unless a name says otherwise.
"""

from __future__ import annotations

import enum
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import interpolate, optimize

from .channel import ChannelModel, ergodic_stats
from .outage import (
    MAX_CHASE_ATTEMPTS,
    RedundancyPolicy,
    Scheme,
    outage_chase,
    outage_harq_i,
    outage_ir_exact,
)
from .special_math import q_function
from .throughput import ThroughputReport, _eta, evaluate

__all__ = [
    "DpTables",
    "OptimizationResult",
    "Surrogate",
    "build_dp_tables",
    "dp_surrogate_eta",
    "exact_eta",
    "optimize_fixed_rate",
    "optimize_vr",
    "optimize_vr_chase",
    "optimize_vr_ir",
]

log = logging.getLogger(__name__)

DEFAULT_GRID_POINTS = 100
GRID_WARN_TOL = 1e-3
FR_GRID = np.geomspace(0.02, 20.0, 48)  # normalized redundancy rho'
FR_RTOL = 1e-4
MAX_EVALS = 500
RHO_FLOOR = 1e-6
RHO_PRIME_BOX = (1e-3, 100.0)  # search limits on rho' for local search
_X_MIN = 1e-3


class GridWarning(UserWarning):
    """The DP grid looks too coarse for the requested accuracy."""


@dataclass(frozen=True)
class OptimizationResult:
    policy: RedundancyPolicy
    predicted_eta_bound: float
    reported: ThroughputReport
    evaluations: int
    diagnostics: tuple[str, ...] = field(default=())

    @property
    def eta(self) -> float:
        return self.reported.eta


# ---------------------------------------------------------------------------
# Exact objective
# ---------------------------------------------------------------------------


def exact_eta(model: ChannelModel, scheme: Scheme, rho, fast: bool = True) -> float:
    """Exact-method throughput of the policy ``rho`` (not normalized).

    ``fast`` evaluates Chase at its base quadrature order, which is what the
    search loops use; the final report always goes through :func:`evaluate`.
    """
    policy = RedundancyPolicy(tuple(rho))
    scheme = Scheme(scheme)
    if scheme is Scheme.HARQ_I:
        profile = outage_harq_i(model, policy)
    elif scheme is Scheme.HARQ_IR:
        profile = outage_ir_exact(model, policy)
    else:
        profile = outage_chase(model, policy, tol=None if fast else 1e-5)
    return _eta(np.asarray(policy.rho), np.asarray(profile.f))


def _check_chase(scheme: Scheme, K: int) -> None:
    if scheme is Scheme.HARQ_CHASE and K > MAX_CHASE_ATTEMPTS:
        raise ValueError(
            f"HARQ-CHASE optimization supports K <= {MAX_CHASE_ATTEMPTS}, got K={K}"
        )


def _check_k(K) -> int:
    if int(K) != K or K < 1:
        raise ValueError(f"K must be a positive integer, got {K!r}")
    return int(K)


# ---------------------------------------------------------------------------
# Fixed rate
# ---------------------------------------------------------------------------


def optimize_fixed_rate(model: ChannelModel, scheme: Scheme, K: int) -> OptimizationResult:
    """Best equal-redundancy policy for ``scheme`` with ``K`` attempts."""
    K = _check_k(K)
    scheme = Scheme(scheme)
    _check_chase(scheme, K)
    c_bar = ergodic_stats(model).c_bar
    evals = 0

    def neg_eta(rho):
        nonlocal evals
        evals += 1
        return -exact_eta(model, scheme, (rho,) * K)

    grid = FR_GRID / c_bar
    values = np.array([neg_eta(r) for r in grid])
    i = int(np.argmin(values))
    if 0 < i < grid.size - 1:
        res = optimize.minimize_scalar(
            neg_eta,
            bracket=(grid[i - 1], grid[i], grid[i + 1]),
            method="golden",
            options={"xtol": FR_RTOL / 2.0},
        )
        rho = float(res.x) if res.fun <= values[i] else float(grid[i])
        diagnostics: tuple[str, ...] = ()
    else:
        rho = float(grid[i])
        diagnostics = (f"fixed-rate optimum on the search-grid edge (rho'={FR_GRID[i]:.3g})",)
        log.warning(diagnostics[0])
    policy = RedundancyPolicy.fixed(rho, K)
    return OptimizationResult(
        policy=policy,
        predicted_eta_bound=math.nan,
        reported=evaluate(model, policy, scheme),
        evaluations=evals,
        diagnostics=diagnostics,
    )


# ---------------------------------------------------------------------------
# Dynamic programming for VR-HARQ-IR
# ---------------------------------------------------------------------------


class Surrogate(str, enum.Enum):
    """Outage surrogate driving the DP.

    ``BOUND`` is ``Q(xi (1 - 1/X))``, the Gaussian approximation with
    ``Y_k`` replaced by its upper value ``X_k``. ``SQRT_K`` is
    ``Q(xi sqrt(k) (1 - 1/X))``, the Gaussian approximation for equal
    splits; it is optimistic for unequal policies.
    """

    BOUND = "BOUND"
    SQRT_K = "SQRT_K"


def surrogate_outage(xi: float, k: int, x, surrogate: Surrogate = Surrogate.BOUND):
    """Surrogate outage after ``k`` attempts at accumulated ``X``; 1 at X = 0."""
    x = np.asarray(x, dtype=float)
    scale = xi * (math.sqrt(k) if Surrogate(surrogate) is Surrogate.SQRT_K else 1.0)
    with np.errstate(divide="ignore"):
        arg = scale * (1.0 - 1.0 / x)
    return q_function(np.where(x > 0, arg, -np.inf))


def dp_surrogate_eta(xi: float, rho_prime, surrogate: Surrogate = Surrogate.BOUND) -> float:
    """Surrogate throughput in units of c_bar.

    (1 - f_K(X_K)) / (rho'_1 + sum_{k>=2} rho'_k f_{k-1}(X_{k-1})).
    """
    rp = np.asarray(rho_prime, dtype=float)
    X = np.cumsum(rp)
    f = np.array([surrogate_outage(xi, k, x, surrogate) for k, x in enumerate(X, start=1)])
    return _eta(rp, f)


@dataclass(frozen=True)
class DpTables:
    """Value function ``v[k-1][g] = V_k(x_grid[g])`` and its minimizers.

    ``arg_rho[k-1][g]`` is the normalized redundancy of attempt k chosen at
    accumulated redundancy ``x_grid[g]``; for k = 1 it is X itself.
    """

    x_grid: np.ndarray
    v: np.ndarray
    arg_rho: np.ndarray
    xi: float
    surrogate: Surrogate = Surrogate.BOUND

    @property
    def K(self) -> int:
        return self.v.shape[0]

    def surrogate_outage(self, k: int, x):
        return surrogate_outage(self.xi, k, x, self.surrogate)

    def value(self, k: int, x):
        """V_k at arbitrary ``x`` (shape-preserving cubic through the nodes, V_k(0) = 0)."""
        return _interpolant(self.x_grid, self.v[k - 1])(x)


def _interpolant(x_grid, v_row):
    return interpolate.PchipInterpolator(
        np.concatenate(([0.0], x_grid)), np.concatenate(([0.0], v_row)), extrapolate=True
    )


def _x_grid(K: int, grid_points: int) -> np.ndarray:
    """Nodes over (0, K]: log-spaced up to 1/2, dense around X = 1, linear above 2.

    The surrogate switches from 1 to 0 around X = 1 over a width of order
    1/xi, which is narrow at high SNR, so half of the non-log nodes go to
    [1/2, 2].
    """
    if K == 1:
        return np.geomspace(_X_MIN, 1.0, grid_points)
    n_log = max(grid_points // 5, 10)
    low = np.geomspace(_X_MIN, 0.5, n_log + 1)[:-1]
    if K <= 2:
        return np.concatenate((low, np.linspace(0.5, float(K), grid_points - n_log)))
    n_mid = (grid_points - n_log) // 2
    mid = np.linspace(0.5, 2.0, n_mid, endpoint=False)
    high = np.linspace(2.0, float(K), grid_points - n_log - n_mid)
    return np.concatenate((low, mid, high))


def _golden_min(fun, lo, hi, iters: int = 60):
    """Vectorized golden-section search; returns (argmin, min) per entry."""
    r = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo.astype(float).copy(), hi.astype(float).copy()
    for _ in range(iters):
        c = b - r * (b - a)
        d = a + r * (b - a)
        left = fun(c) <= fun(d)
        b = np.where(left, d, b)
        a = np.where(left, a, c)
    x = 0.5 * (a + b)
    return x, fun(x)


def _inner_min(V, f, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """min over y in [0, X] of V(y) + (X - y) f(y), per entry of ``X``.

    Returns (value, rho = X - y). Candidates are the previous layer's nodes
    at or below X and X itself; the best is polished by golden-section
    search between its neighbours. Ties go to the smallest rho.
    """
    nodes = V.x
    cand = np.minimum(nodes[None, :], X[:, None])
    cand = np.concatenate((cand, X[:, None]), axis=1)  # ascending per row
    h = V(cand) + (X[:, None] - cand) * f(cand)
    last = cand.shape[1] - 1
    j = last - np.argmin(h[:, ::-1], axis=1)
    rows = np.arange(X.size)
    best_y, best_h = cand[rows, j], h[rows, j]
    lo = cand[rows, np.maximum(j - 1, 0)]
    hi = cand[rows, np.minimum(j + 1, last)]
    y_star, h_star = _golden_min(lambda y: V(y) + (X - y) * f(y), lo, hi)
    better = h_star < best_h
    y = np.where(better, y_star, best_y)
    return np.where(better, h_star, best_h), X - y


def build_dp_tables(
    model: ChannelModel,
    K: int,
    grid_points: int = DEFAULT_GRID_POINTS,
    surrogate: Surrogate = Surrogate.BOUND,
) -> DpTables:
    """Tabulate V_1..V_K on a grid over (0, K].

    V_1(X) = X and V_k(X) = min_{0<=rho<=X} V_{k-1}(X - rho) + rho f_{k-1}(X - rho).
    """
    K = _check_k(K)
    if not 50 <= int(grid_points) <= 400:
        raise ValueError(f"grid_points must be in [50, 400], got {grid_points!r}")
    surrogate = Surrogate(surrogate)
    xi = ergodic_stats(model).xi
    x = _x_grid(K, int(grid_points))
    v = np.empty((K, x.size))
    arg = np.empty((K, x.size))
    v[0] = x
    arg[0] = x
    for k in range(2, K + 1):
        V = _interpolant(x, v[k - 2])
        v[k - 1], arg[k - 1] = _inner_min(V, lambda y: surrogate_outage(xi, k - 1, y, surrogate), x)
        if np.any(np.abs(np.diff(v[k - 1])) > np.diff(x) + 1e-9):
            log.warning("V_%d changes faster than its unit slope bound on the grid", k)
    return DpTables(x_grid=x, v=v, arg_rho=arg, xi=xi, surrogate=surrogate)


def _best_x(tables: DpTables) -> float:
    """Maximize (1 - f_K(X)) / V_K(X): grid scan, then golden-section polish."""
    K = tables.K
    x = tables.x_grid
    V = _interpolant(x, tables.v[K - 1])

    def neg_obj(X):
        return -(1.0 - tables.surrogate_outage(K, X)) / V(X)

    vals = neg_obj(x)
    i = int(np.argmin(vals))  # first hit: smallest X wins ties
    lo, hi = x[max(i - 1, 0)], x[min(i + 1, x.size - 1)]
    x_star, v_star = _golden_min(neg_obj, np.array([lo]), np.array([hi]))
    return float(x_star[0]) if v_star[0] < vals[i] else float(x[i])


def backtrack(tables: DpTables, x_total: float) -> np.ndarray:
    """Recover rho'_1..rho'_K from X_K = ``x_total`` by re-solving each inner step."""
    K = tables.K
    rp = np.empty(K)
    X = float(x_total)
    for k in range(K, 1, -1):
        V = _interpolant(tables.x_grid, tables.v[k - 2])
        _, rho = _inner_min(V, lambda y, k=k: tables.surrogate_outage(k - 1, y), np.array([X]))
        rp[k - 1] = rho[0]
        X -= rho[0]
    rp[0] = X
    floor = RHO_FLOOR * x_total
    if np.any(rp < floor):
        rp = np.maximum(rp, floor)
        rp *= x_total / rp.sum()
    return rp


def _solve_dp(model, K, grid_points, surrogate):
    tables = build_dp_tables(model, K, grid_points, surrogate)
    rp = backtrack(tables, _best_x(tables))
    return rp, dp_surrogate_eta(tables.xi, rp, surrogate)


def optimize_vr_ir(
    model: ChannelModel,
    K: int,
    grid_points: int = DEFAULT_GRID_POINTS,
    check_grid: bool = True,
    surrogate: Surrogate = Surrogate.BOUND,
    refine: bool = False,
    max_evals: int = MAX_EVALS,
) -> OptimizationResult:
    """VR-HARQ-IR policy from the DP surrogate, reported with exact outage.

    ``predicted_eta_bound`` is the surrogate throughput of the DP policy.
    ``refine`` continues with a Nelder-Mead search on the exact throughput
    started from the DP policy. With ``check_grid`` the DP is repeated on twice as many points and a
    :class:`GridWarning` is issued if the surrogate optimum moves by more
    than 1e-3 (in units of c_bar).
    """
    K = _check_k(K)
    if K == 1:
        return optimize_fixed_rate(model, Scheme.HARQ_IR, 1)
    stats = ergodic_stats(model)
    rp, eta_bound = _solve_dp(model, K, grid_points, surrogate)
    diagnostics = []
    if check_grid and 2 * grid_points <= 400:
        _, eta_fine = _solve_dp(model, K, 2 * grid_points, surrogate)
        shift = abs(eta_fine - eta_bound) * stats.c_bar
        if shift > GRID_WARN_TOL:
            msg = f"DP optimum moved by {shift:.2e} when the grid was doubled"
            warnings.warn(msg, GridWarning, stacklevel=2)
            diagnostics.append(msg)
    if np.any(rp >= 1.0):
        msg = "recovered rho' >= 1 for some attempt (rate below ergodic capacity)"
        log.info(msg)
        diagnostics.append(msg)
    policy = RedundancyPolicy.from_normalized(rp, stats.c_bar)
    evals = 0
    if refine:
        def neg_eta(log_rho):
            return _guarded_neg_eta(model, Scheme.HARQ_IR, log_rho, stats.c_bar)

        res = _local_search(neg_eta, np.log(np.asarray(policy.rho)), max_evals)
        evals = int(res.nfev)
        if not res.success:
            diagnostics.append(f"refinement: {res.message}")
        if res.fun < neg_eta(np.log(np.asarray(policy.rho))):
            policy = RedundancyPolicy(tuple(np.exp(res.x)))
    return OptimizationResult(
        policy=policy,
        predicted_eta_bound=eta_bound * stats.c_bar,
        reported=evaluate(model, policy, Scheme.HARQ_IR),
        evaluations=evals,
        diagnostics=tuple(diagnostics),
    )


# ---------------------------------------------------------------------------
# Multi-start local search
# ---------------------------------------------------------------------------


def _guarded_neg_eta(model, scheme, log_rho, c_bar) -> float:
    # outside the box the objective is flat at eta = 0, the worst value
    rp = np.exp(log_rho) * c_bar
    if not np.all((rp >= RHO_PRIME_BOX[0]) & (rp <= RHO_PRIME_BOX[1])):
        return 0.0
    return -exact_eta(model, scheme, np.exp(log_rho))


def _local_search(neg_eta, log_rho0: np.ndarray, max_evals: int):
    n = log_rho0.size
    simplex = np.vstack([log_rho0] + [log_rho0 + 0.25 * np.eye(n)[i] for i in range(n)])
    return optimize.minimize(
        neg_eta,
        log_rho0,
        method="Nelder-Mead",
        options={
            "initial_simplex": simplex,
            "maxfev": max_evals,
            "xatol": 1e-4,
            "fatol": 1e-9,
        },
    )


def optimize_vr(
    model: ChannelModel,
    scheme: Scheme,
    K: int,
    starts: int = 4,
    seed: int = 0,
    max_evals: int = MAX_EVALS,
    extra_starts=(),
) -> OptimizationResult:
    """Multi-start Nelder-Mead on log(rho) maximizing the exact throughput.

    Starts: the fixed-rate optimum, any ``extra_starts`` (policies in
    channel uses per bit), then ``starts`` random policies with rho'
    log-uniform on [0.1, 3]. The best local optimum wins; ties go to the
    lexicographically smaller policy.
    """
    K = _check_k(K)
    scheme = Scheme(scheme)
    _check_chase(scheme, K)
    fr = optimize_fixed_rate(model, scheme, K)
    if K == 1:
        return fr
    c_bar = ergodic_stats(model).c_bar
    rng = np.random.default_rng(seed)
    initial = [np.log(np.asarray(fr.policy.rho))]
    initial += [np.log(np.asarray(p, dtype=float)) for p in extra_starts]
    initial += [np.log(np.exp(rng.uniform(math.log(0.1), math.log(3.0), K)) / c_bar) for _ in range(starts)]

    evals = fr.evaluations

    def neg_eta(log_rho):
        nonlocal evals
        evals += 1
        return _guarded_neg_eta(model, scheme, log_rho, c_bar)

    best_key, best_x = None, None
    diagnostics = []
    for s, x0 in enumerate(initial):
        res = _local_search(neg_eta, x0, max_evals)
        if not res.success:
            diagnostics.append(f"start {s}: {res.message}")
        key = (float(res.fun), tuple(np.exp(res.x)))
        if best_key is None or key < best_key:
            best_key, best_x = key, res.x
    # the fixed-rate point itself is always a candidate
    fr_key = (-exact_eta(model, scheme, fr.policy.rho), fr.policy.rho)
    if fr_key <= best_key:
        best_x = np.log(np.asarray(fr.policy.rho))
    policy = RedundancyPolicy(tuple(np.exp(best_x)))
    return OptimizationResult(
        policy=policy,
        predicted_eta_bound=math.nan,
        reported=evaluate(model, policy, scheme),
        evaluations=evals,
        diagnostics=tuple(diagnostics),
    )


def optimize_vr_chase(
    model: ChannelModel, K: int, starts: int = 4, seed: int = 0, max_evals: int = MAX_EVALS
) -> OptimizationResult:
    """VR-HARQ-CHASE: multi-start search seeded with the FR and VR-IR solutions."""
    K = _check_k(K)
    _check_chase(Scheme.HARQ_CHASE, K)
    extra = ()
    if K > 1:
        extra = (optimize_vr_ir(model, K, check_grid=False).policy.rho,)
    return optimize_vr(
        model, Scheme.HARQ_CHASE, K, starts=starts, seed=seed, max_evals=max_evals, extra_starts=extra
    )
