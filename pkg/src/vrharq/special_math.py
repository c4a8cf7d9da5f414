"""Numeric kernels: incomplete gamma, Gaussian tail, Gauss-Laguerre rules and
lattice density convolution.

Everything here is a pure function of its arguments. Quadrature rules are
cached and returned as read-only arrays, so they can be shared freely.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import signal, special

__all__ = [
    "ConvergenceError",
    "DiscretizedDensity",
    "QuadratureRule",
    "convolve_densities",
    "gauss_jacobi_unit",
    "gauss_laguerre_rule",
    "q_function",
    "regularized_lower_gamma",
]

_EPS = 1e-16
_FPMIN = 1e-300
_MAX_ITER = 2000
_DIRECT_CONVOLUTION_LIMIT = 1024


class ConvergenceError(RuntimeError):
    """A numerical routine failed to reach its accuracy target."""


# ---------------------------------------------------------------------------
# Incomplete gamma
# ---------------------------------------------------------------------------


def _log_prefactor(a, x):
    return -x + a * np.log(x) - special.gammaln(a)


def _gamma_series(a, x):
    # P(a, x) = e^{-x} x^a / Gamma(a+1) * sum_n x^n / ((a+1)...(a+n))
    term = 1.0 / a
    total = term.copy()
    ap = a.copy()
    done = np.zeros(a.shape, dtype=bool)
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        done |= term <= total * _EPS
        if done.all():
            break
    else:
        raise ConvergenceError("incomplete gamma series did not converge")
    return total * np.exp(_log_prefactor(a, x))


def _gamma_continued_fraction(a, x):
    # Q(a, x) by modified Lentz on the Legendre continued fraction.
    b = x + 1.0 - a
    c = np.full(a.shape, 1.0 / _FPMIN)
    d = 1.0 / b
    h = d.copy()
    done = np.zeros(a.shape, dtype=bool)
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        d[np.abs(d) < _FPMIN] = _FPMIN
        c = b + an / c
        c[np.abs(c) < _FPMIN] = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        # converged entries keep iterating harmlessly; the flag is sticky
        done |= np.abs(delta - 1.0) < 4.0 * _EPS
        if done.all():
            break
    else:
        raise ConvergenceError("incomplete gamma continued fraction did not converge")
    return np.exp(_log_prefactor(a, x)) * h


def regularized_lower_gamma(m, x):
    """Regularized lower incomplete gamma ``(1/Gamma(m)) int_0^x t^(m-1) e^-t dt``.

    Accepts scalars or broadcastable arrays. Uses the power series below
    ``x = m + 1`` and the continued fraction above it.
    """
    m_arr = np.asarray(m, dtype=float)
    x_arr = np.asarray(x, dtype=float)
    if np.any(~(m_arr > 0)):
        raise ValueError("incomplete gamma requires shape m > 0")
    if np.any(~(x_arr >= 0)):
        raise ValueError("incomplete gamma requires x >= 0")
    a, xb = np.broadcast_arrays(m_arr, x_arr)
    out = np.zeros(a.shape)
    inf = np.isinf(xb)
    out[inf] = 1.0
    finite = (xb > 0) & ~inf
    series = finite & (xb < a + 1.0)
    cfrac = finite & ~series
    if series.any():
        out[series] = _gamma_series(a[series].astype(float), xb[series].astype(float))
    if cfrac.any():
        out[cfrac] = 1.0 - _gamma_continued_fraction(
            a[cfrac].astype(float), xb[cfrac].astype(float)
        )
    np.clip(out, 0.0, 1.0, out=out)
    if out.ndim == 0:
        return float(out)
    return out


def q_function(x):
    """Gaussian tail probability Q(x) = P(N(0,1) > x)."""
    out = 0.5 * special.erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))
    if np.ndim(out) == 0:
        return float(out)
    return out


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights of an ``order``-point rule (weight e^-x on [0, inf))."""

    nodes: np.ndarray
    weights: np.ndarray
    order: int

    def integrate(self, func) -> float:
        """Approximate ``int_0^inf func(x) e^-x dx``."""
        return float(np.dot(self.weights, func(self.nodes)))


def _laguerre_eval(n: int, z: float) -> tuple[float, float, float]:
    """Return L_n(z), L_{n-1}(z) and dL_n/dz via the three-term recurrence."""
    p1, p2 = 1.0, 0.0
    for j in range(1, n + 1):
        p3, p2 = p2, p1
        p1 = ((2 * j - 1 - z) * p2 - (j - 1) * p3) / j
    pp = (n * p1 - n * p2) / z
    return p1, p2, pp


@functools.lru_cache(maxsize=None)
def gauss_laguerre_rule(order: int) -> QuadratureRule:
    """Gauss-Laguerre rule of the given order (1 to 64).

    Roots are found by Newton iteration on the Laguerre recurrence, seeded
    with the classical asymptotic initial guesses.
    """
    if not isinstance(order, (int, np.integer)) or not 1 <= order <= 64:
        raise ValueError(f"unsupported Gauss-Laguerre order {order!r}; expected 1..64")
    n = int(order)
    nodes = np.zeros(n)
    weights = np.zeros(n)
    z = 0.0
    for i in range(n):
        if i == 0:
            z = 3.0 / (1.0 + 2.4 * n)
        elif i == 1:
            z += 15.0 / (1.0 + 2.5 * n)
        else:
            ai = i - 1
            z += (1.0 + 2.55 * ai) / (1.9 * ai) * (z - nodes[i - 2])
        for _ in range(100):
            p1, p2, pp = _laguerre_eval(n, z)
            z_old = z
            z = z_old - p1 / pp
            if abs(z - z_old) <= 1e-14 * max(1.0, abs(z)):
                break
        else:
            raise ConvergenceError(f"Laguerre root {i} of order {n} did not converge")
        p1, p2, pp = _laguerre_eval(n, z)
        nodes[i] = z
        weights[i] = -1.0 / (pp * n * p2)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(nodes=nodes, weights=weights, order=n)


@functools.lru_cache(maxsize=256)
def gauss_jacobi_unit(order: int, alpha: float, beta: float) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights on [0, 1] for the weight ``t**beta * (1 - t)**alpha``."""
    x, w = special.roots_jacobi(order, alpha, beta)
    t = 0.5 * (x + 1.0)
    w = w / 2.0 ** (alpha + beta + 1.0)
    t.setflags(write=False)
    w.setflags(write=False)
    return t, w


# ---------------------------------------------------------------------------
# Lattice densities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiscretizedDensity:
    """Probability masses on the lattice ``grid_origin + i * grid_step``."""

    grid_origin: float
    grid_step: float
    masses: np.ndarray

    def __post_init__(self):
        if not self.grid_step > 0:
            raise ValueError("grid_step must be positive")
        masses = np.asarray(self.masses, dtype=float)
        if masses.ndim != 1 or masses.size == 0:
            raise ValueError("masses must be a non-empty 1-D array")
        if np.any(masses < 0):
            raise ValueError("masses must be non-negative")
        if abs(masses.sum() - 1.0) > 1e-6:
            raise ValueError(f"masses sum to {masses.sum()!r}, expected 1")
        object.__setattr__(self, "masses", masses)

    @classmethod
    def point_mass(cls, at: float, grid_step: float) -> "DiscretizedDensity":
        return cls(grid_origin=at, grid_step=grid_step, masses=np.ones(1))

    @property
    def points(self) -> np.ndarray:
        return self.grid_origin + self.grid_step * np.arange(self.masses.size)

    def mean(self) -> float:
        return float(np.dot(self.points, self.masses))

    def cdf(self, x: float) -> float:
        """P(V <= x) for the lattice variable."""
        return float(self.masses[self.points <= x + 1e-12 * self.grid_step].sum())


def _lattice_convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.size + b.size <= _DIRECT_CONVOLUTION_LIMIT:
        out = np.convolve(a, b)
    else:
        # fftconvolve zero-pads to the full linear length, so no wrap-around
        out = signal.fftconvolve(a, b, mode="full")
        np.clip(out, 0.0, None, out=out)
    return out


def convolve_densities(
    a: DiscretizedDensity, b: DiscretizedDensity, max_bins: int | None = None
) -> DiscretizedDensity:
    """Distribution of the sum of two independent lattice variables.

    With ``max_bins`` the result is truncated to that many lattice points and
    the mass beyond is lumped into the last one. This is exact for events of
    the form ``{sum < threshold}`` when the threshold lies below the last
    point and the variables are non-negative.
    """
    if not math.isclose(a.grid_step, b.grid_step, rel_tol=1e-12):
        raise ValueError(
            f"grid steps differ: {a.grid_step!r} vs {b.grid_step!r}"
        )
    masses = _lattice_convolve(a.masses, b.masses)
    if max_bins is not None and masses.size > max_bins:
        tail = masses[max_bins - 1 :].sum()
        masses = masses[:max_bins].copy()
        masses[-1] = tail
    return DiscretizedDensity(
        grid_origin=a.grid_origin + b.grid_origin,
        grid_step=a.grid_step,
        masses=masses,
    )
