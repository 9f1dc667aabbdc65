"""Neutral Wright-Fisher transition densities.

Two independent representations are kept:

* the spectral (Jacobi polynomial) expansion, which converges fast for large t;
* the Beta mixture over the number of ancestral lineages, which converges fast
  for small t.

`transition_density` picks one by comparing t with `SPECTRAL_CROSSOVER`.
All functions accept scalar or array `y` and return the same shape.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import mpmath
import numpy as np
from scipy import special

from .coalescent import lineage_tail_bound, q_vector
from .orthopoly import MutationPair, jacobi_column_mp, jacobi_table, spectral_coefficient

__all__ = [
    "SPECTRAL_CROSSOVER",
    "DensityQuery",
    "BetaMixture",
    "Bounded",
    "beta_bound",
    "density_spectral",
    "density_kimura",
    "density_mixture",
    "mixture_components",
    "transition_density",
    "symmetric_kernel",
    "g_series",
    "g_theta_series",
    "yaglom_density",
    "htransform_density_check",
]

# chosen so that both paths need fewer than ~60 terms on the tested grids
SPECTRAL_CROSSOVER = 0.5


@dataclass(frozen=True)
class DensityQuery:
    x: float
    y: object
    t: float
    theta: MutationPair

    def __post_init__(self):
        if not 0.0 <= self.x <= 1.0:
            raise ValueError(f"start frequency must lie in [0, 1], got {self.x}")
        if not self.t > 0:
            raise ValueError(f"time must be positive, got {self.t}")
        y = np.asarray(self.y, dtype=float)
        if np.any((y <= 0) | (y >= 1)):
            raise ValueError("densities are evaluated at interior points 0 < y < 1")


class Bounded(NamedTuple):
    value: object
    bound: float


@dataclass(frozen=True)
class BetaMixture:
    """Sum of weight * Beta(a, b) densities with a bound on the dropped mass."""

    weights: np.ndarray
    a: np.ndarray
    b: np.ndarray
    tail_bound: float = 0.0

    def __post_init__(self):
        if np.any(self.weights < 0):
            raise ValueError("mixture weights must be nonnegative")
        if np.any(self.a <= 0) or np.any(self.b <= 0):
            raise ValueError("Beta parameters must be positive")

    @property
    def total_mass(self) -> float:
        return float(math.fsum(self.weights))

    def _log_sum(self, y, shift_a: float, shift_b: float) -> np.ndarray:
        """sum_i w_i y^{a_i - shift_a} (1-y)^{b_i - shift_b} / B(a_i, b_i), chunked over y."""
        y = np.asarray(y, dtype=float)
        flat = y.reshape(-1)
        out = np.zeros(flat.shape)
        if len(self.weights) == 0:
            return out.reshape(y.shape)
        base = (np.log(self.weights) - special.betaln(self.a, self.b))[:, None]
        chunk = max(1, 2_000_000 // len(self.weights))
        for i in range(0, flat.size, chunk):
            part = flat[None, i : i + chunk]
            logk = base + special.xlogy(self.a[:, None] - shift_a, part) + special.xlog1py(self.b[:, None] - shift_b, -part)
            out[i : i + chunk] = np.exp(logk).sum(axis=0)
        return out.reshape(y.shape)

    def pdf(self, y) -> np.ndarray:
        return self._log_sum(y, 1.0, 1.0)

    def kernel(self, y, theta: MutationPair) -> np.ndarray:
        """pdf(y) divided by y^{theta1-1}(1-y)^{theta2-1}; finite at y = 0 and 1."""
        return self._log_sum(y, theta.theta1, theta.theta2)

    def mean(self) -> float:
        return float(np.sum(self.weights * self.a / (self.a + self.b)))


def beta_bound(a, b, y):
    """Upper bound on the Beta(a, b) density at interior y, valid for all a, b > 0."""
    y = np.asarray(y, dtype=float)
    return 1.3 * (np.asarray(a) + np.asarray(b) + 1) / (y * (1 - y))


def _shape(value, y):
    return float(value) if np.ndim(y) == 0 else value


def _jacobi_sup(n: int, a: float, b: float) -> float:
    """Bound on max |P_n^{(a,b)}| over [-1, 1]."""
    q = max(a, b, 0.0)
    return math.exp(math.lgamma(n + q + 1) - math.lgamma(n + 1) - math.lgamma(q + 1))


def _spectral_term_bound(n: int, theta: MutationPair, t: float) -> float:
    a, b = theta.theta2 - 1, theta.theta1 - 1
    return (
        math.exp(-0.5 * n * (n + theta.theta - 1) * t)
        * spectral_coefficient(n, theta.theta1, theta.theta2)
        * _jacobi_sup(n, a, b) ** 2
    )


def _spectral_tail(theta: MutationPair, t: float, nmax: int) -> float:
    total = 0.0
    n = nmax + 1
    while True:
        term = _spectral_term_bound(n, theta, t)
        total += term
        if term < 1e-30 * max(total, 1e-300) or term == 0.0:
            return total
        n += 1


@lru_cache(maxsize=4096)
def spectral_truncation(theta: MutationPair, t: float, tol: float = 1e-14) -> int:
    """Smallest truncation whose coefficient tail bound falls below tol."""
    n = max(theta.start_index, 1)
    while _spectral_tail(theta, t, n) > tol:
        n += 1
    return n


def _spectral_kernel(theta: MutationPair, t: float, x: float, y: np.ndarray, truncation: int) -> np.ndarray:
    start = theta.start_index
    if truncation < start:
        raise ValueError(f"truncation must be at least {start}")
    a, b = theta.theta2 - 1, theta.theta1 - 1
    px = jacobi_table(truncation, a, b, 2 * x - 1)
    py = jacobi_table(truncation, a, b, 2 * y - 1)
    total = np.zeros(y.shape)
    magnitude = np.zeros(y.shape)
    for n in range(start, truncation + 1):
        coef = math.exp(-0.5 * n * (n + theta.theta - 1) * t) * spectral_coefficient(n, theta.theta1, theta.theta2)
        term = coef * px[n] * py[n]
        total = total + term
        magnitude = magnitude + np.abs(term)
    # where cancellation ate most of the digits, resum in extended precision
    tail = _spectral_tail(theta, t, truncation)
    lossy = (np.abs(total) < 1e-5 * magnitude) | (np.abs(total) * 1e-10 < tail)
    if np.any(lossy):
        flat_y = y.reshape(-1)
        flat_total = total.reshape(-1)
        for i in np.flatnonzero(lossy.reshape(-1)):
            flat_total[i] = _spectral_sum_mp(theta, t, x, float(flat_y[i]), start, truncation)
        total = flat_total.reshape(y.shape)
    return total


def _weight(theta: MutationPair, y: np.ndarray) -> np.ndarray:
    return np.exp(special.xlogy(theta.theta1 - 1, y) + special.xlog1py(theta.theta2 - 1, -y))


def density_spectral(q: DensityQuery, truncation: int | None = None, with_bound: bool = False):
    """Jacobi polynomial expansion of f(x, y; t).

    The reported bound multiplies the coefficient tail by the weight
    y^{theta1-1}(1-y)^{theta2-1}.
    """
    theta = q.theta
    if truncation is None:
        truncation = spectral_truncation(theta, q.t)
    y = np.asarray(q.y, dtype=float)
    weight = _weight(theta, y)
    value = weight * _spectral_kernel(theta, q.t, q.x, y, truncation)
    bound = float(np.max(weight)) * _spectral_tail(theta, q.t, truncation)
    if bound > 1e-6:
        warnings.warn(f"spectral truncation at {truncation} leaves error bound {bound:.3g}", RuntimeWarning)
    value = _shape(value, q.y)
    return Bounded(value, bound) if with_bound else value


def symmetric_kernel(x: float, y, t: float, theta: MutationPair):
    """K(x, y; t) = f(x, y; t) / (y^{theta1-1} (1-y)^{theta2-1}), symmetric in x and y.

    Finite on the closed square when both mutation rates are positive, which is
    what makes boundary endpoints usable in bridge formulas.
    """
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    y = np.asarray(y, dtype=float)
    if np.any((y < 0) | (y > 1)):
        raise ValueError("y must lie in [0, 1]")
    if t >= SPECTRAL_CROSSOVER:
        out = _spectral_kernel(theta, t, x, y, spectral_truncation(theta, t))
    else:
        out = mixture_components(x, t, theta).kernel(y, theta)
    return _shape(out, y)


def _spectral_sum_mp(theta: MutationPair, t: float, x: float, y: float, start: int, truncation: int) -> float:
    """Bracketed spectral sum at one point, accurate relative to its own size."""
    a, b = theta.theta2 - 1, theta.theta1 - 1
    dps = 40
    while True:
        with mpmath.workdps(dps):
            px = jacobi_column_mp(truncation, a, b, 2 * mpmath.mpf(x) - 1)
            py = jacobi_column_mp(truncation, a, b, 2 * mpmath.mpf(y) - 1)
            total = mpmath.mpf(0)
            magnitude = mpmath.mpf(0)
            for n in range(start, truncation + 1):
                coef = mpmath.exp(-n * (n + mpmath.mpf(theta.theta) - 1) * mpmath.mpf(t) / 2) * _coefficient_mp(
                    n, theta
                )
                term = coef * px[n] * py[n]
                total += term
                magnitude += abs(term)
            if total != 0 and abs(total) < mpmath.mpf(10) ** (-dps + 17) * magnitude:
                dps *= 2
                continue
            if _spectral_tail(theta, t, truncation) > 1e-16 * abs(float(total)):
                truncation = int(truncation * 1.3) + 1
                continue
            return float(total)


def _coefficient_mp(n: int, theta: MutationPair):
    t1, t2 = mpmath.mpf(theta.theta1), mpmath.mpf(theta.theta2)
    if n == 0:
        return 1 / mpmath.beta(t1, t2)
    return (
        mpmath.factorial(n)
        * mpmath.gamma(n + t1 + t2 - 1)
        * (2 * n + t1 + t2 - 1)
        / (mpmath.gamma(n + t1) * mpmath.gamma(n + t2))
    )


def density_kimura(x: float, y, t: float, truncation: int | None = None):
    """f_{0,0}(x, y; t) in the form x(1-x) sum_i e^{-i(i+1)t/2}(2i+1) i(i+1) R_{i-1}(r) R_{i-1}(s).

    R_i is the (1,1) Jacobi polynomial scaled to R_i(1) = 1, obtained here from
    x(1-x) P_i^{(1,1)}(2x-1) = -P_{i+2}^{(-1,-1)}(2x-1) so the code shares the
    general polynomial path.
    """
    if not 0 < x < 1:
        raise ValueError("the Kimura form needs an interior start point")
    if truncation is None:
        truncation = spectral_truncation(MutationPair(0, 0), t)
    y = np.asarray(y, dtype=float)
    px = jacobi_table(truncation + 1, -1, -1, 2 * x - 1)
    py = jacobi_table(truncation + 1, -1, -1, 2 * y - 1)
    total = np.zeros(y.shape)
    wy = y * (1 - y)
    for i in range(1, truncation):
        # R_{i-1} = P_{i-1}^{(1,1)} / i
        rx = -px[i + 1] / (x * (1 - x) * i)
        ry = -py[i + 1] / (wy * i)
        coef = math.exp(-0.5 * i * (i + 1) * t) * (2 * i + 1) * i * (i + 1)
        total = total + coef * rx * ry
    return _shape(x * (1 - x) * total, y)


def _k_range(l: int, theta: MutationPair) -> tuple[int, int]:
    lo = 1 if theta.theta1 == 0 else 0
    hi = l - 1 if theta.theta2 == 0 else l
    return lo, hi


@lru_cache(maxsize=4096)
def _lineage_cutoff(theta: float, t: float, tol: float) -> tuple[int, float]:
    """Smallest L with sum_{l>L} 1.3 (l+theta+1) q_l(t) below tol, and that sum."""
    lmax = 4
    while True:
        tail = lineage_tail_bound(theta, t, lmax, weight=lambda l: 1.3 * (l + theta + 1))
        if tail <= tol:
            return lmax, tail
        lmax = int(lmax * 1.25) + 1


def mixture_components(x: float, t: float, theta: MutationPair, tol: float = 1e-13) -> BetaMixture:
    """Beta mixture form of f(x, . ; t) truncated at a certified lineage count.

    `tail_bound` bounds the dropped part of the density at y as
    tail_bound / (y (1 - y)).
    """
    return _mixture_components(float(x), float(t), theta, float(tol))


@lru_cache(maxsize=1024)
def _mixture_components(x: float, t: float, theta: MutationPair, tol: float) -> BetaMixture:
    lmax, tail = _lineage_cutoff(theta.theta, float(t), tol)
    qs = q_vector(theta.theta, t, lmax)
    w, a, b = [], [], []
    logx = math.log(x) if x > 0 else -math.inf
    log1x = math.log1p(-x) if x < 1 else -math.inf
    for l in range(lmax + 1):
        if qs[l] <= 0:
            continue
        lo, hi = _k_range(l, theta)
        if lo > hi:
            continue
        k = np.arange(lo, hi + 1)
        logbin = special.gammaln(l + 1) - special.gammaln(k + 1) - special.gammaln(l - k + 1)
        with np.errstate(invalid="ignore"):
            lw = logbin + np.where(k > 0, k * logx, 0.0) + np.where(l - k > 0, (l - k) * log1x, 0.0)
        wk = qs[l] * np.exp(lw)
        keep = wk > 0
        w.append(wk[keep])
        a.append(k[keep] + theta.theta1)
        b.append(l - k[keep] + theta.theta2)
    if not w:
        return BetaMixture(np.zeros(0), np.zeros(0), np.zeros(0), tail)
    return BetaMixture(np.concatenate(w), np.concatenate(a).astype(float), np.concatenate(b).astype(float), tail)


def density_mixture(q: DensityQuery, tol: float = 1e-13, with_bound: bool = False):
    """Beta mixture form sum_l q_l(t) sum_k C(l,k) x^k (1-x)^{l-k} Beta(k+theta1, l-k+theta2)(y)."""
    mix = mixture_components(q.x, q.t, q.theta, tol)
    y = np.asarray(q.y, dtype=float)
    value = mix.pdf(y) if len(mix.weights) else np.zeros(y.shape)
    bound = float(np.max(mix.tail_bound / (y * (1 - y))))
    value = _shape(value, q.y)
    return Bounded(value, bound) if with_bound else value


def transition_density(x: float, y, t: float, theta: MutationPair):
    q = DensityQuery(x, y, t, theta)
    if t >= SPECTRAL_CROSSOVER:
        return density_spectral(q)
    return density_mixture(q)


def _weighted_lineage_sum(theta: float, t: float, y, lo: int, coef, power_shift: float, tol: float = 1e-15):
    """sum_{l >= lo} coef(l) q_l(t) (1-y)^{l + power_shift} with a certified cutoff."""
    y = np.asarray(y, dtype=float)
    lmax = max(lo + 2, 4)
    while lineage_tail_bound(theta, t, lmax, weight=lambda l: coef(l)) > tol:
        lmax = int(lmax * 1.25) + 1
    qs = q_vector(theta, t, lmax)
    total = np.zeros(y.shape)
    for l in range(lo, lmax + 1):
        if qs[l] == 0:
            continue
        total = total + coef(l) * qs[l] * np.power(1 - y, l + power_shift)
    return total


def g_series(y, t: float):
    """g(y; t) = sum_{l>=2} l(l-1) q_l(t) (1-y)^{l-2} for theta = 0."""
    out = _weighted_lineage_sum(0.0, t, y, 2, lambda l: l * (l - 1), -2.0)
    return _shape(out, y)


def g_theta_series(y, t: float, theta: float):
    """g_theta(y; t) = sum_{l>=1} l(l+theta-1)(1-y)^{l+theta-2} q_l(t)."""
    if not theta > 0:
        raise ValueError("g_theta needs theta > 0; use g_series for theta = 0")
    out = _weighted_lineage_sum(float(theta), t, y, 1, lambda l: l * (l + theta - 1), theta - 2.0)
    return _shape(out, y)


def yaglom_density(theta: MutationPair, y):
    """Limit law of X(t) conditioned on non-absorption, as t grows."""
    y = np.asarray(y, dtype=float)
    if theta.theta1 > 0 and theta.theta2 > 0:
        raise ValueError("the Yaglom limit needs an absorbing boundary (a zero mutation rate)")
    if theta.theta1 == 0 and theta.theta2 == 0:
        out = np.ones(y.shape)
    elif theta.theta1 == 0:
        out = theta.theta2 * np.power(1 - y, theta.theta2 - 1)
    else:
        out = theta.theta1 * np.power(y, theta.theta1 - 1)
    return _shape(out, y)


def htransform_density_check(case: str, x: float, y: float, t: float, theta: float = 0.0) -> tuple[float, float]:
    """Both sides of the h-transform identity linking zero-mutation densities to positive ones.

    case "00": f_{2,2}(x,y;t) vs e^t f_{0,0}(x,y;t) y(1-y)/(x(1-x)).
    case "0theta": f_{2,theta}(x,y;t) vs e^{theta t/2} f_{0,theta}(x,y;t) y/x.
    """
    if not (0 < x < 1 and 0 < y < 1):
        raise ValueError("x and y must be interior")
    if case == "00":
        lhs = density_mixture(DensityQuery(x, y, t, MutationPair(2, 2)))
        rhs = math.exp(t) * density_mixture(DensityQuery(x, y, t, MutationPair(0, 0))) * y * (1 - y) / (x * (1 - x))
    elif case == "0theta":
        if not theta > 0:
            raise ValueError("case '0theta' needs theta > 0")
        lhs = density_mixture(DensityQuery(x, y, t, MutationPair(2, theta)))
        rhs = math.exp(theta * t / 2) * density_mixture(DensityQuery(x, y, t, MutationPair(0, theta))) * y / x
    else:
        raise ValueError(f"unknown case {case!r}")
    return float(lhs), float(rhs)
