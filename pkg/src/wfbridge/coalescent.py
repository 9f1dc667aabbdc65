"""Lineage-counting process of the coalescent with mutation.

L(t) is a pure-death process on {0, 1, ...} entering from infinity, with death
rate k(k+theta-1)/2 from state k. Its transition law q_l(t) is an alternating
series whose terms overflow and cancel for small t, so it is summed in
arbitrary precision (mpmath) and returned with a rigorous error bound.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, NamedTuple

import mpmath
import numpy as np

log = logging.getLogger(__name__)

__all__ = [
    "CertifiedValue",
    "Envelope",
    "LineageLaw",
    "rho",
    "q",
    "q_mp",
    "q_vector",
    "q_envelope",
    "q_threshold",
    "q_first_term",
    "lineage_tail_bound",
    "factorial_moment",
    "h_term",
    "h_envelope",
    "h_value",
    "h_threshold",
    "conditional_lineages",
]

_EPS = float(np.finfo(float).eps)


@dataclass(frozen=True)
class CertifiedValue:
    value: float
    error_bound: float

    def __post_init__(self):
        if not self.error_bound >= 0:
            raise ValueError(f"error bound must be nonnegative, got {self.error_bound}")

    @property
    def lower(self) -> float:
        return self.value - self.error_bound

    @property
    def upper(self) -> float:
        return self.value + self.error_bound

    def __float__(self) -> float:
        return self.value


class Envelope(NamedTuple):
    lower: float
    upper: float
    monotone: bool


@dataclass(frozen=True)
class LineageLaw:
    theta: float
    t: float

    def __post_init__(self):
        if self.theta < 0:
            raise ValueError(f"theta must be nonnegative, got {self.theta}")
        if not self.t > 0:
            raise ValueError(f"time must be positive, got {self.t}")

    def q(self, l: int) -> float:
        return q(l, self.theta, self.t).value

    def envelope(self, l: int, k: int) -> Envelope:
        return q_envelope(l, self.theta, self.t, k)


def rho(k: int, theta: float, t: float) -> float:
    return math.exp(-0.5 * k * (k + theta - 1) * t)


def _check(l: int, theta: float, t: float) -> None:
    if l < 0:
        raise ValueError(f"lineage count must be nonnegative, got {l}")
    if theta < 0:
        raise ValueError(f"theta must be nonnegative, got {theta}")
    if not t > 0:
        raise ValueError(f"time must be positive, got {t}")


def _log_first_term(l: int, theta: float, t: float) -> float:
    """log of a_l, the leading (positive) term of the series for q_l."""
    if l == 0:
        return 0.0
    return (
        -0.5 * l * (l + theta - 1) * t
        + math.log(2 * l + theta - 1)
        + math.lgamma(2 * l + theta - 1)
        - math.lgamma(l + theta)
        - math.lgamma(l + 1)
    )


def _log10_peak(l: int, theta: float, t: float) -> float:
    """log10 of the largest term magnitude, scanned in floating point."""
    best = _log_first_term(l, theta, t)
    cur = best
    k = max(l, 1)
    if l == 0:
        if theta == 0:
            return 0.0
        cur = math.log(theta + 1) - 0.5 * theta * t
        best = max(best, cur)
    while True:
        step = -(k + theta / 2) * t + math.log((2 * k + theta + 1) / (2 * k + theta - 1)) + math.log(
            (k + l + theta - 1) / (k - l + 1)
        )
        cur += step
        best = max(best, cur)
        k += 1
        if step < 0 and cur < best - 50:
            break
    return best / math.log(10)


class _AlternatingSeries:
    """Terms and partial sums of q_l(t) at a fixed working precision."""

    def __init__(self, l: int, theta: float, t: float):
        self.l, self.theta, self.t = l, theta, t
        peak = _log10_peak(l, theta, t)
        self.dps = 25 + max(0, int(math.ceil(peak)))
        while True:
            self._reset()
            self._extend_to_convergence()
            total = abs(self.partial[-1])
            # demand at least 15 correct significant digits after cancellation
            if total == 0 or total > mpmath.mpf(10) ** (-self.dps + 15) * self.abs_sum:
                break
            self.dps *= 2

    def _reset(self):
        l, theta, t = self.l, self.theta, self.t
        with mpmath.workdps(self.dps):
            th = mpmath.mpf(theta)
            tt = mpmath.mpf(t)
            if l == 0:
                first = mpmath.mpf(1)
            else:
                first = (
                    mpmath.exp(-l * (l + th - 1) * tt / 2)
                    * (2 * l + th - 1)
                    * mpmath.rf(l + th, l - 1)
                    / mpmath.factorial(l)
                )
            self.terms = [first]
            self.partial = [first]
            self.abs_sum = abs(first)
            self._th, self._t = th, tt
            # exp(-(k + theta/2) t) for the next k, advanced by one factor exp(-t) per term
            self._step = mpmath.exp(-tt)
            self._decay = mpmath.exp(-(l + th / 2) * tt)

    def _next_term(self):
        l = self.l
        k = l + len(self.terms) - 1
        th, tt = self._th, self._t
        with mpmath.workdps(self.dps):
            prev = self.terms[-1]
            if k == 0:
                nxt = -(th + 1) * mpmath.exp(-th * tt / 2)
            else:
                nxt = (
                    -prev
                    * self._decay
                    * (2 * k + th + 1)
                    / (2 * k + th - 1)
                    * (k + l + th - 1)
                    / (k - l + 1)
                )
            self._decay *= self._step
            self.terms.append(nxt)
            self.partial.append(self.partial[-1] + nxt)
            self.abs_sum += abs(nxt)

    def term(self, j: int):
        """The term with series index l + j."""
        while len(self.terms) <= j:
            self._next_term()
        return self.terms[j]

    def partial_sum(self, j: int):
        """Sum of terms with series index l .. l + j."""
        self.term(j)
        return self.partial[j]

    def _extend_to_convergence(self):
        if self.l == 0 and self.theta == 0:
            # a_0 = 1 and a_1 = -1, every later term vanishes
            self.term(1)
            return
        start = q_threshold(self.l, self.theta, self.t) - self.l
        with mpmath.workdps(self.dps):
            cutoff = mpmath.mpf(10) ** (-self.dps - 5)
        j = 1
        while True:
            a = abs(self.term(j))
            if j > start and a <= cutoff * self.abs_sum:
                self.converged_at = j
                return
            j += 1

    def rounding_bound(self) -> float:
        return float(self.abs_sum * mpmath.mpf(10) ** (-self.dps + 3))


@lru_cache(maxsize=200_000)
def _series(l: int, theta: float, t: float) -> _AlternatingSeries:
    return _AlternatingSeries(l, theta, t)


@lru_cache(maxsize=200_000)
def q_threshold(l: int, theta: float, t: float) -> int:
    """Smallest index i >= l from which term magnitudes of the q_l series decrease."""
    _check(l, theta, t)
    i = l
    while True:
        if l == 0 and i == 0:
            ratio = (theta + 1) * math.exp(-theta * t / 2)
        else:
            ratio = (
                (theta + i + l - 1)
                / (i - l + 1)
                * (theta + 2 * i + 1)
                / (theta + 2 * i - 1)
                * math.exp(-(i + theta / 2) * t)
            )
        if ratio < 1:
            return i
        i += 1


def q_mp(l: int, theta: float, t: float):
    """q_l(t) as an mpmath number with at least 15 significant digits."""
    _check(l, theta, t)
    theta, t = float(theta), float(t)
    if l == 0 and theta == 0:
        return mpmath.mpf(0)
    s = _series(l, theta, t)
    return s.partial[s.converged_at]


@lru_cache(maxsize=200_000)
def _q_certified(l: int, theta: float, t: float) -> CertifiedValue:
    if l == 0 and theta == 0:
        return CertifiedValue(0.0, 0.0)
    s = _series(l, theta, t)
    j = s.converged_at
    exact = s.partial[j]
    value = float(exact)
    err = float(abs(s.term(j + 1))) + s.rounding_bound() + math.ulp(value)
    return CertifiedValue(min(max(value, 0.0), 1.0), err)


def q(l: int, theta: float, t: float, tol: float = 1e-13) -> CertifiedValue:
    """Certified value of P(L(t) = l | L(0) = infinity)."""
    _check(l, theta, t)
    out = _q_certified(int(l), float(theta), float(t))
    if out.error_bound > tol and out.error_bound > 1e-14:
        log.warning("q(%d, %g, %g): error bound %.3g exceeds tolerance %.3g", l, theta, t, out.error_bound, tol)
    return out


def q_vector(theta: float, t: float, lmax: int) -> np.ndarray:
    """Array of q_l(t) for l = 0 .. lmax."""
    return np.array([_q_certified(l, float(theta), float(t)).value for l in range(lmax + 1)])


def q_envelope(l: int, theta: float, t: float, k: int) -> Envelope:
    """Partial sums bracketing q_l(t).

    The upper value keeps series indices l .. l+2k and the lower value keeps
    l .. l+2k+1. Both are widened outward for rounding. `monotone` is False
    when 2k + l is below the threshold, in which case the bracket is not
    guaranteed.
    """
    _check(l, theta, t)
    theta, t = float(theta), float(t)
    monotone = 2 * k + l >= q_threshold(l, theta, t)
    if l == 0 and theta == 0:
        return Envelope(0.0, 0.0, True)
    s = _series(l, theta, t)
    upper = s.partial_sum(2 * k)
    lower = s.partial_sum(2 * k + 1)
    pad = s.rounding_bound()
    up = float(upper)
    lo = float(lower)
    up = up + abs(up) * 4 * _EPS + pad
    lo = lo - abs(lo) * 4 * _EPS - pad
    return Envelope(lo, up, monotone)


def q_first_term(l: int, theta: float, t: float) -> float:
    """Leading series term; an upper bound on q_l(t) once l reaches its own threshold."""
    return math.exp(_log_first_term(l, theta, t))


def _first_term_valid(l: int, theta: float, t: float) -> bool:
    return q_threshold(l, theta, t) == l


def lineage_tail_bound(theta: float, t: float, lmax: int, weight: Callable[[int], float] = lambda l: 1.0) -> float:
    """Rigorous upper bound on sum_{l > lmax} weight(l) q_l(t).

    `weight` must be nonnegative and grow at most polynomially.
    """
    total = 0.0
    l = lmax + 1
    while not _first_term_valid(l, theta, t):
        c = _q_certified(l, float(theta), float(t))
        total += weight(l) * (c.value + c.error_bound)
        l += 1
    prev = None
    while True:
        term = weight(l) * q_first_term(l, theta, t)
        total += term
        if prev is not None and prev > 0:
            ratio = term / prev
            if ratio < 0.5 and term * ratio / (1 - ratio) <= 1e-17 * max(total, 1e-300):
                total += term * ratio / (1 - ratio)
                break
        if term == 0.0:
            break
        prev = term
        l += 1
    return total


def factorial_moment(k: int, theta: float, t: float) -> float:
    """E[L(t)(L(t)-1)...(L(t)-k+1)] from its positive series."""
    if k < 1:
        raise ValueError("moment order must be at least 1")
    _check(0, theta, t)
    logs = []
    l = k
    while True:
        if 2 * l + theta - 1 <= 0 or l + theta <= 0:
            l += 1
            continue
        lt = (
            -0.5 * l * (l + theta - 1) * t
            + math.log(2 * l + theta - 1)
            + math.lgamma(l)
            - math.lgamma(k)
            - math.lgamma(l - k + 1)
            + math.lgamma(theta + l + k - 1)
            - math.lgamma(theta + l)
        )
        logs.append(lt)
        if len(logs) > 2 and lt < max(logs) + math.log(1e-17) and lt < logs[-2]:
            break
        l += 1
    peak = max(logs)
    return math.exp(peak) * math.fsum(math.exp(v - peak) for v in logs)


def h_term(l: int, theta: float, T: float) -> float:
    return math.exp(-0.5 * l * (l + theta - 1) * T) * (2 * l + theta - 1) * l * (l + theta - 1)


def h_threshold(theta: float, T: float) -> int:
    """Smallest k with k > max(2, log(5)/T - theta/2)."""
    d = math.log(5) / T - theta / 2
    return int(math.floor(max(2.0, d))) + 1


def h_envelope(theta: float, T: float, k: int) -> Envelope:
    """Lower and upper bounds on h(T) = sum_l (2l+theta-1) l (l+theta-1) e^{-l(l+theta-1)T/2}."""
    if not T > 0:
        raise ValueError("T must be positive")
    monotone = k >= h_threshold(theta, T)
    lower = math.fsum(h_term(l, theta, T) for l in range(1, k + 1))
    factor = 1 - 5 * math.exp(-(k + 1 + theta / 2) * T)
    tail = h_term(k + 1, theta, T) / factor if factor > 0 else math.inf
    upper = lower + tail
    return Envelope(lower * (1 - 4 * _EPS), upper * (1 + 4 * _EPS), monotone)


@lru_cache(maxsize=4096)
def h_value(theta: float, T: float) -> CertifiedValue:
    k = h_threshold(theta, T)
    while True:
        env = h_envelope(theta, T, k)
        if env.upper - env.lower <= 1e-14 * env.lower:
            return CertifiedValue(0.5 * (env.lower + env.upper), 0.5 * (env.upper - env.lower))
        k += 1


def conditional_lineages(c: int, l: int, theta: float, t: float, s: float, T: float) -> float:
    """P(L(T-s) = c | L(t-s) = l) for the process entering from infinity.

    Depends on the times only through T - t.
    """
    if not s < t < T:
        raise ValueError("need s < t < T")
    if c > l or c < 0:
        return 0.0
    if l == 0:
        return 1.0 if c == 0 else 0.0
    if c == 0 and theta == 0:
        return 0.0
    u = T - t
    log_pref = math.lgamma(l + 1) - math.lgamma(c + 1) - math.lgamma(l - c + 1) + math.lgamma(l + theta)
    logs = []
    m = c
    while True:
        qm = _q_certified(m, float(theta), float(u)).value
        if qm > 0:
            lt = (
                math.log(qm)
                + math.lgamma(m + 1)
                - math.lgamma(m - c + 1)
                + math.lgamma(theta + m)
                - math.lgamma(theta + c)
                - math.lgamma(l + theta + m)
            )
            logs.append(lt)
        if m > c + 5 and _first_term_valid(m, theta, u) and logs and logs[-1] < max(logs) + math.log(1e-18):
            break
        m += 1
    if not logs:
        return 0.0
    peak = max(logs)
    return math.exp(log_pref + peak) * math.fsum(math.exp(v - peak) for v in logs)
