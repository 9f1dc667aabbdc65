"""Branching Pólya urn simulations of the neutral transition and bridge laws.

Two urns start from theta1 red and theta2 blue balls (real masses allowed),
share their first l draws and then continue independently. The number of
shared draws is distributed as the lineage count q_l(t). Three urns U, V, W
share n = l + m draws, of which a uniformly chosen l belong to U and the
remaining m to V. Limiting red frequencies are estimated by the urn
composition after a finite number of further draws (`horizon`).

All simulators are vectorised over independent runs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .coalescent import h_value, lineage_tail_bound, q_vector
from .orthopoly import MutationPair
from .wf_density import symmetric_kernel

__all__ = [
    "DEFAULT_HORIZON",
    "UrnState",
    "BranchingPlan",
    "TwoUrnResult",
    "ThreeUrnResult",
    "sample_lineages",
    "polya_continue",
    "two_urn_simulate",
    "three_urn_simulate",
    "three_urn_config_pmf",
    "config_pmf",
    "zero_limit_config_pmf",
    "zero_limit_mixture_density",
]

DEFAULT_HORIZON = 2000


@dataclass
class UrnState:
    """Vectorised urn compositions: red and blue masses after `draws` draws."""

    red: np.ndarray
    blue: np.ndarray
    draws: int = 0

    @classmethod
    def initial(cls, theta: MutationPair, size: int) -> "UrnState":
        return cls(np.full(size, theta.theta1), np.full(size, theta.theta2))

    @property
    def frequency(self) -> np.ndarray:
        total = self.red + self.blue
        with np.errstate(invalid="ignore"):
            return np.where(total > 0, self.red / np.where(total > 0, total, 1.0), np.nan)


@dataclass(frozen=True)
class BranchingPlan:
    """Shared-draw counts of a three-urn run: l draws to U and m to V out of n."""

    l: np.ndarray
    m: np.ndarray

    @property
    def n(self) -> np.ndarray:
        return self.l + self.m


@dataclass(frozen=True)
class TwoUrnResult:
    l: np.ndarray
    k: np.ndarray
    x_hat: np.ndarray
    y_hat: np.ndarray
    # runs whose configuration leaves an urn monochrome when theta = (0, 0)
    absorbed: np.ndarray


@dataclass(frozen=True)
class ThreeUrnResult:
    l: np.ndarray
    m: np.ndarray
    j: np.ndarray
    k: np.ndarray
    x_hat: np.ndarray
    z_hat: np.ndarray
    y_hat: np.ndarray

    @property
    def n(self) -> np.ndarray:
        return self.l + self.m


def sample_lineages(theta: float, t: float, rng: np.random.Generator, size: int, tail: float = 1e-15) -> np.ndarray:
    """Draws of L(t) from q_l(t); lineage counts beyond a cutoff with mass <= `tail` are dropped."""
    lmax = 8
    while lineage_tail_bound(theta, t, lmax) > tail:
        lmax = int(lmax * 1.25) + 1
    p = q_vector(theta, t, lmax)
    return rng.choice(lmax + 1, size=size, p=p / p.sum())


def polya_draws(state: UrnState, steps: np.ndarray | int, rng: np.random.Generator) -> np.ndarray:
    """Make `steps` draws (per run) from each urn in place; returns the red count drawn."""
    steps = np.broadcast_to(np.asarray(steps), state.red.shape)
    reds = np.zeros(state.red.shape, dtype=np.int64)
    for s in range(int(steps.max(initial=0))):
        active = steps > s
        total = state.red + state.blue
        u = rng.random(state.red.shape)
        hit = active & (u * total < state.red)
        reds += hit
        state.red = state.red + hit
        state.blue = state.blue + (active & ~hit)
    state.draws += int(steps.max(initial=0))
    return reds


def polya_continue(red0, blue0, horizon: int, rng: np.random.Generator) -> np.ndarray:
    """Red frequency of urns started at (red0, blue0) after `horizon` more draws."""
    state = UrnState(np.asarray(red0, dtype=float).copy(), np.asarray(blue0, dtype=float).copy())
    polya_draws(state, horizon, rng)
    return state.frequency


def two_urn_simulate(
    theta: MutationPair,
    t: float,
    x: float | None,
    rng: np.random.Generator,
    horizon: int = DEFAULT_HORIZON,
    size: int = 1,
) -> TwoUrnResult:
    """Run the two-urn model `size` times.

    With `x` given, the shared draws are i.i.d. red with probability x (the
    de Finetti conditioning on the first urn's limit); with x=None the first
    urn is simulated as well and its limiting frequency is returned in x_hat.
    For theta = (0, 0) a configuration with k in {0, l} leaves a monochrome
    urn; such runs are flagged in `absorbed` and carry no transition density.
    """
    if horizon < 1:
        raise ValueError("horizon must be positive")
    l = sample_lineages(theta.theta, t, rng, size)
    if x is None:
        shared = UrnState.initial(theta, size)
        k = polya_draws(shared, l, rng)
        x_hat = polya_continue(shared.red, shared.blue, horizon, rng)
    else:
        if not 0 <= x <= 1:
            raise ValueError("x must lie in [0, 1]")
        k = rng.binomial(l, x)
        x_hat = np.full(size, float(x))
    absorbed = np.zeros(size, dtype=bool)
    if theta.theta1 == 0 and theta.theta2 == 0:
        absorbed = (k == 0) | (k == l)
    y_hat = polya_continue(theta.theta1 + k, theta.theta2 + (l - k), horizon, rng)
    return TwoUrnResult(l, k, x_hat, y_hat, absorbed)


def three_urn_simulate(
    theta: MutationPair,
    t: float,
    T: float,
    rng: np.random.Generator,
    horizon: int = DEFAULT_HORIZON,
    size: int = 1,
) -> ThreeUrnResult:
    """Run the three-urn model `size` times.

    W makes n = l + m shared draws; the l draws belonging to U are a uniform
    subset of them, so the number of red ones among them is hypergeometric
    given the red total. U, V and W then continue independently.
    """
    if not 0 < t < T:
        raise ValueError("need 0 < t < T")
    plan = BranchingPlan(
        sample_lineages(theta.theta, t, rng, size), sample_lineages(theta.theta, T - t, rng, size)
    )
    n = plan.n
    shared = UrnState.initial(theta, size)
    red_total = polya_draws(shared, n, rng)
    # uniform l-subset of the n shared draws: reds in it are hypergeometric
    j = np.where(n > 0, rng.hypergeometric(red_total, n - red_total, np.maximum(plan.l, 0)), 0)
    j = np.where(plan.l > 0, j, 0)
    k = red_total - j
    x_hat = polya_continue(theta.theta1 + j, theta.theta2 + plan.l - j, horizon, rng)
    z_hat = polya_continue(theta.theta1 + k, theta.theta2 + plan.m - k, horizon, rng)
    y_hat = polya_continue(shared.red, shared.blue, horizon, rng)
    return ThreeUrnResult(plan.l, plan.m, j, k, x_hat, z_hat, y_hat)


def _log_rising(a: float, n) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    if a == 0:
        return np.where(n == 0, 0.0, -np.inf)
    return special.gammaln(a + n) - special.gammaln(a)


def three_urn_config_pmf(theta: MutationPair, l: int, m: int) -> np.ndarray:
    """P(j, k | l, m) for the three-urn model, as an (l+1, m+1) array.

    C(n, j+k) (theta1)_(j+k) (theta2)_(n-j-k) / theta_(n) * C(l, j) C(m, k) / C(n, j+k).
    Requires theta > 0.
    """
    if theta.theta <= 0:
        raise ValueError("the three-urn configuration law needs theta1 + theta2 > 0")
    n = l + m
    j = np.arange(l + 1)[:, None]
    k = np.arange(m + 1)[None, :]
    r = j + k
    log_p = (
        _log_rising(theta.theta1, r)
        + _log_rising(theta.theta2, n - r)
        - _log_rising(theta.theta, n)
        + special.gammaln(l + 1)
        - special.gammaln(j + 1)
        - special.gammaln(l - j + 1)
        + special.gammaln(m + 1)
        - special.gammaln(k + 1)
        - special.gammaln(m - k + 1)
    )
    return np.exp(log_p)


def _log_beta_pdf(a, b, x: float):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return special.xlogy(a - 1, x) + special.xlog1py(b - 1, -x) - special.betaln(a, b)


def config_pmf(theta: MutationPair, l: int, m: int, x: float, z: float, t: float, T: float) -> np.ndarray:
    """P(l, m, j, k | X = x, Z = z) as an (l+1, m+1) array over (j, k).

    Needs both mutation rates positive and interior x, z. The denominator
    B(x) f(x, z; T) is evaluated as w(x) w(z) K(x, z; T) / B(theta1, theta2)
    with K the symmetric kernel.
    """
    if theta.theta1 <= 0 or theta.theta2 <= 0:
        raise ValueError("config_pmf needs both mutation rates positive")
    if not (0 < x < 1 and 0 < z < 1):
        raise ValueError("config_pmf needs interior endpoints")
    a, b = theta.theta1, theta.theta2
    j = np.arange(l + 1)[:, None]
    k = np.arange(m + 1)[None, :]
    ql = q_vector(theta.theta, t, l)[l]
    qm = q_vector(theta.theta, T - t, m)[m]
    log_num = (
        np.log(three_urn_config_pmf(theta, l, m))
        + _log_beta_pdf(a + j, b + l - j, x)
        + _log_beta_pdf(a + k, b + m - k, z)
    )
    lo, hi = min(x, z), max(x, z)
    log_w = (a - 1) * (math.log(x) + math.log(z)) + (b - 1) * (math.log1p(-x) + math.log1p(-z))
    log_den = log_w + math.log(float(symmetric_kernel(lo, hi, T, theta))) - special.betaln(a, b)
    return ql * qm * np.exp(log_num - log_den)


def zero_limit_config_pmf(l: int, m: int, t: float, T: float, j: int = 1, k: int = 1) -> float:
    """Limit of the bridge configuration law for theta = (0, 0) as x, z -> 0.

    Only j = k = 1 carries mass: q_l(t) q_m(T-t) l(l-1) m(m-1) / ((n-1)(n-2)) / h(T),
    with h(T) = sum_l q_l(T) l (l-1).
    """
    if j != 1 or k != 1 or l < 2 or m < 2:
        return 0.0
    n = l + m
    ql = q_vector(0.0, t, l)[l]
    qm = q_vector(0.0, T - t, m)[m]
    return float(ql * qm * l * (l - 1) * m * (m - 1) / ((n - 1) * (n - 2)) / h_value(0.0, float(T)).value)


def zero_limit_mixture_density(y, t: float, T: float, tol: float = 1e-15):
    """sum over (l, m) of zero_limit_config_pmf * Beta(2, n-2)(y)."""
    y = np.asarray(y, dtype=float)

    def weight(l):
        return l * (l - 1)

    cut = []
    for s in (t, T - t):
        lmax = 4
        while lineage_tail_bound(0.0, s, lmax, weight) > tol:
            lmax = int(lmax * 1.25) + 1
        cut.append(lmax)
    l = np.arange(2, cut[0] + 1)
    m = np.arange(2, cut[1] + 1)
    ql = q_vector(0.0, t, cut[0])[2:]
    qm = q_vector(0.0, T - t, cut[1])[2:]
    n = l[:, None] + m[None, :]
    pmf = (ql * l * (l - 1))[:, None] * (qm * m * (m - 1))[None, :] / ((n - 1) * (n - 2))
    pmf = pmf / h_value(0.0, float(T)).value
    flat_n = n.ravel()
    flat_p = pmf.ravel()
    out = np.zeros(y.shape)
    for nn in np.unique(flat_n):
        w = flat_p[flat_n == nn].sum()
        out = out + w * np.exp(_log_beta_pdf(2.0, nn - 2.0, y))
    return float(out) if out.ndim == 0 else out
