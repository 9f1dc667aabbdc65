"""Exact samplers for neutral Wright-Fisher bridges.

Both samplers draw a mixture index by the series method: the mixture weights
are products of lineage probabilities q_l(t) that are only known through
monotone lower/upper envelopes. The index is found by inversion of a uniform
U against cumulative lower and upper sums, tightening the envelopes until U is
bracketed. The component is then a Beta variate.

Envelope refinement is organised in levels: at level r every lineage
coordinate l uses envelope index k0(l) + d_r, where k0(l) is the first index at
which that coordinate's envelope is monotone and d_r = r for small r, growing
geometrically afterwards so short times (slowly converging series) need few
levels. The cumulative sums for all
levels are tabulated once per (theta, t, T), so a batch of uniforms is
inverted with `searchsorted`; this gives the same index as walking the
enumeration one pair at a time.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import special

from .coalescent import h_envelope, h_threshold, lineage_tail_bound, q_envelope, q_threshold
from .orthopoly import MutationPair

log = logging.getLogger(__name__)

__all__ = [
    "pairing",
    "pairing_inverse",
    "make_rng",
    "spawn_rngs",
    "SamplerStats",
    "ZeroBridgeSampler",
    "GeneralBridgeSampler",
    "sample_bridge_00",
    "sample_bridge_general",
]

_EPS = float(np.finfo(float).eps)
_MAX_OFFSET = 20_000


def _level_offsets() -> list[int]:
    out = list(range(16))
    while out[-1] < _MAX_OFFSET:
        out.append(int(out[-1] * 1.25))
    return out


_OFFSETS = _level_offsets()


def pairing(n: int) -> tuple[int, int]:
    """Cantor diagonal enumeration of N^2: 0 -> (0,0), 1 -> (1,0), 2 -> (0,1), ..."""
    if n < 0:
        raise ValueError("pairing index must be nonnegative")
    w = (math.isqrt(8 * n + 1) - 1) // 2
    l2 = n - w * (w + 1) // 2
    return w - l2, l2


def pairing_inverse(l1: int, l2: int) -> int:
    d = l1 + l2
    return d * (d + 1) // 2 + l2


def _pairs_upto(diagonal: int) -> tuple[np.ndarray, np.ndarray]:
    d = np.concatenate([np.full(k + 1, k) for k in range(diagonal + 1)])
    l2 = np.concatenate([np.arange(k + 1) for k in range(diagonal + 1)])
    return d - l2, l2


def make_rng(seed: int | None) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def spawn_rngs(seed: int, count: int) -> list[np.random.Generator]:
    """Independent streams indexed by replicate number."""
    return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(count)]


@dataclass
class SamplerStats:
    draws: int = 0
    restarts: int = 0
    max_level: int = 0
    levels: list = field(default_factory=list)


class _LineageEnvelopes:
    """Tabulated envelopes of q_l(t), indexed [level, l]."""

    def __init__(self, theta: float, t: float, lmax: int):
        self.theta, self.t = theta, t
        self.k0 = np.array([max(0, -(-(q_threshold(l, theta, t) - l) // 2)) for l in range(lmax + 1)])
        lower, upper = [], []
        for r, d in enumerate(_OFFSETS):
            envs = [q_envelope(l, theta, t, int(self.k0[l]) + d) for l in range(lmax + 1)]
            raw = np.array([(e.lower, e.upper) for e in envs])
            lower.append(raw[:, 0])
            upper.append(raw[:, 1])
            # compare before clipping: clipped envelopes can look stationary while still moving
            if r > 0 and np.array_equal(lower[-1], lower[-2]) and np.array_equal(upper[-1], upper[-2]):
                break
        self.lower = np.clip(np.array(lower), 0.0, None)
        self.upper = np.clip(np.array(upper), None, 1.0)

    @property
    def levels(self) -> int:
        return self.lower.shape[0]


def _h_levels(theta: float, T: float, levels: int) -> tuple[np.ndarray, np.ndarray]:
    k0 = h_threshold(theta, T)
    envs = [h_envelope(theta, T, k0 + d) for d in _OFFSETS[:levels]]
    return np.array([e.lower for e in envs]), np.array([e.upper for e in envs])


def _pad_levels(a: np.ndarray, levels: int) -> np.ndarray:
    if a.shape[0] >= levels:
        return a[:levels]
    return np.concatenate([a, np.repeat(a[-1:], levels - a.shape[0], axis=0)])


def _cumulative(lower: np.ndarray, upper: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Prefix sums pushed outward so they stay valid bounds despite rounding."""
    n = lower.shape[-1]
    slack = 4 * _EPS * (np.arange(1, n + 1) + 4)
    s_lo = np.cumsum(lower, axis=-1) * (1 - slack)
    s_up = np.cumsum(upper, axis=-1) * (1 + slack)
    return s_lo, s_up


class _SeriesInverter:
    """Inversion of U against level-indexed cumulative envelopes."""

    def __init__(self, s_lo: np.ndarray, s_up: np.ndarray):
        self.s_lo, self.s_up = s_lo, s_up

    def invert_batch(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Index per uniform, or -1 where the bracket never separated; also the level used."""
        idx = np.full(u.shape, -1, dtype=np.int64)
        level = np.zeros(u.shape, dtype=np.int64)
        pending = np.arange(u.size)
        for r in range(self.s_lo.shape[0]):
            if pending.size == 0:
                break
            uu = u[pending]
            lo = np.searchsorted(self.s_up[r], uu, side="right")
            hi = np.searchsorted(self.s_lo[r], uu, side="right")
            done = (lo == hi) & (hi < self.s_lo.shape[1])
            idx[pending[done]] = hi[done]
            level[pending[done]] = r
            pending = pending[~done]
        level[pending] = self.s_lo.shape[0]
        return idx, level

    def invert_sequential(self, u: float) -> tuple[int, int]:
        """Walk the enumeration one index at a time, refining when U is straddled."""
        r = 0
        j = 0
        n = self.s_lo.shape[1]
        top = self.s_lo.shape[0] - 1
        while j < n:
            if u < self.s_lo[r, j]:
                return j, r
            if u >= self.s_up[r, j]:
                j += 1
                continue
            if r == top:
                return -1, r
            r += 1
        return -1, r


def _beta_draw(rng: np.random.Generator, a, b):
    g1 = rng.standard_gamma(a)
    g2 = rng.standard_gamma(b)
    return g1 / (g1 + g2)


class ZeroBridgeSampler:
    """Exact draws of X(t) for a bridge from 0 to 0 on [0, T].

    theta is the rate of mutation away from the allele (theta = 0 gives the
    mutation-free bridge). The mixture index is a pair (l1, l2) of lineage
    counts and the component is Beta(2, l1 + l2 + theta - 2).
    """

    def __init__(self, theta: float, t: float, T: float, diagonal: int | None = None):
        if theta < 0:
            raise ValueError("theta must be nonnegative")
        if not 0 < t < T:
            raise ValueError("need 0 < t < T")
        self.theta, self.t, self.T = float(theta), float(t), float(T)
        self.stats = SamplerStats()
        self._build(diagonal or self._initial_diagonal())

    def _initial_diagonal(self) -> int:
        def weight(l):
            return l * (l + self.theta - 1)

        lmax = 8
        while max(lineage_tail_bound(self.theta, s, lmax, weight) for s in (self.t, self.T - self.t)) > 1e-16:
            lmax = int(lmax * 1.25) + 1
        return 2 * lmax

    def _build(self, diagonal: int):
        th = self.theta
        self.diagonal = diagonal
        l1, l2 = _pairs_upto(diagonal)
        self.l1, self.l2 = l1, l2
        e1 = _LineageEnvelopes(th, self.t, diagonal)
        e2 = _LineageEnvelopes(th, self.T - self.t, diagonal)
        levels = max(e1.levels, e2.levels)
        h_lo, h_up = _h_levels(th, self.T, levels)
        lo1, up1 = _pad_levels(e1.lower, levels), _pad_levels(e1.upper, levels)
        lo2, up2 = _pad_levels(e2.lower, levels), _pad_levels(e2.upper, levels)
        n = l1 + l2 + th
        with np.errstate(divide="ignore", invalid="ignore"):
            coef = l1 * (l1 + th - 1) * l2 * (l2 + th - 1) / ((n - 1) * (n - 2))
        coef = np.where((l1 == 0) | (l2 == 0) | (coef <= 0) | ~np.isfinite(coef), 0.0, coef)
        p_lo = coef * lo1[:, l1] * lo2[:, l2] / h_up[:, None] * (1 - 8 * _EPS)
        p_up = coef * up1[:, l1] * up2[:, l2] / h_lo[:, None] * (1 + 8 * _EPS)
        s_lo, s_up = _cumulative(p_lo, p_up)
        self._inverter = _SeriesInverter(s_lo, s_up)

    def mixture_indices(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Enumeration indices for the given uniforms (batch path); -1 marks an unresolved bracket."""
        return self._inverter.invert_batch(np.asarray(u, dtype=float))

    def mixture_index_sequential(self, u: float) -> tuple[int, int]:
        return self._inverter.invert_sequential(float(u))

    def _resolve(self, rng: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray]:
        u = rng.random(size)
        idx, level = self.mixture_indices(u)
        while True:
            bad = np.flatnonzero(idx < 0)
            if bad.size == 0:
                break
            if np.any(u[bad] >= self._inverter.s_lo[-1, -1]):
                # uniform beyond the tabulated mass; widen the enumeration
                self._build(self.diagonal * 2)
                idx[bad], level[bad] = self.mixture_indices(u[bad])
                continue
            self.stats.restarts += bad.size
            log.info("series-method bracket collapsed for %d uniform(s); redrawing", bad.size)
            u[bad] = rng.random(bad.size)
            idx[bad], level[bad] = self.mixture_indices(u[bad])
        self.stats.draws += size
        self.stats.max_level = max(self.stats.max_level, int(level.max(initial=0)))
        return idx, level

    def sample(self, rng: np.random.Generator, size: int | None = None, return_levels: bool = False):
        n = 1 if size is None else int(size)
        idx, level = self._resolve(rng, n)
        total = self.l1[idx] + self.l2[idx] + self.theta
        y = _beta_draw(rng, np.full(n, 2.0), total - 2)
        if size is None:
            return (float(y[0]), int(level[0])) if return_levels else float(y[0])
        return (y, level) if return_levels else y


@lru_cache(maxsize=64)
def _zero_sampler(theta: float, t: float, T: float) -> ZeroBridgeSampler:
    return ZeroBridgeSampler(theta, t, T)


def sample_bridge_00(theta: float, t: float, T: float, rng: np.random.Generator, size: int | None = None):
    """Exact draw(s) of X(t) for the 0 to 0 bridge on [0, T]."""
    return _zero_sampler(float(theta), float(t), float(T)).sample(rng, size)


def _log_binom(n, k):
    return special.gammaln(n + 1) - special.gammaln(k + 1) - special.gammaln(n - k + 1)


class GeneralBridgeSampler:
    """Exact draws of X(t) for a bridge between interior points x and z.

    Works with positive mutation rates (a, b). Zero rates are handled by the
    h-transform: theta = (0, theta) becomes (2, theta) and (0, 0) becomes
    (2, 2), which leaves the bridge law unchanged.

    The mixture is indexed by lineage counts (l, m) at the two ends and the
    numbers (j, k) of those lineages carrying the first allele; the component
    is Beta(a + j + k, b + n - j - k) with n = l + m.
    """

    def __init__(
        self, x: float, z: float, t: float, T: float, theta: MutationPair, limits: tuple[int, int] | None = None
    ):
        if not (0 < x < 1 and 0 < z < 1):
            raise ValueError("the general sampler needs interior endpoints")
        if not 0 < t < T:
            raise ValueError("need 0 < t < T")
        a, b = theta.theta1, theta.theta2
        self.flip = False
        if a > 0 and b == 0:
            a, b, x, z, self.flip = b, a, 1 - x, 1 - z, True
        if a == 0:
            a = 2.0
            if b == 0:
                b = 2.0
        self.a, self.b = float(a), float(b)
        self.x, self.z, self.t, self.T = float(x), float(z), float(t), float(T)
        self.stats = SamplerStats()
        self._kernel_bounds()
        self._build(*(limits or self._initial_limits()))

    @property
    def theta(self) -> float:
        return self.a + self.b

    def _initial_limits(self) -> tuple[int, int]:
        """Per-end lineage cutoffs leaving at most 1e-17 of q mass beyond each."""
        out = []
        for s in (self.t, self.T - self.t):
            lmax = 8
            while lineage_tail_bound(self.theta, s, lmax, lambda l: 1.0) > 1e-17:
                lmax = int(lmax * 1.25) + 1
            out.append(lmax)
        return out[0], out[1]

    def _log_block(self, l: int, m: int) -> np.ndarray:
        """log of the (j, k) weights of pair (l, m), without the q factors."""
        a, b, x, z = self.a, self.b, self.x, self.z
        j = np.arange(l + 1)[:, None]
        k = np.arange(m + 1)[None, :]
        n = l + m
        return (
            _log_binom(l, j)
            + j * math.log(x)
            + (l - j) * math.log1p(-x)
            + _log_binom(m, k)
            + k * math.log(z)
            + (m - k) * math.log1p(-z)
            + special.betaln(a + j + k, b + n - j - k)
            - special.betaln(a + j, b + l - j)
            - special.betaln(a + k, b + m - k)
        )

    def _kernel_bounds(self):
        """Certified interval for K(x, z; T), the normaliser of the mixture."""
        th = self.theta
        lmax = 8
        scale = 1.3 / (self.z * (1 - self.z) * self.z ** (self.a - 1) * (1 - self.z) ** (self.b - 1))
        while lineage_tail_bound(th, self.T, lmax, lambda l: (l + th + 1) * scale) > 1e-16:
            lmax = int(lmax * 1.25) + 1
        lo = up = 0.0
        a, b, x, z = self.a, self.b, self.x, self.z
        for l in range(lmax + 1):
            env = q_envelope(l, th, self.T, max(0, -(-(q_threshold(l, th, self.T) - l) // 2)) + 30)
            k = np.arange(l + 1)
            s = math.fsum(
                np.exp(
                    _log_binom(l, k)
                    + k * (math.log(x) + math.log(z))
                    + (l - k) * (math.log1p(-x) + math.log1p(-z))
                    - special.betaln(a + k, b + l - k)
                )
            )
            lo += max(env.lower, 0.0) * s
            up += min(env.upper, 1.0) * s
        tail = lineage_tail_bound(th, self.T, lmax, lambda l: (l + th + 1) * scale)
        self.k_lo = lo * (1 - 1e-13)
        self.k_up = (up + tail) * (1 + 1e-13)

    def _build(self, lmax1: int, lmax2: int):
        th = self.theta
        self.limits = (lmax1, lmax2)
        # pairs in row-major order over the rectangle; lineage counts at the two
        # ends decay at different rates, so a Cantor diagonal would waste blocks
        l1, l2 = (g.ravel() for g in np.meshgrid(np.arange(lmax1 + 1), np.arange(lmax2 + 1), indexing="ij"))
        self.l1, self.l2 = l1, l2
        self._blocks = {}
        mass = np.empty(l1.size)
        for i, (l, m) in enumerate(zip(l1, l2)):
            lb = self._log_block(int(l), int(m))
            peak = lb.max()
            mass[i] = math.exp(peak) * math.fsum(np.exp(lb - peak).ravel())
        e1 = _LineageEnvelopes(th, self.t, lmax1)
        e2 = _LineageEnvelopes(th, self.T - self.t, lmax2)
        levels = max(e1.levels, e2.levels)
        lo1, up1 = _pad_levels(e1.lower, levels), _pad_levels(e1.upper, levels)
        lo2, up2 = _pad_levels(e2.lower, levels), _pad_levels(e2.upper, levels)
        # block sums carry O(size * eps) rounding; widen by a generous 1e-12
        p_lo = mass * lo1[:, l1] * lo2[:, l2] / self.k_up * (1 - 1e-12)
        p_up = mass * up1[:, l1] * up2[:, l2] / self.k_lo * (1 + 1e-12)
        s_lo, s_up = _cumulative(p_lo, p_up)
        self._inverter = _SeriesInverter(s_lo, s_up)

    def mixture_indices(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self._inverter.invert_batch(np.asarray(u, dtype=float))

    def sample(self, rng: np.random.Generator, size: int | None = None):
        n = 1 if size is None else int(size)
        u = rng.random(n)
        idx, level = self.mixture_indices(u)
        while True:
            bad = np.flatnonzero(idx < 0)
            if bad.size == 0:
                break
            if np.any(u[bad] >= self._inverter.s_lo[-1, -1]):
                self._build(2 * self.limits[0], 2 * self.limits[1])
            else:
                self.stats.restarts += bad.size
                log.info("series-method bracket collapsed for %d uniform(s); redrawing", bad.size)
                u[bad] = rng.random(bad.size)
            idx[bad], level[bad] = self.mixture_indices(u[bad])
        self.stats.draws += n
        self.stats.max_level = max(self.stats.max_level, int(level.max(initial=0)))
        # the (j, k) split given (l, m) is a finite discrete law, drawn exactly by inversion
        j_all = np.empty(n, dtype=np.int64)
        k_all = np.empty(n, dtype=np.int64)
        v = rng.random(n)
        for pair in np.unique(idx):
            sel = np.flatnonzero(idx == pair)
            l, m = int(self.l1[pair]), int(self.l2[pair])
            cdf = self._block_cdf(l, m)
            flat = np.minimum(np.searchsorted(cdf, v[sel] * cdf[-1], side="right"), cdf.size - 1)
            j_all[sel], k_all[sel] = np.divmod(flat, m + 1)
        total = self.l1[idx] + self.l2[idx]
        y = _beta_draw(rng, self.a + j_all + k_all, self.b + total - j_all - k_all)
        if self.flip:
            y = 1 - y
        return float(y[0]) if size is None else y

    def _block_cdf(self, l: int, m: int) -> np.ndarray:
        key = (l, m)
        if key not in self._blocks:
            lb = self._log_block(l, m)
            self._blocks[key] = np.cumsum(np.exp(lb - lb.max()).ravel())
        return self._blocks[key]


def sample_bridge_general(
    x: float, z: float, t: float, T: float, theta: MutationPair, rng: np.random.Generator, size: int | None = None
):
    """Exact draw(s) of X(t) for the bridge from x to z on [0, T]."""
    return GeneralBridgeSampler(x, z, t, T, theta).sample(rng, size)
