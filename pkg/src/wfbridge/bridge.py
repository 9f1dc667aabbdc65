"""Marginal densities of neutral Wright-Fisher bridges.

A bridge from x at time 0 to z at time T has density at time t

    f(x, y; t) f(y, z; T - t) / f(x, z; T).

When a mutation rate is zero the raw transition densities degenerate at the
boundary, so the ratio is evaluated after the h-transform that maps the
(0, 0) process to (2, 2) and the (0, theta) process to (2, theta). Bridges are
invariant under that transform, and the transformed densities are well
defined at 0. Endpoints x = z = 0 use the closed lineage-series forms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .coalescent import h_value, lineage_tail_bound, q_vector
from .orthopoly import MutationPair
from .wf_density import DensityQuery, density_mixture, g_series, g_theta_series, symmetric_kernel

__all__ = [
    "UnsupportedBridge",
    "BridgeSpec",
    "bridge_density",
    "zero_bridge_density",
    "zero_bridge_theta_density",
    "bridge_mean",
    "bridge_limit_density",
    "bridge_cdf",
    "integrate_density",
]


class UnsupportedBridge(ValueError):
    """Endpoint and mutation combination with no derived density."""


@dataclass(frozen=True)
class BridgeSpec:
    x: float
    z: float
    T: float
    t: float
    theta: MutationPair = field(default_factory=lambda: MutationPair(0.0, 0.0))
    gamma: float = 0.0

    def __post_init__(self):
        if not (0 <= self.x <= 1 and 0 <= self.z <= 1):
            raise ValueError("bridge endpoints must lie in [0, 1]")
        if not 0 < self.t < self.T:
            raise ValueError(f"need 0 < t < T, got t={self.t}, T={self.T}")

    def reversed(self) -> "BridgeSpec":
        return BridgeSpec(self.z, self.x, self.T, self.T - self.t, self.theta, self.gamma)


def _ordered_kernel(a: float, b: float, t: float, theta: MutationPair) -> float:
    lo, hi = min(a, b), max(a, b)
    return float(symmetric_kernel(lo, hi, t, theta))


def _kernel_bridge(x: float, z: float, t: float, T: float, theta: MutationPair, y: np.ndarray) -> np.ndarray:
    """w(y) K(x,y;t) K(z,y;T-t) / K(x,z;T) for a process with both mutation rates positive."""
    w = np.power(y, theta.theta1 - 1) * np.power(1 - y, theta.theta2 - 1)
    num = symmetric_kernel(x, y, t, theta) * symmetric_kernel(z, y, T - t, theta)
    return w * num / _ordered_kernel(x, z, T, theta)


def zero_bridge_density(y, t: float, T: float):
    """Density of a theta = 0 bridge from 0 to 0: y(1-y) g(y;t) g(y;T-t) / h(T)."""
    y = np.asarray(y, dtype=float)
    out = y * (1 - y) * g_series(y, t) * g_series(y, T - t) / h_value(0.0, float(T)).value
    return float(out) if out.ndim == 0 else out


def zero_bridge_theta_density(y, t: float, T: float, theta: float):
    """Density of a 0 to 0 bridge with mutation away from the allele at rate theta/2."""
    if not theta > 0:
        raise ValueError("theta must be positive; use zero_bridge_density for theta = 0")
    y = np.asarray(y, dtype=float)
    out = (
        y
        * np.power(1 - y, 1 - theta)
        * g_theta_series(y, t, theta)
        * g_theta_series(y, T - t, theta)
        / h_value(float(theta), float(T)).value
    )
    return float(out) if out.ndim == 0 else out


def _raw_bridge(spec: BridgeSpec, y: np.ndarray) -> np.ndarray:
    if not (0 < spec.x < 1 and 0 < spec.z < 1):
        raise UnsupportedBridge("the untransformed ratio needs interior endpoints")
    th = spec.theta
    fxy = density_mixture(DensityQuery(spec.x, y, spec.t, th))
    # f(y, z; T-t) for every y at once, via reversibility against the speed density
    s = np.power(y, th.theta1 - 1) * np.power(1 - y, th.theta2 - 1)
    sz = spec.z ** (th.theta1 - 1) * (1 - spec.z) ** (th.theta2 - 1)
    fzy = density_mixture(DensityQuery(spec.z, y, spec.T - spec.t, th))
    fyz = fzy * sz / s
    fxz = density_mixture(DensityQuery(spec.x, spec.z, spec.T, th))
    return fxy * fyz / fxz


def bridge_density(spec: BridgeSpec, y, form: str = "auto"):
    """Density of X(t) for the bridge described by `spec`.

    form="auto" picks the well-defined representation; form="raw" forces the
    untransformed ratio of transition densities (interior endpoints only);
    form="transformed" forces the h-transformed ratio even when x = z = 0.
    """
    if spec.gamma != 0:
        raise UnsupportedBridge("selection bridges live in wfbridge.selection.bridge_selection")
    y_arr = np.asarray(y, dtype=float)
    if np.any((y_arr <= 0) | (y_arr >= 1)):
        raise ValueError("bridge densities are evaluated at interior points")
    th = spec.theta
    if th.theta1 > 0 and th.theta2 == 0:
        # relabel alleles so the zero rate is theta1
        mirrored = BridgeSpec(1 - spec.x, 1 - spec.z, spec.T, spec.t, MutationPair(0.0, th.theta1))
        return bridge_density(mirrored, 1 - y_arr if y_arr.ndim else float(1 - y_arr), form)
    if form == "raw":
        out = _raw_bridge(spec, y_arr)
    elif th.theta1 > 0:
        out = _kernel_bridge(spec.x, spec.z, spec.t, spec.T, th, y_arr)
    elif th.theta2 == 0:
        if form == "auto" and spec.x == spec.z and spec.x in (0.0, 1.0):
            yy = y_arr if spec.x == 0 else 1 - y_arr
            out = np.asarray(zero_bridge_density(yy, spec.t, spec.T))
        else:
            out = _kernel_bridge(spec.x, spec.z, spec.t, spec.T, MutationPair(2, 2), y_arr)
    else:
        if spec.x == 1 or spec.z == 1:
            raise UnsupportedBridge("no derived bridge density with an endpoint at 1 when theta1 = 0 < theta2")
        if form == "auto" and spec.x == 0 and spec.z == 0:
            out = np.asarray(zero_bridge_theta_density(y_arr, spec.t, spec.T, th.theta2))
        else:
            out = _kernel_bridge(spec.x, spec.z, spec.t, spec.T, MutationPair(2, th.theta2), y_arr)
    return float(out) if y_arr.ndim == 0 else out


def bridge_mean(theta: float, t: float, T: float, tol: float = 1e-14) -> float:
    """Mean of a 0 to 0 bridge at time t (mutation away from the allele at rate theta/2).

    Integrating y against the lineage-series density term by term gives

        (2 / h(T)) sum_{l,m} l(l+theta-1) m(m+theta-1) q_l(t) q_m(T-t) / ((n+theta)(n+theta-1)(n+theta-2))

    with n = l + m.
    """
    if not 0 < t < T:
        raise ValueError("need 0 < t < T")

    def weight(l):
        return l * (l + theta - 1)

    def cutoff(s):
        lmax = 4
        while lineage_tail_bound(theta, s, lmax, weight) > tol:
            lmax = int(lmax * 1.25) + 1
        return lmax

    lt, lm = cutoff(t), cutoff(T - t)
    l = np.arange(lt + 1)
    m = np.arange(lm + 1)
    a = weight(l) * q_vector(theta, t, lt)
    b = weight(m) * q_vector(theta, T - t, lm)
    n = l[:, None] + m[None, :] + theta
    lo = 1 if theta > 0 else 2
    mask = (l[:, None] >= lo) & (m[None, :] >= lo)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(mask, a[:, None] * b[None, :] / (n * (n - 1) * (n - 2)), 0.0)
    return float(2 * math.fsum(terms.ravel()) / h_value(float(theta), float(T)).value)


def bridge_limit_density(theta: MutationPair, y):
    """Large-T limit of the 0 to 0 bridge density at a fixed fraction of T.

    Beta(2, 2) without mutation and Beta(2, theta) with mutation away from the
    allele at rate theta/2: only the two-lineage terms survive as T grows.
    """
    y = np.asarray(y, dtype=float)
    if theta.theta1 != 0:
        raise UnsupportedBridge("limit densities are derived for theta1 = 0")
    if theta.theta2 == 0:
        out = 6 * y * (1 - y)
    else:
        th = theta.theta2
        out = th * (th + 1) * y * np.power(1 - y, th - 1)
    return float(out) if out.ndim == 0 else out


def integrate_density(density, lo: float = 0.0, hi: float = 1.0, tol: float = 1e-11) -> float:
    """Adaptive quadrature on (lo, hi); breakpoints near the ends absorb power singularities."""
    pts = [p for p in (1e-6, 1e-3, 0.05, 0.5, 0.95, 1 - 1e-3, 1 - 1e-6) if lo < p < hi]
    edges = [lo, *pts, hi]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(lambda u: float(density(u)), a, b, epsabs=tol, epsrel=tol, limit=200)
        total += val
    return total


def _graded_pieces(lo: float, hi: float, toward_lo: bool, finest: float = 1e-12) -> list[tuple[float, float]]:
    """Split [lo, hi] geometrically toward one end to resolve an endpoint power singularity."""
    width = hi - lo
    # stop grading where quadrature nodes would round onto the endpoint
    levels = max(1, math.ceil(math.log2(width / finest)))
    cuts = [width * 0.5**k for k in range(levels)]
    if toward_lo:
        pts = [lo + c for c in reversed(cuts)]
        return list(zip([lo] + pts[:-1], pts))
    pts = [hi - c for c in cuts]
    return list(zip(pts, pts[1:] + [hi]))


def bridge_cdf(density, grid, order: int = 24) -> np.ndarray:
    """CDF of `density` at the points of an increasing grid in [0, 1].

    Each grid cell is integrated with Gauss-Legendre nodes; cells touching 0 or
    1 are graded geometrically so integrable endpoint singularities converge.
    `density` must accept an array of interior points.
    """
    grid = np.asarray(grid, dtype=float)
    nodes, weights = np.polynomial.legendre.leggauss(order)
    edges = np.concatenate([[0.0], grid])
    pieces, owner = [], []
    for i, (a, b) in enumerate(zip(edges[:-1], edges[1:])):
        if b <= a:
            continue
        if a == 0.0 and b == 1.0:
            cells = _graded_pieces(0.0, 0.5, True) + _graded_pieces(0.5, 1.0, False)
        elif a == 0.0:
            cells = _graded_pieces(a, b, True)
        elif b == 1.0:
            cells = _graded_pieces(a, b, False)
        else:
            cells = [(a, b)]
        pieces.extend(cells)
        owner.extend([i] * len(cells))
    pieces = np.array(pieces)
    mid = 0.5 * (pieces[:, 0] + pieces[:, 1])
    half = 0.5 * (pieces[:, 1] - pieces[:, 0])
    pts = mid[:, None] + half[:, None] * nodes[None, :]
    vals = np.asarray(density(pts.ravel()), dtype=float).reshape(pts.shape)
    cell_mass = (vals * weights[None, :]).sum(axis=1) * half
    mass = np.bincount(np.array(owner), weights=cell_mass, minlength=grid.size)
    return np.cumsum(mass)
