"""Jacobi polynomials, Beta densities and the selection normalizer.

Jacobi polynomials use the classical normalization

    P_n^{(a,b)}(r) = (a+1)_n / n! * 2F1(-n, a+b+n+1; a+1; (1-r)/2),

orthogonal on (1-r)^a (1+r)^b over [-1, 1], and are evaluated with the
three-term recurrence. Parameters down to a = b = -1 are admitted; there the
polynomials are defined by continuity in (a, b).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

__all__ = [
    "JacobiParams",
    "MutationPair",
    "rising",
    "falling",
    "jacobi_eval",
    "jacobi_table",
    "jacobi_column_mp",
    "jacobi_derivative_table",
    "spectral_coefficient",
    "jacobi_orthonormal",
    "beta_density",
    "log_beta_density",
    "hyp1f1",
    "selection_normalizer",
]


@dataclass(frozen=True)
class JacobiParams:
    a: float
    b: float
    n: int

    def __post_init__(self):
        if self.a < -1 or self.b < -1:
            raise ValueError(f"Jacobi parameters must be >= -1, got a={self.a}, b={self.b}")
        if self.n < 0 or int(self.n) != self.n:
            raise ValueError(f"degree must be a nonnegative integer, got {self.n}")


@dataclass(frozen=True)
class MutationPair:
    """Mutation rates (theta1, theta2); theta1 is the rate a -> A."""

    theta1: float
    theta2: float

    def __post_init__(self):
        if self.theta1 < 0 or self.theta2 < 0:
            raise ValueError(f"mutation rates must be nonnegative, got {self.theta1}, {self.theta2}")
        object.__setattr__(self, "theta1", float(self.theta1))
        object.__setattr__(self, "theta2", float(self.theta2))

    @property
    def theta(self) -> float:
        return self.theta1 + self.theta2

    @property
    def start_index(self) -> int:
        """First active index of the spectral expansion."""
        return int(self.theta1 == 0) + int(self.theta2 == 0)

    def __iter__(self):
        yield self.theta1
        yield self.theta2


def rising(base: float, order: int) -> float:
    """Rising factorial base(base+1)...(base+order-1); order 0 gives 1."""
    out = 1.0
    for j in range(order):
        out *= base + j
    return out


def falling(base: float, order: int) -> float:
    """Falling factorial base(base-1)...(base-order+1); order 0 gives 1."""
    out = 1.0
    for j in range(order):
        out *= base - j
    return out


def _check_r(r):
    r = np.asarray(r, dtype=float)
    if np.any(np.abs(r) > 1.0 + 1e-14):
        raise ValueError("Jacobi argument must lie in [-1, 1]")
    return r


def jacobi_table(nmax: int, a: float, b: float, r) -> np.ndarray:
    """Rows P_0 .. P_nmax evaluated at every point of `r`.

    Returns an array of shape (nmax + 1,) + shape(r).
    """
    if a < -1 or b < -1:
        raise ValueError(f"Jacobi parameters must be >= -1, got a={a}, b={b}")
    r = _check_r(r)
    out = np.empty((nmax + 1,) + r.shape)
    out[0] = 1.0
    if nmax == 0:
        return out
    out[1] = (a + 1) + (a + b + 2) * (r - 1) / 2
    ab = a + b
    for n in range(2, nmax + 1):
        lead = 2 * n * (n + ab) * (2 * n + ab - 2)
        if lead == 0:
            # only reachable for a = b = -1, n = 2 in the admissible range
            out[n] = (r * r - 1) / 4
            continue
        c1 = (2 * n + ab - 1) * ((2 * n + ab) * (2 * n + ab - 2) * r + a * a - b * b)
        c2 = 2 * (n + a - 1) * (n + b - 1) * (2 * n + ab)
        out[n] = (c1 * out[n - 1] - c2 * out[n - 2]) / lead
    return out


def jacobi_column_mp(nmax: int, a, b, r) -> list:
    """P_0 .. P_nmax at a single point in the current mpmath precision."""
    import mpmath

    a, b, r = mpmath.mpf(a), mpmath.mpf(b), mpmath.mpf(r)
    out = [mpmath.mpf(1)]
    if nmax == 0:
        return out
    out.append((a + 1) + (a + b + 2) * (r - 1) / 2)
    ab = a + b
    for n in range(2, nmax + 1):
        lead = 2 * n * (n + ab) * (2 * n + ab - 2)
        if lead == 0:
            out.append((r * r - 1) / 4)
            continue
        c1 = (2 * n + ab - 1) * ((2 * n + ab) * (2 * n + ab - 2) * r + a * a - b * b)
        c2 = 2 * (n + a - 1) * (n + b - 1) * (2 * n + ab)
        out.append((c1 * out[n - 1] - c2 * out[n - 2]) / lead)
    return out


def jacobi_eval(p: JacobiParams, r):
    """Evaluate P_n^{(a,b)}(r); scalar in, scalar out."""
    vals = jacobi_table(p.n, p.a, p.b, r)[p.n]
    return float(vals) if vals.ndim == 0 else vals


def jacobi_derivative_table(nmax: int, a: float, b: float, r) -> np.ndarray:
    """d/dr of P_0 .. P_nmax, from P_n' = (n+a+b+1)/2 * P_{n-1}^{(a+1,b+1)}."""
    r = _check_r(r)
    out = np.zeros((nmax + 1,) + r.shape)
    if nmax == 0:
        return out
    shifted = jacobi_table(nmax - 1, a + 1, b + 1, r)
    for n in range(1, nmax + 1):
        out[n] = 0.5 * (n + a + b + 1) * shifted[n - 1]
    return out


def spectral_coefficient(n: int, theta1: float, theta2: float) -> float:
    """c_n(theta1, theta2) = n! Gamma(n+theta-1)(2n+theta-1) / (Gamma(n+theta1) Gamma(n+theta2)).

    Zero when Gamma(n + theta_i) is infinite (inactive index); the n = 0,
    theta = 1 corner is taken by continuity.
    """
    theta = theta1 + theta2
    if n + theta1 <= 0 or n + theta2 <= 0:
        return 0.0
    if n == 0:
        return math.exp(-special.betaln(theta1, theta2))
    if n + theta - 1 <= 0:
        raise ValueError(f"index n={n} is not active for theta=({theta1}, {theta2})")
    log_c = (
        math.lgamma(n + 1)
        + math.lgamma(n + theta - 1)
        + math.log(2 * n + theta - 1)
        - math.lgamma(n + theta1)
        - math.lgamma(n + theta2)
    )
    return math.exp(log_c)


def jacobi_orthonormal(theta: MutationPair, n: int, x):
    """Polynomial of degree n orthonormal under the Beta(theta1, theta2) law.

    Equal to sqrt(B(theta1, theta2) c_n) P_n^{(theta2-1, theta1-1)}(2x-1).
    """
    if theta.theta1 <= 0 or theta.theta2 <= 0:
        raise ValueError("orthonormal polynomials need both mutation rates positive")
    x = np.asarray(x, dtype=float)
    scale = math.sqrt(math.exp(special.betaln(theta.theta1, theta.theta2)) * spectral_coefficient(n, *theta))
    vals = scale * jacobi_table(n, theta.theta2 - 1, theta.theta1 - 1, 2 * x - 1)[n]
    return float(vals) if vals.ndim == 0 else vals


def log_beta_density(a: float, b: float, y):
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore"):
        return special.xlogy(a - 1, y) + special.xlog1py(b - 1, -y) - special.betaln(a, b)


def beta_density(a: float, b: float, y):
    """Beta(a, b) density, evaluated in log space.

    At y = 0 (resp. 1) returns 0 if the exponent a-1 (resp. b-1) is positive and
    raises if it is negative.
    """
    if a <= 0 or b <= 0:
        raise ValueError(f"Beta parameters must be positive, got {a}, {b}")
    y = np.asarray(y, dtype=float)
    if np.any((y < 0) | (y > 1)):
        raise ValueError("Beta density evaluated outside [0, 1]")
    if (a < 1 and np.any(y == 0)) or (b < 1 and np.any(y == 1)):
        raise ValueError("Beta density diverges at the boundary")
    out = np.exp(log_beta_density(a, b, y))
    return float(out) if out.ndim == 0 else out


def hyp1f1(a: float, b: float, z: float, rtol: float = 1e-15) -> float:
    """Kummer's 1F1(a; b; z) for a >= 0, b > 0 by its power series.

    Negative z is mapped through Kummer's transformation so the summed series
    always has nonnegative terms.
    """
    if b <= 0 or a < 0:
        raise ValueError(f"need a >= 0 and b > 0, got a={a}, b={b}")
    if z < 0:
        return math.exp(z) * hyp1f1(b - a, b, -z, rtol)
    total = 1.0
    term = 1.0
    k = 0
    while True:
        term *= (a + k) / (b + k) * z / (k + 1)
        k += 1
        total += term
        ratio = (a + k) / (b + k) * z / (k + 1)
        if term == 0.0:
            break
        # geometric tail bound once the term ratio is below one half
        if ratio < 0.5 and term * ratio / (1 - ratio) < rtol * total * 1e-2:
            break
    return total


def selection_normalizer(theta: MutationPair, gamma: float) -> float:
    """c(theta) = E[exp(gamma X)] for X ~ Beta(theta1, theta2), i.e. 1F1(theta1; theta; gamma).

    Degenerate limits are allowed: theta1 = 0 gives 1, theta2 = 0 gives e^gamma.
    """
    if theta.theta <= 0:
        raise ValueError("selection normalizer needs theta1 + theta2 > 0")
    return hyp1f1(theta.theta1, theta.theta, gamma)
