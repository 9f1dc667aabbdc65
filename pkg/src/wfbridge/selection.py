"""Wright-Fisher diffusion with genic selection and mutation away from allele A.

The generator is

    L = 1/2 x(1-x) d^2/dx^2 + 1/2 (gamma x(1-x) - theta x) d/dx,

with theta1 = 0 and theta2 = theta >= 0, so x = 0 is absorbing. Three
computational routes are provided.

Eigenpairs of L come from a Galerkin projection in the weak form
1/2 int x(1-x) m w' v' = lambda int m w v, with m the speed density
e^{gamma x} x^{-1} (1-x)^{theta-1}. The trial functions vanish where the
eigenfunctions must vanish: x(1-x) P_i^{(1,1)}(2x-1) for theta = 0 and
x P_i^{(1,1)}(2x-1) for theta > 0.

The genealogical route integrates the forward equations of the dual
birth-death process on a truncated lattice. The process comes down from
infinity, which a finite lattice cannot represent. It is therefore started
from the neutral lineage law at a small time on a large lattice, where
selection has had little time to act, and carried down a ladder of coarser
lattices until it reaches the working truncation level.

The eigen-expansion of the transition density is an independent check on the
genealogical route.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from numpy.polynomial import chebyshev
from scipy import integrate, linalg, sparse, special
from scipy.sparse import linalg as sparse_linalg

from .bridge import BridgeSpec, UnsupportedBridge
from .coalescent import lineage_tail_bound, q_vector
from .orthopoly import MutationPair, hyp1f1, jacobi_table

__all__ = [
    "SelectionModel",
    "EigenSolution",
    "DualLattice",
    "eigenpairs",
    "first_eigenpair",
    "yaglom_selection",
    "psi_density",
    "transformed_drift",
    "dual_transition",
    "density_selection",
    "density_selection_spectral",
    "bridge_selection",
    "bridge_selection_spectral",
    "entrance_time",
]

RESIDUAL_TARGET = 1e-8
MAX_BASIS = 400


@dataclass(frozen=True)
class SelectionModel:
    """Selection strength gamma; mutation rates (0, theta)."""

    gamma: float
    theta: float = 0.0

    def __post_init__(self):
        if self.theta < 0:
            raise ValueError("theta must be nonnegative")
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "theta", float(self.theta))

    @property
    def mutation(self) -> MutationPair:
        return MutationPair(0.0, self.theta)

    def speed_density(self, y):
        y = np.asarray(y, dtype=float)
        return np.exp(self.gamma * y) / y * np.power(1 - y, self.theta - 1)

    def normalizer(self, a1: float, a2: float) -> float:
        """c(a1, a2) = E[exp(gamma X)] for X ~ Beta(a1, a2); c(0, a2) = 1."""
        if a1 == 0:
            return 1.0
        return hyp1f1(a1, a1 + a2, self.gamma)


# trial functions s(x) P_i(2x-1); s vanishes at the absorbing boundaries


def _envelope(theta: float, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if theta == 0:
        return x * (1 - x), 1 - 2 * x, np.full_like(x, -2.0)
    return x, np.ones_like(x), np.zeros_like(x)


def _jacobi_with_derivatives(size: int, r: np.ndarray):
    p = jacobi_table(size - 1, 1.0, 1.0, r)
    dp = np.zeros_like(p)
    d2p = np.zeros_like(p)
    if size > 1:
        p1 = jacobi_table(size - 2, 2.0, 2.0, r)
        for n in range(1, size):
            dp[n] = 0.5 * (n + 3) * p1[n - 1]
    if size > 2:
        p2 = jacobi_table(size - 3, 3.0, 3.0, r)
        for n in range(2, size):
            d2p[n] = 0.25 * (n + 3) * (n + 4) * p2[n - 2]
    return p, dp, d2p


def _basis(theta: float, size: int, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """phi_i, phi_i', phi_i'' at x; arrays of shape (size, len(x))."""
    x = np.asarray(x, dtype=float)
    r = 2 * x - 1
    s, ds, d2s = _envelope(theta, x)
    p, dp, d2p = _jacobi_with_derivatives(size, r)
    phi = s * p
    dphi = ds * p + 2 * s * dp
    d2phi = d2s * p + 4 * ds * dp + 4 * s * d2p
    return phi, dphi, d2phi


def _gauss(p1: float, p2: float, n: int):
    """Nodes and weights for int_0^1 x^p1 (1-x)^p2 F(x) dx."""
    r, w = special.roots_jacobi(n, p2, p1)
    return (1 + r) / 2, w * 2.0 ** (-p1 - p2 - 1)


@dataclass(frozen=True)
class EigenSolution:
    """Eigenpair (lambda, w) of -L, w expanded in the trial functions.

    For the first eigenpair w is positive on (0, 1) and scaled so that
    int_0^1 w = 1; higher eigenfunctions have unit norm in L^2(m).
    """

    order: int
    eigenvalue: float
    coefficients: np.ndarray
    basis_size: int
    residual: float
    model: SelectionModel = field(repr=False)

    @property
    def spheroidal_eigenvalue(self) -> float:
        """Eigenvalue mu of d/dz((1-z^2) S') + (mu + c^2 (1-z^2) - 1/(1-z^2)) S = 0, c^2 = -gamma^2/16.

        Substituting w = e^{-gamma x/2} sqrt(x(1-x)) S(2x-1) into the generator
        gives mu = 2 lambda exactly (meaningful for theta = 0).
        """
        return 2 * self.eigenvalue

    def w(self, x):
        x = np.asarray(x, dtype=float)
        phi, _, _ = _basis(self.model.theta, self.basis_size, x.reshape(-1))
        out = (self.coefficients @ phi).reshape(x.shape)
        return float(out) if out.ndim == 0 else out

    def dw(self, x):
        x = np.asarray(x, dtype=float)
        _, dphi, _ = _basis(self.model.theta, self.basis_size, x.reshape(-1))
        out = (self.coefficients @ dphi).reshape(x.shape)
        return float(out) if out.ndim == 0 else out

    def d2w(self, x):
        x = np.asarray(x, dtype=float)
        _, _, d2phi = _basis(self.model.theta, self.basis_size, x.reshape(-1))
        out = (self.coefficients @ d2phi).reshape(x.shape)
        return float(out) if out.ndim == 0 else out


def _galerkin(model: SelectionModel, size: int):
    th, g = model.theta, model.gamma
    nq = size + 30 + int(2 * abs(g))
    # mass: m phi_i phi_j = e^{gx} x^{-1}(1-x)^{th-1} s^2 P_i P_j
    lift = 2 if th == 0 else 0
    xm, wm = _gauss(1.0, th - 1 + lift, nq)
    pm = jacobi_table(size - 1, 1.0, 1.0, 2 * xm - 1)
    mass = (pm * (wm * np.exp(g * xm))) @ pm.T
    # stiffness: 1/2 x(1-x) m phi_i' phi_j' = 1/2 e^{gx} (1-x)^th phi_i' phi_j'
    xs, ws = _gauss(0.0, th, nq)
    _, dphi, _ = _basis(th, size, xs)
    stiff = 0.5 * (dphi * (ws * np.exp(g * xs))) @ dphi.T
    vals, vecs = linalg.eigh(stiff, mass)
    return vals, vecs


def _apply_generator(model: SelectionModel, sol_coef: np.ndarray, size: int, x: np.ndarray) -> np.ndarray:
    phi, dphi, d2phi = _basis(model.theta, size, x)
    w1 = sol_coef @ dphi
    w2 = sol_coef @ d2phi
    return 0.5 * x * (1 - x) * w2 + 0.5 * (model.gamma * x * (1 - x) - model.theta * x) * w1


def _residual(model: SelectionModel, lam: float, coef: np.ndarray, size: int) -> float:
    """||L w + lambda w||_m / ||w||_m by Gauss quadrature."""
    th = model.theta
    nq = size + 40 + int(2 * abs(model.gamma))
    x, wq = _gauss(0.0, 0.0, nq)
    m = model.speed_density(x)
    w = coef @ _basis(th, size, x)[0]
    r = _apply_generator(model, coef, size, x) + lam * w
    return math.sqrt(np.sum(wq * m * r * r) / np.sum(wq * m * w * w))


def _normalized(model: SelectionModel, coef: np.ndarray, size: int, order: int) -> np.ndarray:
    if order == 1:
        x, wq = _gauss(0.0, 0.0, size + 30)
        total = np.sum(wq * (coef @ _basis(model.theta, size, x)[0]))
        return coef / total
    # eigh returns vectors with unit M-norm, which is the L^2(m) norm of w
    sign = 1.0 if float(coef @ _basis(model.theta, size, np.array([1e-3]))[1][:, 0]) >= 0 else -1.0
    return sign * coef


@lru_cache(maxsize=64)
def _eigen_cached(model: SelectionModel, count: int, size: int | None) -> tuple[EigenSolution, ...]:
    n = size or max(8, 2 * count)
    while True:
        vals, vecs = _galerkin(model, n)
        sols = []
        worst = 0.0
        for k in range(count):
            coef = _normalized(model, vecs[:, k], n, k + 1)
            res = _residual(model, vals[k], coef, n)
            worst = max(worst, res)
            sols.append(EigenSolution(k + 1, float(vals[k]), coef, n, res, model))
        if size is not None or worst < RESIDUAL_TARGET:
            return tuple(sols)
        if n >= MAX_BASIS:
            raise RuntimeError(f"eigen residual {worst:.3g} above target at basis size {n}")
        n = min(2 * n, MAX_BASIS)


def eigenpairs(model: SelectionModel, count: int, size: int | None = None) -> list[EigenSolution]:
    """The `count` slowest-decaying eigenpairs, growing the basis until every residual is below 1e-8.

    gamma < 0 is mapped to gamma > 0 by relabelling alleles when theta = 0.
    """
    if model.gamma < 0:
        if model.theta != 0:
            raise ValueError("negative gamma is handled by allele relabelling, which needs theta = 0")
        mirrored = _eigen_cached(SelectionModel(-model.gamma, 0.0), count, size)
        return [_Mirrored(s) for s in mirrored]
    return list(_eigen_cached(model, count, size))


class _Mirrored:
    """Eigenpair of the relabelled model: w(x) -> w(1 - x)."""

    def __init__(self, base: EigenSolution):
        self.base = base
        self.order = base.order
        self.eigenvalue = base.eigenvalue
        self.coefficients = base.coefficients
        self.basis_size = base.basis_size
        self.residual = base.residual
        self.model = SelectionModel(-base.model.gamma, 0.0)

    @property
    def spheroidal_eigenvalue(self) -> float:
        return self.base.spheroidal_eigenvalue

    def w(self, x):
        return self.base.w(1 - np.asarray(x, dtype=float))

    def dw(self, x):
        return -self.base.dw(1 - np.asarray(x, dtype=float))

    def d2w(self, x):
        return self.base.d2w(1 - np.asarray(x, dtype=float))


def first_eigenpair(model: SelectionModel, size: int | None = None) -> EigenSolution:
    return eigenpairs(model, 1, size)[0]


def _normalize_on_unit_interval(f) -> float:
    total = 0.0
    for a, b in ((0.0, 1e-6), (1e-6, 0.5), (0.5, 1 - 1e-6), (1 - 1e-6, 1.0)):
        val, _ = integrate.quad(f, a, b, epsabs=1e-14, epsrel=1e-13, limit=200)
        total += val
    return total


@lru_cache(maxsize=64)
def _yaglom_constant(model: SelectionModel) -> float:
    sol = first_eigenpair(model)
    return _normalize_on_unit_interval(lambda y: float(model.speed_density(y) * sol.w(y)))


@lru_cache(maxsize=64)
def _psi_constant(model: SelectionModel) -> float:
    sol = first_eigenpair(model)
    return _normalize_on_unit_interval(lambda y: float(model.speed_density(y) * sol.w(y) ** 2))


def yaglom_selection(model: SelectionModel, y):
    """Quasi-stationary density: proportional to the speed density times w."""
    y = np.asarray(y, dtype=float)
    out = model.speed_density(y) * first_eigenpair(model).w(y) / _yaglom_constant(model)
    return float(out) if out.ndim == 0 else out


def psi_density(model: SelectionModel, y):
    """Stationary density of the w-transformed process: proportional to the speed density times w^2."""
    y = np.asarray(y, dtype=float)
    out = model.speed_density(y) * first_eigenpair(model).w(y) ** 2 / _psi_constant(model)
    return float(out) if out.ndim == 0 else out


def transformed_drift(model: SelectionModel, x, delta: float = 1e-6):
    """Drift of the w-transformed process: gamma x(1-x)/2 + x(1-x) w'/w - theta x/2."""
    x = np.asarray(x, dtype=float)
    if np.any((x < delta) | (x > 1 - delta)):
        raise ValueError(f"drift is evaluated on [{delta}, {1 - delta}]; w vanishes at the boundary")
    sol = first_eigenpair(model)
    out = 0.5 * model.gamma * x * (1 - x) + x * (1 - x) * sol.dw(x) / sol.w(x) - 0.5 * model.theta * x
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------- dual lattice


@dataclass(frozen=True)
class DualLattice:
    """b_alpha(t, x) on the truncated lattice, keyed by alpha = (alpha1, alpha2)."""

    N: int
    t: float
    x: float
    values: dict
    mass_defect: float

    def total(self) -> float:
        return math.fsum(self.values.values())


@lru_cache(maxsize=64)
def entrance_time(theta: float, N: int, tol: float = 1e-12) -> float:
    """Smallest t (to 1%) at which neutral lineage mass above N is at most tol."""

    def ok(t):
        return lineage_tail_bound(theta, t, N) <= tol

    # about 2/t lineages survive to time t, so the answer lies above 2/N
    lo, hi = 2.0 / N, 4.0 / N
    if ok(lo):
        return lo
    while not ok(hi):
        lo, hi = hi, 2 * hi
    while hi / lo > 1.01:
        mid = math.sqrt(lo * hi)
        lo, hi = (lo, mid) if ok(mid) else (mid, hi)
    return hi


class _Lattice:
    """Dual states {alpha1 >= 1, alpha2 >= lo, |alpha| <= N} and their generator.

    Index len(states) is an absorbing overflow state collecting births above
    level N. Deaths into alpha1 = 0 (or alpha2 = 0 when theta = 0) are
    absorption of the diffusion and leave the lattice.
    """

    def __init__(self, model: SelectionModel, N: int):
        self.model, self.N = model, N
        th, g = model.theta, model.gamma
        lo2 = 1 if th == 0 else 0
        self.states = [(a1, n - a1) for n in range(1 + lo2, N + 1) for a1 in range(1, n - lo2 + 1)]
        self.index = {s: i for i, s in enumerate(self.states)}
        self.a1 = np.array([s[0] for s in self.states])
        self.a2 = np.array([s[1] for s in self.states])
        self.level = self.a1 + self.a2
        size = len(self.states)
        self.overflow = size

        cache: dict = {}

        def cval(a1, a2):
            if (a1, a2) not in cache:
                cache[(a1, a2)] = model.normalizer(a1, a2 + th)
            return cache[(a1, a2)]

        rows, cols, vals = [], [], []
        for i, (a1, a2) in enumerate(self.states):
            n = a1 + a2
            base = cval(a1, a2)
            rows.append(i)
            cols.append(i)
            vals.append(-0.5 * (a2 * g + n * (n + th - 1)))
            moves = [((a1 - 1, a2), 0.5 * a1 * (n + th - 1) * cval(a1 - 1, a2) / base)]
            if a2 > 0:
                moves.append(((a1, a2 - 1), 0.5 * a2 * (n + th - 1) * cval(a1, a2 - 1) / base))
            for target, rate in moves:
                j = self.index.get(target)
                if j is not None:
                    rows.append(i)
                    cols.append(j)
                    vals.append(rate)
            if g > 0:
                rows.append(i)
                cols.append(self.index.get((a1, a2 + 1), self.overflow))
                vals.append(0.5 * g * (th + a2) * n / (n + th) * cval(a1, a2 + 1) / base)
        self.G = sparse.csr_matrix((vals, (rows, cols)), shape=(size + 1, size + 1))

    def neutral_law(self, t: float, x: np.ndarray) -> np.ndarray:
        """q_n(t) C(n, alpha1) x^alpha1 (1-x)^alpha2, one column per x; zero overflow row."""
        q = q_vector(self.model.theta, t, self.N)[self.level]
        x = np.asarray(x, dtype=float).reshape(1, -1)
        logc = (
            special.gammaln(self.level + 1) - special.gammaln(self.a1 + 1) - special.gammaln(self.a2 + 1)
        )[:, None]
        out = np.zeros((len(self.states) + 1, x.shape[1]))
        out[:-1] = q[:, None] * np.exp(
            logc + special.xlogy(self.a1[:, None], x) + special.xlog1py(self.a2[:, None], -x)
        )
        return out

    def restrict(self, b: np.ndarray, coarse: "_Lattice") -> np.ndarray:
        """Map rows onto a coarser lattice; mass above its top level joins the overflow row."""
        out = np.zeros((len(coarse.states) + 1, b.shape[1]))
        keep = self.level <= coarse.N
        idx = [coarse.index[s] for s, k in zip(self.states, keep) if k]
        out[idx] = b[:-1][keep]
        out[-1] = b[-1] + b[:-1][~keep].sum(axis=0)
        return out


ENTRANCE_DEPTH = 2
ENTRANCE_NODES = 64


class _DualGenerator:
    """Dual transition functions on the lattice |alpha| <= N for t >= t0.

    The law at t0 comes from a ladder of lattices N 2^d, d = depth, ..., 0.
    The finest one starts from the neutral law at its own entrance time, where
    selection has had almost no time to act; each rung is propagated to the
    entrance time of the next coarser lattice and restricted to it. The
    dependence on the starting frequency is carried by Chebyshev
    interpolation in x.
    """

    def __init__(self, model: SelectionModel, N: int, depth: int = ENTRANCE_DEPTH, nodes: int = ENTRANCE_NODES):
        if model.gamma < 0:
            raise ValueError("the dual process needs gamma >= 0")
        if N < 4:
            raise ValueError("truncation N must be at least 4")
        self.model, self.N, self.depth = model, N, depth
        th = model.theta
        ladder = [_Lattice(model, N * 2**d) for d in range(depth, -1, -1)]
        times = [entrance_time(th, lat.N) for lat in ladder]
        u = np.cos(np.pi * (np.arange(nodes) + 0.5) / nodes)
        b = ladder[0].neutral_law(times[0], (1 + u) / 2)
        for fine, coarse, s0, s1 in zip(ladder[:-1], ladder[1:], times[:-1], times[1:]):
            b = sparse_linalg.expm_multiply(fine.G.T.tocsr(), b, start=0.0, stop=s1 - s0, num=2, endpoint=True)[-1]
            b = fine.restrict(b, coarse)
        lattice = ladder[-1]
        self.lattice = lattice
        self.states = lattice.states
        self.a1, self.a2, self.level = lattice.a1, lattice.a2, lattice.level
        self.G = lattice.G.toarray()
        self.t0 = times[-1]
        self.initial_tail = lineage_tail_bound(th, times[0], ladder[0].N)
        self._coef = chebyshev.chebfit(u, b.T, nodes - 1)
        self._slope0 = 2 * chebyshev.chebval(-1.0, chebyshev.chebder(self._coef))

    @cached_property
    def log_normalizer(self) -> np.ndarray:
        """log c(alpha + theta) for every lattice state."""
        th = self.model.theta
        return np.log([self.model.normalizer(a1, a2 + th) for a1, a2 in self.states])

    @cached_property
    def slice_weight(self) -> np.ndarray:
        """(alpha2 + theta) / c(1, alpha2 + theta) on the alpha1 = 1 slice, zero elsewhere."""
        th = self.model.theta
        weight = (self.a2 + th) * np.exp(-self.log_normalizer)
        return np.where(self.a1 == 1, weight, 0.0)

    @lru_cache(maxsize=256)
    def propagator(self, s: float) -> np.ndarray:
        return linalg.expm(self.G * s)

    def initial(self, x: np.ndarray) -> np.ndarray:
        """Law at t0 started from each x; one column per x, overflow in the last row."""
        x = np.asarray(x, dtype=float).reshape(-1)
        return chebyshev.chebval(2 * x - 1, self._coef)

    def initial_slope_at_zero(self) -> np.ndarray:
        """x-derivative of the law at t0 at x = 0, from the Chebyshev expansion."""
        return self._slope0.copy()

    def evolve(self, t: float, init: np.ndarray) -> np.ndarray:
        if t < self.t0:
            raise ValueError(f"t = {t} is below the entrance time {self.t0:.4g} supported by truncation N = {self.N}")
        if t == self.t0:
            return init
        return self.propagator(round(t - self.t0, 15)).T @ init


@lru_cache(maxsize=32)
def _generator(model: SelectionModel, N: int, depth: int = ENTRANCE_DEPTH) -> _DualGenerator:
    return _DualGenerator(model, N, depth)


def dual_transition(model: SelectionModel, t: float, x: float, N: int = 40, tol: float | None = None) -> DualLattice:
    """Transition functions b_alpha(t, x) of the dual process on the lattice |alpha| <= N."""
    gen = _generator(model, N)
    b = gen.evolve(t, gen.initial(np.array([x])))[:, 0]
    defect = float(b[-1]) + gen.initial_tail
    if tol is not None and defect > tol:
        raise RuntimeError(f"truncation defect {defect:.3g} exceeds tolerance {tol:.3g} at N = {N}")
    values = {s: max(float(v), 0.0) for s, v in zip(gen.states, b[:-1])}
    return DualLattice(N, float(t), float(x), values, defect)


def _pi_matrix(model: SelectionModel, gen: _DualGenerator, y: np.ndarray) -> np.ndarray:
    """pi[alpha + theta](y) for every lattice state (rows) and y (columns)."""
    a = gen.a1.astype(float)
    b = gen.a2 + model.theta
    logc = gen.log_normalizer
    y = y.reshape(1, -1)
    return np.exp(
        model.gamma * y
        + special.xlogy(a[:, None] - 1, y)
        + special.xlog1py(b[:, None] - 1, -y)
        - special.betaln(a, b)[:, None]
        - logc[:, None]
    )


def _lattice_density(gen: _DualGenerator, model: SelectionModel, x: float, y: np.ndarray, t: float):
    b = gen.evolve(t, gen.initial(np.array([x])))[:, 0]
    return b[:-1] @ _pi_matrix(model, gen, y), float(b[-1]) + gen.initial_tail


def density_selection(model: SelectionModel, x: float, y, t: float, N: int = 40):
    """Transition density sum_alpha b_alpha(t, x) pi[alpha + theta](y) on the truncated lattice.

    Returns (density, error_bound). The bound adds the truncation defect times
    the largest pi value involved to an entrance-error estimate: the change
    from the next shallower entrance ladder, which overstates the error since
    each extra rung shrinks it several-fold.
    """
    y = np.asarray(y, dtype=float)
    flat = y.reshape(-1)
    gen = _generator(model, N)
    dens, defect = _lattice_density(gen, model, x, flat, t)
    bound = defect * float(_pi_matrix(model, gen, flat).max())
    if gen.depth > 0:
        coarse, _ = _lattice_density(_generator(model, N, gen.depth - 1), model, x, flat, t)
        bound += float(np.max(np.abs(dens - coarse)))
    dens = dens.reshape(y.shape)
    return (float(dens) if dens.ndim == 0 else dens), bound


def density_selection_spectral(model: SelectionModel, x: float, y, t: float, count: int = 6):
    """m(y) sum_n e^{-lambda_n t} w_n(x) w_n(y) / ||w_n||_m^2 over the first `count` eigenpairs."""
    y = np.asarray(y, dtype=float)
    sols = eigenpairs(model, count)
    total = np.zeros(y.shape)
    for s in sols:
        norm = _m_norm_sq(model, s)
        total = total + math.exp(-s.eigenvalue * t) * s.w(x) * s.w(y) / norm
    out = model.speed_density(y) * total
    return float(out) if out.ndim == 0 else out


def _m_norm_sq(model: SelectionModel, s: EigenSolution) -> float:
    th = model.theta
    lift = 2 if th == 0 else 0
    xm, wm = _gauss(1.0, th - 1 + lift, s.basis_size + 40 + int(2 * abs(model.gamma)))
    p = jacobi_table(s.basis_size - 1, 1.0, 1.0, 2 * xm - 1)
    vals = s.coefficients @ p
    # m w^2 = e^{gx} x^{-1}(1-x)^{th-1} env^2 P^2 and the Gauss weight absorbs everything but e^{gx} P^2
    return float(np.sum(wm * np.exp(model.gamma * xm) * vals * vals))


def _g_selection(model: SelectionModel, gen: _DualGenerator, t: float, y: np.ndarray) -> np.ndarray:
    """g(y; t) = m(y) sum_{alpha2} b_(1,alpha2)(t, y) (alpha2 + theta) / c(1, alpha2 + theta)."""
    b = gen.evolve(t, gen.initial(y))[:-1]
    return model.speed_density(y) * (gen.slice_weight @ b)


def _bridge_normalizer(model: SelectionModel, gen: _DualGenerator, T: float) -> float:
    """sum_{alpha2} d/dy b_(1,alpha2)(T, y)|_{y=0} (alpha2 + theta) / c(1, alpha2 + theta)."""
    slope = gen.evolve(T, gen.initial_slope_at_zero()[:, None])[:-1, 0]
    return float(gen.slice_weight @ slope)


def _selection_bridge_model(spec: BridgeSpec) -> tuple[SelectionModel, float, float]:
    if spec.x != 0 or spec.z != 0:
        raise UnsupportedBridge("selection bridges are derived for x = z = 0")
    if spec.theta.theta1 != 0:
        raise UnsupportedBridge("selection bridges need theta1 = 0")
    if not spec.gamma > 0:
        # relabelling alleles turns this into a bridge between 1 and 1, which has no derived form
        raise UnsupportedBridge("the selection bridge from 0 to 0 is defined for gamma > 0")
    return SelectionModel(spec.gamma, spec.theta.theta2), spec.t, spec.T


def bridge_selection(spec: BridgeSpec, N: int = 40):
    """Density of X(t) in the bridge from 0 to 0 on [0, T] under selection, as a function of y.

    y (1-y)^{1-theta} e^{-gamma y} g(y; t) g(y; T-t) / D(T) with g and D from the
    alpha1 = 1 slice of the dual lattice.
    """
    model, t, T = _selection_bridge_model(spec)
    gen = _generator(model, N)
    denom = _bridge_normalizer(model, gen, T)

    def density(y):
        y = np.asarray(y, dtype=float)
        flat = y.reshape(-1)
        g1 = _g_selection(model, gen, t, flat)
        g2 = _g_selection(model, gen, T - t, flat)
        out = flat * np.power(1 - flat, 1 - model.theta) * np.exp(-model.gamma * flat) * g1 * g2 / denom
        out = out.reshape(y.shape)
        return float(out) if out.ndim == 0 else out

    return density


def bridge_selection_spectral(spec: BridgeSpec, count: int = 12):
    """The same bridge density from the eigen-expansion, with w_n'(0) in place of the x, z -> 0 limits."""
    model, t, T = _selection_bridge_model(spec)
    sols = eigenpairs(model, count)
    norms = [_m_norm_sq(model, s) for s in sols]
    slopes = [s.dw(0.0) for s in sols]
    denom = sum(math.exp(-s.eigenvalue * T) * d * d / nrm for s, d, nrm in zip(sols, slopes, norms))

    def density(y):
        y = np.asarray(y, dtype=float)
        a = sum(math.exp(-s.eigenvalue * t) * d * s.w(y) / nrm for s, d, nrm in zip(sols, slopes, norms))
        b = sum(math.exp(-s.eigenvalue * (T - t)) * d * s.w(y) / nrm for s, d, nrm in zip(sols, slopes, norms))
        out = model.speed_density(y) * a * b / denom
        return float(out) if np.ndim(out) == 0 else out

    return density
