import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wfbridge.bridge import integrate_density
from wfbridge.coalescent import h_value, q, q_vector
from wfbridge.orthopoly import MutationPair
from wfbridge.wf_density import (
    DensityQuery,
    density_kimura,
    density_mixture,
    density_spectral,
    g_series,
    g_theta_series,
    htransform_density_check,
    symmetric_kernel,
    yaglom_density,
)

CASES = [MutationPair(0, 0), MutationPair(0, 1), MutationPair(1, 1), MutationPair(2, 2), MutationPair(2, 0.5)]
interior = st.floats(0.02, 0.98)


def test_kimura_form_agrees_with_spectral_sum():
    y = np.linspace(0.05, 0.95, 19)
    for t in (0.3, 1.0):
        spectral = density_spectral(DensityQuery(0.35, y, t, MutationPair(0, 0)))
        np.testing.assert_allclose(density_kimura(0.35, y, t), spectral, rtol=1e-10)


def test_stationary_limit():
    y = np.linspace(0.05, 0.95, 7)
    np.testing.assert_allclose(density_spectral(DensityQuery(0.5, y, 100.0, MutationPair(1, 1))), 1.0, atol=1e-10)


@given(theta=st.sampled_from(CASES), x=interior, y=interior, t=st.floats(0.05, 5.0))
def test_two_expansions_agree(theta, x, y, t):
    q_ = DensityQuery(x, y, t, theta)
    assert density_spectral(q_) == pytest.approx(density_mixture(q_), rel=1e-6)


def test_mass_without_mutation_is_the_survival_probability():
    x, t = 0.3, 0.4
    mass = integrate_density(lambda u: density_mixture(DensityQuery(x, u, t, MutationPair(0, 0))), tol=1e-11)
    qs = q_vector(0.0, t, 200)
    survival = math.fsum(p * (1 - x**l - (1 - x) ** l) for l, p in enumerate(qs))
    assert mass == pytest.approx(survival, abs=1e-8)
    assert mass < 1


def test_two_sided_mutation_density_is_proper():
    mass = integrate_density(lambda u: density_mixture(DensityQuery(0.6, u, 0.3, MutationPair(1, 1))), tol=1e-11)
    assert mass == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("theta", [MutationPair(1, 1), MutationPair(0, 0), MutationPair(0.5, 2)])
def test_chapman_kolmogorov(theta):
    x, y, s, t = 0.4, 0.7, 0.15, 0.25
    composed = integrate_density(
        lambda u: density_mixture(DensityQuery(x, u, s, theta)) * density_mixture(DensityQuery(u, y, t, theta)), tol=1e-10
    )
    assert composed == pytest.approx(density_mixture(DensityQuery(x, y, s + t, theta)), rel=1e-4)


@given(theta=st.sampled_from(CASES), x=interior, y=interior, t=st.floats(0.05, 3.0))
def test_reversible_against_speed_density(theta, x, y, t):
    def speed(u):
        return u ** (theta.theta1 - 1) * (1 - u) ** (theta.theta2 - 1)

    lhs = speed(x) * density_mixture(DensityQuery(x, y, t, theta))
    rhs = speed(y) * density_mixture(DensityQuery(y, x, t, theta))
    assert lhs == pytest.approx(rhs, rel=1e-8)


@given(x=interior, y=interior, t=st.floats(0.05, 3.0), a=st.sampled_from([0.5, 1.0, 3.0]))
def test_equal_rates_reflection_symmetry(x, y, t, a):
    theta = MutationPair(a, a)
    f = density_mixture(DensityQuery(x, y, t, theta))
    assert density_mixture(DensityQuery(1 - x, 1 - y, t, theta)) == pytest.approx(f, rel=1e-10)


@given(x=interior, y=interior, t=st.floats(0.05, 3.0))
def test_symmetric_kernel_is_symmetric(x, y, t):
    theta = MutationPair(0.7, 1.8)
    assert symmetric_kernel(x, y, t, theta) == pytest.approx(symmetric_kernel(y, x, t, theta), rel=1e-10)


def test_g_series_boundary_values():
    assert g_series(0.0, 1.0) == pytest.approx(h_value(0.0, 1.0).value, rel=1e-12)
    assert g_series(1.0, 0.6) == pytest.approx(2 * q(2, 0.0, 0.6).value, rel=1e-9)
    assert g_theta_series(0.0, 0.8, 1.5) == pytest.approx(h_value(1.5, 0.8).value, rel=1e-12)


def test_zero_mutation_density_at_the_lost_boundary():
    t = 0.5
    for y in (0.2, 0.35, 0.8):
        near_zero = density_mixture(DensityQuery(y, 1e-10, t, MutationPair(0, 0)))
        assert near_zero == pytest.approx(y * (1 - y) * g_series(y, t), rel=1e-7)


def test_small_theta_continuity_of_g():
    y = np.linspace(0.1, 0.9, 9)
    np.testing.assert_allclose(g_theta_series(y, 0.7, 1e-8), g_series(y, 0.7), rtol=1e-6)


def test_g_theta_large_time_single_term():
    y = np.array([0.2, 0.5, 0.8])
    expected = q(1, 1.0, 50.0).value * (1 - y) ** (1 + 1.0 - 2)
    np.testing.assert_allclose(g_theta_series(y, 50.0, 1.0), expected, rtol=1e-12)


def test_yaglom_densities():
    assert yaglom_density(MutationPair(0, 2), 0.0) == 2.0
    assert yaglom_density(MutationPair(0, 0), 0.37) == 1.0
    assert integrate_density(lambda u: yaglom_density(MutationPair(0, 0.6), u)) == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValueError):
        yaglom_density(MutationPair(1, 1), 0.5)


@pytest.mark.parametrize(
    ("case", "x", "y", "t", "theta"),
    [("00", 0.4, 0.25, 0.8, 0.0), ("0theta", 0.2, 0.7, 0.3, 1.0), ("00", 0.5, 0.5, 6.0, 0.0), ("0theta", 0.6, 0.1, 2.0, 0.4)],
)
def test_h_transform_identities(case, x, y, t, theta):
    lhs, rhs = htransform_density_check(case, x, y, t, theta)
    assert abs(lhs - rhs) / lhs < 1e-8


def test_query_validation():
    with pytest.raises(ValueError):
        DensityQuery(0.5, 0.0, 1.0, MutationPair(1, 1))
    with pytest.raises(ValueError):
        DensityQuery(0.5, 0.5, -1.0, MutationPair(1, 1))
