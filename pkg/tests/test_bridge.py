import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wfbridge.bridge import (
    BridgeSpec,
    UnsupportedBridge,
    bridge_cdf,
    bridge_density,
    bridge_limit_density,
    bridge_mean,
    integrate_density,
    zero_bridge_density,
)
from wfbridge.orthopoly import MutationPair

Y = np.linspace(0.01, 0.99, 49)


def test_zero_bridge_integrates_to_one():
    spec = BridgeSpec(0.0, 0.0, 1.0, 0.5)
    assert integrate_density(lambda u: bridge_density(spec, u)) == pytest.approx(1.0, abs=1e-6)


@given(t=st.floats(0.05, 0.95), theta=st.sampled_from([0.0, 0.5, 2.0]))
def test_reversal_when_endpoints_coincide(t, theta):
    spec = BridgeSpec(0.0, 0.0, 1.0, t, MutationPair(0, theta))
    np.testing.assert_allclose(bridge_density(spec, Y), bridge_density(spec.reversed(), Y), rtol=1e-10)


@given(x=st.floats(0.05, 0.95), z=st.floats(0.05, 0.95), t=st.floats(0.1, 0.9))
def test_reversal_between_interior_endpoints(x, z, t):
    spec = BridgeSpec(x, z, 1.0, t, MutationPair(0.5, 1.5))
    np.testing.assert_allclose(bridge_density(spec, Y), bridge_density(spec.reversed(), Y), rtol=1e-10)


@pytest.mark.parametrize("theta", [MutationPair(0, 0), MutationPair(0, 1.5)])
def test_h_transform_leaves_the_bridge_unchanged(theta):
    spec = BridgeSpec(0.3, 0.6, 1.0, 0.4, theta)
    np.testing.assert_allclose(bridge_density(spec, Y, form="raw"), bridge_density(spec, Y), rtol=1e-6)


def test_closed_form_at_zero_matches_transformed_ratio():
    spec = BridgeSpec(0.0, 0.0, 1.0, 0.3)
    np.testing.assert_allclose(bridge_density(spec, Y, form="transformed"), bridge_density(spec, Y), rtol=1e-9)


def test_interior_endpoints_approach_the_closed_form():
    spec0 = BridgeSpec(0.0, 0.0, 1.0, 0.4)
    target = bridge_density(spec0, 0.3)
    gaps = [abs(bridge_density(BridgeSpec(e, e, 1.0, 0.4), 0.3, form="raw") - target) for e in (1e-3, 1e-4, 1e-5)]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1e-2


def test_limit_densities():
    assert bridge_limit_density(MutationPair(0, 0), 0.5) == 1.5
    # the normalized form theta(theta+1) y (1-y)^(theta-1); the unnormalized theta y(1-y)^(theta-1) would give 0.5
    assert bridge_limit_density(MutationPair(0, 2), 0.5) == pytest.approx(1.5)
    with pytest.raises(UnsupportedBridge):
        bridge_limit_density(MutationPair(1, 1), 0.5)


def test_large_horizon_matches_limit():
    np.testing.assert_allclose(zero_bridge_density(Y, 15.0, 30.0), 6 * Y * (1 - Y), atol=1e-6)


@pytest.mark.parametrize("theta", [0.5, 1.0, 2.0])
def test_mean_matches_quadrature(theta):
    spec = BridgeSpec(0.0, 0.0, 1.0, 0.5, MutationPair(0, theta))
    quad = integrate_density(lambda u: u * bridge_density(spec, u), tol=1e-12)
    assert bridge_mean(theta, 0.5, 1.0) == pytest.approx(quad, abs=1e-6)


def test_mean_is_symmetric_in_time():
    assert bridge_mean(1.0, 0.3, 1.0) == pytest.approx(bridge_mean(1.0, 0.7, 1.0), rel=1e-13)


def test_mean_at_large_horizon_is_the_limit_mean():
    # Beta(2, theta) has mean 2 / (2 + theta)
    assert bridge_mean(1.0, 15.0, 30.0) == pytest.approx(2 / 3, abs=1e-8)


def test_cdf_is_monotone_and_ends_at_one():
    spec = BridgeSpec(0.0, 0.0, 1.0, 0.5, MutationPair(0, 0.5))
    grid = np.linspace(0, 1, 101)[1:]
    cdf = bridge_cdf(lambda u: bridge_density(spec, u), grid)
    assert np.all(np.diff(cdf) >= 0)
    assert cdf[-1] == pytest.approx(1.0, abs=1e-9)


def test_unsupported_cases_are_rejected():
    with pytest.raises(UnsupportedBridge):
        bridge_density(BridgeSpec(1.0, 0.0, 1.0, 0.5, MutationPair(0, 1)), 0.5)
    with pytest.raises(UnsupportedBridge):
        bridge_density(BridgeSpec(0.0, 0.0, 1.0, 0.5, gamma=1.0), 0.5)
    with pytest.raises(ValueError):
        BridgeSpec(0.0, 0.0, 1.0, 1.5)
