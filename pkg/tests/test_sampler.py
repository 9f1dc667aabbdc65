import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import interpolate, stats

from wfbridge.bridge import BridgeSpec, bridge_cdf, bridge_density, zero_bridge_density
from wfbridge.orthopoly import MutationPair
from wfbridge.sampler import (
    GeneralBridgeSampler,
    ZeroBridgeSampler,
    make_rng,
    pairing,
    pairing_inverse,
    sample_bridge_00,
    sample_bridge_general,
    spawn_rngs,
)

ALPHA = 1e-3


def ks_pvalue(draws, density):
    grid = np.linspace(0, 1, 2001)[1:]
    cdf = bridge_cdf(density, grid)
    spline = interpolate.PchipInterpolator(np.concatenate([[0.0], grid]), np.concatenate([[0.0], cdf / cdf[-1]]))
    return stats.kstest(draws, lambda u: np.clip(spline(u), 0, 1)).pvalue


def test_pairing_base_case_and_diagonal_order():
    assert pairing(0) == (0, 0)
    first = {pairing(n) for n in range(66)}
    assert first == {(a, b) for a in range(11) for b in range(11) if a + b <= 10}


def test_pairing_roundtrip_exhaustive():
    for n in range(1_000_000):
        if pairing_inverse(*pairing(n)) != n:
            pytest.fail(f"pairing roundtrip broke at {n}")


@given(a=st.integers(0, 5000), b=st.integers(0, 5000))
def test_pairing_inverse_roundtrip(a, b):
    assert pairing(pairing_inverse(a, b)) == (a, b)


@pytest.mark.parametrize("theta", [0.0, 1.0])
def test_zero_bridge_draws_follow_the_density(theta):
    draws = sample_bridge_00(theta, 0.5, 1.0, make_rng(11), 50_000)
    spec = BridgeSpec(0.0, 0.0, 1.0, 0.5, MutationPair(0, theta))
    assert ks_pvalue(draws, lambda u: bridge_density(spec, u)) > ALPHA


def test_reversal_symmetry_in_draws():
    a = sample_bridge_00(0.0, 0.25, 1.0, make_rng(3), 20_000)
    b = sample_bridge_00(0.0, 0.75, 1.0, make_rng(4), 20_000)
    assert stats.ks_2samp(a, b).pvalue > ALPHA


def test_large_horizon_mean():
    draws = sample_bridge_00(0.0, 15.0, 30.0, make_rng(5), 100_000)
    assert abs(draws.mean() - 0.5) < 3 * draws.std() / np.sqrt(draws.size)


def test_first_two_moments():
    draws = sample_bridge_00(1.0, 0.4, 1.0, make_rng(8), 100_000)
    grid = np.linspace(0.0005, 0.9995, 1000)
    w = zero_bridge_density(grid, 0.4, 1.0) * (grid[1] - grid[0])
    mean, second = np.sum(grid * w), np.sum(grid**2 * w)
    se = draws.std() / np.sqrt(draws.size)
    assert abs(draws.mean() - mean) < 4 * se
    assert abs(np.mean(draws**2) - second) < 4 * np.std(draws**2) / np.sqrt(draws.size)


def test_seed_determinism_is_bit_exact():
    a = sample_bridge_00(1.0, 0.5, 1.0, make_rng(42), 5000)
    b = sample_bridge_00(1.0, 0.5, 1.0, make_rng(42), 5000)
    assert a.tobytes() == b.tobytes()
    streams = [r.random(3) for r in spawn_rngs(9, 4)]
    again = [r.random(3) for r in spawn_rngs(9, 4)]
    assert all(np.array_equal(x, y) for x, y in zip(streams, again))


def test_sequential_and_batch_inversion_agree():
    sampler = ZeroBridgeSampler(0.5, 0.3, 1.0)
    u = make_rng(1).random(300)
    batch = sampler.mixture_indices(u)
    seq = [sampler.mixture_index_sequential(float(v)) for v in u]
    assert list(zip(*[np.asarray(b).tolist() for b in batch])) == [tuple(s) for s in seq]


def test_general_bridge_draws_follow_the_density():
    theta = MutationPair(2, 2)
    draws = sample_bridge_general(0.3, 0.6, 0.4, 1.0, theta, make_rng(21), 30_000)
    spec = BridgeSpec(0.3, 0.6, 1.0, 0.4, theta)
    assert ks_pvalue(draws, lambda u: bridge_density(spec, u)) > ALPHA


def test_general_bridge_with_absorbing_allele():
    theta = MutationPair(0, 1)
    draws = sample_bridge_general(0.2, 0.5, 0.5, 1.0, theta, make_rng(22), 20_000)
    spec = BridgeSpec(0.2, 0.5, 1.0, 0.5, theta)
    assert ks_pvalue(draws, lambda u: bridge_density(spec, u)) > ALPHA


def test_general_bridge_near_its_left_end():
    draws = GeneralBridgeSampler(0.3, 0.6, 0.01, 1.0, MutationPair(2, 2)).sample(make_rng(2), 5000)
    assert abs(np.median(draws) - 0.3) < 0.05


def test_general_bridge_reversal():
    theta = MutationPair(1, 1)
    a = sample_bridge_general(0.4, 0.4, 0.45, 1.0, theta, make_rng(6), 20_000)
    b = sample_bridge_general(0.4, 0.4, 0.55, 1.0, theta, make_rng(7), 20_000)
    assert stats.ks_2samp(a, b).pvalue > ALPHA


def test_general_sampler_rejects_boundary_endpoints():
    with pytest.raises(ValueError):
        GeneralBridgeSampler(0.0, 0.5, 0.5, 1.0, MutationPair(1, 1))
