import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wfbridge.coalescent import (
    LineageLaw,
    conditional_lineages,
    factorial_moment,
    h_envelope,
    h_value,
    lineage_tail_bound,
    q,
    q_envelope,
    q_threshold,
    q_vector,
    rho,
)
from wfbridge.validation import death_chain_law

# 60-digit evaluations of the alternating series in its rising-factorial form
FROZEN_Q = [
    ((1, 0.0, 1.0), 0.1283509973776259835),
    ((2, 0.0, 0.5), 0.041362753508009210816),
    ((5, 0.0, 0.2), 0.0020989783958863523711),
    ((3, 1.0, 0.7), 0.36896097728538588131),
    ((2, 0.5, 0.3), 0.00080923030067934126091),
    ((1, 1.0, 2.0), 0.59145154727536090918),
    ((10, 2.0, 0.05), 4.1670167365602886429e-19),
]
H_THETA0_T1 = 3.91737723061645


def test_rho_closed_form():
    assert rho(0, 1.3, 0.7) == 1.0
    assert rho(2, 0.0, 1.0) == pytest.approx(math.exp(-1), rel=1e-15)
    assert rho(3, 1.0, 0.5) == pytest.approx(math.exp(-2.25), rel=1e-15)


@pytest.mark.parametrize(("args", "expected"), FROZEN_Q)
def test_q_matches_high_precision_values(args, expected):
    value = q(*args)
    assert abs(value.value - expected) <= max(value.error_bound, 1e-15 * expected) + 1e-300


def test_q_trivial_values():
    assert q(0, 0.0, 0.3).value == 0.0
    assert q(1, 0.0, 50.0).value == pytest.approx(1.0, abs=1e-12)


@given(theta=st.sampled_from([0.0, 0.3, 1.0, 2.5]), t=st.floats(0.05, 5.0))
def test_lineage_law_sums_to_one(theta, t):
    lmax = 8
    while lineage_tail_bound(theta, t, lmax) > 1e-12:
        lmax *= 2
    assert math.fsum(q_vector(theta, t, lmax)) == pytest.approx(1.0, abs=1e-9)


@given(l=st.integers(0, 12), theta=st.sampled_from([0.0, 0.5, 1.0, 2.0]), t=st.floats(0.05, 3.0))
def test_envelope_sandwich_and_monotone_past_threshold(l, theta, t):
    if l == 0 and theta == 0:
        return
    value = q(l, theta, t).value
    k0 = max(0, math.ceil((q_threshold(l, theta, t) - l) / 2))
    previous = None
    for k in range(k0, k0 + 6):
        env = q_envelope(l, theta, t, k)
        assert env.monotone
        assert env.lower <= value + 1e-15 and value <= env.upper + 1e-15
        if previous is not None:
            assert env.lower >= previous.lower - 1e-16 and env.upper <= previous.upper + 1e-16
        previous = env


def test_envelope_converges():
    env = q_envelope(1, 1.0, 2.0, 10)
    assert env.upper - env.lower < 1e-12


@pytest.mark.parametrize(("l", "theta", "t"), [(0, 1.0, 10.0), (3, 0.0, 0.05), (6, 2.0, 0.4)])
def test_threshold_is_the_first_index_with_ratio_below_one(l, theta, t):
    def ratio(i):
        if l == 0 and i == 0:
            return (theta + 1) * math.exp(-theta * t / 2)
        return (theta + i + l - 1) / (i - l + 1) * (theta + 2 * i + 1) / (theta + 2 * i - 1) * math.exp(-(i + theta / 2) * t)

    i = q_threshold(l, theta, t)
    assert ratio(i) < 1
    if i > l:
        assert ratio(i - 1) >= 1
    if l == 0:
        assert i <= 1


def test_small_time_envelope_stays_monotone_over_many_refinements():
    l, t = 3, 0.05
    k0 = math.ceil((q_threshold(l, 0.0, t) - l) / 2)
    uppers = [q_envelope(l, 0.0, t, k).upper for k in range(k0, 201)]
    assert all(b <= a + 1e-18 for a, b in zip(uppers, uppers[1:]))


def test_matches_death_chain_from_two_hundred_lineages():
    law = death_chain_law(0.0, 0.2)
    assert q(5, 0.0, 0.2).value == pytest.approx(law[5], abs=1e-8)


def test_factorial_moments():
    assert factorial_moment(1, 0.0, 50.0) == pytest.approx(1.0, abs=1e-12)
    direct = math.fsum(l * (l - 1) * p for l, p in enumerate(q_vector(1.0, 0.7, 120)))
    assert factorial_moment(2, 1.0, 0.7) == pytest.approx(direct, abs=1e-9)
    assert factorial_moment(2, 0.0, 1.0) == pytest.approx(h_value(0.0, 1.0).value, rel=1e-12)


def test_h_value_and_envelopes():
    assert h_value(0.0, 1.0).value == pytest.approx(H_THETA0_T1, rel=1e-13)
    for k in range(3, 12):
        a, b = h_envelope(2.0, 0.5, k), h_envelope(2.0, 0.5, k + 1)
        assert a.lower <= b.lower <= b.upper <= a.upper


@pytest.mark.parametrize("l", [1, 4, 9, 20])
def test_conditional_lineages_normalized(l):
    total = math.fsum(conditional_lineages(c, l, 0.7, 0.4, 0.1, 1.0) for c in range(0, l + 1))
    assert total == pytest.approx(1.0, abs=1e-9)


def test_conditional_lineages_consistent_with_entrance_law():
    theta, s, t, T = 1.0, 0.1, 0.4, 1.0
    for c in (1, 2, 3, 6):
        mixed = math.fsum(q(l, theta, t - s).value * conditional_lineages(c, l, theta, t, s, T) for l in range(c, 90))
        assert mixed == pytest.approx(q(c, theta, T - s).value, abs=1e-8)


@pytest.mark.parametrize("u", [0.01, 0.05, 0.3])
def test_keeping_every_lineage_is_an_exponential_holding_time(u):
    # no coalescence in the interval: probability exp(-l(l+theta-1)u/2), which tends to 1 as u -> 0
    for theta in (0.0, 1.5):
        assert conditional_lineages(7, 7, theta, 0.5, 0.1, 0.5 + u) == pytest.approx(math.exp(-7 * (6 + theta) * u / 2), abs=1e-9)
    assert conditional_lineages(8, 7, 0.0, 0.5, 0.1, 0.9) == 0.0


def test_lineage_law_validates_inputs():
    with pytest.raises(ValueError):
        LineageLaw(-1.0, 1.0)
    with pytest.raises(ValueError):
        q(2, 0.0, 0.0)
    law = LineageLaw(1.0, 0.5)
    assert law.q(2) == q(2, 1.0, 0.5).value


def test_entrance_corrected_chain_beats_plain_chain():
    certified = np.array([q(l, 1.0, 0.1).value for l in range(26)])
    plain = np.abs(death_chain_law(1.0, 0.1, entrance=False)[:26] - certified).max()
    corrected = np.abs(death_chain_law(1.0, 0.1)[:26] - certified).max()
    assert corrected < 1e-10 < 1e-3 < plain
