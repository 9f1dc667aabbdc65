import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, special, stats

from wfbridge.orthopoly import (
    JacobiParams,
    MutationPair,
    beta_density,
    falling,
    hyp1f1,
    jacobi_derivative_table,
    jacobi_eval,
    jacobi_orthonormal,
    jacobi_table,
    rising,
    selection_normalizer,
)

params = st.floats(-1.0, 6.0)


def test_low_degree_closed_forms():
    assert jacobi_eval(JacobiParams(1, 1, 0), 0.3) == 1.0
    assert jacobi_eval(JacobiParams(1, 1, 1), 0.37) == pytest.approx(2 * 0.37, rel=1e-15)


@given(a=st.floats(-0.99, 6.0), b=params, r=st.floats(-1, 1))
def test_recurrence_matches_hypergeometric_sum(a, b, r):
    rows = jacobi_table(50, a, b, r)
    for n in (0, 1, 2, 7, 23, 50):
        with mpmath.workdps(80):
            z = (1 - mpmath.mpf(r)) / 2
            series = mpmath.fsum(
                mpmath.rf(-n, k) * mpmath.rf(a + b + n + 1, k) / (mpmath.rf(a + 1, k) * mpmath.factorial(k)) * z**k
                for k in range(n + 1)
            )
            direct = mpmath.binomial(n + a, n) * series
        assert abs(rows[n] - float(direct)) <= 1e-10 * max(1.0, float(abs(direct)))


def test_matches_scipy_for_classical_parameters():
    r = np.linspace(-1, 1, 101)
    rows = jacobi_table(30, 0.5, 2.0, r)
    for n in range(31):
        np.testing.assert_allclose(rows[n], special.eval_jacobi(n, 0.5, 2.0, r), rtol=1e-11, atol=1e-12)


def test_minus_one_corner_is_the_product_with_x_one_minus_x():
    r = -0.4
    x = (r + 1) / 2
    # the continuity definition gives P_{n+2}^{(-1,-1)} = -x(1-x) P_n^{(1,1)}
    assert jacobi_eval(JacobiParams(-1, -1, 3), r) == pytest.approx(-x * (1 - x) * jacobi_eval(JacobiParams(1, 1, 1), r), rel=1e-14)


def test_derivative_table_by_finite_differences():
    r = np.linspace(-0.9, 0.9, 7)
    h = 1e-6
    d = jacobi_derivative_table(12, 0.3, 1.7, r)
    fd = (jacobi_table(12, 0.3, 1.7, r + h) - jacobi_table(12, 0.3, 1.7, r - h)) / (2 * h)
    np.testing.assert_allclose(d, fd, rtol=1e-6, atol=1e-6)


def test_domain_errors():
    with pytest.raises(ValueError):
        JacobiParams(-1.5, 0, 1)
    with pytest.raises(ValueError):
        jacobi_table(3, 1, 1, 1.5)


@pytest.mark.parametrize(("n", "m", "expected"), [(0, 0, 1.0), (3, 3, 1.0), (2, 3, 0.0)])
def test_orthonormality_on_beta_weight(n, m, expected):
    theta = MutationPair(2, 2) if n else MutationPair(1, 1)
    val, _ = integrate.quad(
        lambda x: jacobi_orthonormal(theta, n, x) * jacobi_orthonormal(theta, m, x) * beta_density(theta.theta1, theta.theta2, x),
        0, 1, epsabs=1e-14,
    )
    assert val == pytest.approx(expected, abs=1e-12)


def test_orthonormal_rejects_zero_rates():
    with pytest.raises(ValueError):
        jacobi_orthonormal(MutationPair(0, 1), 1, 0.3)


def test_factorial_symbols():
    assert rising(3.5, 0) == 1.0 and falling(-2.0, 0) == 1.0
    assert rising(2, 3) == 24 and falling(5, 2) == 20


@given(a=st.floats(0.1, 5), b=st.floats(0.1, 5), y=st.floats(0.01, 0.99))
def test_beta_density_matches_scipy(a, b, y):
    assert beta_density(a, b, y) == pytest.approx(stats.beta.pdf(y, a, b), rel=1e-10)


@given(a=st.floats(0.1, 10), b=st.floats(0.2, 20), z=st.floats(-10, 10))
def test_hyp1f1_matches_mpmath(a, b, z):
    assert hyp1f1(a, a + b, z) == pytest.approx(float(mpmath.hyp1f1(a, a + b, z)), rel=1e-12)


@given(theta=st.floats(0.1, 4))
def test_selection_normalizer_positive_and_increasing(theta):
    values = [selection_normalizer(MutationPair(theta, 1.0), g) for g in np.linspace(-4, 4, 9)]
    assert all(v > 0 for v in values)
    assert all(b > a for a, b in zip(values, values[1:]))
