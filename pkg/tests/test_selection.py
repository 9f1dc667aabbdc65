import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from wfbridge.bridge import BridgeSpec, UnsupportedBridge, integrate_density, zero_bridge_density
from wfbridge.coalescent import q
from wfbridge.orthopoly import MutationPair
from wfbridge.selection import (
    SelectionModel,
    bridge_selection,
    bridge_selection_spectral,
    density_selection,
    density_selection_spectral,
    dual_transition,
    eigenpairs,
    first_eigenpair,
    psi_density,
    transformed_drift,
    yaglom_selection,
)
from wfbridge.wf_density import DensityQuery, density_mixture

Y = np.linspace(0.02, 0.98, 25)


@pytest.mark.parametrize(("theta", "expected"), [(0.0, 1.0), (0.5, 0.25), (2.0, 1.0)])
def test_neutral_first_eigenvalue(theta, expected):
    assert first_eigenpair(SelectionModel(0.0, theta)).eigenvalue == pytest.approx(expected, abs=1e-10)


def test_first_eigenvalue_matches_oblate_spheroidal_characteristic_value():
    # scipy's oblate characteristic value at c = gamma/4 equals 2 lambda - gamma^2/16
    oracle = (special.obl_cv(1, 1, 0.75) + 0.5625) / 2
    sol = first_eigenpair(SelectionModel(3.0))
    assert sol.eigenvalue == pytest.approx(oracle, abs=1e-8)
    assert sol.spheroidal_eigenvalue == pytest.approx(2 * oracle, abs=1e-8)
    assert sol.residual < 1e-8


@given(gamma=st.floats(0.1, 8.0))
@settings(max_examples=15)
def test_first_eigenvalue_is_even_in_gamma(gamma):
    a = first_eigenpair(SelectionModel(gamma)).eigenvalue
    b = first_eigenpair(SelectionModel(-gamma)).eigenvalue
    assert a == pytest.approx(b, rel=1e-10)


def test_first_eigenvalue_grows_with_selection():
    lams = [first_eigenpair(SelectionModel(g)).eigenvalue for g in (0.0, 1.0, 2.0, 4.0, 8.0)]
    assert np.all(np.diff(lams) > 0)


def test_eigenvalues_are_increasing():
    sols = eigenpairs(SelectionModel(3.0, 0.5), 6)
    assert np.all(np.diff([s.eigenvalue for s in sols]) > 0)


def test_drift_without_selection():
    x = np.linspace(0.05, 0.95, 19)
    np.testing.assert_allclose(transformed_drift(SelectionModel(0.0), x), 1 - 2 * x, atol=1e-10)


def test_drift_reflects_under_allele_relabelling():
    x = np.linspace(0.05, 0.95, 19)
    a = transformed_drift(SelectionModel(3.0), x)
    b = transformed_drift(SelectionModel(-3.0), 1 - x)
    np.testing.assert_allclose(a, -b, atol=1e-10)
    assert abs(transformed_drift(SelectionModel(3.0), 0.5)) < 0.25


def test_drift_rejects_boundary():
    with pytest.raises(ValueError):
        transformed_drift(SelectionModel(1.0), 0.0)


def test_yaglom_and_psi_without_selection():
    np.testing.assert_allclose(yaglom_selection(SelectionModel(0.0), Y), 1.0, atol=1e-8)
    np.testing.assert_allclose(psi_density(SelectionModel(0.0), Y), 6 * Y * (1 - Y), atol=1e-8)


def test_selection_tilts_the_yaglom_law():
    model = SelectionModel(3.0)
    mass = integrate_density(lambda u: yaglom_selection(model, u))
    mean = integrate_density(lambda u: u * yaglom_selection(model, u))
    assert mass == pytest.approx(1.0, abs=1e-8)
    assert mean > 0.5


def test_neutral_dual_is_binomial_thinning_of_lineages():
    t, x = 0.5, 0.3
    dual = dual_transition(SelectionModel(0.0), t, x)
    for (a1, a2), value in dual.values.items():
        l = a1 + a2
        expected = q(l, 0.0, t).value * math.comb(l, a1) * x**a1 * (1 - x) ** a2
        assert value == pytest.approx(expected, abs=1e-11)
    assert dual.mass_defect < 1e-10


def test_dual_entries_are_nonnegative_and_bounded():
    dual = dual_transition(SelectionModel(3.0, 0.5), 0.3, 0.4)
    assert all(v >= 0 for v in dual.values.values())
    assert dual.total() <= 1 + 1e-10


def test_dual_rejects_unsupported_inputs():
    with pytest.raises(ValueError, match="gamma >= 0"):
        dual_transition(SelectionModel(-1.0), 0.5, 0.5)
    with pytest.raises(ValueError, match="entrance time"):
        dual_transition(SelectionModel(1.0), 0.01, 0.5, N=10)


@pytest.mark.parametrize("theta", [0.0, 0.7])
def test_vanishing_selection_is_neutral(theta):
    dens, _ = density_selection(SelectionModel(1e-8, theta), 0.3, Y, 0.4)
    neutral = density_mixture(DensityQuery(0.3, Y, 0.4, MutationPair(0.0, theta)))
    np.testing.assert_allclose(dens, neutral, atol=1e-4)


@given(x=st.floats(0.1, 0.9), y=st.floats(0.1, 0.9))
@settings(max_examples=10)
def test_detailed_balance_against_speed_density(x, y):
    model = SelectionModel(2.0, 0.5)
    fxy, bxy = density_selection(model, x, y, 0.5)
    fyx, byx = density_selection(model, y, x, 0.5)
    mx, my = model.speed_density(x), model.speed_density(y)
    assert abs(fxy * mx - fyx * my) <= bxy * mx + byx * my


@pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
def test_lattice_agrees_with_eigen_expansion(t):
    model = SelectionModel(3.0)
    lattice, _ = density_selection(model, 0.4, Y, t)
    spectral = density_selection_spectral(model, 0.4, Y, t, count=12)
    np.testing.assert_allclose(lattice, spectral, atol=1e-3)


def test_truncation_change_is_within_the_reported_bound():
    model = SelectionModel(3.0)
    fine, bound = density_selection(model, 0.4, Y, 0.2, N=40)
    coarse, _ = density_selection(model, 0.4, Y, 0.2, N=30)
    assert np.max(np.abs(fine - coarse)) <= bound + 1e-8


def test_density_satisfies_the_backward_equation():
    # d/dt f = 1/2 x(1-x) f_xx + (gamma/2 x(1-x) - theta/2 x) f_x in the starting point x
    model = SelectionModel(2.0, 0.5)
    x, t, hx, ht = 0.4, 0.5, 1e-3, 1e-3
    y = np.array([0.3, 0.5, 0.7])

    def f(xx, tt):
        return density_selection(model, xx, y, tt)[0]

    ft = (f(x, t + ht) - f(x, t - ht)) / (2 * ht)
    fx = (f(x + hx, t) - f(x - hx, t)) / (2 * hx)
    fxx = (f(x + hx, t) - 2 * f(x, t) + f(x - hx, t)) / hx**2
    generator = 0.5 * x * (1 - x) * fxx + (0.5 * model.gamma * x * (1 - x) - 0.5 * model.theta * x) * fx
    np.testing.assert_allclose(ft, generator, atol=1e-3)


def test_weak_selection_bridge_is_neutral():
    spec = BridgeSpec(0.0, 0.0, 1.0, 0.4, gamma=1e-8)
    np.testing.assert_allclose(bridge_selection(spec)(Y), zero_bridge_density(Y, 0.4, 1.0), atol=1e-3)


@pytest.mark.parametrize(("gamma", "theta", "T", "t"), [(3.0, 0.0, 1.0, 0.3), (1.0, 0.7, 1.0, 0.5)])
def test_selection_bridge_is_a_density(gamma, theta, T, t):
    dens = bridge_selection(BridgeSpec(0.0, 0.0, T, t, MutationPair(0.0, theta), gamma=gamma))
    assert integrate_density(dens, tol=1e-9) == pytest.approx(1.0, abs=1e-3)


def test_long_selection_bridge_mid_time_is_psi():
    dens = bridge_selection(BridgeSpec(0.0, 0.0, 20.0, 10.0, gamma=3.0))
    np.testing.assert_allclose(dens(Y), psi_density(SelectionModel(3.0), Y), atol=5e-3)


def test_selection_bridge_lattice_converges_to_eigen_expansion():
    spec = BridgeSpec(0.0, 0.0, 4.0, 2.0, gamma=3.0)
    oracle = bridge_selection_spectral(spec, count=20)(Y)
    errors = [np.max(np.abs(bridge_selection(spec, N=n)(Y) - oracle)) for n in (40, 60)]
    # the entrance ladder leaves about 1e-3 at the default truncation
    assert errors[1] < errors[0] < 2e-3


def test_unsupported_selection_bridges():
    with pytest.raises(UnsupportedBridge):
        bridge_selection(BridgeSpec(0.0, 0.0, 1.0, 0.5, gamma=-1.0))
    with pytest.raises(UnsupportedBridge):
        bridge_selection(BridgeSpec(0.2, 0.0, 1.0, 0.5, gamma=1.0))
    with pytest.raises(UnsupportedBridge):
        bridge_selection(BridgeSpec(0.0, 0.0, 1.0, 0.5, MutationPair(1.0, 1.0), gamma=1.0))
