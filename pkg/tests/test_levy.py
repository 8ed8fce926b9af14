import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from branchmax.levy import LevyModel, ModelError, catalog, phi, psi, psi_complex, psi_prime

Q_GRID = [0.0, 0.1, 0.5, 1.0, 2.0, 10.0]


@pytest.mark.parametrize("name", list(catalog()))
@pytest.mark.parametrize("q", Q_GRID)
def test_phi_solves_psi_equal_q(name, q):
    m = catalog()[name]
    sol = phi(m, q)
    assert abs(psi(m, sol.phi) - q) <= 1e-10
    # largest root: psi is increasing there
    assert sol.psi_prime_at_phi >= 0


def test_phi_closed_forms():
    assert phi(LevyModel.brownian(0, 1), 1.0).phi == pytest.approx(np.sqrt(2), abs=1e-12)
    assert phi(LevyModel.brownian(0, 1), 0.5).phi == pytest.approx(1.0, abs=1e-12)
    assert phi(LevyModel.brownian(-0.5, 1), 0.0).phi == pytest.approx(1.0, abs=1e-12)
    assert phi(LevyModel.brownian(-1, 1), 0.0).phi == pytest.approx(2.0, abs=1e-12)
    assert phi(LevyModel.brownian(0.2, 1), 0.0).phi == 0.0
    assert phi(LevyModel.stable(1.5), 0.5).phi == pytest.approx(0.5 ** (2 / 3), abs=1e-12)
    assert phi(LevyModel.stable(1.5), 1.0).phi_prime == pytest.approx(1 / 1.5)


@settings(max_examples=60, deadline=None)
@given(a=st.floats(-2, 2), eta=st.floats(0.1, 3), q=st.floats(0, 20))
def test_phi_root_property_brownian(a, eta, q):
    m = LevyModel.brownian(a, eta)
    r = phi(m, q).phi
    assert abs(psi(m, r) - q) <= 1e-10 * max(1.0, q)
    exact = (-a + np.sqrt(a * a + 2 * eta**2 * q)) / eta**2
    if q > 0 or a < 0:
        assert r == pytest.approx(max(exact, 0.0), rel=1e-9, abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(alpha=st.floats(1.05, 2.0), c=st.floats(0.2, 5), q=st.floats(0.01, 50))
def test_phi_stable_is_power(alpha, c, q):
    r = phi(LevyModel.stable(alpha, c), q).phi
    assert r == pytest.approx((q / c) ** (1 / alpha), rel=1e-9)


def test_psi_complex_agrees_on_real_axis():
    lam = np.linspace(0.1, 5, 20)
    for m in catalog().values():
        assert np.allclose(psi_complex(m, lam + 0j).real, psi(m, lam), rtol=1e-13, atol=1e-13)


def test_psi_prime_matches_difference_quotient():
    lam = np.linspace(0.2, 4, 9)
    for m in catalog().values():
        fd = (psi(m, lam + 1e-6) - psi(m, lam - 1e-6)) / 2e-6
        assert np.allclose(psi_prime(m, lam), fd, rtol=1e-6)


def test_regimes():
    cat = catalog()
    assert cat["bm"].regime() == "oscillating"
    assert cat["stable15"].regime() == "oscillating"
    assert cat["bm_up"].regime() == "drift-up"
    assert cat["expjumps_bv"].regime() == "drift-up"
    assert cat["bm_down"].regime() == "drift-down"
    assert cat["expjumps"].regime() == "drift-down"


def test_bounded_variation_flag():
    cat = catalog()
    assert cat["expjumps_bv"].bounded_variation
    assert cat["expjumps_bv"].w_at_zero == pytest.approx(0.5)
    assert not cat["bm"].bounded_variation


@pytest.mark.parametrize("bad", [
    {"variant": "Nope"},
    {"variant": "SNStable", "alpha": 2.5},
    {"variant": "SNStable", "alpha": 1.0},
    {"variant": "BrownianDrift", "a": 0.0, "eta": 0.0},
    {"variant": "BrownianExpJumps", "a": -1.0, "eta": 0.0, "rho": 1.0, "mu": 1.0},
    {"variant": "BrownianDrift", "eta": 1.0, "alpha": 1.5},
    {"eta": 1.0},
])
def test_invalid_models_rejected(bad):
    with pytest.raises(ModelError):
        LevyModel.from_dict(bad)


def test_dict_round_trip():
    for m in catalog().values():
        assert LevyModel.from_dict(m.to_dict()) == m


def test_negative_arguments_rejected():
    m = catalog()["bm"]
    with pytest.raises(ValueError):
        psi(m, -1.0)
    with pytest.raises(ValueError):
        phi(m, -0.1)
