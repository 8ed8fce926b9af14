import numpy as np
import pytest
from scipy.integrate import quad

from branchmax.exit_laws import WindowLaw, d_density, sample_window, sup_tail
from branchmax.levy import psi
from branchmax.scale import PotentialDensity

from conftest import CATALOG, convolved_density, window

ALL = list(CATALOG)


@pytest.mark.parametrize("name", ALL)
def test_convolution_reproduces_potential_density(name):
    wl = window(name)
    z = np.round(np.arange(-10.0, 10.0001, 0.05), 10)
    z = z[z != 0.0]
    conv = convolved_density(wl, z)
    theta = PotentialDensity(CATALOG[name], 1.0)(z)
    assert np.max(np.abs(conv - theta)) <= 1e-3


@pytest.mark.parametrize("name", ALL)
def test_depth_law_has_unit_mass(name):
    wl = window(name)
    # stable parts put P(D <= z) ~ z^(alpha - 1) near zero, so probe very close to it
    tail0 = float(wl.d_tail(1e-24))
    assert wl.atom + tail0 == pytest.approx(1.0, abs=1e-6)
    assert float(wl.d_tail(0.0)) == pytest.approx(1.0 - wl.atom, abs=1e-15)


@pytest.mark.parametrize("name", ALL)
def test_depth_laplace_transform(name):
    wl = window(name)
    m = CATALOG[name]
    ph = wl.phi1
    for lam in (0.1, 0.5, ph / 2):
        # by parts: int e^{-lam z} f_D = T(0) - lam int e^{-lam z} T(z) dz
        integral = quad(lambda t: np.exp(-lam * t) * float(wl.d_tail(t)), 0, np.inf, limit=400)[0]
        lhs = (1.0 - wl.atom) - lam * integral + wl.atom
        rhs = (ph - lam) / (ph * (1.0 - psi(m, lam)))
        assert lhs == pytest.approx(rhs, rel=1e-3)


def test_brownian_depth_density():
    wl = window("bm")
    z = np.linspace(0.05, 8, 40)
    assert np.allclose(d_density(wl, z), np.sqrt(2) * np.exp(-np.sqrt(2) * z), atol=1e-10)
    assert wl.atom == 0.0
    # driftless Brownian motion: D has the law of S_e
    assert np.allclose(wl.d_tail(z), sup_tail(wl, z), atol=1e-10)


def test_bounded_variation_atom():
    wl = window("expjumps_bv")
    assert wl.atom == pytest.approx(CATALOG["expjumps_bv"].w_at_zero / wl.phi1)
    assert wl.atom > 0


@pytest.mark.parametrize("name", ALL)
def test_integrated_tail_matches_quadrature(name):
    wl = window(name)
    for z in (0.0, 0.5, 2.0):
        ref = quad(lambda t: float(wl.d_tail(t)), z, np.inf, limit=400)[0]
        assert float(wl.d_tail2(z)) == pytest.approx(ref, rel=1e-5, abs=1e-10)


def test_density_rejects_nonpositive_points():
    with pytest.raises(ValueError):
        d_density(window("bm"), np.array([0.0, 1.0]))


def test_sampled_supremum_mean():
    wl = window("bm")
    s, _ = sample_window(wl, np.random.default_rng(1), 10**6)
    se = s.std() / np.sqrt(s.size)
    assert abs(s.mean() - 1 / wl.phi1) <= 3 * se


def test_sampled_pairs_are_ordered():
    for name in ALL:
        s, l = sample_window(window(name), np.random.default_rng(2), 10**4)
        assert np.all(l <= s)
        assert np.all(s >= 0)


def test_brownian_endpoint_is_symmetric():
    _, l = sample_window(window("bm"), np.random.default_rng(3), 10**6)
    p = np.mean(l > 0)
    assert abs(p - 0.5) <= 3 * np.sqrt(0.25 / l.size)


@pytest.mark.parametrize("name", ["bm", "expjumps", "expjumps_bv", "bm_down"])
def test_endpoint_matches_potential_law(name):
    _, l = sample_window(window(name), np.random.default_rng(4), 10**6)
    pd = PotentialDensity(CATALOG[name], 1.0)
    grid = np.quantile(l, np.linspace(0.005, 0.995, 120))
    empirical = np.searchsorted(np.sort(l), grid, side="right") / l.size
    ks = np.max(np.abs(empirical - pd.cdf(grid)))
    assert ks < 0.005


def test_sampled_depth_mean():
    wl = window("stable15")
    d = wl.sample_depth(np.random.default_rng(5), 10**6)
    assert abs(d.mean() - wl.mean_depth) <= 4 * d.std() / np.sqrt(d.size)


def test_window_law_is_reusable_across_streams():
    wl = WindowLaw(CATALOG["bm_up"])
    a = wl.sample_window(np.random.default_rng(7), 100)
    b = wl.sample_window(np.random.default_rng(7), 100)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


@pytest.mark.parametrize("name", ["stable15", "stable_drift"])
def test_stable_depth_tail_is_a_power_law(name):
    wl = window(name)
    assert wl.power_tail
    t = wl.d_tail(np.array([1e3, 1e4]))
    assert np.log10(t[0] / t[1]) == pytest.approx(wl.tail_index, rel=0.01)


def test_sampler_extrapolates_beyond_the_table():
    wl = WindowLaw(CATALOG["stable15"], table_size=64)
    d = wl.sample_depth(np.random.default_rng(9), 10**5)
    assert np.all(np.isfinite(d)) and np.all(d >= 0)
