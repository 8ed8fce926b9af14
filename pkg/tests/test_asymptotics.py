import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import beta as beta_fn, gamma

from branchmax.asymptotics import (InsufficientData, fit_exp_rate, fit_power_product, predict,
                                   regime_of, regular_variation)
from branchmax.levy import LevyModel, psi_prime
from branchmax.offspring import OffspringLaw
from branchmax.scale import ScaleEvaluator
from branchmax.simulator import spitzer_fraction

from conftest import CATALOG, LAWS, solved


def test_brownian_oscillating_constants():
    pred = predict(CATALOG["bm"], LAWS["crit"])
    assert pred.regime == "crit_oscillating" and pred.kind == "envelope"
    assert (pred.alpha, pred.ell) == (2.0, 0.5)
    assert pred.sequence_constant == pytest.approx(6.0, rel=1e-14)
    # W(x) = 2x turns x^2 u -> 6 into x W u -> 12
    assert pred.gamma_limit == pytest.approx(12.0, rel=1e-14)


def test_stable_constants_are_consistent():
    pred = predict(CATALOG["stable15"], LAWS["crit"])
    assert pred.gamma_limit == pytest.approx(2 / beta_fn(1.5, 1.5), rel=1e-14)
    # W(x) = x^(alpha - 1) / (c Gamma(alpha)) links the two constants
    assert pred.sequence_constant / gamma(1.5) == pytest.approx(pred.gamma_limit, rel=1e-12)


def test_exponential_rates():
    assert predict(CATALOG["bm_down"], LAWS["crit"]).rate == pytest.approx(1.0, abs=1e-12)
    assert predict(CATALOG["bm"], LAWS["sub"]).rate == pytest.approx(1.0, abs=1e-12)
    assert predict(CATALOG["stable15"], LAWS["sub"]).rate == pytest.approx(0.5 ** (2 / 3), abs=1e-12)


def test_drift_up_limit():
    pred = predict(CATALOG["bm_up"], LAWS["crit"])
    assert pred.kind == "inverse_linear"
    assert pred.x_u_limit == pytest.approx(0.4, abs=1e-12)


def test_no_branching_is_subcritical():
    assert regime_of(CATALOG["bm"], LAWS["none"]) == "subcritical"
    assert predict(CATALOG["bm"], LAWS["none"]).rate == pytest.approx(np.sqrt(2), abs=1e-12)


def test_prediction_serializes():
    d = predict(CATALOG["bm"], LAWS["crit"]).to_dict()
    assert d["regime"] == "crit_oscillating" and "provenance" in d


def test_regular_variation_needs_oscillation():
    with pytest.raises(ValueError):
        regular_variation(CATALOG["bm_up"])


@settings(max_examples=60, deadline=None)
@given(a=st.floats(-2, 2), eta=st.floats(0.2, 3), p0=st.floats(0.05, 0.4), critical=st.booleans())
def test_prediction_is_total_and_matches_sign(a, eta, p0, critical):
    model = LevyModel.brownian(a, eta)
    law = OffspringLaw((p0, 1 - 2 * p0, p0)) if critical else OffspringLaw((p0 + 0.1, 0.9 - 2 * p0, p0))
    pred = predict(model, law)
    slope = float(psi_prime(model, 0.0))
    expected = ("subcritical" if not critical else
                "crit_drift_up" if slope > 0 else
                "crit_drift_down" if slope < 0 else "crit_oscillating")
    assert pred.regime == expected


# -- fits ----------------------------------------------------------------

def test_fit_exact_exponential():
    x = np.linspace(1, 10, 30)
    rate, err = fit_exp_rate((x, np.exp(-np.sqrt(2) * x)), (0, 20))
    assert rate == pytest.approx(np.sqrt(2), abs=1e-12)
    assert err <= 1e-12


def test_fit_exponential_with_polynomial_prefactor():
    x = np.linspace(20, 40, 81)
    rate, _ = fit_exp_rate((x, (1 + x) * np.exp(-x)), (20, 40))
    assert rate == pytest.approx(1.0, rel=0.05)


def test_fit_constant_data():
    x = np.linspace(0, 5, 10)
    assert fit_exp_rate((x, np.full(10, 0.3)), (0, 5))[0] == 0.0


def test_fit_needs_enough_points():
    x = np.linspace(0, 5, 20)
    with pytest.raises(InsufficientData):
        fit_exp_rate((x, np.exp(-x)), (0, 1))
    with pytest.raises(InsufficientData):
        fit_exp_rate((x, np.zeros(20)), (0, 5))


def test_plateau_of_synthetic_envelope():
    w = ScaleEvaluator(CATALOG["bm"], 0.0).w
    x = np.linspace(10, 100, 50)
    fit = fit_power_product((x, 12 / (x * w(x))), w, (10, 100), target=12.0)
    assert fit.plateau == pytest.approx(12.0, rel=1e-12)
    assert fit.ratio == pytest.approx(1.0, rel=1e-12)
    assert fit.within(12.0, 1e-9)


def test_subcritical_curve_breaks_the_band():
    curve, _ = solved("bm", "sub")
    fit = fit_power_product(curve.points(), curve.w0, (5, 40))
    assert fit.ratio > 100


def test_brownian_critical_band():
    curve, _ = solved("bm", "crit")
    fit = fit_power_product(curve.points(), curve.w0, (50, 200), target=12.0)
    assert fit.ratio <= 3


def test_stable_power_envelope():
    curve, _ = solved("stable15", "crit")
    x, u = curve.points()
    sel = (x >= 20) & (x <= 200)
    k = x[sel] ** 1.5 * u[sel] / CATALOG["stable15"].c
    assert k.max() / k.min() <= 3


def test_spitzer_fraction_for_stable():
    frac = spitzer_fraction(LevyModel.stable(1.5), t=50, n_paths=100_000)
    assert frac == pytest.approx(1 / 1.5, abs=0.02)
