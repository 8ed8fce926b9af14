"""Predicted tail behaviour of u(x) = P(M >= x) and empirical fits.

Four regimes, decided by the offspring mean and the sign of psi'(0+):

=================  ===========================================
subcritical        u ~ kappa exp(-Phi(1 - m1) x)
crit_drift_up      x u(x) -> 2 psi'(0+) / sigma2
crit_oscillating   u is pinned between multiples of 1/(x W(x))
crit_drift_down    u ~ kappa exp(-Phi(0) x)
=================  ===========================================
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import beta as beta_fn, gamma
from scipy.stats import linregress

from .levy import LevyModel, phi, psi_prime, psi_second
from .offspring import OffspringLaw, classify

REGIMES = ("subcritical", "crit_drift_up", "crit_oscillating", "crit_drift_down")
MIN_POINTS = 8


class InsufficientData(ValueError):
    pass


def regime_of(model: LevyModel, law: OffspringLaw) -> str:
    if classify(law) == "subcritical":
        return "subcritical"
    return {
        "drift-up": "crit_drift_up",
        "oscillating": "crit_oscillating",
        "drift-down": "crit_drift_down",
    }[model.regime()]


def is_exponential(regime: str) -> bool:
    return regime in ("subcritical", "crit_drift_down")


def regular_variation(model: LevyModel):
    """``(alpha, ell)`` with psi(l) ~ ell * l^alpha as l -> 0, for oscillating models.

    The catalog only produces constant slowly varying parts.
    """
    if model.regime() != "oscillating":
        raise ValueError("regular variation at 0 is only used when psi'(0+) = 0")
    if model.has_stable_part and model.alpha < 2:
        return model.alpha, model.c
    return 2.0, 0.5 * float(psi_second(model, 0.0))


@dataclass(frozen=True)
class RegimePrediction:
    regime: str
    kind: str  # "exponential", "inverse_linear" or "envelope"
    rate: float = float("nan")
    x_u_limit: float = float("nan")
    alpha: float = float("nan")
    ell: float = float("nan")
    gamma_limit: float = float("nan")
    sequence_constant: float = float("nan")
    provenance: str = ""

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def predict(model: LevyModel, law: OffspringLaw) -> RegimePrediction:
    regime = regime_of(model, law)
    if regime == "subcritical":
        rate = phi(model, 1.0 - law.m1).phi
        return RegimePrediction(regime, "exponential", rate=rate,
                                provenance="subcritical: rate Phi(1 - E[p])")
    if regime == "crit_drift_down":
        return RegimePrediction(regime, "exponential", rate=phi(model, 0.0).phi,
                                provenance="critical, psi'(0+) < 0: rate Phi(0)")
    s2 = law.sigma2
    if regime == "crit_drift_up":
        return RegimePrediction(regime, "inverse_linear",
                                x_u_limit=2.0 * float(psi_prime(model, 0.0)) / s2,
                                provenance="critical, psi'(0+) > 0: x u(x) -> 2 psi'(0+)/sigma2")
    alpha, ell = regular_variation(model)
    return RegimePrediction(
        regime, "envelope", alpha=alpha, ell=ell,
        gamma_limit=2.0 / (s2 * beta_fn(alpha, alpha)),
        sequence_constant=2.0 * gamma(2 * alpha) / (s2 * gamma(alpha)) * ell,
        provenance="critical, psi'(0+) = 0: u within multiples of 1/(x W(x)); "
                   "x W(x) u(x) visits 2/(sigma2 B(alpha, alpha))",
    )


def _window(points, window):
    x, u = (np.asarray(v, dtype=float) for v in points)
    keep = (x >= window[0]) & (x <= window[1]) & (u > 0)
    if keep.sum() < MIN_POINTS:
        raise InsufficientData(
            f"need at least {MIN_POINTS} points with u > 0 in {window}, got {int(keep.sum())}")
    return x[keep], u[keep]


def fit_exp_rate(points, window):
    """Least-squares decay rate of log u over ``window``; returns ``(rate, stderr)``.

    ``points`` is a pair of arrays ``(x, u)``.
    """
    x, u = _window(points, window)
    logu = np.log(u)
    if np.ptp(logu) == 0:
        return 0.0, 0.0
    fit = linregress(x, logu)
    return -float(fit.slope), float(fit.stderr)


@dataclass(frozen=True)
class PlateauFit:
    plateau: float
    ratio: float
    low: float
    high: float
    closest: float = float("nan")

    def within(self, target: float, rel: float) -> bool:
        """Does the trajectory come within ``rel`` of ``target`` somewhere?"""
        return abs(self.closest - target) <= rel * target


def fit_power_product(points, weight_fn, window, target=None) -> PlateauFit:
    """Band check for gamma(x) = x W(x) u(x) on ``window``.

    Returns the median of gamma, its max/min ratio, and, when ``target`` is
    given, the value of gamma closest to it.
    """
    x, u = _window(points, window)
    g = x * np.asarray(weight_fn(x), dtype=float) * u
    closest = float("nan")
    if target is not None:
        closest = float(g[np.argmin(np.abs(g - target))])
    return PlateauFit(float(np.median(g)), float(g.max() / g.min()),
                      float(g.min()), float(g.max()), closest)
