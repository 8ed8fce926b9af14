"""Catalog of spectrally negative Laplace exponents.

Four closed-form families are supported::

    BrownianDrift      psi(l) = a l + eta^2 l^2 / 2
    SNStable           psi(l) = c l^alpha
    BrownianExpJumps   psi(l) = a l + eta^2 l^2 / 2 - rho l / (mu + l)
    StableWithDrift    psi(l) = a l + c l^alpha

Together they cover drift to +infinity, oscillation and drift to -infinity,
as well as bounded and unbounded variation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

VARIANTS = ("BrownianDrift", "SNStable", "BrownianExpJumps", "StableWithDrift")

# absolute tolerance on lambda for the root finder
_ROOT_TOL = 1e-12


class ModelError(ValueError):
    """Raised for parameter combinations outside the catalog."""


@dataclass(frozen=True)
class LevyModel:
    """A spectrally negative Levy process given by its Laplace exponent.

    Use the constructors :meth:`brownian`, :meth:`stable`, :meth:`exp_jumps`
    and :meth:`stable_drift` rather than filling the fields by hand.
    """

    variant: str
    a: float = 0.0
    eta: float = 0.0
    alpha: float = 2.0
    c: float = 1.0
    rho: float = 0.0
    mu: float = 1.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ModelError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.eta < 0:
            raise ModelError(f"eta must be >= 0, got {self.eta}")
        if self.variant in ("SNStable", "StableWithDrift"):
            if not 1.0 < self.alpha <= 2.0:
                raise ModelError(f"alpha must lie in (1, 2], got {self.alpha}")
            if self.c <= 0:
                raise ModelError(f"stable scale c must be > 0, got {self.c}")
        if self.variant == "BrownianDrift" and self.eta == 0:
            raise ModelError("BrownianDrift needs eta > 0 (pure drift is deterministic)")
        if self.variant == "BrownianExpJumps":
            if self.rho < 0:
                raise ModelError(f"jump rate rho must be >= 0, got {self.rho}")
            if self.mu <= 0:
                raise ModelError(f"jump rate parameter mu must be > 0, got {self.mu}")
            if self.eta == 0 and self.a <= 0:
                # bounded variation: -L would be a subordinator
                raise ModelError(
                    "BrownianExpJumps with eta = 0 needs a strictly positive drift a "
                    f"(got a={self.a}); otherwise -L is a subordinator"
                )

    # -- constructors -----------------------------------------------------
    @classmethod
    def brownian(cls, a: float = 0.0, eta: float = 1.0) -> "LevyModel":
        return cls("BrownianDrift", a=a, eta=eta)

    @classmethod
    def stable(cls, alpha: float, c: float = 1.0) -> "LevyModel":
        return cls("SNStable", alpha=alpha, c=c)

    @classmethod
    def exp_jumps(cls, a: float, eta: float, rho: float, mu: float) -> "LevyModel":
        return cls("BrownianExpJumps", a=a, eta=eta, rho=rho, mu=mu)

    @classmethod
    def stable_drift(cls, a: float, alpha: float, c: float = 1.0) -> "LevyModel":
        return cls("StableWithDrift", a=a, alpha=alpha, c=c)

    @classmethod
    def from_dict(cls, block: dict) -> "LevyModel":
        """Build a model from a config block ``{"variant": ..., <params>}``."""
        block = dict(block)
        try:
            variant = block.pop("variant")
        except KeyError:
            raise ModelError("model block needs a 'variant' key") from None
        allowed = {
            "BrownianDrift": {"a", "eta"},
            "SNStable": {"alpha", "c"},
            "BrownianExpJumps": {"a", "eta", "rho", "mu"},
            "StableWithDrift": {"a", "alpha", "c"},
        }.get(variant)
        if allowed is None:
            raise ModelError(f"unknown variant {variant!r}")
        unknown = set(block) - allowed
        if unknown:
            raise ModelError(f"unknown parameters for {variant}: {sorted(unknown)}")
        return cls(variant, **{k: float(v) for k, v in block.items()})

    def to_dict(self) -> dict:
        keys = {
            "BrownianDrift": ("a", "eta"),
            "SNStable": ("alpha", "c"),
            "BrownianExpJumps": ("a", "eta", "rho", "mu"),
            "StableWithDrift": ("a", "alpha", "c"),
        }[self.variant]
        return {"variant": self.variant, **{k: getattr(self, k) for k in keys}}

    # -- structural facts -------------------------------------------------
    @property
    def has_stable_part(self) -> bool:
        return self.variant in ("SNStable", "StableWithDrift")

    @property
    def bounded_variation(self) -> bool:
        return self.variant == "BrownianExpJumps" and self.eta == 0

    @property
    def is_rational(self) -> bool:
        """psi is a rational function (partial fractions are available)."""
        return self.variant in ("BrownianDrift", "BrownianExpJumps")

    @property
    def w_at_zero(self) -> float:
        """W^(q)(0) for every q: 1/drift in bounded variation, else 0."""
        return 1.0 / self.a if self.bounded_variation else 0.0

    def regime(self) -> str:
        """'drift-up', 'oscillating' or 'drift-down' from the sign of psi'(0+)."""
        d = psi_prime(self, 0.0)
        if d > 0:
            return "drift-up"
        if d < 0:
            return "drift-down"
        return "oscillating"

    def __str__(self):
        params = ", ".join(f"{k}={v:g}" for k, v in self.to_dict().items() if k != "variant")
        return f"{self.variant}({params})"


def _drift(model: LevyModel):
    return 0.0 if model.variant == "SNStable" else model.a


def _gauss(model: LevyModel):
    return model.eta if model.variant in ("BrownianDrift", "BrownianExpJumps") else 0.0


def _jump_rate(model: LevyModel):
    return model.rho if model.variant == "BrownianExpJumps" else 0.0


def psi(model: LevyModel, lam):
    """Laplace exponent on [0, inf); vectorized over ``lam``."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise ValueError("psi is only defined here for lam >= 0")
    out = _drift(model) * lam + 0.5 * _gauss(model) ** 2 * lam**2
    if model.has_stable_part:
        out = out + model.c * lam**model.alpha
    if _jump_rate(model):
        out = out - model.rho * lam / (model.mu + lam)
    return out[()] if out.ndim == 0 else out


def psi_complex(model: LevyModel, beta):
    """Analytic continuation of psi to Re(beta) > 0 (principal branch)."""
    beta = np.asarray(beta, dtype=complex)
    if np.any(beta.real <= 0):
        raise ValueError("psi_complex requires Re(beta) > 0")
    out = _drift(model) * beta + 0.5 * _gauss(model) ** 2 * beta**2
    if model.has_stable_part:
        if model.alpha == 2.0:
            out = out + model.c * beta * beta
        else:
            out = out + model.c * np.exp(model.alpha * np.log(beta))
    if _jump_rate(model):
        out = out - model.rho * beta / (model.mu + beta)
    return out[()] if out.ndim == 0 else out


def psi_prime(model: LevyModel, lam):
    """Derivative of psi; at ``lam = 0`` this is the right derivative psi'(0+)."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise ValueError("psi_prime is only defined here for lam >= 0")
    out = _drift(model) + _gauss(model) ** 2 * lam
    if model.has_stable_part:
        out = out + model.c * model.alpha * lam ** (model.alpha - 1)
    if _jump_rate(model):
        out = out - model.rho * model.mu / (model.mu + lam) ** 2
    return out[()] if out.ndim == 0 else out


def psi_second(model: LevyModel, lam):
    """Second derivative (infinite at 0 for stable parts with alpha < 2)."""
    lam = np.asarray(lam, dtype=float)
    out = _gauss(model) ** 2 + 0.0 * lam
    if model.has_stable_part:
        a = model.alpha
        with np.errstate(divide="ignore"):
            out = out + model.c * a * (a - 1) * lam ** (a - 2)
    if _jump_rate(model):
        out = out + 2 * model.rho * model.mu / (model.mu + lam) ** 3
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class PhiSolution:
    q: float
    phi: float
    psi_prime_at_phi: float
    bracket: tuple = field(default=(0.0, 0.0))

    @property
    def phi_prime(self) -> float:
        """Derivative of q -> Phi(q), i.e. 1/psi'(Phi(q))."""
        if self.psi_prime_at_phi <= 0:
            raise ZeroDivisionError("psi'(Phi(q)) = 0: Phi'(q) is infinite")
        return 1.0 / self.psi_prime_at_phi


def _bisect(f, lo, hi, tol=_ROOT_TOL):
    flo = f(lo)
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if hi - lo <= tol * max(1.0, abs(mid)):
            break
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def psi_argmin(model: LevyModel) -> float:
    """Minimizer of psi on [0, inf), located by bisection on the sign of psi'."""
    if psi_prime(model, 0.0) >= 0:
        return 0.0
    hi = 1.0
    while psi_prime(model, hi) <= 0:
        hi *= 2.0
    return _bisect(lambda lam: float(psi_prime(model, lam)), 0.0, hi)


def phi(model: LevyModel, q: float) -> PhiSolution:
    """Largest root of psi(lambda) = q, for q >= 0."""
    q = float(q)
    if q < 0:
        raise ValueError(f"q must be >= 0, got {q}")
    lam_min = psi_argmin(model)
    if q == 0 and lam_min == 0.0:
        return PhiSolution(0.0, 0.0, float(psi_prime(model, 0.0)), (0.0, 0.0))
    hi = 1.0
    while hi <= lam_min or psi(model, hi) <= q + 1:
        hi *= 2.0
    f = lambda lam: float(psi(model, lam)) - q
    root = _bisect(f, lam_min, hi, tol=1e-9)
    # Newton polish on the convex right branch
    for _ in range(50):
        d = float(psi_prime(model, root))
        if d <= 0:
            break
        step = f(root) / d
        new = root - step
        if new < lam_min:
            break
        root = new
        if abs(step) <= _ROOT_TOL * max(1.0, root):
            break
    return PhiSolution(q, root, float(psi_prime(model, root)), (lam_min, hi))


def rational_form(model: LevyModel, q: float):
    """Polynomials ``(num, den)`` with ``psi(b) - q = num(b) / den(b)``.

    Only for rational exponents; coefficient arrays are highest power first.
    """
    if not model.is_rational:
        raise ModelError(f"{model.variant} has no rational Laplace exponent")
    quad = np.array([0.5 * model.eta**2, model.a, -q])
    if model.variant == "BrownianDrift":
        return np.trim_zeros(quad, "f"), np.array([1.0])
    den = np.array([1.0, model.mu])
    num = np.polysub(np.polymul(quad, den), np.array([model.rho, 0.0]))
    return np.trim_zeros(num, "f"), den


def catalog() -> dict:
    """Reference instances covering every variant and regime."""
    return {
        "bm": LevyModel.brownian(0.0, 1.0),
        "bm_up": LevyModel.brownian(0.2, 1.0),
        "bm_down": LevyModel.brownian(-0.5, 1.0),
        "stable15": LevyModel.stable(1.5),
        "expjumps": LevyModel.exp_jumps(1.0, 1.0, 2.0, 1.0),
        "expjumps_bv": LevyModel.exp_jumps(2.0, 0.0, 1.0, 1.0),
        "stable_drift": LevyModel.stable_drift(0.3, 1.5),
    }
