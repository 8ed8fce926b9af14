"""Finite-support reproduction laws."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import comb

MAX_SUPPORT = 64
CRITICAL_TOL = 1e-12


class OffspringError(ValueError):
    pass


@dataclass(frozen=True)
class OffspringLaw:
    """Law of the number of children, ``probs[n] = P(p = n)``."""

    probs: tuple
    m1: float = field(init=False)
    m2: float = field(init=False)
    m3: float = field(init=False)

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or len(p) == 0:
            raise OffspringError("offspring law must be a non-empty vector")
        if len(p) > MAX_SUPPORT + 1:
            raise OffspringError(f"support larger than {MAX_SUPPORT} is not supported")
        if np.any(p < 0):
            raise OffspringError("offspring probabilities must be >= 0")
        if abs(p.sum() - 1.0) > 1e-12:
            raise OffspringError(f"offspring probabilities must sum to 1 (got {p.sum():.12g})")
        if len(p) > 1 and p[1] == 1.0:
            raise OffspringError("p1 = 1 is the trivial law")
        n = np.arange(len(p))
        object.__setattr__(self, "probs", tuple(float(v) for v in p))
        object.__setattr__(self, "m1", float(n @ p))
        object.__setattr__(self, "m2", float(n**2 @ p))
        object.__setattr__(self, "m3", float(n**3 @ p))
        if self.m1 > 1 + CRITICAL_TOL:
            raise OffspringError(f"supercritical law (mean {self.m1:g} > 1) is out of scope")

    @classmethod
    def from_list(cls, probs) -> "OffspringLaw":
        return cls(tuple(probs))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.probs)

    @property
    def sigma2(self) -> float:
        """E[p^2 - p]; the variance when the law is critical."""
        return self.m2 - self.m1

    @property
    def is_degenerate(self) -> bool:
        """No branching at all (p0 = 1), so M is the supremum of one path."""
        return self.probs[0] == 1.0

    def thinned(self, eps: float, n0: int = None) -> "OffspringLaw":
        """Remove, with probability ``eps``, a litter of size ``n0``.

        Mass ``eps * p[n0]`` is moved from ``n0`` to 0 children.
        """
        p = list(self.probs)
        if n0 is None:
            n0 = max(i for i, v in enumerate(p) if v > 0 and i >= 1)
        moved = eps * p[n0]
        p[n0] -= moved
        p[0] += moved
        return OffspringLaw(tuple(p))


def binary(p2: float) -> OffspringLaw:
    """Law with mass ``1 - p2`` at 0 and ``p2`` at 2."""
    return OffspringLaw((1.0 - p2, 0.0, p2))


def pgf(law: OffspringLaw, s):
    """Generating function F(s) = sum_n p_n s^n."""
    s = np.asarray(s, dtype=float)
    return np.polynomial.polynomial.polyval(s, law.array)


def hit_prob(law: OffspringLaw, v):
    """``1 - F(1 - v)``: at least one of the children's lines succeeds, each
    independently with probability ``v``.  Accurate for tiny ``v``."""
    v = np.asarray(v, dtype=float)
    n = np.arange(len(law.probs))
    with np.errstate(divide="ignore", invalid="ignore"):
        one_minus_pow = -np.expm1(np.multiply.outer(np.log1p(-np.minimum(v, 1.0)), n))
        out = one_minus_pow @ law.array
    return np.where(v >= 1.0, 1.0 - law.probs[0], out)


def hit_prob_prime(law: OffspringLaw, v):
    """Derivative of :func:`hit_prob`, i.e. ``F'(1 - v)``."""
    v = np.asarray(v, dtype=float)
    dp = np.polynomial.polynomial.polyder(law.array)
    return np.polynomial.polynomial.polyval(1.0 - v, dp) if len(dp) else np.zeros_like(v)


def _taylor_integral(n: int, u):
    """``int_0^1 (1 - u t)^(n-3) (1 - t)^2 dt`` expanded as a polynomial in u."""
    k = np.arange(n - 2)
    # int_0^1 t^k (1-t)^2 dt = 2 / ((k+1)(k+2)(k+3))
    coef = comb(n - 3, k) * (-1.0) ** k * 2.0 / ((k + 1) * (k + 2) * (k + 3))
    return np.polynomial.polynomial.polyval(u, coef)


def remainder_R(law: OffspringLaw, u_val):
    """Third-order Taylor remainder of the generating function at 1::

        R(u) = u^3 sum_{n>=3} p_n n(n-1)(n-2)/2 int_0^1 (1-ut)^(n-3) (1-t)^2 dt

    so that ``1 - F(1-u) = m1 u - sigma2 u^2 / 2 + R(u)`` exactly.  The
    integral-remainder weight is 1/2 (for n = 3 the integral is 1/3 and the
    term must be u^3).
    """
    u = np.asarray(u_val, dtype=float)
    out = np.zeros(u.shape)
    for n, pn in enumerate(law.probs):
        if n < 3 or pn == 0:
            continue
        out = out + pn * n * (n - 1) * (n - 2) / 2.0 * _taylor_integral(n, u)
    out = u**3 * out
    return out[()] if out.ndim == 0 else out


def classify(law: OffspringLaw) -> str:
    """'critical' or 'subcritical'."""
    if law.m1 > 1 + CRITICAL_TOL:
        raise OffspringError("supercritical law")
    return "critical" if abs(law.m1 - 1.0) <= CRITICAL_TOL else "subcritical"
