"""Scale functions W^(q), their derivatives and the q-potential density.

Two backends:

``closed_form``
    Partial fractions for the rational exponents (BrownianDrift,
    BrownianExpJumps) and Mittag-Leffler series for SNStable.
``contour_inversion``
    Numerical inversion of ``1 / (psi(beta) - q)`` along a Bromwich line
    (see :mod:`branchmax.laplace`).  Works for every catalog member.

Quantities that are differences of two exponentially growing terms (the
negative half of the potential density, the depth law of the exit window)
are never formed by subtraction; they are inverted from their own Laplace
transforms, in which the dominant pole at Phi(q) is removable.
"""
from __future__ import annotations

import numpy as np
from scipy.special import gammaln

from . import laplace
from .levy import LevyModel, ModelError, phi, psi, psi_complex, psi_prime, rational_form

BACKENDS = ("closed_form", "contour_inversion")


def removable(F, pole, radius):
    """Wrap ``F`` so that points near a removable singularity are evaluated by
    the mean value over a small circle (trapezoid rule, 8 nodes)."""
    circle = radius * np.exp(2j * np.pi * np.arange(8) / 8)

    def G(beta):
        beta = np.asarray(beta, dtype=complex)
        near = np.abs(beta - pole) < 0.5 * radius
        if not np.any(near):
            return F(beta)
        out = np.empty_like(beta)
        out[~near] = F(beta[~near])
        out[near] = F(beta[near][:, None] + circle[None, :]).mean(axis=1)
        return out

    return G


class ExpSum:
    """``sum_i c_i exp(r_i x)`` plus an optional ``h0 x + h1`` part coming from
    a double pole at the origin."""

    def __init__(self, roots, coeffs, h0=0.0, h1=0.0):
        self.roots = np.asarray(roots, dtype=complex)
        self.coeffs = np.asarray(coeffs, dtype=complex)
        self.h0 = h0
        self.h1 = h1

    def __call__(self, x, deriv=0):
        x = np.asarray(x, dtype=float)
        ex = np.exp(np.multiply.outer(x, self.roots))
        out = (ex * (self.coeffs * self.roots**deriv)).sum(axis=-1).real
        if deriv == 0:
            out = out + self.h0 * x + self.h1
        elif deriv == 1:
            out = out + self.h0
        return out

    def without(self, root):
        """Drop the term whose root is closest to ``root``."""
        i = int(np.argmin(np.abs(self.roots - root)))
        keep = np.arange(len(self.roots)) != i
        return ExpSum(self.roots[keep], self.coeffs[keep], self.h0, self.h1)


def _polish(poly, r):
    dpoly = np.polyder(poly)
    for _ in range(6):
        d = np.polyval(dpoly, r)
        if d == 0:
            break
        r = r - np.polyval(poly, r) / d
    return r


def rational_scale(model: LevyModel, q: float, phi_q: float) -> ExpSum:
    """Partial-fraction representation of W^(q) for a rational exponent."""
    num, den = rational_form(model, q)
    double_zero = q == 0 and abs(num[-1]) == 0 and abs(num[-2]) < 1e-14
    h0 = h1 = 0.0
    if double_zero:
        Q = num[:-2]
        h0 = np.polyval(den, 0.0) / np.polyval(Q, 0.0)
        h1 = (np.polyval(np.polyder(den), 0.0) * np.polyval(Q, 0.0)
              - np.polyval(den, 0.0) * np.polyval(np.polyder(Q), 0.0)) / np.polyval(Q, 0.0) ** 2
        if len(Q) == 1:
            return ExpSum([], [], h0, h1)
        roots = np.roots(Q).astype(complex)
        roots = np.array([_polish(Q, r) for r in roots])
        dnum = np.polyder(num)
    else:
        roots = np.roots(num).astype(complex)
        roots = np.array([_polish(num, r) for r in roots])
        dnum = np.polyder(num)
    i = int(np.argmin(np.abs(roots - phi_q)))
    roots[i] = phi_q
    coeffs = np.polyval(den, roots) / np.polyval(dnum, roots)
    if double_zero:
        # residues of den / (b^2 Q) at the simple roots of Q
        coeffs = np.polyval(den, roots) / (roots**2 * np.polyval(np.polyder(num[:-2]), roots))
    return ExpSum(roots, coeffs, h0, h1)


def mittag_leffler(z, a, b):
    """E_{a,b}(z) for z >= 0 by direct summation in log space.

    All terms are positive, so there is no cancellation; the sum is cut once
    the terms fall below 1e-16 of the total.
    """
    z = np.asarray(z, dtype=float)
    out = np.full(z.shape, np.exp(-gammaln(b)))
    pos = z > 0
    if not np.any(pos):
        return out
    zp = z[pos]
    kmax = int(3 * np.max(zp) ** (1.0 / a)) + 60
    logz = np.log(zp)
    total = np.zeros_like(zp)
    start = 0
    while start < kmax:
        k = np.arange(start, min(start + 512, kmax))
        # b - ... may hit poles of Gamma only for k=0, b<=0: not used here
        terms = np.exp(np.multiply.outer(logz, k) - gammaln(a * k + b))
        total += terms.sum(axis=1)
        start += 512
        if np.all(terms[:, -1] < 1e-17 * total):
            break
    out[pos] = total
    return out


class ScaleEvaluator:
    """Evaluates W^(q), W^(q)' and related functions for one (model, q)."""

    def __init__(self, model: LevyModel, q: float = 0.0, backend: str = "auto",
                 nodes: int = laplace.DEFAULT_NODES):
        if q < 0:
            raise ValueError("q must be >= 0")
        if backend == "auto":
            backend = "closed_form" if has_closed_form(model) else "contour_inversion"
        if backend not in BACKENDS:
            raise ValueError(f"unknown backend {backend!r}")
        if backend == "closed_form" and not has_closed_form(model):
            raise ModelError(f"no closed form scale function for {model.variant}")
        self.model = model
        self.q = float(q)
        self.backend = backend
        self.nodes = nodes
        self.phi_q = phi(model, q)
        self._expsum = None
        if backend == "closed_form" and model.is_rational:
            self._expsum = rational_scale(model, self.q, self.phi_q.phi)

    # -- transforms -------------------------------------------------------
    def _invert(self, F, x, sigma0):
        return laplace.invert_checked(F, x, sigma0=sigma0, nodes=self.nodes)

    def _w_transform(self, beta):
        return 1.0 / (psi_complex(self.model, beta) - self.q)

    def _wp_transform(self, beta):
        return beta / (psi_complex(self.model, beta) - self.q) - self.model.w_at_zero

    # -- public -----------------------------------------------------------
    def w(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        pos = x > 0
        out[x == 0] = self.model.w_at_zero
        if np.any(pos):
            out[pos] = self._w_pos(x[pos])
        return out[()] if out.ndim == 0 else out

    def w_prime(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0):
            raise ValueError("W' is only evaluated at x > 0")
        out = self._wp_pos(x.ravel()).reshape(x.shape)
        return out[()] if out.ndim == 0 else out

    def _w_pos(self, x):
        m = self.model
        if self.backend == "contour_inversion":
            return self._invert(self._w_transform, x, self.phi_q.phi)
        if self._expsum is not None:
            return self._expsum(x)
        # SNStable: psi = c b^alpha
        a, c = m.alpha, m.c
        return x ** (a - 1) * mittag_leffler(self.q / c * x**a, a, a) / c

    def _wp_pos(self, x):
        m = self.model
        if self.backend == "contour_inversion":
            return self._invert(self._wp_transform, x, self.phi_q.phi)
        if self._expsum is not None:
            return self._expsum(x, deriv=1)
        a, c = m.alpha, m.c
        return x ** (a - 2) * mittag_leffler(self.q / c * x**a, a, a - 1) / c

    def w_deficit(self, x):
        """``Phi'(q) exp(Phi(q) x) - W^(q)(x)`` for x > 0, computed without
        cancellation.  This is the potential density at ``-x``."""
        if self.q <= 0 and not (self.phi_q.phi > 0 and self.phi_q.psi_prime_at_phi > 0):
            raise ValueError("the deficit needs q > 0, or q = 0 with psi'(0+) < 0")
        x = np.asarray(x, dtype=float)
        ph = self.phi_q.phi
        if self._expsum is not None:
            rest = self._expsum.without(ph)
            return -rest(x)
        dphi = self.phi_q.phi_prime
        F = lambda b: dphi / (b - ph) - 1.0 / (psi_complex(self.model, b) - self.q)
        G = removable(F, ph, 1e-2 * max(ph, 1.0))
        # a density with power-law decay for stable parts: round-off floor ~1e-12 absolute
        return laplace.invert_checked(G, x, sigma0=0.0, nodes=self.nodes, atol=1e-11)


def has_closed_form(model: LevyModel) -> bool:
    return model.variant in ("BrownianDrift", "BrownianExpJumps", "SNStable")


def w_q(ev: ScaleEvaluator, x):
    return ev.w(x)


def w_q_prime(ev: ScaleEvaluator, x):
    return ev.w_prime(x)


class PotentialDensity:
    """Density of the q-potential measure; for q = 1 the law of L at an
    independent Exp(1) time."""

    def __init__(self, model: LevyModel, q: float, backend: str = "auto"):
        if q <= 0:
            raise ValueError("the potential density is only used for q > 0")
        self.model = model
        self.q = float(q)
        self.scale = ScaleEvaluator(model, q, backend)
        sol = self.scale.phi_q
        if sol.psi_prime_at_phi <= 0:
            raise ZeroDivisionError("psi'(Phi(q)) = 0")
        self.phi = sol.phi
        self.phi_prime = sol.phi_prime

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        out = np.empty(z.shape)
        up = z >= 0
        out[up] = self.phi_prime * np.exp(-self.phi * z[up])
        if np.any(~up):
            out[~up] = self.scale.w_deficit(-z[~up])
        out = np.where((out < 0) & (out >= -1e-12), 0.0, out)
        return out[()] if out.ndim == 0 else out

    def cdf(self, z):
        """P(L_e <= z) for q = 1 (generally q times the potential of (-inf, z])."""
        z = np.asarray(z, dtype=float)
        upper = self.phi_prime / self.phi * np.exp(-self.phi * np.maximum(z, 0.0))
        return 1.0 / self.q - upper if np.all(z >= 0) else _cdf_general(self, z)


def _cdf_general(pd, z):
    from scipy.integrate import quad

    out = []
    for zz in np.atleast_1d(z):
        if zz >= 0:
            out.append(1.0 / pd.q - pd.phi_prime / pd.phi * np.exp(-pd.phi * zz))
        else:
            out.append(quad(lambda t: float(pd(t)), -np.inf, zz, limit=200)[0])
    out = np.array(out)
    return out[0] if np.ndim(z) == 0 else out


def theta_q(pd: PotentialDensity, z):
    return pd(z)


def w_asymptote_check(ev: ScaleEvaluator, xs=None) -> dict:
    """Compare W^(q) with its exponential asymptote on [10, 40].

    Returns the worst value of ``|W(x) psi'(Phi) exp(-Phi x) - 1|``.
    """
    m = ev.model
    if not (psi_prime(m, 0.0) < 0 or ev.q > 0):
        raise ValueError("exponential growth needs psi'(0+) < 0 or q > 0")
    if xs is None:
        xs = np.linspace(10.0, 40.0, 31)
    ph, dpsi = ev.phi_q.phi, ev.phi_q.psi_prime_at_phi
    ratio = ev.w(xs) * dpsi * np.exp(-ph * xs)
    return {
        "phi": ph,
        "psi_prime_at_phi": dpsi,
        "x": np.asarray(xs),
        "ratio": ratio,
        "max_deviation": float(np.max(np.abs(ratio - 1.0))),
    }
