"""Exact laws of the exponential window (S_e, L_e, D = S_e - L_e).

At an independent Exp(1) time the supremum ``S_e`` is Exp(Phi(1)) and the
depth ``D`` below the supremum is independent of it.  The law of ``D`` has
Laplace transform::

    E[exp(-b D)] = (Phi(1) - b) / (Phi(1) (1 - psi(b)))

i.e. an atom ``W^(1)(0) / Phi(1)`` at zero and density
``W^(1)'(z) / Phi(1) - W^(1)(z)`` on (0, inf).
"""
from __future__ import annotations

import numpy as np

from . import laplace
from .levy import LevyModel, phi, psi_complex, psi_prime
from .scale import ScaleEvaluator, removable

TABLE_SIZE = 4096
TABLE_MASS = 1e-9


class WindowLaw:
    """Samplers and exact laws for the pair (S_e, L_e) of one model."""

    def __init__(self, model: LevyModel, backend: str = "auto", table_size: int = TABLE_SIZE):
        self.model = model
        sol = phi(model, 1.0)
        self.phi1 = sol.phi
        self.scale = ScaleEvaluator(model, 1.0, backend)
        self.backend = self.scale.backend
        self.atom = model.w_at_zero / self.phi1
        self.mean_depth = 1.0 / self.phi1 - float(psi_prime(model, 0.0))
        self._sums = None
        if self.scale._expsum is not None:
            rest = self.scale._expsum.without(self.phi1)
            w = rest.coeffs * (rest.roots / self.phi1 - 1.0)
            self._sums = (rest.roots, w)
        self._build_table(table_size)

    # -- transforms -------------------------------------------------------
    def depth_transform(self, beta):
        """E[exp(-beta D)] for Re(beta) > 0."""
        ph = self.phi1
        F = lambda b: (ph - b) / (ph * (1.0 - psi_complex(self.model, b)))
        return removable(F, ph, 1e-2 * max(ph, 1.0))(beta)

    def _invert(self, F, z):
        # probabilities: round-off leaves ~1e-13 absolute noise far in heavy tails
        return laplace.invert_checked(F, z, sigma0=0.0, atol=1e-12)

    def _expsum(self, z, power):
        roots, w = self._sums
        z = np.asarray(z, dtype=float)
        return (np.exp(np.multiply.outer(z, roots)) * (w / (-roots) ** power)).sum(axis=-1).real

    # -- laws ---------------------------------------------------------------
    def sup_tail(self, x):
        """P(S_e >= x) = exp(-Phi(1) x)."""
        x = np.asarray(x, dtype=float)
        return np.where(x <= 0, 1.0, np.exp(-self.phi1 * np.maximum(x, 0.0)))

    def d_density(self, z):
        """Density of D on (0, inf) (the atom at 0 is :meth:`atom0`)."""
        z = np.asarray(z, dtype=float)
        if np.any(z <= 0):
            raise ValueError("the depth density is evaluated at z > 0")
        if self._sums is not None:
            out = self._expsum(z, 0)
        else:
            w0 = self.model.w_at_zero / self.phi1
            out = self._invert(lambda b: self.depth_transform(b) - w0, z.ravel()).reshape(z.shape)
        out = np.where((out < 0) & (out > -1e-12), 0.0, out)
        return out[()] if out.ndim == 0 else out

    def atom0(self) -> float:
        return self.atom

    def d_tail(self, z):
        """P(D > z) for z >= 0."""
        z = np.asarray(z, dtype=float)
        out = np.empty(z.shape)
        zero = z <= 0
        out[zero] = 1.0 - self.atom
        if np.any(~zero):
            if self._sums is not None:
                out[~zero] = self._expsum(z[~zero], 1)
            else:
                F = lambda b: (1.0 - self.depth_transform(b)) / b
                out[~zero] = self._invert(F, z[~zero])
        return np.clip(out, 0.0, 1.0)

    def d_tail2(self, z):
        """Integrated tail: int_z^inf P(D > t) dt, z >= 0."""
        z = np.asarray(z, dtype=float)
        out = np.empty(z.shape)
        zero = z <= 0
        out[zero] = self.mean_depth
        if np.any(~zero):
            if self._sums is not None:
                out[~zero] = self._expsum(z[~zero], 2)
            else:
                m = self.mean_depth
                F = lambda b: (b * m - 1.0 + self.depth_transform(b)) / b**2
                out[~zero] = self._invert(F, z[~zero])
        return np.maximum(out, 0.0)

    # -- sampling -----------------------------------------------------------
    def _build_table(self, size):
        hi = 1.0 / self.phi1
        while self.d_tail(hi) > TABLE_MASS:
            hi *= 2.0
        lo = 1e-8 / self.phi1
        z = np.geomspace(lo, hi, size - 1)
        cdf = 1.0 - self.d_tail(z)
        cdf = np.maximum.accumulate(np.concatenate([[self.atom], cdf]))
        self.table_z = np.concatenate([[0.0], z])
        self.table_cdf = cdf
        tail = self.d_tail(z[-2:])
        self.tail_rate = float(np.log(tail[0] / tail[1]) / (z[-1] - z[-2]))
        # stable jumps give the depth a z^(-alpha) tail (that of the Levy measure)
        self.power_tail = self.model.has_stable_part and self.model.alpha < 2.0
        self.tail_index = self.model.alpha

    def sample_depth(self, rng, size=None):
        u = rng.random(size)
        d = np.interp(u, self.table_cdf, self.table_z)
        d = np.where(u < self.atom, 0.0, d)
        over = u > self.table_cdf[-1]
        if np.any(over):
            end = self.table_z[-1]
            if self.power_tail:
                beyond = end * rng.random(np.shape(u)) ** (-1.0 / self.tail_index)
            else:
                beyond = end + rng.exponential(1.0 / self.tail_rate, size=np.shape(u))
            d = np.where(over, beyond, d)
        return d

    def sample_window(self, rng, size=None):
        """Draw (S_e, L_e); returns arrays ``(s, l)`` with ``l <= s``."""
        s = rng.exponential(1.0 / self.phi1, size)
        d = self.sample_depth(rng, size)
        return s, s - d


def sup_tail(wl: WindowLaw, x):
    return wl.sup_tail(x)


def d_density(wl: WindowLaw, z):
    return wl.d_density(z)


def sample_window(wl: WindowLaw, rng, size=None):
    return wl.sample_window(rng, size)
