"""Deterministic solution of the branching equation for u(x) = P(M >= x).

Conditioning on the first branching event at the Exp(1) time ``e`` gives,
for x >= 0 and ``G(v) = 1 - F(1 - v)``::

    u(x) = P(S_e >= x) + E[ 1{S_e < x} G(u(x - L_e)) ]

With ``L_e = S_e - D``, S_e ~ Exp(Phi(1)) independent of D, and ``y = x - s``::

    u(x) = exp(-Phi x) + int_0^x Phi exp(-Phi (x - y)) H(y) dy
    H(y) = E[ G(u(y + D)) ]

H is a correlation of G(u) with the law of D, discretized by product
integration against hat functions (exact weights from the integrated tail of
D); the y-integral is an exact exponential recursion for piecewise linear H.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.integrate import trapezoid
from scipy.sparse.linalg import LinearOperator, gmres, splu
from scipy.signal import fftconvolve, lfilter
from scipy.special import beta as beta_fn
from scipy.stats import linregress

from .asymptotics import is_exponential, predict, regime_of
from .exit_laws import WindowLaw
from .levy import LevyModel, phi
from .offspring import OffspringLaw, hit_prob, hit_prob_prime, remainder_R
from .scale import PotentialDensity, ScaleEvaluator

DEFAULT_H = 0.05
EXP_XMAX = 40.0
POLY_XMAX = 400.0
TAIL_FIT_FRACTION = 0.1
D_TAIL_TOL = 1e-12
TRUNCATION_WARN = 1e-8
# direct correlation below this many multiply-adds, FFT above
DIRECT_WORK = 2e7
# Jacobian band kept in the sparse factorization (exact Newton below it)
NEWTON_BAND = 600
TABLE_NODES = 600


class ConvergenceError(ArithmeticError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


class QuadratureTailWarning(UserWarning):
    pass


@dataclass
class SolverReport:
    iterations: int
    newton_iterations: int
    final_update: float
    converged: bool
    omega: float
    tol: float
    history: list = field(repr=False, default_factory=list)
    truncation_bound: float = 0.0
    d_max: float = 0.0
    residuals: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "newton_iterations": self.newton_iterations,
            "final_update": self.final_update,
            "converged": self.converged,
            "omega": self.omega,
            "tol": self.tol,
            "truncation_bound": self.truncation_bound,
            "d_max": self.d_max,
            "residuals": self.residuals,
        }


class SurvivalCurve:
    """u on a uniform grid, linear in between, closed by a tail model.

    ``tail_kind`` is ``exponential`` (A exp(-r x)), ``inverse_linear`` (A / x)
    or ``inverse_xw`` (A / (x W(x))).  u is 0 for x < 0.
    """

    def __init__(self, grid, values, model, law, regime, tail_kind, tail_rate, tail_amplitude,
                 scale0=None):
        self.grid = np.asarray(grid, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.model = model
        self.law = law
        self.regime = regime
        self.tail_kind = tail_kind
        self.tail_rate = float(tail_rate)
        self.tail_amplitude = float(tail_amplitude)
        self._scale0 = scale0

    @property
    def h(self) -> float:
        return float(self.grid[1] - self.grid[0])

    @property
    def x_max(self) -> float:
        return float(self.grid[-1])

    def w0(self, x):
        """W = W^(0), the weight used by the gamma diagnostic."""
        if self._scale0 is None:
            self._scale0 = ScaleEvaluator(self.model, 0.0)
        return self._scale0.w(x)

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        if self.tail_kind == "exponential":
            return self.tail_amplitude * np.exp(-self.tail_rate * x)
        if self.tail_kind == "inverse_linear":
            return self.tail_amplitude / x
        return self.tail_amplitude / (x * self.w0(x))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.interp(x, self.grid, self.values)
        out = np.where(x < 0, 0.0, out)
        beyond = x > self.x_max
        if np.any(beyond):
            out = np.where(beyond, self.tail(np.where(beyond, x, self.x_max)), out)
        return out[()] if out.ndim == 0 else out

    def gamma(self, x=None):
        """gamma(x) = x W(x) u(x) on the grid (or at ``x``)."""
        x = self.grid if x is None else np.asarray(x, dtype=float)
        return x * self.w0(x) * self(x)

    def points(self):
        return self.grid, self.values


def _tail_closure(x, u, regime, w0, start):
    """Fit the tail model on ``x[start:]``; returns (kind, rate, amplitude)."""
    xn, un = x[-1], u[-1]
    if is_exponential(regime):
        fit = linregress(x[start:], np.log(np.maximum(u[start:], 1e-300)))
        rate = max(-float(fit.slope), 1e-12)
        return "exponential", rate, un * np.exp(rate * xn)
    if regime == "crit_drift_up":
        return "inverse_linear", 0.0, un * xn
    return "inverse_xw", 0.0, un * xn * float(w0(xn))


class _BranchingOperator:
    """u -> right-hand side of the branching equation on a fixed grid."""

    def __init__(self, model, law, x_max, h, wl, regime):
        self.model, self.law, self.regime = model, law, regime
        n = int(np.ceil(x_max / h - 1e-9))
        self.h = h = x_max / n
        self.x = np.arange(n + 1) * h
        self.phi1 = wl.phi1
        self.scale0 = ScaleEvaluator(model, 0.0) if regime in ("crit_oscillating",) else None

        # D truncation: exponential tails stop at T(d) <= D_TAIL_TOL, heavy ones at x_max
        d_max = 1.0 / wl.phi1
        while d_max < x_max and wl.d_tail(d_max) > D_TAIL_TOL:
            d_max *= 1.5
        self.J = J = int(np.ceil(min(d_max, x_max) / h))
        self.d_max = J * h
        d = np.arange(J + 2) * h
        t2 = wl.d_tail2(d)
        w = np.empty(J + 1)
        w[0] = 1.0 - (t2[0] - t2[1]) / h
        w[1:] = (t2[:-2] - 2.0 * t2[1:-1] + t2[2:]) / h
        self.weights = np.maximum(w, 0.0)
        self.tail_mass = float(wl.d_tail(self.d_max))
        self.x_ext = np.arange(n + J + 1) * h
        self.use_fft = (n + 1) * (J + 1) > DIRECT_WORK

        ph = self.phi1
        E = np.exp(-ph * h)
        self.decay = E
        self.w_new = 1.0 - (1.0 - E) / (ph * h)
        self.w_old = (1.0 - E) - self.w_new
        self.free = np.exp(-ph * self.x)
        self.fit_start = int((1.0 - TAIL_FIT_FRACTION) * n)

    def w0(self, x):
        return self.scale0.w(x)

    def closure(self, u):
        return _tail_closure(self.x, u, self.regime, self.w0, self.fit_start)

    def tail_shape(self, u):
        """u_ext beyond the grid divided by u at the last node (rate frozen)."""
        kind, rate, _ = self.closure(u)
        xt = self.x_ext[len(u):]
        xn = self.x[-1]
        if kind == "exponential":
            return np.exp(-rate * (xt - xn))
        if kind == "inverse_linear":
            return xn / xt
        return xn * self.w0(xn) / (xt * self.w0(xt))

    def extend(self, u):
        return np.concatenate([u, u[-1] * self.tail_shape(u)])

    def depth_average(self, g_ext):
        """H_i = sum_j w_j g_{i+j}."""
        if self.use_fft:
            return fftconvolve(g_ext, self.weights[::-1], mode="valid")
        return np.correlate(g_ext, self.weights, mode="valid")

    def __call__(self, u):
        g = hit_prob(self.law, np.clip(self.extend(u), 0.0, 1.0))
        H = self.depth_average(g)
        src = np.empty_like(H)
        src[0] = 0.0
        src[1:] = self.w_old * H[:-1] + self.w_new * H[1:]
        return self.free + lfilter([1.0], [1.0, -self.decay], src)


    # -- Newton on the differenced equation ---------------------------------
    # Undoing the exponential recursion gives, for i >= 1,
    #     u_i - E u_{i-1} = w_old H_{i-1} + w_new H_i,     u_0 = 1,
    # whose Jacobian is banded (bidiagonal plus the depth-weight band).

    def residual(self, u):
        H = self.depth_average(hit_prob(self.law, self.extend(u)))
        out = np.empty_like(u)
        out[0] = u[0] - 1.0
        out[1:] = u[1:] - self.decay * u[:-1] - self.w_old * H[:-1] - self.w_new * H[1:]
        return out

    def _d_average(self, dg_ext):
        dH = self.depth_average(dg_ext)
        out = np.empty(len(dH))
        out[0] = 0.0
        out[1:] = self.w_old * dH[:-1] + self.w_new * dH[1:]
        return out

    def jacobian_parts(self, u):
        """Sparse band approximation (band <= NEWTON_BAND) and an exact matvec."""
        n = len(u)
        shape = self.tail_shape(u)
        gp = hit_prob_prime(self.law, self.extend(u))
        band = min(self.J, NEWTON_BAND)
        # dH_i/du_{i+j} = w_j G'(u_{i+j}); tail values all hang on u_N
        offsets = list(range(band + 1))
        diags = [self.weights[j] * gp[j:n] for j in offsets]
        dH = sp.diags(diags, offsets, shape=(n, n), format="csr")
        tail_col = np.correlate(np.concatenate([np.zeros(n), gp[n:] * shape]),
                                self.weights, mode="valid")[:n]
        dH = dH + sp.csr_matrix((tail_col, (np.arange(n), np.full(n, n - 1))), shape=(n, n))
        mix = sp.diags([np.r_[0.0, np.full(n - 1, self.w_new)], np.full(n - 1, self.w_old)],
                       [0, -1], shape=(n, n))
        diff = sp.diags([np.ones(n), np.full(n - 1, -self.decay)], [0, -1], shape=(n, n))
        approx = (diff - mix @ dH).tocsc()

        def matvec(du):
            ext = np.concatenate([du, du[-1] * shape])
            out = np.empty(n)
            out[0] = du[0]
            out[1:] = du[1:] - self.decay * du[:-1]
            return out - self._d_average(gp * ext)

        return approx, matvec, band == self.J

    def newton(self, u, tol, max_steps=40):
        """Newton iteration in relative variables; returns (u, steps, last step size)."""
        step = np.inf
        for k in range(1, max_steps + 1):
            ref = np.maximum(u, 1e-300)
            F = self.residual(u)
            approx, matvec, exact = self.jacobian_parts(u)
            scale_l, scale_r = sp.diags(1.0 / ref), sp.diags(ref)
            lu = splu((scale_l @ approx @ scale_r).tocsc(), permc_spec="NATURAL")
            rhs = -F / ref
            if exact:
                dv = lu.solve(rhs)
            else:
                op = LinearOperator((len(u), len(u)), matvec=lambda v: matvec(v * ref) / ref)
                pre = LinearOperator((len(u), len(u)), matvec=lu.solve)
                # inexact Newton: solve only as accurately as the current residual warrants
                forcing = min(1e-3, max(1e-12, float(np.max(np.abs(rhs)))))
                with np.errstate(invalid="ignore"):
                    dv, _ = gmres(op, rhs, M=pre, rtol=forcing, atol=0.0, restart=60, maxiter=20)
                if not np.all(np.isfinite(dv)):
                    dv = lu.solve(rhs)  # near-exact preconditioner: GMRES broke down
            t = 1.0
            norm0 = np.max(np.abs(F / ref))
            while t > 1.0 / 64:
                trial = np.clip(u * (1.0 + t * dv), 0.0, 1.0)
                if np.max(np.abs(self.residual(trial) / np.maximum(trial, 1e-300))) < norm0:
                    break
                t *= 0.5
            new = np.minimum.accumulate(trial)
            step = _update_size(new, u)
            u = new
            if step <= 0.1 * tol:
                break
        return u, k, step


def _initial_guess(op, model, law):
    """exp(-Phi(1) x), raised to the predicted power-law tail for critical laws.

    Starting from the underflowing exponential alone, Picard needs thousands
    of sweeps to carry mass out to the far end of a heavy-tailed grid.
    """
    u = op.free.copy()
    pred = predict(model, law)
    x = op.x[1:]
    if pred.kind == "inverse_linear":
        u[1:] = np.maximum(u[1:], np.minimum(1.0, pred.x_u_limit / x))
    elif pred.kind == "envelope":
        u[1:] = np.maximum(u[1:], np.minimum(1.0, pred.gamma_limit / (x * op.w0(x))))
    return u


def _update_size(new, old):
    return float(np.max(np.abs(new - old) / np.maximum(np.abs(old), 1e-300)))


def solve_u(model: LevyModel, law: OffspringLaw, x_max: float = None, h: float = DEFAULT_H,
            tol: float = 1e-9, omega: float = 0.7, max_iter: int = 10_000,
            picard_budget: int = 400, newton: bool = True, window: WindowLaw = None):
    """Solve for u on [0, x_max]; returns ``(SurvivalCurve, SolverReport)``.

    Damped Picard iteration, clipped to [0, 1] and projected onto
    nonincreasing curves, started at exp(-Phi(1) x).  The update size is
    measured relative to the current iterate.  When the Picard contraction
    is too slow (critical laws, where the linearization has spectral radius
    close to 1) the iterate is handed to Newton's method on the differenced
    equation, then checked by one more undamped sweep.
    """
    if h <= 0 or h > 0.05 + 1e-12:
        raise ValueError(f"grid step must lie in (0, 0.05], got {h}")
    if not 0 < omega <= 1:
        raise ValueError(f"damping must lie in (0, 1], got {omega}")
    regime = regime_of(model, law)
    if x_max is None:
        x_max = EXP_XMAX if is_exponential(regime) else POLY_XMAX
    wl = window if window is not None else WindowLaw(model)
    op = _BranchingOperator(model, law, x_max, h, wl, regime)

    u = _initial_guess(op, model, law)
    history = []
    converged = False
    it = 0
    while it < min(max_iter, picard_budget if newton else max_iter):
        it += 1
        new = (1.0 - omega) * u + omega * op(u)
        new = np.minimum.accumulate(np.clip(new, 0.0, 1.0))
        history.append(_update_size(new, u))
        u = new
        if history[-1] <= tol:
            converged = True
            break
        if newton and it >= 40 and history[-1] > 0.95 ** 20 * history[-21]:
            break  # contraction slower than 0.95 per sweep

    newton_its = 0
    if not converged and newton:
        u, newton_its, _ = op.newton(u, tol)
        new = np.minimum.accumulate(np.clip(op(u), 0.0, 1.0))
        history.append(_update_size(new, u))
        u = new
        converged = history[-1] <= tol

    while not converged and it < max_iter:
        it += 1
        new = np.minimum.accumulate(np.clip((1.0 - omega) * u + omega * op(u), 0.0, 1.0))
        history.append(_update_size(new, u))
        u = new
        converged = history[-1] <= tol

    if not converged:
        raise ConvergenceError(
            f"no convergence after {it} sweeps (last relative update {history[-1]:.3g})", history)

    kind, rate, amp = op.closure(u)
    bound = op.tail_mass * float(hit_prob(law, op.extend(u)[op.J]))
    if bound > TRUNCATION_WARN:
        warnings.warn(f"depth truncation at {op.d_max:g} may contribute up to {bound:.2g}",
                      QuadratureTailWarning, stacklevel=2)
    curve = SurvivalCurve(op.x, u, model, law, regime, kind, rate, amp, op.scale0)
    report = SolverReport(it, newton_its, history[-1], converged, omega, tol, history,
                          bound, op.d_max)
    return curve, report


# -- post-hoc checks ---------------------------------------------------------

def _trapezoid_weights(n, h):
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def _hit_on_grid(curve):
    return hit_prob(curve.law, curve.values)


def _on_unique(fn, z):
    """fn(z) evaluated once per distinct value; grid differences repeat a lot."""
    vals, inv = np.unique(np.round(z, 12), return_inverse=True)
    return np.asarray(fn(vals)).reshape(-1)[inv].reshape(z.shape)


def reconstruct_delta(curve: SurvivalCurve, x=None, method: str = "factorized", density=None):
    """The remainder Delta(x) = u(x) - E[1{L_e < x} G(u(x - L_e))].

    ``method="factorized"`` uses the independence of S_e and S_e - L_e: for
    x >= 0 the remainder equals ``(1 - E[1{L_e < 0} G(u(-L_e))]) exp(-Phi(1) x)``
    exactly.  ``method="quadrature"`` subtracts the convolution with the
    potential density directly (cancellation limits it to moderate x).
    For x < 0 both reduce to ``-E[1{L_e < x} G(u(x - L_e))]``.
    """
    pd = density if density is not None else PotentialDensity(curve.model, 1.0)
    grid, h = curve.grid, curve.h
    x = grid if x is None else np.asarray(x, dtype=float)
    gu = _hit_on_grid(curve)
    tw = _trapezoid_weights(len(grid), h)
    out = np.empty(x.shape)
    neg = x < 0
    if np.any(neg):
        kern = _on_unique(pd, x[neg][:, None] - grid[None, :])
        out[neg] = -(kern * (gu * tw)).sum(axis=1)
    pos = ~neg
    if method == "factorized":
        c = float((pd(-grid) * gu * tw).sum())
        out[pos] = (1.0 - c) * np.exp(-pd.phi * x[pos])
    elif method == "quadrature":
        xp = x[pos]
        kern = _on_unique(pd, xp[:, None] - grid[None, :])
        out[pos] = curve(xp) - (kern * (gu * tw)).sum(axis=1)
    else:
        raise ValueError(f"unknown method {method!r}")
    return out


def delta_constant(curve: SurvivalCurve, density=None) -> float:
    """K with Delta(x) = K exp(-Phi(1) x) on x >= 0."""
    return float(reconstruct_delta(curve, np.array([0.0]), density=density)[0])


def _correlate_on_grid(f, kern):
    """out_i = sum_{j >= 0} f_{i+j} kern_j over the common grid."""
    n = len(f)
    full = fftconvolve(f, kern[::-1])
    return full[len(kern) - 1: len(kern) - 1 + n]


def _loglog_table(fn, lo, hi, n=TABLE_NODES):
    """Interpolant of a positive increasing fn on [lo, hi], linear in log-log.

    The tail kernel needs W at millions of lags; W is smooth there, so a few
    hundred exact values suffice (relative error below 1e-5 on the catalog).
    """
    z = np.geomspace(lo, hi, n)
    logw = np.log(fn(z))
    return lambda t: np.exp(np.interp(np.log(np.maximum(t, lo)), np.log(z), logw))


def critical_renewal_residual(curve: SurvivalCurve, x_range=None, delta=None):
    """Residual of u - Delta = int_0^inf (u - G(u) - Delta)(x + z) W(z) dz.

    Valid for critical laws with psi'(0+) >= 0.  Beyond the grid the curve's
    tail model is integrated on a geometric grid.  Returns a dict with the
    worst absolute residual over ``x_range`` (default [1, x_max / 2]) and the
    largest share of the tail completion in the integral.
    """
    law, model = curve.law, curve.model
    if abs(law.m1 - 1.0) > 1e-12:
        raise ValueError("the critical renewal equation needs a critical law")
    if model.regime() == "drift-down":
        raise ValueError("the critical renewal equation needs psi'(0+) >= 0")
    grid, u, h = curve.grid, curve.values, curve.h
    lo, hi = x_range if x_range is not None else (1.0, 0.5 * curve.x_max)
    K = delta_constant(curve) if delta is None else delta
    src = u - hit_prob(law, u) - K * np.exp(-phi(model, 1.0).phi * grid)
    w0 = curve.w0(grid)
    inner = _correlate_on_grid(src, w0) * h
    inner -= 0.5 * h * (src * w0[0] + src[-1] * w0[::-1])  # trapezoid end corrections

    sel = (grid >= lo) & (grid <= hi)
    xs = grid[sel]
    y = curve.x_max * np.geomspace(1.0, 1e4, 4001)
    ut = curve.tail(y)
    ft = ut - hit_prob(law, ut) - K * np.exp(-phi(model, 1.0).phi * y)
    kern = _loglog_table(curve.w0, max(curve.x_max - hi, h), y[-1])(y[None, :] - xs[:, None])
    tail = trapezoid(ft[None, :] * kern, y, axis=1)
    rhs = inner[sel] + tail
    lhs = u[sel] - K * np.exp(-phi(model, 1.0).phi * xs)
    res = lhs - rhs
    share = np.abs(tail) / np.maximum(np.abs(rhs), 1e-300)
    return {
        "max_residual": float(np.max(np.abs(res))),
        "x": xs,
        "residual": res,
        "tail_share": float(np.max(share)),
        "unreliable": bool(np.max(share) > 0.1),
    }


def _potential_residual(curve, q, source_fn, x_range):
    """Residual of u - Delta = theta^(q) * source over the real line."""
    model = curve.model
    pd = PotentialDensity(model, 1.0)
    grid, h = curve.grid, curve.h
    n = len(grid)
    rate_q = phi(model, q).phi
    k_neg = int(np.ceil(min(curve.x_max, 40.0 / rate_q) / h))
    z = np.arange(-k_neg, n) * h
    z[k_neg] = 0.0
    delta = np.empty(len(z))
    delta[:k_neg] = reconstruct_delta(curve, z[:k_neg], density=pd)
    K = delta_constant(curve, pd)
    delta[k_neg:] = K * np.exp(-pd.phi * grid)
    uz = np.concatenate([np.zeros(k_neg), curve.values])
    src = source_fn(uz, delta)
    # jump of u and Delta at 0: the trapezoid uses the mean of both one-sided values
    left = source_fn(np.zeros(1), np.array([K - 1.0]))[0]
    src[k_neg] = 0.5 * (src[k_neg] + left)
    src = src * _trapezoid_weights(len(z), h)

    lo, hi = x_range if x_range is not None else (1.0, 0.5 * curve.x_max)
    sel = (grid >= lo) & (grid <= hi)
    xs = grid[sel]
    lags = np.arange(-(n - 1), n + k_neg) * h  # x_i - z_k covers this range
    theta = _theta_q(model, q, lags)
    conv = fftconvolve(src, theta)
    # (x_i - z_k) = lags[m] with m = i - k + (n - 1) + ... index bookkeeping:
    # conv[p] = sum_k src[k] theta[p - k], theta index t <-> lag (t - (n - 1)) h
    # want lag = (i + k_neg - k) h  -> t = i + k_neg + n - 1 - k -> p = i + k_neg + n - 1
    idx = np.nonzero(sel)[0] + k_neg + n - 1
    rhs = conv[idx]
    lhs = curve.values[sel] - delta[k_neg:][sel]
    res = lhs - rhs
    return {"max_residual": float(np.max(np.abs(res))), "x": xs, "residual": res}


def _theta_q(model, q, z):
    """theta^(q) on ``z``; q = 0 is allowed when psi'(0+) < 0."""
    ev = ScaleEvaluator(model, q)
    sol = ev.phi_q
    out = np.empty(z.shape)
    up = z >= 0
    out[up] = sol.phi_prime * np.exp(-sol.phi * z[up])
    if np.any(~up):
        out[~up] = ev.w_deficit(-z[~up])
    return out


def subcritical_renewal_residual(curve: SurvivalCurve, x_range=None):
    """Residual of u = theta^(q) * (g + m1 Delta) + Delta, q = 1 - m1, with
    g = R - sigma2 u^2 / 2 = G(u) - m1 u."""
    law = curve.law
    if law.m1 >= 1.0 - 1e-12:
        raise ValueError("the subcritical renewal equation needs m1 < 1")
    m1 = law.m1
    src = lambda u, d: hit_prob(law, u) - m1 * u + m1 * d
    return _potential_residual(curve, 1.0 - m1, src, x_range)


def drift_down_renewal_residual(curve: SurvivalCurve, x_range=None):
    """Critical law with psi'(0+) < 0: u - Delta = theta^(0) * (G(u) - u + Delta)."""
    if abs(curve.law.m1 - 1.0) > 1e-12 or curve.model.regime() != "drift-down":
        raise ValueError("needs a critical law and psi'(0+) < 0")
    law = curve.law
    src = lambda u, d: hit_prob(law, u) - u + d
    return _potential_residual(curve, 0.0, src, x_range)


def perturbed(curve: SurvivalCurve, factor: float) -> SurvivalCurve:
    """Copy of ``curve`` with values (and tail) multiplied by ``factor``."""
    return SurvivalCurve(curve.grid, np.clip(curve.values * factor, 0.0, 1.0), curve.model,
                         curve.law, curve.regime, curve.tail_kind, curve.tail_rate,
                         curve.tail_amplitude * factor, curve._scale0)


def limit_family(alpha, sigma2, c_param, x):
    """f_c(x) = x^alpha / (c + (sigma2 B(alpha, alpha) / 2)^(1/alpha) x)^alpha."""
    x = np.asarray(x, dtype=float)
    k = (0.5 * sigma2 * beta_fn(alpha, alpha)) ** (1.0 / alpha)
    return x**alpha / (c_param + k * x) ** alpha


def limit_family_residual(alpha, sigma2, c_param, x_grid, f=None):
    """Max relative residual of f = (sigma2/2) int_0^inf f(x(1+z))^2 z^(alpha-1)/(1+z)^(2 alpha) dz.

    ``f`` defaults to the closed-form family member f_c; ``f = 0`` gives 0.
    """
    from scipy.integrate import quad

    if f is None:
        f = lambda x: limit_family(alpha, sigma2, c_param, x)
    worst = 0.0
    for x in np.atleast_1d(x_grid):
        lhs = float(f(x))
        kern = lambda z: float(f(x * (1.0 + z))) ** 2 * z ** (alpha - 1) / (1.0 + z) ** (2 * alpha)
        rhs = 0.5 * sigma2 * (quad(kern, 0.0, 1.0, limit=200, epsabs=0, epsrel=1e-12)[0]
                              + quad(kern, 1.0, np.inf, limit=200, epsabs=0, epsrel=1e-12)[0])
        if lhs == 0.0 and rhs == 0.0:
            continue
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), 1e-300))
    return worst


def remainder_on_curve(curve: SurvivalCurve):
    """R(u(x)) on the grid."""
    return remainder_R(curve.law, curve.values)


def positivity_threshold(curve: SurvivalCurve, delta=None):
    """Smallest grid point A beyond which sigma2 u^2 / 2 - R - Delta >= 0."""
    law, u = curve.law, curve.values
    K = delta_constant(curve) if delta is None else delta
    expr = 0.5 * law.sigma2 * u**2 - remainder_R(law, u) - K * np.exp(-phi(curve.model, 1.0).phi * curve.grid)
    bad = np.nonzero(expr < 0)[0]
    if len(bad) == 0:
        return 0.0
    if bad[-1] == len(u) - 1:
        return float("inf")
    return float(curve.grid[bad[-1] + 1])
