"""Monte Carlo estimates of u(x) = P(M >= x) for the branching particle system.

Each particle lives an Exp(1) time, moves like the Levy process meanwhile and
is then replaced by a random number of children at its final position.  All
that matters for {M >= x} is, per particle, the pair (S_e, L_e): the highest
point reached during its life and the point where it died.  Particles are
processed generation by generation, many replicates at once (a block), and a
replicate stops as soon as the top level is reached.

Kill barrier: a particle below ``x - B``, where x is the lowest level its
replicate has not reached yet, is dropped.  By spatial homogeneity it could
have contributed at most u(B).  One run can carry several barriers at once;
every particle then records in a bit mask the barriers it has survived, which
couples the estimates for different B on the same random numbers.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import levy_stable

from .exit_laws import WindowLaw
from .levy import LevyModel, phi
from .offspring import OffspringLaw, classify

BLOCK = 2048  # replicates per random stream; fixed so results do not depend on --threads
MAX_PARTICLES = 10**7
TRUNCATION_ABORT = 0.01
Z95 = 1.96
BACKENDS = ("window_exact", "euler_grid")


def default_barrier(model: LevyModel, law: OffspringLaw) -> float:
    """15 / Phi(1) for subcritical laws, 60 / Phi(1) for critical ones.

    With a critical law u decays polynomially, so the mass lost below a
    barrier at 15 / Phi(1) is visible at n = 1e5; the wider barrier costs
    little because few lines survive that long anyway.
    """
    width = 15.0 if classify(law) == "subcritical" else 60.0
    return width / phi(model, 1.0).phi


@dataclass(frozen=True)
class SimConfig:
    model: LevyModel
    law: OffspringLaw
    levels: tuple
    n_reps: int
    seed: int = 0
    kill_barrier: float = None  # see default_barrier; math.inf disables killing
    max_particles: int = MAX_PARTICLES
    backend: str = "window_exact"
    dt: float = 1e-3

    def __post_init__(self):
        levels = tuple(float(x) for x in np.atleast_1d(self.levels))
        if not levels or any(x < 0 for x in levels):
            raise ValueError("levels must be a non-empty list of numbers >= 0")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError("levels must be strictly ascending")
        object.__setattr__(self, "levels", levels)
        if self.n_reps < 1:
            raise ValueError("n_reps must be >= 1")
        if self.kill_barrier is None:
            object.__setattr__(self, "kill_barrier", default_barrier(self.model, self.law))
        if not self.kill_barrier > 0:
            raise ValueError("kill_barrier must be > 0")
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}")
        if self.backend == "euler_grid" and not self.dt > 0:
            raise ValueError("dt must be > 0")
        if self.max_particles < 1:
            raise ValueError("max_particles must be >= 1")


@dataclass
class TailEstimate:
    """Per-level counts; ``killed`` counts replicates that missed the level
    after losing a particle to the barrier."""

    levels: np.ndarray
    n_reps: int
    hits: np.ndarray
    killed: np.ndarray
    truncated: np.ndarray
    kill_barrier: float
    aborted: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.aborted is None:
            self.aborted = self.truncated_frac > TRUNCATION_ABORT
            # a level above an aborted one is no better informed
            self.aborted = np.maximum.accumulate(self.aborted)

    @property
    def u_hat(self):
        return self.hits / self.n_reps

    @property
    def half_width(self):
        u = self.u_hat
        return Z95 * np.sqrt(u * (1.0 - u) / self.n_reps)

    @property
    def ci_low(self):
        return np.clip(self.u_hat - self.half_width, 0.0, 1.0)

    @property
    def ci_high(self):
        return np.clip(self.u_hat + self.half_width, 0.0, 1.0)

    @property
    def killed_frac(self):
        return self.killed / self.n_reps

    @property
    def truncated_frac(self):
        return self.truncated / self.n_reps

    def rows(self):
        """CSV rows ``x,u_hat,ci_low,ci_high,n_reps,killed_frac,truncated_frac``."""
        return [
            (float(x), float(u), float(lo), float(hi), self.n_reps, float(k), float(t))
            for x, u, lo, hi, k, t in zip(self.levels, self.u_hat, self.ci_low, self.ci_high,
                                          self.killed_frac, self.truncated_frac)
        ]

    def to_dict(self) -> dict:
        return {
            "levels": [float(x) for x in self.levels],
            "n_reps": int(self.n_reps),
            "hits": [int(v) for v in self.hits],
            "killed": [int(v) for v in self.killed],
            "truncated": [int(v) for v in self.truncated],
            "aborted": [bool(v) for v in self.aborted],
            "kill_barrier": float(self.kill_barrier),
        }


CSV_HEADER = ("x", "u_hat", "ci_low", "ci_high", "n_reps", "killed_frac", "truncated_frac")


# -- window samplers ---------------------------------------------------------

class EulerWindow:
    """(S_e, L_e) from a discretized path: exact increments on a grid of step
    ``dt``, supremum taken over grid points only, so S_e is biased low."""

    def __init__(self, model: LevyModel, dt: float):
        self.model, self.dt = model, float(dt)
        m = model
        self.drift = 0.0 if m.variant == "SNStable" else m.a
        self.eta = m.eta if m.variant in ("BrownianDrift", "BrownianExpJumps") else 0.0
        self.alpha = m.alpha if m.has_stable_part else None
        if self.alpha is not None:
            # S1 parametrization, beta = -1: E exp(l X) = exp(scale^alpha l^alpha / |cos(pi alpha/2)|)
            self.stable_scale = (m.c * abs(math.cos(math.pi * self.alpha / 2))) ** (1 / self.alpha)
        self.rho = m.rho if m.variant == "BrownianExpJumps" else 0.0
        self.mu = m.mu if m.variant == "BrownianExpJumps" else None

    def _increments(self, rng, h):
        out = self.drift * h
        if self.eta:
            out = out + self.eta * np.sqrt(h) * rng.standard_normal(h.shape)
        if self.alpha is not None:
            x = levy_stable.rvs(self.alpha, -1.0, scale=self.stable_scale, size=h.shape,
                                random_state=rng)
            out = out + h ** (1.0 / self.alpha) * x
        if self.rho:
            n = rng.poisson(self.rho * h)
            jumps = np.zeros(h.shape)
            some = n > 0
            jumps[some] = rng.gamma(n[some], 1.0 / self.mu)
            out = out - jumps
        return out

    def sample_window(self, rng, size=None):
        n = 1 if size is None else int(size)
        life = rng.exponential(1.0, n)
        steps = np.ceil(life / self.dt).astype(np.int64)
        order = np.argsort(-steps, kind="stable")
        steps_sorted = steps[order]
        pos = np.zeros(n)
        top = np.zeros(n)
        # particles sorted by step count, so the live ones always form a prefix
        for k in range(int(steps_sorted[0]) if n else 0):
            live = int(np.searchsorted(-steps_sorted, -k, side="left"))
            idx = order[:live]
            h = np.minimum(self.dt, life[idx] - k * self.dt)
            pos[idx] += self._increments(rng, h)
            top[idx] = np.maximum(top[idx], pos[idx])
        if size is None:
            return top[0], pos[0]
        return top, pos


def make_sampler(cfg: SimConfig, window: WindowLaw = None):
    if cfg.backend == "euler_grid":
        return EulerWindow(cfg.model, cfg.dt)
    return window if window is not None else WindowLaw(cfg.model)


# -- block engine ------------------------------------------------------------

def _simulate_block(levels, law, barriers, max_particles, sampler, rng, n):
    """Simulate ``n`` replicates against every barrier in ``barriers``.

    Returns per barrier: levels reached (count), first-kill level index
    (``len(levels)`` if never), truncation level index (same convention).
    """
    levels = np.asarray(levels, dtype=float)
    nlev, nb = len(levels), len(barriers)
    barriers = np.asarray(barriers, dtype=float)
    probs = np.asarray(law.probs)
    reached = np.zeros((nb, n), dtype=np.int64)
    kill_from = np.full((nb, n), nlev, dtype=np.int64)
    trunc_at = np.full((nb, n), nlev, dtype=np.int64)
    used = np.zeros(n, dtype=np.int64)

    pos = np.zeros(n)
    rep = np.arange(n)
    bits = np.full(n, (1 << nb) - 1, dtype=np.int64)
    while len(pos):
        s, l = sampler.sample_window(rng, len(pos))
        top = pos + s
        for r in range(nb):
            mine = (bits >> r) & 1 == 1
            best = np.full(n, -np.inf)
            np.maximum.at(best, rep[mine], top[mine])
            reached[r] = np.maximum(reached[r], np.searchsorted(levels, best, side="right"))

        kids = rng.choice(len(probs), size=len(pos), p=probs)
        pos = np.repeat(pos + l, kids)
        rep = np.repeat(rep, kids)
        bits = np.repeat(bits, kids)

        for r in range(nb):
            idx = reached[r][rep]
            live = idx < nlev
            floor = np.where(live, levels[np.minimum(idx, nlev - 1)] - barriers[r], np.inf)
            mine = (bits >> r) & 1 == 1
            killed = mine & live & (pos < floor)
            np.minimum.at(kill_from[r], rep[killed], idx[killed])
            bits = np.where(mine & (~live | killed), bits & ~(1 << r), bits)

        keep = bits != 0
        pos, rep, bits = pos[keep], rep[keep], bits[keep]

        used += np.bincount(rep, minlength=n)
        over = used > max_particles
        if np.any(over):
            for r in range(nb):
                trunc_at[r] = np.where(over & (trunc_at[r] == nlev), reached[r], trunc_at[r])
            drop = over[rep]
            pos, rep, bits = pos[~drop], rep[~drop], bits[~drop]
            used[over] = -(1 << 62)  # never flagged again
    return reached, kill_from, trunc_at


def _tally(levels, reached, kill_from, trunc_at):
    j = np.arange(len(levels))[:, None]
    hit = reached[None, :] > j
    hits = hit.sum(axis=1)
    killed = (~hit & (kill_from[None, :] <= j)).sum(axis=1)
    truncated = (~hit & (trunc_at[None, :] <= j)).sum(axis=1)
    return hits, killed, truncated


def _run(cfg: SimConfig, barriers, threads=1, window=None):
    sampler = make_sampler(cfg, window)
    n_blocks = -(-cfg.n_reps // BLOCK)
    streams = np.random.SeedSequence(cfg.seed).spawn(n_blocks)
    sizes = [min(BLOCK, cfg.n_reps - b * BLOCK) for b in range(n_blocks)]

    def work(b):
        rng = np.random.default_rng(streams[b])
        return _simulate_block(cfg.levels, cfg.law, barriers, cfg.max_particles, sampler,
                               rng, sizes[b])

    if threads > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, range(n_blocks)))
    else:
        parts = [work(b) for b in range(n_blocks)]
    out = []
    for r, barrier in enumerate(barriers):
        reached = np.concatenate([p[0][r] for p in parts])
        kill_from = np.concatenate([p[1][r] for p in parts])
        trunc_at = np.concatenate([p[2][r] for p in parts])
        hits, killed, truncated = _tally(cfg.levels, reached, kill_from, trunc_at)
        out.append(TailEstimate(np.asarray(cfg.levels), cfg.n_reps, hits, killed, truncated,
                                float(barrier)))
    return out


def estimate_survival(cfg: SimConfig, threads: int = 1, window: WindowLaw = None) -> TailEstimate:
    """u_hat at every level from ``cfg.n_reps`` shared replicates.

    Every level uses the same replicates, so u_hat is nonincreasing in x.
    Results are identical for any ``threads``.
    """
    return _run(cfg, (cfg.kill_barrier,), threads, window)[0]


def barrier_sensitivity(cfg: SimConfig, factor: float = 2.0, threads: int = 1,
                        window: WindowLaw = None):
    """Estimates at B and ``factor * B`` from one coupled run."""
    if not factor > 1:
        raise ValueError("factor must be > 1")
    return tuple(_run(cfg, (cfg.kill_barrier, factor * cfg.kill_barrier), threads, window))


def run_replicate(cfg: SimConfig, x: float, rng, window=None) -> dict:
    """One replicate against the single level ``x``: ``{hit, died, truncated}``."""
    sampler = make_sampler(cfg, window)
    reached, _, trunc_at = _simulate_block([x], cfg.law, (cfg.kill_barrier,), cfg.max_particles,
                                           sampler, rng, 1)
    hit = bool(reached[0, 0] >= 1)
    truncated = bool(trunc_at[0, 0] == 0 and not hit)
    return {"hit": hit, "died": not hit and not truncated, "truncated": truncated}


def euler_replicate(cfg: SimConfig, x: float, rng) -> dict:
    """:func:`run_replicate` with the discretized-path sampler."""
    return run_replicate(cfg, x, rng, window=EulerWindow(cfg.model, cfg.dt))


def spitzer_fraction(model: LevyModel, t: float = 50.0, n_paths: int = 100_000,
                     dt: float = 0.5, seed: int = 0, chunk: int = 20_000) -> float:
    """Monte Carlo value of (1/t) int_0^t P(L_s >= 0) ds from grid paths.

    A time average over the grid points ``dt, 2 dt, ..., t`` of the fraction
    of paths at or above 0.  For a strictly stable process P(L_s >= 0) does
    not depend on s, so a coarse grid costs nothing in accuracy.
    """
    sampler = EulerWindow(model, dt)
    steps = int(round(t / dt))
    rng = np.random.default_rng(seed)
    above = 0
    for start in range(0, n_paths, chunk):
        n = min(chunk, n_paths - start)
        pos = np.zeros(n)
        h = np.full(n, dt)
        for _ in range(steps):
            pos += sampler._increments(rng, h)
            above += int(np.count_nonzero(pos >= 0))
    return above / (n_paths * steps)
