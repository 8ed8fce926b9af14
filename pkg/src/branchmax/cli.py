"""Command-line experiment runner.

    python -m branchmax --config run.toml --out results/
    python -m branchmax --preset thm1-bm-subcritical --out results/

A config is a TOML file with a ``pipeline`` key, a ``[model]`` block, the
offspring law (``offspring = [p0, p1, ...]``, or an ``[offspring]`` table
with ``probs``) and an optional block named after the pipeline with its
parameters.  Every run writes its artifacts plus ``manifest.json``.

Exit codes: 0 success, 2 invalid config, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import InsufficientData, fit_exp_rate, fit_power_product, predict
from .laplace import InversionError
from .levy import LevyModel, ModelError, phi
from .offspring import OffspringError, OffspringLaw
from .scale import PotentialDensity, ScaleEvaluator
from .simulator import CSV_HEADER, SimConfig, barrier_sensitivity, estimate_survival
from .solver import (ConvergenceError, critical_renewal_residual, drift_down_renewal_residual,
                     limit_family_residual, positivity_threshold, reconstruct_delta,
                     remainder_on_curve, solve_u, subcritical_renewal_residual)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
PIPELINES = ("phi", "scale", "simulate", "solve", "asymptotics", "compare")

_SOLVE_KEYS = {"x_max", "h", "tol", "omega", "max_iter"}
_SIM_KEYS = {"levels", "n_reps", "kill_barrier", "max_particles", "backend", "dt",
             "barrier_check"}
PARAMS = {
    "phi": {"q"},
    "scale": {"q", "x"},
    "simulate": _SIM_KEYS,
    "solve": _SOLVE_KEYS | {"stride"},
    "asymptotics": _SOLVE_KEYS | {"window", "solve", "tolerance", "limit_family_alpha",
                                  "limit_family_c"},
    "compare": _SOLVE_KEYS | _SIM_KEYS | {"sim_seed_offset"},
}
TOP_KEYS = {"pipeline", "seed", "model", "offspring"} | set(PIPELINES)


class ConfigError(ValueError):
    pass


class NumericalFailure(ArithmeticError):
    pass


# -- presets -----------------------------------------------------------------

def _preset(pipeline, model, probs, seed=0, **params):
    return {"pipeline": pipeline, "seed": seed, "model": model,
            "offspring": list(probs), pipeline: params}


_BM = {"variant": "BrownianDrift", "a": 0.0, "eta": 1.0}
_BM_UP = {"variant": "BrownianDrift", "a": 0.2, "eta": 1.0}
_BM_DOWN = {"variant": "BrownianDrift", "a": -0.5, "eta": 1.0}
_STABLE = {"variant": "SNStable", "alpha": 1.5, "c": 1.0}
_SUB = [0.75, 0.0, 0.25]
_CRIT = [0.5, 0.0, 0.5]

PRESETS = {
    "roots-bm": _preset("phi", _BM, [1.0], q=[0.0, 0.5, 1.0, 2.0, 5.0]),
    "roots-stable": _preset("phi", _STABLE, [1.0], q=[0.0, 0.5, 1.0, 2.0, 5.0]),
    "scale-dump-bm": _preset("scale", _BM, [1.0], q=1.0,
                             x=[-10.0, -5.0, -1.0, -0.5, 0.5, 1.0, 5.0, 10.0]),
    "no-branching-bm": _preset("compare", _BM, [1.0], seed=1, levels=[0.5, 1.0, 2.0, 3.0],
                               n_reps=100_000),
    "thm1-bm-subcritical": _preset("asymptotics", _BM, _SUB, tolerance=0.02),
    "thm1-stable-subcritical": _preset("asymptotics", _STABLE, _SUB, tolerance=0.02),
    "thm2-drift-up": _preset("asymptotics", _BM_UP, _CRIT, window=[200.0, 200.0],
                             tolerance=0.10),
    "thm2-bm-oscillating": _preset("asymptotics", _BM, _CRIT, window=[20.0, 200.0],
                                   tolerance=0.15),
    "thm2-stable-oscillating": _preset("asymptotics", _STABLE, _CRIT, window=[20.0, 200.0],
                                       tolerance=0.15),
    "thm2-drift-down": _preset("asymptotics", _BM_DOWN, _CRIT, tolerance=0.02),
    "limit-family": _preset("asymptotics", _STABLE, _CRIT, solve=False,
                            limit_family_alpha=[1.5, 2.0], limit_family_c=[0.0, 1.0]),
    "renewal-bm-critical": _preset("solve", _BM, _CRIT, stride=20),
    "crossval-bm-critical": _preset("compare", _BM, _CRIT, seed=7, levels=[1.0, 2.0, 3.0, 5.0],
                                    n_reps=100_000, barrier_check=True),
    "crossval-stable-critical": _preset("compare", _STABLE, _CRIT, seed=8,
                                        levels=[1.0, 2.0, 3.0, 5.0], n_reps=100_000,
                                        barrier_check=True),
}


# -- config ------------------------------------------------------------------

def load_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config {path} is not valid TOML: {exc}") from None


def validate(cfg: dict):
    """Check the schema; returns ``(model, law)``.  Raises ConfigError."""
    unknown = set(cfg) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    pipeline = cfg.get("pipeline")
    if pipeline not in PIPELINES:
        raise ConfigError(f"pipeline must be one of {PIPELINES}, got {pipeline!r}")
    for name in PIPELINES:
        if name in cfg and name != pipeline:
            raise ConfigError(f"block [{name}] does not belong to pipeline {pipeline!r}")
    params = cfg.get(pipeline, {})
    if not isinstance(params, dict):
        raise ConfigError(f"[{pipeline}] must be a table")
    bad = set(params) - PARAMS[pipeline]
    if bad:
        raise ConfigError(f"unknown keys in [{pipeline}]: {sorted(bad)}")
    seed = cfg.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        raise ConfigError(f"seed must be an integer in [0, 2^64), got {seed!r}")
    if "model" not in cfg or not isinstance(cfg["model"], dict):
        raise ConfigError("missing [model] block")
    off = cfg.get("offspring")
    if isinstance(off, dict):
        if set(off) != {"probs"}:
            raise ConfigError("[offspring] takes exactly one key, probs")
        off = off["probs"]
    if not isinstance(off, list):
        raise ConfigError("offspring must be a list [p0, p1, ...] or a table with 'probs'")
    try:
        model = LevyModel.from_dict(cfg["model"])
        law = OffspringLaw.from_list(off)
    except (ModelError, OffspringError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    return model, law


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


# -- output helpers ------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if np.isfinite(f) else str(f)
    return obj


def write_json(path: Path, obj):
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- pipelines -----------------------------------------------------------------

def _solve_kwargs(params):
    return {k: params[k] for k in _SOLVE_KEYS if k in params}


def _sim_config(model, law, params, seed):
    if "levels" not in params or "n_reps" not in params:
        raise ConfigError("simulation needs 'levels' and 'n_reps'")
    kw = {k: params[k] for k in ("kill_barrier", "max_particles", "backend", "dt") if k in params}
    try:
        return SimConfig(model, law, tuple(params["levels"]), int(params["n_reps"]), seed, **kw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def run_phi(model, law, params, seed, out, threads):
    qs = params.get("q", [0.0, 0.5, 1.0])
    rows = []
    for q in qs:
        if q < 0:
            raise ConfigError("q must be >= 0")
        sol = phi(model, float(q))
        pp = sol.phi_prime if sol.psi_prime_at_phi > 0 else float("inf")
        rows.append((float(q), sol.phi, pp, sol.psi_prime_at_phi))
    write_csv(out / "phi.csv", ("q", "phi", "phi_prime", "psi_prime_at_phi"), rows)
    return {"files": ["phi.csv"]}


def run_scale(model, law, params, seed, out, threads):
    q = float(params.get("q", 1.0))
    if q <= 0:
        raise ConfigError("the scale dump needs q > 0 (theta_q is a q-potential density)")
    x = np.asarray(params.get("x", list(np.linspace(-5.0, 5.0, 21))), dtype=float)
    ev = ScaleEvaluator(model, q)
    pd = PotentialDensity(model, q)
    w = ev.w(x)
    wp = np.zeros_like(x)
    pos = x > 0
    if np.any(pos):
        wp[pos] = ev.w_prime(x[pos])
    wp[x == 0] = np.nan
    rows = zip(x, w, wp, pd(x))
    write_csv(out / "scale.csv", ("x", "W_q", "W_q_prime", "theta_q"), rows)
    return {"files": ["scale.csv"], "backend": ev.backend}


def run_simulate(model, law, params, seed, out, threads):
    cfg = _sim_config(model, law, params, seed)
    if params.get("barrier_check", False):
        est, wide = barrier_sensitivity(cfg, threads=threads)
    else:
        est, wide = estimate_survival(cfg, threads=threads), None
    write_csv(out / "simulate.csv", CSV_HEADER, est.rows())
    side = {"config": {"model": model.to_dict(), "offspring": list(law.probs), **params},
            "seed": seed, "version": __version__, "estimate": est.to_dict()}
    if wide is not None:
        shift = np.abs(wide.u_hat - est.u_hat) / np.maximum(est.half_width, 1e-300)
        side["barrier_doubling"] = {"estimate": wide.to_dict(),
                                    "shift_in_half_widths": shift,
                                    "pass": bool(np.all(shift < 1.0))}
    write_json(out / "simulate.json", side)
    if np.any(est.aborted):
        raise NumericalFailure(
            f"truncation above 1% at levels {list(est.levels[est.aborted])}; partial data written")
    return {"files": ["simulate.csv", "simulate.json"]}


def _residual_checks(curve):
    law, model = curve.law, curve.model
    regime = curve.regime
    if regime == "subcritical":
        res = subcritical_renewal_residual(curve)
    elif regime == "crit_drift_down":
        res = drift_down_renewal_residual(curve)
    else:
        res = critical_renewal_residual(curve)
    delta = reconstruct_delta(curve)
    u = curve.values
    R = remainder_on_curve(curve)
    report = {
        "renewal_residual": res["max_residual"],
        "renewal_tail_share": res.get("tail_share"),
        "delta_constant": float(delta[0]),
        "remainder_bounds_hold": bool(np.all(R >= 0) and np.all(R <= law.m3 * u**3 * (1 + 1e-12))),
    }
    if regime in ("crit_drift_up", "crit_oscillating"):
        report["positivity_threshold"] = positivity_threshold(curve, delta[0])
    return report


def run_solve(model, law, params, seed, out, threads):
    curve, rep = solve_u(model, law, **_solve_kwargs(params))
    stride = int(params.get("stride", 1))
    idx = np.arange(0, len(curve.grid), max(stride, 1))
    x = curve.grid[idx]
    delta = reconstruct_delta(curve, x)
    gamma = curve.gamma(x)
    write_csv(out / "solve.csv", ("x", "u", "delta", "gamma"),
              zip(x, curve.values[idx], delta, gamma))
    report = {"solver": rep.to_dict(), "regime": curve.regime,
              "tail": {"kind": curve.tail_kind, "rate": curve.tail_rate,
                       "amplitude": curve.tail_amplitude},
              "checks": _residual_checks(curve)}
    write_json(out / "solve.json", report)
    return {"files": ["solve.csv", "solve.json"]}


def run_asymptotics(model, law, params, seed, out, threads):
    pred = predict(model, law)
    report = {"prediction": pred.to_dict(), "checks": []}
    tol = float(params.get("tolerance", 0.05))
    if params.get("solve", True):
        curve, rep = solve_u(model, law, **_solve_kwargs(params))
        pts = curve.points()
        report["solver"] = {"iterations": rep.iterations, "newton": rep.newton_iterations,
                            "final_update": rep.final_update}
        if pred.kind == "exponential":
            window = params.get("window", [0.1 * curve.x_max, curve.x_max])
            rate, err = fit_exp_rate(pts, window)
            rel = abs(rate - pred.rate) / pred.rate
            report["checks"].append({"name": "exponential_rate", "window": window,
                                     "predicted": pred.rate, "fitted": rate, "stderr": err,
                                     "relative_error": rel, "tolerance": tol,
                                     "pass": rel <= tol})
        elif pred.kind == "inverse_linear":
            window = params.get("window", [200.0, 200.0])
            xs = np.asarray(window, dtype=float)
            xu = xs * curve(xs)
            rel = np.abs(xu - pred.x_u_limit) / pred.x_u_limit
            report["checks"].append({"name": "x_u_limit", "x": xs, "x_u": xu,
                                     "predicted": pred.x_u_limit, "relative_error": rel,
                                     "tolerance": tol, "pass": bool(np.all(rel <= tol))})
        else:
            window = params.get("window", [20.0, 200.0])
            fit = fit_power_product(pts, curve.w0, window, pred.gamma_limit)
            report["checks"].append({"name": "gamma_band", "window": window,
                                     "plateau": fit.plateau, "ratio": fit.ratio,
                                     "low": fit.low, "high": fit.high, "max_ratio": 3.0,
                                     "pass": fit.ratio <= 3.0})
            report["checks"].append({"name": "gamma_closest_approach",
                                     "predicted": pred.gamma_limit, "closest": fit.closest,
                                     "tolerance": tol, "pass": fit.within(pred.gamma_limit, tol)})
    if "limit_family_alpha" in params:
        xg = np.geomspace(0.1, 100.0, 13)
        for a in params["limit_family_alpha"]:
            for c in params.get("limit_family_c", [0.0, 1.0]):
                r = limit_family_residual(float(a), law.sigma2 or 1.0, float(c), xg)
                report["checks"].append({"name": "limit_family", "alpha": a, "c": c,
                                         "residual": r, "tolerance": 1e-3, "pass": r <= 1e-3})
    report["pass"] = all(ch["pass"] for ch in report["checks"])
    write_json(out / "asymptotics.json", report)
    return {"files": ["asymptotics.json"], "pass": report["pass"]}


def run_compare(model, law, params, seed, out, threads):
    offset = int(params.get("sim_seed_offset", 1))
    cfg = _sim_config(model, law, params, (seed + offset) % 2**64)
    if params.get("barrier_check", False):
        est, wide = barrier_sensitivity(cfg, threads=threads)
    else:
        est, wide = estimate_survival(cfg, threads=threads), None
    curve, rep = solve_u(model, law, **_solve_kwargs(params))
    levels = np.asarray(cfg.levels)
    u_sol = curve(levels)
    hw = np.maximum(est.half_width, 1e-300)
    z = np.abs(u_sol - est.u_hat) / hw
    rows = zip(levels, u_sol, est.u_hat, est.ci_low, est.ci_high, z)
    write_csv(out / "compare.csv", ("x", "u_solver", "u_hat", "ci_low", "ci_high", "half_widths"),
              rows)
    report = {"solver": rep.to_dict(), "simulation": est.to_dict(),
              "max_half_widths": float(z.max()), "pass": bool(z.max() <= 3.0)}
    if law.is_degenerate:
        exact = np.exp(-phi(model, 1.0).phi * levels)
        report["oracle"] = {"u_exact": exact,
                            "max_abs_mc_error": float(np.max(np.abs(est.u_hat - exact))),
                            "max_half_widths": float(np.max(np.abs(est.u_hat - exact) / hw))}
    if wide is not None:
        shift = np.abs(wide.u_hat - est.u_hat) / hw
        report["barrier_doubling"] = {"shift_in_half_widths": shift,
                                      "pass": bool(np.all(shift < 1.0))}
        report["pass"] = report["pass"] and report["barrier_doubling"]["pass"]
    write_json(out / "compare.json", report)
    if np.any(est.aborted):
        raise NumericalFailure("simulation truncation above 1%; partial data written")
    return {"files": ["compare.csv", "compare.json"], "pass": report["pass"]}


RUNNERS = {"phi": run_phi, "scale": run_scale, "simulate": run_simulate, "solve": run_solve,
           "asymptotics": run_asymptotics, "compare": run_compare}


def run(cfg: dict, out, threads: int = 1) -> int:
    """Validate and execute ``cfg``; writes artifacts and the manifest into ``out``."""
    start = time.perf_counter()
    try:
        model, law = validate(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    pipeline = cfg["pipeline"]
    seed = int(cfg.get("seed", 0))
    params = cfg.get(pipeline, {})
    code, info, error = EXIT_OK, {}, None
    try:
        info = RUNNERS[pipeline](model, law, params, seed, out, threads)
    except (NumericalFailure, ConvergenceError, InversionError, InsufficientData,
            ArithmeticError) as exc:
        code, error = EXIT_NUMERIC, f"{type(exc).__name__}: {exc}"
        print(f"numerical failure: {error}", file=sys.stderr)
    except (ConfigError, ValueError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    manifest = {"config": cfg, "config_hash": config_hash(cfg), "seed": seed,
                "version": __version__, "pipeline": pipeline, "exit_code": code,
                "wall_time_s": round(time.perf_counter() - start, 3), **info}
    if error:
        manifest["error"] = error
    write_json(out / "manifest.json", manifest)
    return code


def build_parser():
    p = argparse.ArgumentParser(prog="branchmax", description=__doc__.split("\n\n")[0])
    p.add_argument("--config", type=Path, help="TOML experiment config")
    p.add_argument("--preset", choices=sorted(PRESETS), help="built-in experiment")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--threads", type=int, default=1, help="worker threads (speed only)")
    p.add_argument("--list-presets", action="store_true", help="print preset names and exit")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.list_presets:
        for name in sorted(PRESETS):
            print(name)
        return EXIT_OK
    if (args.config is None) == (args.preset is None):
        print("config error: give exactly one of --config and --preset", file=sys.stderr)
        return EXIT_CONFIG
    if args.preset:
        cfg = copy.deepcopy(PRESETS[args.preset])
    else:
        try:
            cfg = load_config(args.config)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.threads < 1:
        print("config error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg, args.out, args.threads)


if __name__ == "__main__":
    sys.exit(main())
