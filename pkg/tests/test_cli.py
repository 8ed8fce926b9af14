import csv
import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from branchmax.cli import PRESETS, config_hash, main, run

SRC = Path(__file__).resolve().parents[1] / "src"


def write_toml(path, text):
    path.write_text(text)
    return path


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


SIMULATE = """
pipeline = "simulate"
seed = 5
offspring = [0.75, 0.0, 0.25]

[model]
variant = "BrownianDrift"
a = 0.0
eta = 1.0

[simulate]
levels = [0.5, 1.0, 2.0]
n_reps = 3000
"""


def test_phi_pipeline(tmp_path):
    assert main(["--preset", "roots-bm", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "phi.csv")
    assert rows[0] == ["q", "phi", "phi_prime", "psi_prime_at_phi"]
    table = {float(r[0]): float(r[1]) for r in rows[1:]}
    assert table[1.0] == pytest.approx(np.sqrt(2), abs=1e-12)
    assert table[0.5] == pytest.approx(1.0, abs=1e-12)
    m = manifest(tmp_path)
    assert m["exit_code"] == 0 and m["pipeline"] == "phi"
    assert {"config", "config_hash", "seed", "version", "wall_time_s"} <= set(m)
    assert m["config_hash"] == config_hash(m["config"])


def test_scale_pipeline(tmp_path):
    assert main(["--preset", "scale-dump-bm", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "scale.csv")
    assert rows[0] == ["x", "W_q", "W_q_prime", "theta_q"]
    for x, w, _, th in rows[1:]:
        x = float(x)
        assert float(th) == pytest.approx(np.exp(-np.sqrt(2) * abs(x)) / np.sqrt(2), abs=1e-9)
        if x < 0:
            assert float(w) == 0.0


def test_simulate_schema_and_determinism(tmp_path):
    cfg = write_toml(tmp_path / "sim.toml", SIMULATE)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["--config", str(cfg), "--out", str(a)]) == 0
    assert main(["--config", str(cfg), "--out", str(b), "--threads", "3"]) == 0
    assert (a / "simulate.csv").read_bytes() == (b / "simulate.csv").read_bytes()
    assert (a / "simulate.json").read_bytes() == (b / "simulate.json").read_bytes()
    rows = read_csv(a / "simulate.csv")
    assert rows[0] == ["x", "u_hat", "ci_low", "ci_high", "n_reps", "killed_frac", "truncated_frac"]
    assert len(rows) == 4 and rows[1][4] == "3000"
    side = json.loads((a / "simulate.json").read_text())
    assert side["seed"] == 5 and "version" in side


def test_seed_flag_overrides_config(tmp_path):
    cfg = write_toml(tmp_path / "sim.toml", SIMULATE)
    a, b = tmp_path / "a", tmp_path / "b"
    main(["--config", str(cfg), "--out", str(a)])
    main(["--config", str(cfg), "--out", str(b), "--seed", "6"])
    assert manifest(b)["seed"] == 6
    assert (a / "simulate.csv").read_bytes() != (b / "simulate.csv").read_bytes()


def test_outputs_reproduce_from_manifest(tmp_path):
    cfg = write_toml(tmp_path / "sim.toml", SIMULATE)
    a, b = tmp_path / "a", tmp_path / "b"
    main(["--config", str(cfg), "--out", str(a), "--seed", "9"])
    assert run(manifest(a)["config"], b) == 0
    assert (a / "simulate.csv").read_bytes() == (b / "simulate.csv").read_bytes()


def test_compare_no_branching_oracle(tmp_path):
    assert main(["--preset", "no-branching-bm", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "compare.json").read_text())
    assert rep["pass"]
    assert rep["oracle"]["max_half_widths"] <= 3.0
    rows = read_csv(tmp_path / "compare.csv")
    assert rows[0] == ["x", "u_solver", "u_hat", "ci_low", "ci_high", "half_widths"]


def test_solve_pipeline(tmp_path):
    cfg = PRESETS["thm1-bm-subcritical"] | {"pipeline": "solve"}
    cfg = {k: v for k, v in cfg.items() if k != "asymptotics"}
    cfg["solve"] = {"stride": 50}
    assert run(cfg, tmp_path) == 0
    rows = read_csv(tmp_path / "solve.csv")
    assert rows[0] == ["x", "u", "delta", "gamma"]
    rep = json.loads((tmp_path / "solve.json").read_text())
    assert rep["solver"]["converged"]
    assert rep["checks"]["renewal_residual"] <= 1e-3
    assert rep["checks"]["remainder_bounds_hold"]


def test_asymptotics_pipeline(tmp_path):
    assert main(["--preset", "thm1-bm-subcritical", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "asymptotics.json").read_text())
    assert rep["pass"] and rep["checks"][0]["name"] == "exponential_rate"
    assert manifest(tmp_path)["pass"] is True


def test_limit_family_preset(tmp_path):
    assert main(["--preset", "limit-family", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "asymptotics.json").read_text())
    assert len(rep["checks"]) == 4 and rep["pass"]


BAD_CONFIGS = {
    "offspring_sum": ('pipeline = "phi"\noffspring = [0.5, 0.4]\n'
                      '[model]\nvariant = "BrownianDrift"\na = 0.0\neta = 1.0\n', "sum to 1"),
    "unknown_key": ('pipeline = "phi"\ncolour = 3\noffspring = [1.0]\n'
                    '[model]\nvariant = "BrownianDrift"\n', "unknown"),
    "unknown_param": ('pipeline = "phi"\noffspring = [1.0]\n[model]\nvariant = "BrownianDrift"\n'
                      '[phi]\nqq = [1.0]\n', "unknown keys"),
    "wrong_block": ('pipeline = "phi"\noffspring = [1.0]\n[model]\nvariant = "BrownianDrift"\n'
                    '[solve]\nh = 0.05\n', "does not belong"),
    "bad_model": ('pipeline = "phi"\noffspring = [1.0]\n[model]\nvariant = "SNStable"\nalpha = 2.5\n',
                  "alpha"),
    "no_pipeline": ('offspring = [1.0]\n[model]\nvariant = "BrownianDrift"\n', "pipeline"),
    "bad_seed": ('pipeline = "phi"\nseed = -1\noffspring = [1.0]\n[model]\nvariant = "BrownianDrift"\n',
                 "seed"),
    "supercritical": ('pipeline = "phi"\noffspring = [0.1, 0.1, 0.8]\n'
                      '[model]\nvariant = "BrownianDrift"\neta = 1.0\n', "supercritical"),
    "not_toml": ("pipeline = = 3\n", "TOML"),
    "missing_levels": ('pipeline = "simulate"\noffspring = [1.0]\n[model]\nvariant = "BrownianDrift"\n'
                       'eta = 1.0\n[simulate]\nn_reps = 10\n', "levels"),
    "descending_levels": ('pipeline = "simulate"\noffspring = [1.0]\n[model]\n'
                          'variant = "BrownianDrift"\neta = 1.0\n[simulate]\nlevels = [2.0, 1.0]\nn_reps = 10\n',
                          "ascending"),
}


@pytest.mark.parametrize("name", sorted(BAD_CONFIGS))
def test_invalid_configs_exit_2(tmp_path, capsys, name):
    text, needle = BAD_CONFIGS[name]
    cfg = write_toml(tmp_path / "bad.toml", text)
    assert main(["--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert needle in capsys.readouterr().err


def test_offspring_message_names_the_invariant(tmp_path, capsys):
    cfg = write_toml(tmp_path / "bad.toml", BAD_CONFIGS["offspring_sum"][0])
    main(["--config", str(cfg), "--out", str(tmp_path / "o")])
    assert "offspring probabilities must sum to 1 (got 0.9)" in capsys.readouterr().err


def test_flag_errors_exit_2(tmp_path, capsys):
    assert main(["--out", str(tmp_path)]) == 2
    assert main(["--preset", "roots-bm", "--config", "x.toml", "--out", str(tmp_path)]) == 2
    assert main(["--preset", "roots-bm", "--threads", "0", "--out", str(tmp_path)]) == 2
    assert main(["--config", str(tmp_path / "missing.toml"), "--out", str(tmp_path)]) == 2


def test_numerical_failure_exits_3(tmp_path):
    # the fit window lies beyond the solved grid, so no rate can be fitted
    cfg = {"pipeline": "asymptotics", "seed": 0, "offspring": [0.75, 0.0, 0.25],
           "model": {"variant": "BrownianDrift", "a": 0.0, "eta": 1.0},
           "asymptotics": {"x_max": 20.0, "window": [100.0, 200.0]}}
    assert run(cfg, tmp_path) == 3
    m = manifest(tmp_path)
    assert m["exit_code"] == 3 and "InsufficientData" in m["error"]


def test_truncation_exits_3_with_partial_data(tmp_path):
    cfg = {"pipeline": "simulate", "seed": 0, "offspring": [0.5, 0.0, 0.5],
           "model": {"variant": "BrownianDrift", "a": 0.0, "eta": 1.0},
           "simulate": {"levels": [8.0], "n_reps": 500, "max_particles": 2}}
    assert run(cfg, tmp_path) == 3
    assert (tmp_path / "simulate.csv").exists()


def test_list_presets(capsys):
    assert main(["--list-presets"]) == 0
    names = capsys.readouterr().out.split()
    assert names == sorted(PRESETS)
    assert "thm1-bm-subcritical" in names


def test_module_entry_point(tmp_path):
    env = dict(os.environ, PYTHONPATH=str(SRC) + os.pathsep + os.environ.get("PYTHONPATH", ""))
    proc = subprocess.run([sys.executable, "-m", "branchmax", "--preset", "roots-stable",
                           "--out", str(tmp_path)], env=env, capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "phi.csv").exists() and (tmp_path / "manifest.json").exists()
