import csv
import hashlib
import json
import subprocess
import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from nodal_nehari.cli import main
from nodal_nehari.config import parse_config
from nodal_nehari.errors import InvalidConfigError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def toml(preset="iii", lam=None, q=4.0, amplitude=1.0, resolution=150, R=8.0, extra=""):
    head = f'preset = "{preset}"\n' if preset else ""
    lam_line = f"lambda = {lam}\n" if lam is not None else ""
    return (f"{head}seed = 0\n{extra}\n[problem]\np = 2.0\nN = 3\nq = {q}\n{lam_line}"
            f'[problem.A]\nprofile = "gaussian"\namplitude = {amplitude}\nwidth = 1.0\n'
            f'[problem.B]\nprofile = "gaussian"\nwidth = 1.0\n'
            f'[domain]\ngeometry = "radial"\nR_trunc = {R}\nresolution = {resolution}\n')


def write(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_preset_iii_verify(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["verify", "--config", write(tmp_path, toml()), "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["exit_code"] == 0 and manifest["seed"] == 0
    for name, digest in manifest["files"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    for name in ("eigen.json", "solutions.csv", "checks.json", "plot_profiles.csv",
                 "plot_axes.json", "solve_report.json"):
        assert name in manifest["files"]
    assert json.loads((out / "checks.json").read_text())["passed"]
    assert "verify: ok" in capsys.readouterr().out


def test_runs_are_byte_identical(tmp_path):
    cfg = write(tmp_path, toml())
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert main(["solve", "--config", cfg, "--out", str(out)]) == 0
    for f in sorted(p.name for p in outs[0].iterdir()):
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes(), f


def test_seed_override_is_recorded(tmp_path):
    out = tmp_path / "out"
    assert main(["eigen", "--config", write(tmp_path, toml()), "--out", str(out),
                 "--seed", "7"]) == 0
    assert json.loads((out / "manifest.json").read_text())["seed"] == 7


def test_lambda_above_eigenvalue_exits_2(tmp_path, capsys):
    # amplitude 2 puts lambda_A near 0.8, below the preset lambda = 1
    cfg = write(tmp_path, toml(preset="i", amplitude=2.0))
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "out")]) == 2
    assert "(A,lambda)" in capsys.readouterr().err


def test_preset_i_passes_when_gap_is_open(tmp_path):
    cfg = write(tmp_path, toml(preset="i", resolution=200, R=10.0))
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "out")]) == 0


def test_supercritical_exponent_exits_1(tmp_path, capsys):
    assert main(["solve", "--config", write(tmp_path, toml(q=6.0)),
                 "--out", str(tmp_path / "out")]) == 1
    assert "p*" in capsys.readouterr().err


@pytest.mark.parametrize("text", [
    toml(preset="ii", lam=1.0),
    toml(extra="colour = 1"),
    toml(resolution=1),
    toml(preset="iv"),
    "this is not toml [",
])
def test_config_errors_exit_1(tmp_path, text):
    assert main(["solve", "--config", write(tmp_path, text), "--out", str(tmp_path / "o")]) == 1


def test_missing_config_exits_1(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "nope.toml")]) == 1


def test_empty_sweep_exits_1(tmp_path):
    cfg = write(tmp_path, toml())
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "s"),
                 "--parameter", "R_trunc", "--values"]) == 1


def test_lambda_sweep_with_preset_exits_1(tmp_path):
    cfg = write(tmp_path, toml())
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "s"),
                 "--parameter", "lambda", "--values", "0.1"]) == 1


def read_sweep(out):
    with open(out / "sweep.csv") as fh:
        return list(csv.DictReader(fh))


def test_truncation_sweep(tmp_path):
    text = toml(preset=None, lam=-1.0).replace('profile = "gaussian"\namplitude',
                                               'profile = "constant"\namplitude', 1)
    cfg = write(tmp_path, text)
    serial, parallel = tmp_path / "s1", tmp_path / "s2"
    args = ["sweep", "--config", cfg, "--parameter", "R_trunc", "--values", "4", "6", "8"]
    assert main(args + ["--out", str(serial)]) == 0
    assert main(args + ["--out", str(parallel), "--workers", "2"]) == 0
    rows = read_sweep(serial)
    lam = [float(r["lambda_A"]) for r in rows]
    assert lam[0] > lam[1] > lam[2]
    assert (serial / "sweep.csv").read_bytes() == (parallel / "sweep.csv").read_bytes()


def test_sweep_records_hypothesis_failures(tmp_path):
    cfg = write(tmp_path, toml(preset=None, lam=0.0))
    out = tmp_path / "s"
    assert main(["sweep", "--config", cfg, "--out", str(out), "--parameter", "lambda",
                 "--values", "-1", "50"]) == 2
    rows = read_sweep(out)
    assert rows[0]["status"] == "ok" and rows[1]["status"] == "hypothesis (A,lambda)"


def test_shipped_configs_parse():
    from nodal_nehari.config import load_config
    for path in CONFIGS.glob("*.toml"):
        load_config(path)


def test_entry_point_help():
    res = subprocess.run([sys.executable, "-m", "nodal_nehari.cli", "--help"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "sweep" in res.stdout


@settings(suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(p=st.floats(1.2, 2.9), frac=st.floats(0.05, 0.95), seed=st.integers(0, 2 ** 31))
def test_parse_config_accepts_the_exponent_window(p, frac, seed):
    q = p + frac * (3 * p / (3 - p) - p)
    raw = {"seed": seed, "problem": {"p": p, "N": 3, "q": q}, "domain": {"resolution": 20}}
    cfg = parse_config(raw)
    assert cfg.problem.p == p and cfg.solver.seed == seed


@given(q=st.floats(0.5, 10.0))
def test_parse_config_rejects_outside_window(q):
    raw = {"problem": {"p": 2.0, "N": 3, "q": q}}
    if 2.0 < q < 6.0:
        assert parse_config(raw).problem.q == q
    else:
        with pytest.raises(InvalidConfigError):
            parse_config(raw)
