import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from mixtem.cli import main
from mixtem.signal_model import VectorSignal

R = 1 / math.sqrt(2)

SMALL = {
    "omega": math.pi,
    "t0": 0.0,
    "K": 6,
    "J": 2,
    "I": 3,
    "mixing_matrix": [[1, 0], [0, 1], [R, R]],
    "machines": [
        {"target_spikes": 5},
        {"target_spikes": 3},
        {"bias_sweep": {"start": 0.0, "stop": 3.0, "step": 1.5}},
    ],
    "trials": 2,
    "seed": 11,
    "stop": {"max_iterations": 1125899906842624, "schedule": "doubling"},
    "outputs": {"csv": "sweep.csv", "svg": "sweep.svg", "trials_csv": "trials.csv"},
}


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "small.json"
    path.write_text(json.dumps(SMALL))
    return str(path)


def test_check_verb(capsys):
    assert main(["check", "--counts", "12", "8", "13", "-K", "16", "-J", "2"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("reconstructible: sum min(n_i, 16) = 33 > 32")
    assert main(["check", "--counts", "100", "0", "0", "-K", "16", "-J", "2"]) == 0
    assert capsys.readouterr().out.startswith("not reconstructible: sum min(n_i, 16) = 16 <= 32")


def test_generate_encode_decode(tmp_path, config_file):
    out = str(tmp_path / "run")
    assert main(["generate", "--config", config_file, "--out", out, "--trial", "1", "--quiet"]) == 0
    signals = tmp_path / "run" / "signals.json"
    x = VectorSignal.from_json(signals.read_text())
    assert x.matrix.shape == (2, 6)

    assert main(["encode", "--config", config_file, "--out", out, "--signals", str(signals), "--quiet"]) == 0
    with open(tmp_path / "run" / "spikes.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    counts = np.bincount([int(r["channel"]) for r in rows], minlength=3)
    assert counts[0] == 5 and counts[1] == 3 and counts[2] >= 6

    assert main([
        "decode", "--config", config_file, "--out", out, "--quiet",
        "--spikes", str(tmp_path / "run" / "spikes.csv"),
        "--machines", str(tmp_path / "run" / "machines.json"),
    ]) == 0
    x_hat = VectorSignal.from_json((tmp_path / "run" / "x_hat.json").read_text())
    err = np.sum((x_hat.matrix - x.matrix) ** 2) / np.sum(x.matrix**2)
    assert err < 1e-8
    with open(tmp_path / "run" / "diagnostics.csv", newline="") as fh:
        header = next(csv.reader(fh))
    assert header == ["iter", "spike_residual", "range_residual", "step_norm", "truth_distance"]


def test_seed_flag_changes_signals(tmp_path, config_file):
    main(["generate", "--config", config_file, "--out", str(tmp_path / "a"), "--quiet"])
    main(["generate", "--config", config_file, "--out", str(tmp_path / "b"), "--seed", "99", "--quiet"])
    assert (tmp_path / "a" / "signals.json").read_text() != (tmp_path / "b" / "signals.json").read_text()


def test_sweep_is_byte_identical(tmp_path, config_file):
    for name in ("a", "b"):
        assert main(["sweep", "--config", config_file, "--out", str(tmp_path / name), "--quiet"]) == 0
    for fname in ("sweep.csv", "sweep.svg", "trials.csv"):
        assert (tmp_path / "a" / fname).read_bytes() == (tmp_path / "b" / fname).read_bytes()


def test_exit_codes(tmp_path, config_file):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({**SMALL, "extra": 1}))
    assert main(["generate", "--config", str(bad), "--out", str(tmp_path), "--quiet"]) == 1
    degenerate = tmp_path / "deg.json"
    degenerate.write_text(json.dumps({**SMALL, "mixing_matrix": [[1, 0], [0, 1], [1, 0]]}))
    main(["generate", "--config", config_file, "--out", str(tmp_path), "--quiet"])
    signals = tmp_path / "signals.json"
    assert main(["encode", "--config", str(degenerate), "--out", str(tmp_path), "--signals", str(signals), "--quiet"]) == 1
    assert main(["generate", "--config", str(tmp_path / "nope.json"), "--quiet"]) == 2
    assert main(["encode", "--config", config_file, "--signals", str(tmp_path / "nope.json"), "--quiet"]) == 2


def test_numerical_failure_exit_code(monkeypatch, tmp_path, config_file):
    import mixtem.experiment as ex

    def boom(*args, **kwargs):
        raise ArithmeticError("could not calibrate")

    monkeypatch.setattr(ex, "calibrate_bias", boom)
    main(["generate", "--config", config_file, "--out", str(tmp_path), "--quiet"])
    code = main(["encode", "--config", config_file, "--out", str(tmp_path),
                 "--signals", str(tmp_path / "signals.json"), "--quiet"])
    assert code == 3


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "mixtem", "check", "--counts", "17", "-K", "16", "-J", "1"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert proc.stdout.startswith("not reconstructible")
