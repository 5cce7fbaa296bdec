import csv
import io
import json
import math

import pytest

from riccilab import runner
from riccilab.cli import main
from riccilab.config import parse_config

BATCH = """
[[scenario]]
id = "round2"
family = "sphere"
params = { n = 2, r = 1.0 }
N = 128
t_end = 0.1
outputs = { cadence = 0.05 }
checks = [ { name = "scalar_barrier" }, { name = "trace_harnack" } ]

[[scenario]]
id = "pinch"
family = "dumbbell"
N = 64
t_end = 0.2
ceilings = { curvature = 50.0 }
checks = [ { name = "status", status = ["BlownUp"] } ]

[[scenario]]
id = "ode"
family = "curvode"
params = { alpha = [1.0, 2.0, 3.0] }
t_end = 0.05
outputs = { cadence = 0.01 }
checks = [ { name = "invariant_cone" } ]
"""


def _rows(text):
    return list(csv.reader(line for line in io.StringIO(text) if not line.startswith("#")))


@pytest.fixture(scope="module")
def batch_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = out / "batch.toml"
    cfg.write_text(BATCH)
    code = main(["run", str(cfg), "--out", str(out / "a"), "--quiet"])
    return out, code


def test_run_exit_code_and_manifest(batch_out):
    """[TRIVIAL] a passing batch exits 0 and lists every artifact."""
    out, code = batch_out
    assert code == 0
    manifest = json.loads((out / "a" / "manifest.json").read_text())
    assert sorted(manifest) == ["ode", "pinch", "round2"]
    for sid, files in manifest.items():
        for name, digest in files.items():
            assert runner.sha256(out / "a" / name) == digest


def test_blowup_is_isolated(batch_out):
    """[DERIVED] a low ceiling stops one scenario without touching the others."""
    out, _ = batch_out
    rep = json.loads((out / "a" / "pinch.report.json").read_text(), parse_constant=pytest.fail)
    assert rep["status"] == "BlownUp" and rep["severity"] == 0
    assert json.loads((out / "a" / "round2.report.json").read_text())["status"] == "Completed"
    traj = _rows((out / "a" / "round2.trajectory.csv").read_text())
    assert float(traj[-1][0]) == pytest.approx(0.1)


def test_rerun_is_byte_identical(batch_out):
    """[DERIVED] same config, same bytes, serial or parallel."""
    out, _ = batch_out
    assert main(["run", str(out / "batch.toml"), "--out", str(out / "b"), "--jobs", "2", "--quiet"]) == 0
    for f in sorted((out / "a").iterdir()):
        assert f.read_bytes() == (out / "b" / f.name).read_bytes(), f.name


def test_output_dir_from_environment(tmp_path, monkeypatch):
    """[TRIVIAL] RICCILAB_OUT is used when --out is absent."""
    cfg = tmp_path / "one.toml"
    cfg.write_text(BATCH.split("[[scenario]]")[0] + "[[scenario]]" + BATCH.split("[[scenario]]")[3])
    monkeypatch.setenv("RICCILAB_OUT", str(tmp_path / "env"))
    assert main(["run", str(cfg), "--quiet"]) == 0
    assert (tmp_path / "env" / "ode.trajectory.csv").exists()
    assert runner.resolve_out_dir("x").name == "x"


def test_check_failure_exit_two(tmp_path):
    """[TRIVIAL] a violated check maps to exit code 2."""
    cfg = tmp_path / "bad.toml"
    cfg.write_text(BATCH.split("[[scenario]]")[0] + "[[scenario]]" + BATCH.split("[[scenario]]")[1].replace(
        '{ name = "trace_harnack" }', '{ name = "extinction_time", expected = 0.2, tolerance = 1e-3 }'))
    assert main(["run", str(cfg), "--out", str(tmp_path / "o"), "--quiet"]) == 2


def test_config_error_exit_one(tmp_path, capsys):
    """[TRIVIAL] schema errors exit 1 and name the line."""
    cfg = tmp_path / "bad.toml"
    cfg.write_text(BATCH.replace("N = 128", "N = -1"))
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "line" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.toml")]) == 1


def test_usage_error_exit_one():
    """[TRIVIAL]"""
    with pytest.raises(SystemExit) as ei:
        main(["curvature", "--dim", "2"])
    assert ei.value.code == 1


def test_help(capsys):
    """[TRIVIAL]"""
    with pytest.raises(SystemExit) as ei:
        main(["--help"])
    assert ei.value.code == 0
    assert "ode3" in capsys.readouterr().out


def test_curvature_command(capsys):
    """[PAPER] unit S^3 at a chart point: R = 6, alpha = (2, 2, 2)."""
    assert main(["curvature", "--family", "sphere", "--dim", "3", "--point", "1.0,1.2,0.3"]) == 0
    doc = json.loads(capsys.readouterr().out)
    rec = doc[0] if isinstance(doc, list) else doc
    assert rec["scalar"] == pytest.approx(6.0)
    assert rec["alpha"] == pytest.approx([2.0, 2.0, 2.0])


def test_entropy_command(capsys):
    """[PAPER] Gaussian at tau = 1/2 gives F = 2, W = 0."""
    assert main(["entropy", "--family", "gaussian", "--N", "129", "--tau", "0.5", "--potential", "gaussian"]) == 0
    rows = _rows(capsys.readouterr().out)
    head, first = rows[0], rows[1]
    assert float(first[head.index("F")]) == pytest.approx(2.0, abs=2e-3)
    assert float(first[head.index("W")]) == pytest.approx(0.0, abs=1e-3)


def test_verify_and_reduced_commands(batch_out, capsys):
    """[DERIVED] checkers and reduced volume on a saved trajectory."""
    out, _ = batch_out
    states = str(out / "a" / "round2.states.json")
    assert main(["verify", "--states", states, "--checks", "scalar_barrier,trace_harnack"]) == 0
    reps = json.loads(capsys.readouterr().out)
    assert all(r["passed"] for r in reps)
    traj = runner.load_trajectory(states)
    assert traj.times[-1] == pytest.approx(0.1)
    assert main(["reduced", "--states", states, "--tau", "0.02,0.05", "--M", "64"]) == 0
    rows = _rows(capsys.readouterr().out)
    vals = [float(r[rows[0].index("V_tilde")]) for r in rows[1:]]
    assert all(v <= 4 * math.pi * (1 + 1e-3) for v in vals)


def test_ode3_command(capsys):
    """[PAPER] alpha = (1,1,1) gives 1/(1 - 2t)."""
    assert main(["ode3", "--alpha", "1,1,1", "--t-end", "0.1", "--cadence", "0.05"]) == 0
    rows = _rows(capsys.readouterr().out)
    assert float(rows[-1][1]) == pytest.approx(1 / 0.8, rel=1e-9)


def test_parse_config_of_golden():
    """[TRIVIAL] the shipped golden batch is valid."""
    from pathlib import Path
    text = (Path(__file__).resolve().parents[1] / "configs" / "golden.toml").read_text()
    assert [s.id for s in parse_config(text)] == ["sphere3_extinction", "gaussian_entropy", "flat_reduced_volume"]
