import csv
import json
import shutil

import pytest

from hypnorms import cli
from hypnorms.pipeline import ConfigError, RunConfig, WORKERS_ENV


@pytest.fixture
def inputs(tmp_path, data_dir):
    d = tmp_path / "in"
    d.mkdir()
    shutil.copy(data_dir / "m004.tri", d)
    shutil.copy(data_dir / "flat_torus.mesh", d)
    return d


def _summary(out):
    with open(out / "summary.csv", newline="") as fh:
        return list(csv.DictReader(fh))


def test_empty_input_directory(tmp_path, caplog):
    (tmp_path / "empty").mkdir()
    assert cli.main(["--input", str(tmp_path / "empty"), "--out", str(tmp_path / "out")]) == 0
    assert _summary(tmp_path / "out") == []
    assert "no inputs" in caplog.text


def test_reports_and_summary(inputs, tmp_path):
    out = tmp_path / "out"
    assert cli.main(["--input", str(inputs), "--refine", "0", "--out", str(out)]) == 0
    rows = {r["input"]: r for r in _summary(out)}
    assert set(rows) == {"m004.tri", "flat_torus.mesh"}
    assert rows["m004.tri"]["rank"] == "0" and rows["m004.tri"]["status"] == "ok"
    assert rows["flat_torus.mesh"]["all_hold"] == "False"
    m004 = json.loads((out / "m004.report.json").read_text())
    assert m004["D"] == {"error": "no L2 harmonic forms"}
    assert m004["inequalities"] == []
    flat = json.loads((out / "flat_torus.report.json").read_text())
    assert flat["rank"] == 3 and len(flat["classes"]) == 3
    assert all(e["violated"] == ["right"] for e in flat["inequalities"])
    assert (out / "flat_torus.class0.convergence.csv").exists()


def test_same_config_is_byte_identical(inputs, tmp_path):
    out = tmp_path / "out"
    argv = ["--input", str(inputs), "--refine", "0", "--out", str(out)]
    assert cli.main(argv) == 0
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    assert cli.main(argv) == 0
    assert {p.name: p.read_bytes() for p in out.iterdir()} == first


def test_failure_is_isolated(inputs, tmp_path, monkeypatch, caplog):
    (inputs / "bad.tri").write_text("garbage\n")
    monkeypatch.setenv(WORKERS_ENV, "2")
    out = tmp_path / "out"
    assert cli.main(["--input", str(inputs), "--refine", "0", "--out", str(out)]) == 1
    rows = {r["input"]: r for r in _summary(out)}
    assert rows["bad.tri"]["status"] == "failed"
    assert "ParseError" in rows["bad.tri"]["error"]
    assert rows["m004.tri"]["status"] == "ok"
    assert (out / "m004.report.json").exists()


@pytest.mark.parametrize(
    "argv",
    [
        ["--heights", "3,2"],
        ["--refine", "99"],
        ["--input", "/nonexistent/path"],
    ],
)
def test_configuration_errors_exit_2(inputs, tmp_path, argv):
    base = ["--input", str(inputs), "--out", str(tmp_path / "o")]
    assert cli.main(base + argv) == 2


def test_unparsable_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--refine", "x"])
    assert exc.value.code == 2


def test_config_file(inputs, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"refinements": [0], "bogus": 1}))
    assert cli.main(["--input", str(inputs), "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    cfg.write_text(json.dumps({"refinements": [0], "inputs": [str(inputs / "m004.tri")], "out": str(tmp_path / "o")}))
    assert cli.main(["--config", str(cfg)]) == 0
    assert [r["input"] for r in _summary(tmp_path / "o")] == ["m004.tri"]


def test_run_config_validation():
    with pytest.raises(ConfigError):
        RunConfig(inputs=["x"], quadrature_order=7).validate()
    with pytest.raises(ConfigError):
        RunConfig(inputs=["x"], solver_rtol=-1.0).validate()


def test_sweep_tables(tmp_path):
    (tmp_path / "empty").mkdir()
    out = tmp_path / "out"
    assert cli.main(["--sweeps", "--input", str(tmp_path / "empty"), "--out", str(out)]) == 0
    shapes = {
        "v_of_r.csv": (100, ["r", "v", "inv_sqrt_v"]),
        "torus_model.csv": (4, ["c", "norm_sq", "log_ratio", "proportionality"]),
        "retraction_decay.csv": (5, ["i", "cutoff_start", "error", "tail"]),
        "bessel_residuals.csv": (100, ["z", "residual"]),
    }
    for name, (n, header) in shapes.items():
        with open(out / name, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == header and len(rows) - 1 == n, name
    with open(out / "blowup_model.csv", newline="") as fh:
        assert next(csv.reader(fh)) == ["z", "partial_norm_sq", "log_z"]
