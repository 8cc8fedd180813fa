import io
import json
import subprocess
import sys

import pytest

from hyperstokes.cli import ConfigError, DEFAULTS, load_config, parse_config_text, run

SMALL = ["--set", "N_r=48", "--set", "N_th=48", "--set", "R_max=8", "--set", "samples=10"]


def _run(args, monkeypatch=None):
    buf = io.StringIO()
    code = run(args, stdout=buf)
    return code, (json.loads(buf.getvalue()) if buf.getvalue() else None)


def test_parse_config_text():
    cfg = parse_config_text("# comment\n a = 2.0 \n\nn=3  # trailing\n")
    assert cfg == {"a": "2.0", "n": "3"}
    with pytest.raises(ConfigError):
        parse_config_text("just words")


def test_load_config_precedence(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("c = 2.0\nn = 2\n")
    cfg = load_config(p, {"n": "3"}, environ={"HYPERSTOKES_c": "4.0", "HYPERSTOKES_n": "5"})
    assert cfg["c"] == 4.0 and cfg["n"] == 3
    assert load_config(environ={})["N_r"] == DEFAULTS["N_r"]


@pytest.mark.parametrize("bad", [{"bogus": "1"}, {"n": "1.5"}, {"N_r": "x"}, {"c": "0"},
                                 {"a": "-1"}, {"R_max": "3"}, {"samples": "0"},
                                 {"lambda_schedule": "0.5"}, {"schedule": "4,6"}])
def test_invalid_config_rejected(bad):
    with pytest.raises(ValueError):
        load_config(overrides=bad, environ={})


def test_verify_passes(tmp_path):
    code, rep = _run(["verify", *SMALL, "--out", str(tmp_path)])
    assert code == 0 and rep["schema"] == 1
    assert all(c["passed"] for c in rep["checks"].values())
    assert "pairing-identity" in {c["anchor"] for c in rep["checks"].values()}
    assert (tmp_path / "report.json").exists()
    assert any(f.suffix == ".csv" for f in tmp_path.iterdir())


def test_solve_stokes_report():
    code, rep = _run(["solve-stokes", *SMALL, "--reproducible"])
    assert code == 0
    assert rep["scalars"]["pairing"]["value"] < 0


def test_cutoff_support_error_exit_code(capsys):
    code, rep = _run(["solve-stokes", "--set", "R_max=3"])
    assert code == 2 and rep is None
    assert "cutoff-support" in capsys.readouterr().err


def test_smallness_guard_exit_code(capsys):
    code, _ = _run(["solve-ns", *SMALL, "--set", "c=5"])
    assert code == 2
    assert "smallness-condition" in capsys.readouterr().err


def test_solve_ns_small_data():
    code, rep = _run(["solve-ns", *SMALL, "--reproducible"])
    assert code == 0
    assert all(c["passed"] for c in rep["checks"].values())


def test_sweep_grid_order():
    code, rep = _run(["sweep", "--set", "R_max=8", "--parameter", "grid", "--values", "32,64",
                      "--reproducible"])
    assert code == 0 and rep["orders"][0] > 1.8


def test_sweep_needs_values():
    code, _ = _run(["sweep", "--parameter", "grid", "--values", ","])
    assert code == 2


def test_reproducible_reports_are_identical():
    args = ["verify", *SMALL, "--seed", "4", "--reproducible"]
    a, b = io.StringIO(), io.StringIO()
    assert run(args, stdout=a) == run(args, stdout=b)
    assert a.getvalue() == b.getvalue()


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "hyperstokes", "--help"], capture_output=True,
                         text=True)
    assert out.returncode == 0 and "solve-ns" in out.stdout
