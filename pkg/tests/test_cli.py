"""Command-line front end.

Claims:
    - degree prints the closed-form value
    - global-solve emits the scalar summary to stated accuracy
    - identical configs and seeds give byte-identical CSV artifacts
    - every artifact in a manifest hash-validates
    - exit-code contract: 0 ok, 64 usage, 65 module error
    - matrix/gamma/qpoint/locations commands round-trip through JSON
"""

import hashlib
import json

import numpy as np
import pytest

from liouville_toolkit import cli


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr().out
    return code, out


def test_degree_command(capsys):
    code, out = run_cli(capsys, "degree", "--N", "0", "--chi", "2")
    assert code == 0
    assert out.strip() == "1"
    code, out = run_cli(capsys, "degree", "--N", "1", "--chi", "2")
    assert out.strip() == "-1"


def test_unknown_command_usage_error(capsys):
    code, _ = run_cli(capsys, "no-such-command")
    assert code == 64


def test_missing_command_usage_error(capsys):
    code, _ = run_cli(capsys)
    assert code == 64


def test_module_error_exit(tmp_path, capsys):
    code, out = run_cli(capsys, "check-matrix", "--matrix",
                        str(tmp_path / "missing.json"))
    assert code == 65
    assert "error" in json.loads(out.splitlines()[-1])


def test_check_matrix(tmp_path, capsys):
    mat = tmp_path / "a.json"
    mat.write_text(json.dumps({"n": 2, "a": [[1.0, 2.0], [2.0, 1.0]]}))
    code, out = run_cli(capsys, "check-matrix", "--matrix", str(mat))
    assert code == 0
    d = json.loads(out)
    assert d["h1"] and d["h2"]
    assert np.allclose(d["a_inv"], [[-1 / 3, 2 / 3], [2 / 3, -1 / 3]])


def test_qpoint(tmp_path, capsys):
    mat = tmp_path / "a.json"
    mat.write_text(json.dumps({"n": 1, "a": [[1.0]]}))
    code, out = run_cli(capsys, "qpoint", "--matrix", str(mat), "--N", "1")
    d = json.loads(out)
    assert code == 0
    assert d["q"][0] == pytest.approx(8 * np.pi, rel=1e-12)
    assert abs(d["lambda_I"]) < 1e-10


def test_gamma(capsys):
    code, out = run_cli(capsys, "gamma", "--x", "0.5", "0.5", "--y", "0", "0")
    d = json.loads(out)
    assert code == 0
    assert d["green"] == pytest.approx(-0.05515890003816289, abs=1e-10)


def test_global_solve_scalar(tmp_path, capsys):
    mat = tmp_path / "a.json"
    mat.write_text(json.dumps({"n": 1, "a": [[1.0]]}))
    code, out = run_cli(capsys, "global-solve", "--matrix", str(mat),
                        "--alpha", "0", "--out", str(tmp_path / "run"))
    d = json.loads(out)
    assert code == 0
    assert d["sigma"][0] == pytest.approx(4.0, abs=1e-8)
    assert d["m"][0] == pytest.approx(4.0, abs=1e-8)
    assert d["D"][0] == pytest.approx(np.log(64.0), abs=1e-8)
    assert (tmp_path / "run" / "profile.csv").exists()
    manifest = json.loads((tmp_path / "run" / "manifest.json").read_text())
    assert manifest["status"] == "ok"
    for art in manifest["artifacts"]:
        h = hashlib.sha256((tmp_path / "run" / art["path"]).read_bytes()
                           if not art["path"].startswith("/")
                           else open(art["path"], "rb").read()).hexdigest()
        assert h == art["sha256"]


def test_green_probe_deterministic(tmp_path, capsys):
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    for out in (out1, out2):
        code, _ = run_cli(capsys, "green-probe", "--count", "12", "--seed",
                          "7", "--out", str(out))
        assert code == 0
    b1 = (out1 / "green-probe.csv").read_bytes()
    b2 = (out2 / "green-probe.csv").read_bytes()
    assert b1 == b2


def test_locations_command(tmp_path, capsys):
    cfg = {"matrix": {"n": 1, "a": [[1.0]]}, "masses": [4.0], "points": 2,
           "init": [[0.27, 0.22], [0.74, 0.77]]}
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    code, out = run_cli(capsys, "locations", "--config", str(p))
    d = json.loads(out)
    assert code == 0
    assert max(abs(r) for row in d["report"]["residuals"] for r in row) < 1e-9


def test_b_coeff_command(tmp_path, capsys):
    cfg = {"matrix": {"n": 1, "a": [[1.0]]}, "masses": [4.0],
           "points": [[0.5, 0.5]], "alpha": [0.0]}
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    code, out = run_cli(capsys, "b-coeff", "--config", str(p))
    d = json.loads(out)
    assert code == 0
    assert d["b"][0][0] == pytest.approx(256 * np.pi, rel=1e-6)


def test_experiment_config_roundtrip(tmp_path):
    data = {"matrix": {"n": 1, "a": [[1.0]]}, "seed": 3,
            "rho_start": [4.0], "direction": [1.0]}
    p = tmp_path / "exp.json"
    p.write_text(json.dumps(data))
    cfg = cli.ExperimentConfig.load(p)
    assert cfg.roundtrip_ok()
    assert cfg.seed == 3
