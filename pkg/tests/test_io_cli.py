import json

import numpy as np
import pytest

from conesaddle import cli, io
from conesaddle.errors import ConvergenceError
from conesaddle.model import GridSpec3, ScalarField


def test_field_roundtrip(tmp_path):
    g = GridSpec3.cube(2, 2.0, 1.0, 0.5)
    v = ScalarField(g, np.random.default_rng(0).normal(size=g.size))
    p = io.write_field(tmp_path / "f.csv", v, {"note": "x"})
    back = io.read_field(p)
    assert back.grid == g
    np.testing.assert_allclose(back.values, v.values, rtol=1e-11)
    text = p.read_text().splitlines()
    assert text[0] == "# kind=field" and "s,t,lambda,value" in text


def test_outputs_are_byte_identical(tmp_path):
    g = GridSpec3.cube(1, 2.0, 1.0, 0.5)
    v = ScalarField(g, np.linspace(0, 1, g.size))
    a = io.write_field(tmp_path / "a.csv", v).read_bytes()
    b = io.write_field(tmp_path / "b.csv", v).read_bytes()
    assert a == b


def write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_hardy_subcommand(tmp_path):
    cfg = write(tmp_path, "[hardy]\nn = 8\nnodes = 2000\n")
    assert cli.main(["hardy", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    summary = json.loads((tmp_path / "o" / "summary_hardy.json").read_text())
    assert summary["verdicts"]["hardy"]["n=8"] == "hardy_nonnegative"
    assert summary["config"]["hardy"]["nodes"] == 2000
    assert "numpy" in summary["versions"]


def test_layer_subcommand(tmp_path):
    cfg = write(tmp_path, "[layer]\nkind = peierls_nabarro\nh = 0.1\n")
    assert cli.main(["layer", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    res = json.loads((tmp_path / "summary_layer.json").read_text())["results"]["layer"]
    assert res["sup_closed_form_error"] < 5e-3
    assert res["verdicts"]["closed_form"] == "pass"
    meta, x, u = io.read_layer(tmp_path / "layer.csv")
    assert meta["nonlinearity"] == "peierls_nabarro" and u[x.size // 2] == 0


@pytest.mark.parametrize("text, needle", [
    ("foo = 1\n", ":1:"),
    ("[layer]\nh = abc\n", ":2:"),
    ("[layer]\n\nhx = 1\n", ":3:"),
    ("[nope]\n", ":1:"),
])
def test_malformed_config_exit_2(tmp_path, caplog, text, needle):
    cfg = write(tmp_path, text)
    assert cli.main(["layer", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert needle in caplog.text


def test_missing_config_exit_2(tmp_path):
    assert cli.main(["hardy", "--config", str(tmp_path / "none.ini")]) == 2


def test_invalid_input_exit_2(tmp_path):
    cfg = write(tmp_path, "[layer]\nx_max = 20.03\nh = 0.1\n")
    assert cli.main(["layer", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_convergence_failure_exit_3(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise ConvergenceError("stalled", [1.0])
    monkeypatch.setattr(cli, "solve_layer", boom)
    cfg = write(tmp_path, "[layer]\nh = 0.1\n")
    assert cli.main(["layer", "--config", str(cfg), "--out", str(tmp_path)]) == 3
    summary = json.loads((tmp_path / "summary_layer.json").read_text())
    assert summary["status"] == 3


def test_all_runs_configured_sections(tmp_path):
    cfg = write(tmp_path, "[hardy]\nn = 4, 6\nnodes = 500\n[saddle]\nR = 10\nh = 0.5\nenergy_radii = 5\n")
    assert cli.main(["all", "--config", str(cfg), "--out", str(tmp_path), "--threads", "2"]) == 0
    summary = json.loads((tmp_path / "summary_all.json").read_text())
    assert set(summary["results"]) == {"hardy", "saddle"}
    assert summary["verdicts"]["saddle"]["below_zero_field"] == "pass"
