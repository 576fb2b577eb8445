import json

import pytest

from ringcap import cli


def run(tmp_path, *argv, name="out"):
    out = tmp_path / name
    code = cli.main([*argv, "--out", str(out)])
    return code, out


def test_cap_annulus(tmp_path, capsys):
    code, out = run(tmp_path, "cap", "--shape", "annulus:0.5,1", "--p", "2", "--res", "256")
    assert code == 0
    doc = json.loads((out / "cap.json").read_text())
    assert doc["seed"] == 0 and doc["passed"] is True
    assert abs(doc["rel_error"]) < 0.02
    assert doc["checks"]["bound_bracket"] is True
    assert json.loads(capsys.readouterr().out) == doc


def test_bad_exponent_exits_2(tmp_path, capsys):
    code, _ = run(tmp_path, "cap", "--shape", "annulus:0.5,1", "--p", "0.5")
    assert code == 2
    assert "error: p must exceed 1" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["distort", "--map", "swirl:2"],
    ["cap", "--shape", "torus:1,2"],
    ["suite", "--only", "no_such_criterion"],
])
def test_configuration_errors_exit_2(tmp_path, capsys, argv):
    code, _ = run(tmp_path, *argv)
    assert code == 2
    assert capsys.readouterr().err.startswith("error:")


def test_verify_ring_writes_ledger_and_figure(tmp_path):
    code, out = run(tmp_path, "verify-ring", "--map", "radial:4", "--rings", "origin-centered:3",
                    "--method", "auto")
    assert code == 0
    doc = json.loads((out / "verify-ring.json").read_text())
    assert doc["sup_ratio"] == pytest.approx(2.0, rel=1e-9)
    rows = (out / "verify-ring.csv").read_text().splitlines()
    assert len(rows) == 4
    svg = (out / "verify-ring.svg").read_text()
    assert svg.lstrip().startswith("<?xml") and "<svg" in svg


def test_violation_exits_1(tmp_path):
    # a negative tolerance pulls the limit below the identity's total
    code, out = run(tmp_path, "setfunc", "--p", "3", "--q", "2", "--domain", "square",
                    "--partition", "1", "--res", "24", "--tolerance", "-0.9")
    assert code == 1
    assert json.loads((out / "setfunc.json").read_text())["passed"] is False


def test_outputs_are_byte_identical_across_runs(tmp_path):
    argv = ["verify-ring", "--map", "linear:2,0,0,1", "--rings", "offcenter:3", "--res", "48",
            "--seed", "7"]
    _, a = run(tmp_path, *argv, name="a")
    _, b = run(tmp_path, *argv, name="b")
    for f in ("verify-ring.json", "verify-ring.csv", "verify-ring.svg"):
        assert (a / f).read_bytes() == (b / f).read_bytes()
    assert json.loads((a / "verify-ring.json").read_text())["seed"] == 7


def test_thread_count_does_not_change_results(tmp_path, monkeypatch):
    argv = ["verify-ring", "--map", "linear:2,0,0,1", "--rings", "offcenter:4", "--res", "48"]
    monkeypatch.setenv("RINGCAP_THREADS", "1")
    _, a = run(tmp_path, *argv, name="a")
    monkeypatch.setenv("RINGCAP_THREADS", "2")
    _, b = run(tmp_path, *argv, name="b")
    assert (a / "verify-ring.json").read_bytes() == (b / "verify-ring.json").read_bytes()


def test_toml_config_and_flag_override(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text('seed = 11\n[run]\ncommand = "distort"\nmapping = "radial:4"\np = 2.0\n'
                   'res = 32\n')
    code, out = run(tmp_path, "distort", "--config", str(cfg), "--res", "48")
    assert code == 0
    doc = json.loads((out / "distort.json").read_text())
    assert doc["seed"] == 11 and doc["config"]["res"] == 48
    assert doc["report"]["K_pq"] == pytest.approx(2.0, abs=1e-6)


def test_unknown_config_key_rejected(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("colour = 'blue'\n")
    code, _ = run(tmp_path, "cap", "--config", str(cfg))
    assert code == 2
    assert "unknown config keys" in capsys.readouterr().err


def test_metric_two_points(tmp_path):
    code, out = run(tmp_path, "metric", "--points=-0.3,0;0.3,0", "--res", "48")
    assert code == 0
    doc = json.loads((out / "metric.json").read_text())
    assert doc["pairs"][0]["d"] > 0 and doc["axioms"] is None
    assert (out / "metric.svg").exists() and (out / "metric.csv").exists()


def test_suite_at_low_resolution_reports_it(tmp_path, capsys):
    code, out = run(tmp_path, "suite", "--only", "radial_oracle", "--res", "32")
    assert code == 0
    err = capsys.readouterr().err
    assert "insufficient resolution" in err
    assert json.loads((out / "timing.json").read_text())["total_s"] >= 0
    doc = json.loads((out / "suite-summary.json").read_text())
    assert list(doc["criteria"]) == ["radial_oracle"]


def test_parsers():
    assert len(cli.parse_points("-0.4,0;0.4,0;0,0.4")) == 3
    R = cli.parse_shape("ball-ring:0.1,0,0.2,0.5")
    assert R.is_concentric_balls()
    with pytest.raises(ValueError):
        cli.parse_rings("spiral:3", None, 0)
