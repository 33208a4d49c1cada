import json
import os

import pytest

from zfhgm import cli
from zfhgm import experiments as ex


def test_config_validation(tmp_path):
    with pytest.raises(ValueError):
        ex.ExperimentConfig(engines=[])
    with pytest.raises(ValueError):
        ex.ExperimentConfig(engines=["magic"])
    with pytest.raises(ValueError):
        ex.ExperimentConfig(grid=[3.0, 1.0])
    with pytest.raises(ValueError):
        ex.ExperimentConfig(grid=[])
    with pytest.raises(ValueError):
        ex.ExperimentConfig(axis="snr")
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"scenario": "C2", "grid": [20.0], "engines": ["gamma"]}))
    cfg = ex.ExperimentConfig.from_file(str(path), seed=9)
    assert cfg.scenario == "C2" and cfg.seed == 9
    assert cfg.base_spec().as_deg == pytest.approx(11.0)


def test_spec_at_axes():
    cfg = ex.ExperimentConfig(axis="theta_t", grid=[0.0, 10.0], engines=["gamma"])
    assert cfg.spec_at(10.0).theta_t_deg == 10.0
    cfg = ex.ExperimentConfig(axis="k", grid=[0.0], engines=["gamma"], n_a=2)
    assert cfg.spec_at(0.0).k_db == 0.0 and cfg.spec_at(0.0).n_rx == 12


def test_outage_sweep_is_byte_identical(tmp_path):
    cfg = ex.ExperimentConfig(grid=[12.0, 15.0], engines=["series", "mc", "gamma", "rayleigh"],
                              mc_samples=4000, mc_batch=1000, seed=3)
    outs = []
    for d in ("a", "b"):
        rows, timings = ex.run_outage_sweep(cfg)
        path = ex.write_outputs(str(tmp_path / d), "sweep", rows, cfg.to_json(), timings)
        outs.append(open(path, "rb").read())
    assert outs[0] == outs[1]
    rows = ex.run_outage_sweep(cfg)[0]
    assert [r["engine"] for r in rows[:4]] == ["series", "mc", "gamma", "rayleigh"]
    assert all(r["error"] == "" for r in rows)
    mc = rows[1]
    assert float(mc["ci_lo"]) <= float(mc["value"]) <= float(mc["ci_hi"])
    assert json.loads(open(tmp_path / "a" / "sweep.json").read())["seed"] == 3


def test_errors_are_recorded_in_row(monkeypatch):
    def boom(*a, **k):
        raise ArithmeticError("synthetic")
    monkeypatch.setattr(ex.baselines, "gamma_approx_measures", boom)
    rows, _ = ex.run_outage_sweep(ex.ExperimentConfig(grid=[15.0], engines=["gamma", "series"]))
    assert "synthetic" in rows[0]["error"] and rows[1]["value"]


def test_series_flagged_for_large_arrays():
    cfg = ex.ExperimentConfig(n_a=2, grid=[11.0], engines=["series"])
    rows, _ = ex.run_outage_sweep(cfg)
    assert rows[0]["converged"] == "no"


def test_averaged_with_zero_spread_equals_fixed(tmp_path):
    table = {"A1": dict(k_db_mean=7.0, k_db_std=0.0, as_log10_mean=__import__("math").log10(51.0),
                        as_log10_std=0.0, theta_c_deg=5.0)}
    path = tmp_path / "sc.json"
    path.write_text(json.dumps(table))
    cfg = ex.ExperimentConfig(grid=[15.0], engines=["hgm"], winner_samples=2,
                              scenarios_file=str(path))
    rows, info = ex.run_averaged_outage(cfg)
    fixed = ex.run_outage_sweep(ex.ExperimentConfig(grid=[15.0], engines=["hgm"],
                                                    scenarios_file=str(path)))[0][0]
    assert float(rows[0]["value"]) == pytest.approx(float(fixed["value"]), rel=1e-12)
    assert info["failures"] == 0
    assert float(rows[1]["value"]) < float(rows[0]["value"])


def test_validation_suite_and_mutation():
    good = {c.name: c for c in ex.run_validation_suite(mc_samples=20_000)}
    failing = sorted(n for n, c in good.items() if not c.passed)
    # the AS = 11 degree anchor is a known miss of the PAS calibration
    assert failing in ([], ["correlation_anchors"])
    assert good["z0_mapping"].detail["x2"] == pytest.approx(0.05692, abs=5e-6)
    bad = {c.name: c for c in ex.run_validation_suite(mc_samples=20_000, x1_sign=-1.0)}
    assert not bad["x_proportionality"].passed


def test_cli_sweep_and_guess(tmp_path, capsys):
    out = str(tmp_path)
    assert cli.main(["outage-sweep", "--engines", "gamma,rayleigh", "--grid", "10,20",
                     "--out", out, "--seed", "1"]) == 0
    text = open(os.path.join(out, "outage_sweep.csv")).read().splitlines()
    assert text[0].startswith("x,engine,value") and len(text) == 5
    capsys.readouterr()
    assert cli.main(["guess-ode", "--measure", "mgf", "--precision", "120"]) == 0
    op = json.loads(capsys.readouterr().out)
    assert op["order"] >= 1 and op["provenance"]["measure"] == {"kind": "mgf", "s": -1.0}


def test_cli_table1_single_row(tmp_path):
    assert cli.main(["table1", "--rows", "0", "--out", str(tmp_path)]) == 0
    lines = open(tmp_path / "table1.csv").read().splitlines()
    assert len(lines) == 2 and "A1" in lines[1]
    timings = json.load(open(tmp_path / "table1.timings.json"))
    assert "hgm" in timings[0]["seconds_a"]


def test_cli_validate_exit_code(tmp_path, monkeypatch):
    monkeypatch.setattr(ex, "run_validation_suite",
                        lambda cfg: [ex.Check("x", True, {}), ex.Check("y", False, {})])
    assert cli.main(["validate", "--out", str(tmp_path)]) == 1
    report = json.load(open(tmp_path / "validation.json"))
    assert [r["passed"] for r in report] == [True, False]


def test_cli_rejects_bad_engine():
    with pytest.raises(ValueError):
        cli.main(["outage-sweep", "--engines", "nope"])
