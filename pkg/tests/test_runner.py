from __future__ import annotations

import json
import math
import subprocess
import sys

import numpy as np
import pytest

from hilferctl import cli
from hilferctl.errors import ConfigError
from hilferctl.psicalc import GATE_MESSAGE
from hilferctl.report import ConvergenceReport, fmt, parse
from hilferctl.runner import ExperimentConfig, config_from_dict, load_config, run_experiment

SMALL = {"n_modes": 6, "grid_nodes": 41, "eps_list": [1.0, 0.1, 0.01], "lambda_list": [1.0, 0.01], "n_candidates": 3}


def test_report_csv_round_trip():
    rep = ConvergenceReport(["eps", "miss", "ok", "name"])
    rep.add(eps=0.1, miss=1 / 3, ok=True, name="mid")
    rep.add(eps=np.float64(1e-3), miss=math.inf, ok=False, name="x")
    back = ConvergenceReport.from_csv(rep.to_csv())
    assert back.columns == rep.columns
    assert back.column("miss")[0] == 1 / 3 and back.column("miss")[1] == math.inf
    assert back.column("eps") == [0.1, 1e-3]
    assert back.column("ok") == [1, 0]
    assert back.to_csv() == rep.to_csv()
    assert fmt(np.float64(0.25)) == "0.25" and parse("7") == 7
    with pytest.raises(KeyError):
        rep.add(eps=1.0)


def test_report_logs_and_sorting():
    rep = ConvergenceReport(["eps", "endpoint_miss"])
    for e in (0.01, 1.0, 0.1):
        rep.add(eps=e, endpoint_miss=e / 2)
    out = rep.sorted_by("eps").with_logs()
    assert out.column("eps") == [1.0, 0.1, 0.01]
    np.testing.assert_allclose(out.column("log10_eps"), [0, -1, -2])


def test_defaults_and_digest():
    a, b = ExperimentConfig(), ExperimentConfig(out="elsewhere")
    assert a.digest() == b.digest()
    assert a.digest() != ExperimentConfig(alpha=0.8).digest()
    assert a.lambda_list[0] / a.lambda_list[-1] == pytest.approx(1e6)


def test_config_rejections_name_field_and_line(tmp_path):
    cases = [
        ('{"alpha": 0.4}', "alpha", 1),
        ('{\n  "psi": "logarithmic",\n  "a": 0.0\n}', "a", 3),
        ('{\n  "alpha": 0.7,\n  "speed": 3\n}', "speed", 3),
        ('{"eps_list": [0.1, 1.0]}', "eps_list", 1),
        ('{"strategy": "greedy"}', "strategy", 1),
        ('{"n_modes": 2.5}', "n_modes", 1),
    ]
    for text, field, line in cases:
        p = tmp_path / "c.json"
        p.write_text(text)
        with pytest.raises(ConfigError) as info:
            load_config(p)
        assert info.value.field == field and info.value.line == line, text
    p.write_text('{"alpha": 0.7,,}')
    with pytest.raises(ConfigError) as info:
        load_config(p)
    assert info.value.line == 1


def test_gate_message_in_diagnostic():
    with pytest.raises(ConfigError) as info:
        config_from_dict({"alpha": 0.5})
    assert GATE_MESSAGE in str(info.value)


def test_logarithmic_clock_with_shift_accepted():
    cfg = config_from_dict({"psi": "logarithmic", "psi_params": [1.0]})
    assert cfg.build_psi().params == (1.0,)


@pytest.mark.parametrize("run", ["sweep", "optimal", "inclusion", "problem1"])
def test_runs_are_byte_reproducible(run, tmp_path):
    cfg = dict(SMALL, run=run)
    statuses = [run_experiment(config_from_dict(dict(cfg, out=str(tmp_path / k)))) for k in ("a", "b")]
    assert statuses == [0, 0]
    first, second = (tmp_path / "a"), (tmp_path / "b")
    assert (first / "report.csv").read_bytes() == (second / "report.csv").read_bytes()
    doc = json.loads((first / "report.json").read_text())
    assert doc["meta"]["run"] == run and doc["config"]["n_modes"] == 6
    rep = ConvergenceReport.from_csv((first / "report.csv").read_text())
    assert rep.to_csv() == (first / "report.csv").read_text()
    assert list(first.glob("series_*.csv"))


def test_sweep_report_contents(tmp_path):
    assert run_experiment(config_from_dict(dict(SMALL, run="sweep", out=str(tmp_path)))) == 0
    rep = ConvergenceReport.from_csv((tmp_path / "report.csv").read_text())
    np.testing.assert_allclose(rep.column("endpoint_miss"), rep.column("closed_form_miss"), rtol=1e-9)
    assert rep.column("eps") == [1.0, 0.1, 0.01]


def test_cli_precedence_and_errors(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(dict(SMALL, alpha=0.4, out=str(tmp_path / "file"))))
    # the flag overrides the bad file value
    assert cli.main(["sweep", "--config", str(cfg), "--alpha", "0.8", "--out", str(tmp_path / "flag")]) == 0
    doc = json.loads((tmp_path / "flag" / "report.json").read_text())
    assert doc["config"]["alpha"] == 0.8
    # without the flag the file value is rejected with exit status 2
    assert cli.main(["sweep", "--config", str(cfg)]) == 2
    err = json.loads((tmp_path / "file" / "error.json").read_text())
    assert err["field"] == "alpha" and err["error"] == "ConfigError"
    assert "alpha" in capsys.readouterr().err


def test_verify_run_records_convention(tmp_path):
    out = tmp_path / "v"
    status = run_experiment(config_from_dict({"run": "verify", "n_modes": 8, "out": str(out)}))
    doc = json.loads((out / "report.json").read_text())
    assert status == 0 and doc["meta"]["first_failure"] is None
    assert doc["meta"]["sign_convention"] == "argument"
    assert all(r["passed"] for r in doc["rows"])


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "hilferctl", "sweep", "--alpha", "0.3", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    assert json.loads(proc.stderr.strip().splitlines()[-1])["field"] == "alpha"
