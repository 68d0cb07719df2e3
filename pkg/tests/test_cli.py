from __future__ import annotations

import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest
import yaml

from buq.cli import EXIT_CONFIG, EXIT_DATA, EXIT_IO, EXIT_OK, EXIT_SOLVER, main, parse_duration
from buq.errors import ConfigError
from buq.synth import SynthConfig, synth_generate
from buq.timeseries import TimeSeriesTable, write_csv

from conftest import make_table


@pytest.fixture(scope="module")
def data_csv(tmp_path_factory):
    p = tmp_path_factory.mktemp("data") / "synth.csv"
    write_csv(synth_generate(SynthConfig(years=2, seed=3)), p)
    return p


def _config(tmp_path, **kw):
    d = {"seed": 5, "output_dir": str(tmp_path / "out"), "model": {"variant": "demand_mean"},
         "scheme": {"n_s": "4w", "K": 20}}
    d.update(kw)
    p = tmp_path / "run.yaml"
    p.write_text(yaml.safe_dump(d), encoding="utf-8")
    return p


def _err(capsys) -> dict:
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_parse_duration():
    assert parse_duration(5) == 5
    assert parse_duration("12w") == 12 * 168
    assert parse_duration("1y") == 8760
    assert parse_duration("720h") == 720
    for bad in ("abc", "1.5h", "-3w", "0", "3 fortnights"):
        with pytest.raises(ConfigError):
            parse_duration(bad)


def test_plan_length_worked_example(capsys):
    assert main(["plan-length", "--sigma-s", "11", "--n-s", "1y", "--target", "5", "--json"]) == EXIT_OK
    rows = json.loads(capsys.readouterr().out)
    assert rows[0]["years"] == 4.84 and rows[0]["years_ceiling"] == 5
    assert main(["plan-length", "--sigma-s", "11", "--n-s", "1y", "--target", "5"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "4.84" in out.splitlines()[1]


def test_plan_length_from_report(tmp_path, data_csv, capsys):
    cfg = _config(tmp_path, data=str(data_csv))
    assert main(["bootstrap", "--config", str(cfg)]) == EXIT_OK
    report = tmp_path / "out" / "report.json"
    assert main(["plan-length", "--report", str(report), "--output", "demand_mean", "--target", "100",
                 "--json"]) == EXIT_OK
    rows = json.loads(capsys.readouterr().out)
    rep = json.loads(report.read_text())
    var_s = next(o["var_s"] for o in rep["outputs"] if o["name"] == "demand_mean")
    assert rows[0]["hours"] == pytest.approx(rep["n_s_hours"] * var_s / 100 ** 2)
    assert main(["plan-length", "--target", "1"]) == EXIT_CONFIG


def test_bootstrap_writes_report_and_manifest(tmp_path, data_csv):
    cfg = _config(tmp_path, data=str(data_csv))
    assert main(["bootstrap", "--config", str(cfg)]) == EXIT_OK
    out = tmp_path / "out"
    assert sorted(p.name for p in out.iterdir()) == ["manifest.json", "report.csv", "report.json"]
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 5 and len(man["config_sha256"]) == 64
    assert list(man["inputs_sha256"].values())[0] == hashlib.sha256(data_csv.read_bytes()).hexdigest()
    assert man["scheme"]["n_hours"] == 672 and man["versions"]["buq"]


def test_bootstrap_byte_identical(tmp_path, data_csv):
    a = _config(tmp_path, data=str(data_csv), output_dir=str(tmp_path / "a"))
    assert main(["bootstrap", "--config", str(a)]) == EXIT_OK
    assert main(["bootstrap", "--config", str(a), "--output-dir", str(tmp_path / "b"), "--jobs", "2"]) == EXIT_OK
    assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()
    assert (tmp_path / "a" / "report.csv").read_bytes() == (tmp_path / "b" / "report.csv").read_bytes()


def test_bootstrap_svg(tmp_path, data_csv):
    pytest.importorskip("matplotlib")
    cfg = _config(tmp_path, data=str(data_csv))
    assert main(["bootstrap", "--config", str(cfg), "--svg"]) == EXIT_OK
    svg = (tmp_path / "out" / "report.svg").read_text()
    assert svg.lstrip().startswith("<?xml") and "<svg" in svg


def test_point_missing_file_is_io_error(tmp_path, capsys):
    cfg = _config(tmp_path, data=str(tmp_path / "nope.csv"))
    assert main(["point", "--config", str(cfg)]) == EXIT_IO
    assert _err(capsys)["exit_code"] == EXIT_IO
    assert not (tmp_path / "out").exists()


def test_config_errors(tmp_path, data_csv, capsys):
    assert main(["bootstrap", "--config", str(_config(tmp_path, data=str(data_csv), seed=None))]) == EXIT_CONFIG
    assert "seed" in _err(capsys)["message"]
    assert main(["bootstrap", "--config", str(_config(tmp_path, data=str(data_csv), seed=-1))]) == EXIT_CONFIG
    assert main(["bootstrap", "--config", str(_config(tmp_path, bogus=1))]) == EXIT_CONFIG
    assert main(["point", "--nonsense"]) == EXIT_CONFIG
    assert main(["bootstrap", "--config", str(_config(tmp_path, data=str(data_csv))), "--n-s", "5h"]) == EXIT_CONFIG
    assert main(["point", "--config", str(_config(tmp_path, data=str(data_csv))),
                 "--variant", "nope"]) == EXIT_CONFIG


def test_bad_data_is_data_error(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text("timestamp,bus,demand_mw,wind_cf\n2017-01-01T00:00:00,1,5,1.5\n", encoding="utf-8")
    assert main(["point", "--config", str(_config(tmp_path, data=str(p)))]) == EXIT_DATA
    assert _err(capsys)["error"] == "ValidationError"


def test_point_with_psm(tmp_path):
    d = np.zeros((4, 24))
    d[:3] = 1000.0
    base = make_table(24, buses=("2", "4", "5", "6"), wind=0.3)
    p = tmp_path / "day.csv"
    write_csv(TimeSeriesTable(base.timestamps, base.bus_ids, d, base.wind_cf), p)
    cfg = _config(tmp_path, data=str(p), model={"variant": "lp_plan"}, solver={"method": "embedded"})
    assert main(["point", "--config", str(cfg)]) == EXIT_OK
    out = json.loads((tmp_path / "out" / "point.json").read_text())
    assert out["cost_total"]["units"] == "GBP/yr"
    assert out["gen_unmet_total"]["value"] == pytest.approx(0.0, abs=1e-6)


def test_demand_at_non_demand_bus_is_config_error(tmp_path, capsys):
    p = tmp_path / "day.csv"
    write_csv(make_table(24, buses=("2", "4", "5", "6"), demand=1000.0), p)
    cfg = _config(tmp_path, data=str(p), model={"variant": "lp_plan"})
    assert main(["point", "--config", str(cfg)]) == EXIT_CONFIG
    assert "not a demand bus" in _err(capsys)["message"]


def test_adapter_failure_is_solver_error(tmp_path, data_csv, capsys):
    cfg = _config(tmp_path, data=str(data_csv), model={"variant": "lp_plan"},
                  solver={"method": "adapter", "adapter": {"command": "no-such-solver-xyz"}})
    assert main(["point", "--config", str(cfg)]) == EXIT_SOLVER
    assert _err(capsys)["error"] == "AdapterError"


def test_synth_diagnose_validate(tmp_path, capsys):
    cfg = _config(tmp_path, synth={"years": 8})
    assert main(["synth", "--config", str(cfg), "--name", "s.csv"]) == EXIT_OK
    csv_path = tmp_path / "out" / "s.csv"
    man = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert man["analytic"]["mean_total_demand_mw"] == 140000.0
    before = csv_path.read_bytes()

    cfg = _config(tmp_path, data=str(csv_path), output_dir=str(tmp_path / "diag"),
                  diagnostic={"grid": ["4w", "8w", "12w"], "K": 20})
    assert main(["diagnose", "--config", str(cfg)]) == EXIT_OK
    diag = json.loads((tmp_path / "diag" / "diagnostic.json").read_text())
    assert diag["outputs"]["demand_mean"]["verdict"] in ("stable", "unstable")
    assert (tmp_path / "diag" / "diagnostic.csv").exists()

    cfg = _config(tmp_path, data=str(csv_path), output_dir=str(tmp_path / "val"), validate={"B": 200},
                  scheme={"n_s": "12w", "K": 40})
    assert main(["validate", "--config", str(cfg)]) == EXIT_OK
    doc = json.loads((tmp_path / "val" / "validate.json").read_text())
    assert doc["series"] == 8 and {r["name"] for r in doc["rows"]} == {"demand_mean", "demand_peak"}
    # Inputs are never modified.
    assert csv_path.read_bytes() == before

    cfg = _config(tmp_path, data=str(csv_path), output_dir=str(tmp_path / "val2"), validate={"B": 50},
                  scheme={"n_s": "12w", "K": 10})
    assert main(["validate", "--config", str(cfg), "--data", str(csv_path)]) == EXIT_OK
    cfg = _config(tmp_path, data=str(csv_path), validate={"years_per_series": 2})
    assert main(["validate", "--config", str(cfg)]) == EXIT_DATA  # only 4 series


def test_console_script_runs():
    proc = subprocess.run([sys.executable, "-m", "buq.cli", "plan-length", "--sigma-s", "11", "--n-s", "8760",
                           "--target", "5", "--json"], capture_output=True, text=True, check=True)
    assert json.loads(proc.stdout)[0]["years"] == 4.84
