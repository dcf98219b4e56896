import csv
import json

import pytest

from driftbv.cli import main
from driftbv.config import ConfigError, dump_config, load_config, parse_config, preset, preset_names

SMALL = {
    "name": "small",
    "grid": {"extents": [[0.0, 1.0]], "cells": [40]},
    "bc": {"dirichlet": ["all"], "neumann": []},
    "graph": {"kind": "powerlaw", "m": 2.0},
    "field": {"kind": "radial", "params": {"center": [0.5], "rate": 1.0}},
    "initial": {"kind": "bump", "params": {"center": [0.5], "radius": 0.3, "amplitude": 1.0, "power": 2}},
    "time": {"T": 0.05, "eps": 0.01},
}


def _write(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(data if isinstance(data, str) else json.dumps(data, indent=2))
    return str(path)


def test_presets_listing(capsys):
    assert main(["presets"]) == 0
    out = capsys.readouterr().out.split()
    assert out == preset_names()
    assert {"pme_neumann", "heleshaw_mixed", "bv_shrinkfield", "transport_rotation"} <= set(out)


def test_config_round_trip():
    for name in preset_names():
        cfg = preset(name)
        assert parse_config(dump_config(cfg)).to_dict() == cfg.to_dict()


def test_malformed_key_reports_line(tmp_path, capsys):
    text = json.dumps(SMALL, indent=2).replace('"rate"', '"rat"')
    line = next(i + 1 for i, ln in enumerate(text.splitlines()) if '"rat"' in ln)
    assert main(["run", _write(tmp_path, text)]) == 2
    err = capsys.readouterr().err
    assert "rat" in err and f"line {line}" in err
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.line == line


def test_unknown_top_level_key(tmp_path):
    data = dict(SMALL, bogus=1)
    assert main(["run", _write(tmp_path, data)]) == 2


def test_missing_file_and_bad_json(tmp_path, capsys):
    assert main(["run", str(tmp_path / "nope.json")]) == 2
    assert main(["verify", _write(tmp_path, "{ not json")]) == 2
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2


def test_run_writes_outputs(tmp_path, capsys):
    assert main(["run", _write(tmp_path, SMALL), "--out", str(tmp_path / "o")]) == 0
    d = tmp_path / "o" / "small"
    for f in ("config.json", "report.json", "steps.csv", "audits.csv", "tv_series.csv"):
        assert (d / f).is_file(), f
    snaps = sorted(d.glob("snapshot_*.csv"))
    assert len(snaps) == 6
    with open(snaps[0]) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 40 and {"x", "u", "p"} <= set(rows[0])
    rep = json.loads((d / "report.json").read_text())
    assert rep["status"] == "ok"
    assert load_config(str(d / "config.json")).to_dict()["grid"] == {"extents": [[0.0, 1.0]], "cells": [40]}


def test_out_env_var(tmp_path, monkeypatch):
    monkeypatch.setenv("DRIFTBV_OUT", str(tmp_path / "env"))
    assert main(["run", _write(tmp_path, SMALL)]) == 0
    assert (tmp_path / "env" / "small" / "report.json").is_file()


def test_verify_flags_inflow_on_dirichlet_label(tmp_path, capsys):
    # inward drift through Dirichlet walls violates the outflow hypothesis
    data = json.loads(json.dumps(SMALL))
    data["field"]["params"]["rate"] = -1.0
    path = _write(tmp_path, data)
    assert main(["verify", path, "--out", str(tmp_path)]) == 1
    assert main(["run", path, "--out", str(tmp_path)]) == 0


def test_sweep(tmp_path, capsys):
    path = _write(tmp_path, SMALL)
    assert main(["sweep", path, "--axis", "eps", "--values", "0.01,0.005,0.0025", "--out", str(tmp_path),
                 "--workers", "2"]) == 0
    table = tmp_path / "small_sweep_eps" / "sweep.csv"
    with open(table) as fh:
        rows = list(csv.DictReader(fh))
    assert [r["value"] for r in rows] == ["0.01", "0.005", "0.0025"]
    d = [float(r["distance_to_previous"]) for r in rows[1:]]
    assert d[1] < d[0]


def test_sweep_bad_axis_and_values(tmp_path, capsys):
    path = _write(tmp_path, SMALL)
    assert main(["sweep", path, "--axis", "colour", "--values", "1"]) == 2
    assert main(["sweep", path, "--axis", "eps", "--values", "a,b"]) == 2
    assert main(["sweep", path, "--axis", "cells", "--values", "2"]) == 2
