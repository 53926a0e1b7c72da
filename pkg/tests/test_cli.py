import json
import math

from stochbal.cli import main
from stochbal.experiments import Row, read_rows, write_rows


def write_config(path, **over):
    d = {"experiment": "cont_dep_flux", "name": "tiny",
         "problem": {"flux": {"kind": "burgers"}, "noise": {"kind": "sine", "lam": 0.3}, "epsilon": 5e-3,
                     "initial": {"kind": "bump", "center": math.pi, "width": 0.6}, "T": 0.5},
         "grid": {"dim": 1, "cells": 64, "length": 2 * math.pi},
         "mc": {"paths": 4, "seed": 3}, "scales": [0.01, 0.02, 0.04]}
    d.update(over)
    path.write_text(json.dumps(d))
    return path


def test_validate_ok(tmp_path, capsys):
    assert main(["validate", str(write_config(tmp_path / "c.json"))]) == 0
    assert "valid cont_dep_flux config" in capsys.readouterr().out


def test_validate_error(tmp_path, capsys):
    assert main(["validate", str(write_config(tmp_path / "c.json", scales=[0.01]))]) == 2
    assert "configuration error" in capsys.readouterr().err


def test_missing_file(tmp_path):
    assert main(["validate", str(tmp_path / "nope.json")]) == 2


def test_run_and_report(tmp_path, capsys):
    out = tmp_path / "res"
    assert main(["run", str(write_config(tmp_path / "c.json")), "-o", str(out)]) == 0
    text = capsys.readouterr().out
    assert "tiny: PASS" in text and "fit distance" in text
    assert main(["-v", "report", str(out)]) == 0
    assert "[ok] slope" in capsys.readouterr().out
    rows = read_rows(out / "scales.csv")
    write_rows(out / "scales.csv", [Row(r.table, r.scale, 0.5, r.stderr, r.M) for r in rows])
    assert main(["report", str(tmp_path)]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_run_failing_rule_exits_one(tmp_path, capsys):
    # an unattainable slope threshold forces a failing verdict
    cfg = write_config(tmp_path / "c.json", options={"min_slope": 5.0}, experiment="fractional_bv",
                       problem={"flux": {"kind": "burgers"}, "noise": {"kind": "x_modulated", "lam": 0.3, "mu": 0.5},
                                "epsilon": 5e-3, "initial": {"kind": "sine"}, "T": 0.5},
                       scales=[4 * 2 * math.pi / 64 * k for k in (1, 2, 4)])
    assert main(["run", str(cfg), "--paths", "3"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_report_empty(tmp_path):
    assert main(["report", str(tmp_path)]) == 2


def test_suite_only(tmp_path, capsys):
    assert main(["suite", "-o", str(tmp_path), "--only", "lemma_checks"]) == 0
    assert "criterion 9,10: lemma_checks: PASS" in capsys.readouterr().out
    assert (tmp_path / "lemma_checks" / "ratios.csv").exists()
