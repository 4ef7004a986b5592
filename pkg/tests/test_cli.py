import csv
import json
import re

import pytest
import yaml

from forgelab import __version__
from forgelab.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main

LR_SWEEP = {
    "seed": 7,
    "model": {"kind": "linear", "d": 2},
    "params": [1.0, 0.0],
    "target": {"features": [0.5, 0.0], "label": 0.0},
    "radius": 1.0,
    "epsilons": [0.02, 0.04, 0.08, 0.12, 0.16, 0.2],
    "samples": 100_000,
}

SMALL = {
    "forge": {"seed": 1, "model": {"kind": "onelayer", "d": 2, "n": 2}, "params": [1, 0, 0, 1, 1, 1],
              "target": {"features": [1.0, 1.0], "label": 0.0}, "labels": [0.0, 1.0]},
    "volume-sweep": {**LR_SWEEP, "epsilons": [0.05, 0.1], "samples": 20_000},
    "trajectory": {"seed": 3, "model": {"kind": "quadratic", "d": 2}, "w0": [0.0, 0.0], "steps": 0.5,
                   "data": [{"features": [1.0, 0.0], "label": 1.0}, {"features": [0.0, 1.0], "label": 1.0}],
                   "replacement": {"features": [1.2, 0.1], "label": 1.0}, "certify": {"mu": 1.0, "L": 1.0}},
    "figure1": {"seed": 11},
    "batch": {"seed": 5, "model": {"kind": "linear", "d": 1}, "params": [1.0],
              "target": {"features": [0.5], "label": 0.0}, "m": 2, "B": 2, "L": 100.0,
              "epsilons": [0.001], "samples": 20_000},
    "probability": {"seed": 9, **{k: LR_SWEEP[k] for k in ("model", "params", "target")},
                    "epsilons": [0.1], "trials": 20_000},
    "nullity-survey": {"seed": 2, "model": {"kind": "linear", "d": 3}, "points": 30, "nullity_max": 2},
    "k1-geometry": {"seed": 4, "n0": 1, "n1": 2, "trials": 2, "cells": 400},
}


def _run(tmp_path, kind, cfg, *extra, name="out"):
    p = tmp_path / f"{name}.yaml"
    p.write_text(yaml.safe_dump(cfg))
    out = tmp_path / name
    code = main([kind, "--config", str(p), "--out", str(out), *extra])
    return code, out


def _rows(out):
    with open(out / "results.csv", newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.mark.parametrize("kind", sorted(SMALL))
def test_every_kind_runs(tmp_path, kind):
    code, out = _run(tmp_path, kind, SMALL[kind])
    assert code == EXIT_OK
    man = json.loads((out / "manifest.json").read_text())
    assert man["kind"] == kind and man["version"] == __version__ and man["passed"]
    assert man["config"]["seed"] == SMALL[kind]["seed"]
    svg = (out / "plot.svg").read_text()
    assert svg.lstrip().startswith("<?xml") and "<svg" in svg
    # self-contained: only in-document references
    assert all(h.startswith("#") for h in re.findall(r'href="([^"]*)"', svg))
    assert _rows(out)


def test_volume_sweep_six_rows_slope_in_range(tmp_path):
    code, out = _run(tmp_path, "volume-sweep", LR_SWEEP)
    rows = _rows(out)
    assert len(rows) == 6
    assert all(r["dominated"] == "true" for r in rows)
    slope = float(rows[0]["slope"])
    assert 0.75 <= slope <= 1.25, f"fitted slope {slope:.3f}"


def test_figure1_opposite_basins(tmp_path):
    code, out = _run(tmp_path, "figure1", {"seed": 11})
    rows = _rows(out)
    assert code == EXIT_OK and len(rows) == 21
    assert abs(float(rows[-1]["original"]) + 2) < 0.5
    assert abs(float(rows[-1]["forged"]) - 2) < 0.5


def test_empty_epsilon_grid(tmp_path, capsys):
    code, _ = _run(tmp_path, "volume-sweep", {**LR_SWEEP, "epsilons": []})
    assert code == EXIT_CONFIG
    assert "epsilons" in capsys.readouterr().err


def test_bad_field_reports_path(tmp_path, capsys):
    code, _ = _run(tmp_path, "volume-sweep", {**LR_SWEEP, "model": {"kind": "linear", "d": "two"}})
    assert code == EXIT_CONFIG
    assert "model.d" in capsys.readouterr().err


def test_seed_is_mandatory(tmp_path, monkeypatch):
    monkeypatch.delenv("FORGELAB_SEED", raising=False)
    cfg = dict(LR_SWEEP)
    del cfg["seed"]
    assert _run(tmp_path, "volume-sweep", cfg)[0] == EXIT_CONFIG


def test_kind_mismatch(tmp_path):
    assert _run(tmp_path, "batch", {**LR_SWEEP, "kind": "volume-sweep"})[0] == EXIT_CONFIG


def test_fake_violated_bound_fails(tmp_path):
    code, out = _run(tmp_path, "volume-sweep", {**SMALL["volume-sweep"], "bound_scale": 1e-4})
    assert code == EXIT_CHECK
    assert not json.loads((out / "manifest.json").read_text())["passed"]


def test_runtime_error_code(tmp_path):
    cfg = {"seed": 1, "model": {"kind": "bistable", "d": 1}, "w0": [1e300], "steps": 1e10,
           "data": [{"features": [0.5]}], "replacement": {"features": [0.1]}}
    with pytest.warns(RuntimeWarning):
        assert _run(tmp_path, "trajectory", cfg)[0] == EXIT_RUNTIME


def test_byte_identical_rerun_and_threads(tmp_path):
    cfg = SMALL["volume-sweep"]
    _, a = _run(tmp_path, "volume-sweep", cfg, "--threads", "1", name="a")
    _, b = _run(tmp_path, "volume-sweep", cfg, "--threads", "3", name="b")
    assert (a / "results.csv").read_bytes() == (b / "results.csv").read_bytes()
    assert (a / "plot.svg").read_bytes() == (b / "plot.svg").read_bytes()


def test_env_overrides(tmp_path, monkeypatch):
    monkeypatch.setenv("FORGELAB_SEED", "99")
    monkeypatch.setenv("FORGELAB_THREADS", "2")
    _, out = _run(tmp_path, "figure1", {"seed": 11})
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 99 and man["threads"] == 2
    # the flag beats the environment
    _, out = _run(tmp_path, "figure1", {"seed": 11}, "--seed", "5", name="flag")
    assert json.loads((out / "manifest.json").read_text())["seed"] == 5
