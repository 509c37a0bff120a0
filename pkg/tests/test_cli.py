import csv
import json
from pathlib import Path

import numpy as np
import pytest

from armaxreach.bench import (
    THREADS_ENV,
    Cell,
    cell_instance,
    cells_from_grid,
    fit_slope,
    pin_allocator,
    run_grid,
    table_rows,
    thread_count,
)
from armaxreach.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, main
from armaxreach.config import ConfigError, config_from_dict, locate, parse_config
from armaxreach.experiment import run_experiment

from _support import PED_A, PED_M

ROOT = Path(__file__).resolve().parents[1]
PEDESTRIAN = ROOT / "configs" / "pedestrian.json"


def ped_raw(**changes):
    raw = json.loads(PEDESTRIAN.read_text())
    raw.update(changes)
    return raw


def write(tmp_path, raw, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(raw, indent=2))
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def small_ss(**model):
    base = {"type": "ss", "A": [[0.5, 0.1], [0.0, 0.3]], "B": [[1.0], [0.5]], "C": [[1.0, 0.0], [0.0, 1.0]], "p": 1}
    base.update(model)
    return {
        "model": base,
        "uncertainty": {
            "U": {"constant": {"center": [0.0], "radius": [1.0]}},
            "W": {"constant": {"center": [0.0, 0.0]}},
            "V": {"constant": {"center": [0.0, 0.0], "radius": [0.1, 0.1]}},
        },
        "y_init": [[0.0, 0.0]],
        "k_h": 3,
    }


# --- config ---------------------------------------------------------------------------

def test_locate_points_at_nested_values():
    text = '{\n  "a": [\n    1,\n    {"b": 2}\n  ],\n  "c": 3\n}'
    assert locate(text, ("a",)) == 2
    assert locate(text, ("a", 1, "b")) == 4
    assert locate(text, ("c",)) == 6
    assert locate(text, ()) == 1


def test_schema_error_carries_line(tmp_path):
    raw = ped_raw(k_h="x")
    text = json.dumps(raw, indent=2)
    with pytest.raises(ConfigError) as info:
        parse_config(text, "cfg.json")
    line = next(i for i, l in enumerate(text.splitlines(), 1) if '"k_h"' in l)
    assert info.value.line == line
    assert str(info.value).startswith(f"cfg.json:{line}: k_h:")


def test_malformed_json_reports_line():
    with pytest.raises(ConfigError) as info:
        parse_config('{\n  "k_h": 3,\n  oops\n}', "bad.json")
    assert info.value.line == 3


def test_dimension_mismatch_reported_at_offending_entry():
    raw = ped_raw()
    raw["uncertainty"]["V"]["constant"]["radius"] = [0.01, 0.01, 0.01]
    raw["uncertainty"]["V"]["constant"]["center"] = [0, 0, 0]
    text = json.dumps(raw, indent=2)
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert "uncertainty.V" in str(info.value)


@pytest.mark.parametrize("change", [
    {"y_init": [[0.0, 0.0]]},
    {"methods": []},
    {"k_init": 1},
    {"svg_dims": [0, 5]},
])
def test_invalid_fields_rejected(change):
    with pytest.raises(ConfigError):
        config_from_dict(ped_raw(**change))


def test_ss_method_needs_ss_model():
    raw = {
        "model": {"type": "armax", "p": 1, "A_bar": [[[0.5]]], "B_bar": [[[1.0]], [[0.0]]],
                  "n_u": 1, "n_w": 0, "n_v": 0},
        "uncertainty": {"U": {"constant": {"center": [0.0]}}, "W": {"constant": {"center": []}},
                        "V": {"constant": {"center": []}}},
        "y_init": [[0.0]],
        "k_h": 2,
    }
    cfg = config_from_dict(raw)
    assert "SS" not in cfg.methods
    with pytest.raises(ConfigError):
        config_from_dict({**raw, "methods": ["SS"]})


def test_per_step_sets_must_cover_horizon():
    raw = ped_raw()
    raw["uncertainty"]["U"] = {"per_step": [{"center": [1.0, 0.5]}] * 5}
    with pytest.raises(ConfigError):
        config_from_dict(raw)


def test_derived_gain_used_without_m():
    raw = ped_raw()
    del raw["model"]["M"]
    cfg = config_from_dict(raw)
    assert cfg.nilpotency_residual <= 1e-8 * max(1.0, np.linalg.norm(PED_A) ** 2)


def test_experiment_meta():
    cfg = config_from_dict(ped_raw(n_samples=10))
    exp = run_experiment(cfg)
    assert exp.meta["methods"] == ["SS", "ARMAX", "ARMAX-DP", "ARMAX-ALG2"]
    assert exp.meta["max_equivalence_error"] <= 1e-8
    assert exp.meta["sampling_distribution"]
    for report in exp.containment.values():
        assert set(report.values()) == {1.0}


# --- reach ---------------------------------------------------------------------------------

def test_reach_pedestrian_outputs(tmp_path):
    assert main(["reach", str(PEDESTRIAN), "--out", str(tmp_path / "a"), "--svg"]) == EXIT_OK
    rows = read_csv(tmp_path / "a" / "hulls.csv")
    assert list(rows[0]) == ["method", "k", "dim", "lower", "upper"]
    assert {r["method"] for r in rows} == {"SS", "ARMAX", "ARMAX-DP", "ARMAX-ALG2"}
    assert sorted({int(r["k"]) for r in rows}) == list(range(2, 12))
    assert len(rows) == 4 * 10 * 2
    keys = [(r["method"], int(r["k"]), int(r["dim"])) for r in rows]
    assert keys == sorted(keys)
    assert all(float(r["lower"]) <= float(r["upper"]) for r in rows)
    cont = read_csv(tmp_path / "a" / "containment.csv")
    assert list(cont[0]) == ["method", "k", "fraction"]
    assert all(float(r["fraction"]) == 1.0 for r in cont)
    meta = json.loads((tmp_path / "a" / "meta.json").read_text())
    assert meta["seed"] == 7 and meta["n_samples"] == 200
    svg = (tmp_path / "a" / "reach.svg").read_text()
    assert svg.startswith("<svg") and svg.count("<polygon") >= 40


def test_reach_is_deterministic(tmp_path):
    for d in ("a", "b"):
        assert main(["reach", str(PEDESTRIAN), "--out", str(tmp_path / d)]) == EXIT_OK
    for name in ("hulls.csv", "containment.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_reach_bad_config_exit_code(tmp_path, capsys):
    raw = ped_raw()
    raw["uncertainty"]["W"]["constant"]["radius"] = [1e-3, 1e-3]
    path = write(tmp_path, raw)
    assert main(["reach", str(path), "--out", str(tmp_path)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert str(path) in err and "uncertainty.W" in err


def test_reach_empty_methods_exit_code(tmp_path):
    path = write(tmp_path, ped_raw(methods=[]))
    assert main(["reach", str(path), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_missing_config_file(tmp_path):
    assert main(["reach", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_unobservable_model_exit_code(tmp_path):
    path = write(tmp_path, small_ss(C=[[0.0, 0.0], [0.0, 0.0]]))
    assert main(["reach", str(path), "--out", str(tmp_path / "r")]) == EXIT_NUMERIC
    assert main(["convert", str(path), "--out", str(tmp_path / "c.json")]) == EXIT_NUMERIC


def test_unknown_subcommand():
    assert main(["nope"]) == EXIT_CONFIG


# --- convert --------------------------------------------------------------------------------

def test_convert_pedestrian(tmp_path):
    out = tmp_path / "armax.json"
    assert main(["convert", str(PEDESTRIAN), "--out", str(out)]) == EXIT_OK
    doc = json.loads(out.read_text())
    A_bar = np.array(doc["model"]["A_bar"])
    np.testing.assert_allclose(A_bar[0], 2 * np.eye(2), atol=1e-12)
    np.testing.assert_allclose(A_bar[1], -np.eye(2), atol=1e-12)
    np.testing.assert_array_equal(doc["M"], PED_M)
    assert doc["nilpotency_residual"] <= 1e-12


@pytest.mark.parametrize("a", [0.4, -2.5])
def test_convert_scalar_gain(tmp_path, a):
    raw = small_ss(A=[[a]], B=[[1.0]], C=[[1.0]])
    raw["uncertainty"]["W"] = {"constant": {"center": [0.0]}}
    raw["uncertainty"]["V"] = {"constant": {"center": [0.0]}}
    raw["y_init"] = [[0.0]]
    out = tmp_path / "c.json"
    assert main(["convert", str(write(tmp_path, raw)), "--out", str(out)]) == EXIT_OK
    doc = json.loads(out.read_text())
    np.testing.assert_allclose(doc["M"], [[-a]], atol=1e-14)
    np.testing.assert_allclose(doc["model"]["A_bar"], [[[a]]], atol=1e-14)


def test_convert_round_trip(tmp_path):
    out = tmp_path / "armax.json"
    assert main(["convert", str(PEDESTRIAN), "--out", str(out)]) == EXIT_OK
    raw = ped_raw(model=json.loads(out.read_text())["model"], methods=["ARMAX", "ARMAX-ALG2"])
    path = write(tmp_path, raw, "armax_cfg.json")
    assert main(["reach", str(PEDESTRIAN), "--out", str(tmp_path / "ss")]) == EXIT_OK
    assert main(["reach", str(path), "--out", str(tmp_path / "ar")]) == EXIT_OK
    ss = {(r["method"], r["k"], r["dim"]): r for r in read_csv(tmp_path / "ss" / "hulls.csv")}
    ar = read_csv(tmp_path / "ar" / "hulls.csv")
    assert ar
    for r in ar:
        ref = ss[(r["method"], r["k"], r["dim"])]
        assert abs(float(r["lower"]) - float(ref["lower"])) <= 1e-10
        assert abs(float(r["upper"]) - float(ref["upper"])) <= 1e-10


def test_convert_rejects_armax_config(tmp_path):
    out = tmp_path / "armax.json"
    main(["convert", str(PEDESTRIAN), "--out", str(out)])
    path = write(tmp_path, ped_raw(model=json.loads(out.read_text())["model"], methods=["ARMAX"]))
    assert main(["convert", str(path), "--out", str(tmp_path / "x.json")]) == EXIT_CONFIG


# --- bench -----------------------------------------------------------------------------------

def grid_file(tmp_path, grid):
    path = tmp_path / "grid.json"
    path.write_text(json.dumps(grid))
    return path


def test_bench_single_cell(tmp_path):
    grid = {"cells": [{"f_k": 1, "f_n": 1, "p": 2}], "methods": ["ARMAX-ALG2"], "order": 3}
    out = tmp_path / "bench.csv"
    assert main(["bench", "--grid", str(grid_file(tmp_path, grid)), "--reps", "3", "--out", str(out)]) == EXIT_OK
    rows = read_csv(out)
    assert len(rows) == 1
    assert rows[0]["method"] == "ARMAX-ALG2" and rows[0]["slope"] == "" and float(rows[0]["median_s"]) > 0


def test_bench_slopes_reported_per_axis(tmp_path):
    grid = {"f_k": [1, 2], "f_n": [1], "p": [1], "methods": ["ARMAX"], "order": 2}
    out = tmp_path / "bench.csv"
    assert main(["bench", "--grid", str(grid_file(tmp_path, grid)), "--out", str(out)]) == EXIT_OK
    rows = read_csv(out)
    assert [r["slope_axis"] for r in rows] == ["f_k", "f_k"]
    assert rows[0]["slope"] == rows[1]["slope"] != ""


@pytest.mark.parametrize("grid,reps", [
    ({"cells": [{"f_k": 1, "f_n": 1, "p": 1}]}, "1"),
    ({"cells": []}, "3"),
    ({"f_k": [1], "f_n": [], "p": [1]}, "3"),
    ({"cells": [{"f_k": 1, "f_n": 1, "p": 1}], "methods": ["SS"]}, "3"),
    ({"cells": [{"f_k": 1}]}, "3"),
])
def test_bench_invalid_grid(tmp_path, grid, reps):
    out = tmp_path / "bench.csv"
    assert main(["bench", "--grid", str(grid_file(tmp_path, grid)), "--reps", reps, "--out", str(out)]) == EXIT_CONFIG
    assert not out.exists()


def test_bench_grid_file_not_json(tmp_path):
    path = tmp_path / "grid.json"
    path.write_text("{")
    assert main(["bench", "--grid", str(path), "--out", str(tmp_path / "b.csv")]) == EXIT_CONFIG


def test_bench_systems_are_deterministic():
    a, ya, _ = cell_instance(Cell(2, 1, 2), 5)
    b, yb, _ = cell_instance(Cell(2, 1, 2), 5)
    for x, y in zip(a.A_bar + a.B_bar, b.A_bar + b.B_bar):
        np.testing.assert_array_equal(x, y)
    np.testing.assert_array_equal(ya, yb)
    c, _, _ = cell_instance(Cell(2, 1, 2), 6)
    assert not np.array_equal(a.A_bar[0], c.A_bar[0])


def test_cells_from_grid_product():
    cells = cells_from_grid({"f_k": [1, 2], "f_n": [1], "p": [2, 3]})
    assert [(c.f_k, c.p) for c in cells] == [(1, 2), (1, 3), (2, 2), (2, 3)]
    assert cells[0].k_h == 2


def test_fit_slope_recovers_power_law():
    x = np.array([4, 8, 16, 32])
    assert fit_slope(x, 3.0 * x ** 1.5) == pytest.approx(1.5, abs=1e-12)


def test_run_grid_threads_match_cells():
    recs = run_grid([Cell(1, 1, 1), Cell(2, 1, 1)], ["ARMAX"], 3, order=2, threads=2)
    assert [(r.method, r.f_k) for r in recs] == [("ARMAX", 1), ("ARMAX", 2)]
    assert len(table_rows(recs)) == 2


@pytest.mark.parametrize("value,expected", [(None, 1), ("3", 3), ("0", 1), ("x", 1)])
def test_thread_count_from_environment(monkeypatch, value, expected):
    if value is None:
        monkeypatch.delenv(THREADS_ENV, raising=False)
    else:
        monkeypatch.setenv(THREADS_ENV, value)
    assert thread_count() == expected


def test_pin_allocator_is_idempotent():
    first = pin_allocator()
    assert isinstance(first, bool) and pin_allocator() == first
