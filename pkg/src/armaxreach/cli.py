"""Command-line interface: ``reach``, ``convert`` and ``bench``.

Exit codes: 0 success, 2 invalid input (config or grid), 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import bench
from .config import ConfigError, load_config
from .experiment import hull_rows, run_experiment
from .models import ConversionError
from .reach import EstimationError
from .svg import render

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

REACH_COLUMNS = ("method", "k", "dim", "lower", "upper")
CONTAINMENT_COLUMNS = ("method", "k", "fraction")
BENCH_COLUMNS = ("method", "f_k", "f_n", "p", "median_s", "slope_axis", "slope")
NUMERIC_ERRORS = (ConversionError, EstimationError, np.linalg.LinAlgError, RuntimeError)


def fmt(x) -> str:
    """Shortest round-trip text for floats; integers and strings unchanged."""
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def cmd_reach(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    try:
        exp = run_experiment(cfg)
    except NUMERIC_ERRORS as exc:
        return _fail(EXIT_NUMERIC, str(exc))
    out = Path(args.out)
    names = cfg.outputs
    write_csv(out / names["hulls"], REACH_COLUMNS, hull_rows(exp.results))
    if exp.runs:
        rows = [(m, k, f) for m in sorted(exp.containment) for k, f in sorted(exp.containment[m].items())]
        write_csv(out / names["containment"], CONTAINMENT_COLUMNS, rows)
    if args.svg:
        pts = None
        if exp.runs:
            dims = list(cfg.svg_dims)
            pts = np.array([r.y[k][dims] for r in exp.runs for k in range(cfg.p, cfg.p + cfg.k_h + 1)])
        (out / names["svg"]).write_text(render(exp.results, cfg.svg_dims, pts))
    (out / names["meta"]).write_text(json.dumps(exp.meta, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_convert(args) -> int:
    try:
        cfg = load_config(args.config)
        if cfg.model_type != "ss":
            raise cfg.error("convert needs a state-space model", "model", "type")
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    try:
        m = cfg.armax()
    except NUMERIC_ERRORS as exc:
        return _fail(EXIT_NUMERIC, str(exc))
    doc = {
        "model": {
            "type": "armax",
            "p": m.p,
            "A_bar": [a.tolist() for a in m.A_bar],
            "B_bar": [b.tolist() for b in m.B_bar],
            "n_u": m.n_u,
            "n_w": m.n_w,
            "n_v": m.n_v,
        },
        "M": np.asarray(cfg.observer_gain).tolist(),
        "nilpotency_residual": cfg.nilpotency_residual,
    }
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(doc, indent=2) + "\n")
    return EXIT_OK


def cmd_bench(args) -> int:
    try:
        grid = json.loads(Path(args.grid).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        return _fail(EXIT_CONFIG, f"{args.grid}: cannot read grid: {exc}")
    if not isinstance(grid, dict):
        return _fail(EXIT_CONFIG, f"{args.grid}:1: grid must be a JSON object")
    try:
        cells = bench.cells_from_grid(grid)
        methods = grid.get("methods", ["ARMAX", "ARMAX-ALG1", "ARMAX-ALG2"])
        if not cells:
            raise ValueError("empty benchmark grid")
        records = bench.run_grid(cells, methods, args.reps, int(grid.get("seed", 0)),
                                 int(grid.get("order", bench.DEFAULT_ORDER)))
    except (ValueError, KeyError, TypeError) as exc:
        return _fail(EXIT_CONFIG, f"{args.grid}: {exc}")
    except NUMERIC_ERRORS as exc:
        return _fail(EXIT_NUMERIC, str(exc))
    write_csv(Path(args.out), BENCH_COLUMNS, bench.table_rows(records))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="armaxreach", description="Reachability analysis of ARMAX models.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reach", help="compute reachable sets for a config")
    p.add_argument("config")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--svg", action="store_true", help="also draw 2-D projections")
    p.set_defaults(func=cmd_reach)

    p = sub.add_parser("convert", help="convert a state-space model to ARMAX form")
    p.add_argument("config")
    p.add_argument("--out", required=True, help="output JSON file")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("bench", help="time methods over a grid of problem sizes")
    p.add_argument("--grid", required=True, help="grid JSON file")
    p.add_argument("--reps", type=int, default=bench.MIN_REPS)
    p.add_argument("--out", required=True, help="output CSV file")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
