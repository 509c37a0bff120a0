"""Scalability benchmark on random stable ARMAX models."""

from __future__ import annotations

import ctypes
import ctypes.util
import gc
import itertools
import os
import statistics
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .models import ArmaxModel, UncertaintySpec
from .params import build_extended
from .reach import ARMAX_METHODS, run_method
from .sets import Zonotope

N_Y0 = 2
N_UT0 = 3
SPECTRAL_RADIUS = 0.95
DEFAULT_ORDER = 3000
MIN_REPS = 3
THREADS_ENV = "ARMAXREACH_THREADS"

# glibc mallopt parameters
_M_TRIM_THRESHOLD = -1
_M_MMAP_THRESHOLD = -3
_MMAP_THRESHOLD_MAX = 32 * 1024 * 1024


def pin_allocator() -> bool:
    """Fix glibc's malloc thresholds so large arrays are served from the heap.

    By default glibc moves its mmap threshold as blocks are freed, so whether
    a multi-megabyte array costs fresh page faults depends on what ran
    before. Pinning the thresholds keeps that cost independent of the
    order in which cells are timed. Returns False where ``mallopt`` is not
    available (non-glibc platforms); timings are then taken as they come.
    """
    name = ctypes.util.find_library("c")
    if not name:
        return False
    try:
        mallopt = ctypes.CDLL(name).mallopt
    except (OSError, AttributeError):
        return False
    mallopt.argtypes = (ctypes.c_int, ctypes.c_int)
    ok = mallopt(_M_MMAP_THRESHOLD, _MMAP_THRESHOLD_MAX)
    ok &= mallopt(_M_TRIM_THRESHOLD, 2 * _MMAP_THRESHOLD_MAX)
    return bool(ok)


@dataclass(frozen=True)
class Cell:
    f_k: int
    f_n: int
    p: int

    @property
    def k_h(self) -> int:
        return self.f_k * self.p


@dataclass
class BenchRecord:
    method: str
    f_k: int
    f_n: int
    p: int
    median_s: float
    timings: list


def random_stable_model(rng: np.random.Generator, p: int, n_y: int, n_u: int, n_w: int, n_v: int,
                        radius: float = SPECTRAL_RADIUS) -> ArmaxModel:
    """Gaussian ARMAX parameters, rescaled so the companion matrix has spectral radius ``radius``.

    Multiplying ``A_bar[i-1]`` by ``g**i`` multiplies every eigenvalue of the
    companion matrix by ``g``.
    """
    n_ut = n_u + n_w + n_v
    A_bar = [rng.standard_normal((n_y, n_y)) / np.sqrt(n_y * p) for _ in range(p)]
    B_bar = [rng.standard_normal((n_y, n_ut)) / np.sqrt(n_ut) for _ in range(p + 1)]
    m = ArmaxModel(A_bar, B_bar, n_u, n_w, n_v)
    rho = float(np.max(np.abs(np.linalg.eigvals(build_extended(m).A_ext))))
    if rho > 0:
        g = radius / rho
        A_bar = [a * g ** (i + 1) for i, a in enumerate(A_bar)]
    return ArmaxModel(A_bar, B_bar, n_u, n_w, n_v)


def random_spec(rng: np.random.Generator, dims: tuple, order: int, last_step: int) -> UncertaintySpec:
    """Per-step sets with fixed generators (``order`` per dimension) and moving centers."""
    channels = []
    for n in dims:
        G = rng.uniform(-1.0, 1.0, (n, order * n)) / (order * n)
        centers = rng.standard_normal((last_step + 1, n))
        channels.append([Zonotope(c, G) for c in centers])
    return UncertaintySpec(*channels)


def cell_instance(cell: Cell, seed: int):
    """Model, initial outputs and input-set parameters of one grid cell, from ``seed``."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, cell.f_k, cell.f_n, cell.p])))
    n_y = N_Y0 * cell.f_n
    per = N_UT0 * cell.f_n // 3  # split evenly over u, w, v
    m = random_stable_model(rng, cell.p, n_y, per, per, per)
    y_init = rng.standard_normal((cell.p, n_y))
    return m, y_init, rng


def time_cell(cell: Cell, method: str, reps: int, seed: int, order: int = DEFAULT_ORDER) -> BenchRecord:
    """Median wall-clock time of ``reps`` runs after one untimed warm-up.

    Input preparation (labelling the sets and, for ARMAX-ALG2, splitting them
    into a constant set plus offsets) happens before timing starts, so only
    the reachability computation itself is measured. As with ``timeit``, the
    garbage collector is paused while a run is timed.
    """
    timings = []
    last = cell.p + cell.k_h + cell.p - 1
    for r in range(reps + 1):
        m, y_init, rng = cell_instance(cell, seed)
        spec = random_spec(rng, (m.n_u, m.n_w, m.n_v), order, last)
        spec.prepare(last)
        if method == "ARMAX-ALG2":
            spec.decomposition()
        was_enabled = gc.isenabled()
        gc.disable()
        try:
            t0 = time.perf_counter()
            run_method(method, m, y_init, spec, cell.k_h)
            dt = time.perf_counter() - t0
        finally:
            if was_enabled:
                gc.enable()
        if r > 0:
            timings.append(dt)
    return BenchRecord(method, cell.f_k, cell.f_n, cell.p, statistics.median(timings), timings)


def _on_thread(fn, *args):
    # each cell is timed on its own dedicated thread
    out = {}

    def target():
        try:
            out["value"] = fn(*args)
        except BaseException as exc:  # re-raised in the caller
            out["error"] = exc

    t = threading.Thread(target=target)
    t.start()
    t.join()
    if "error" in out:
        raise out["error"]
    return out["value"]


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def run_grid(cells: list, methods: list, reps: int, seed: int = 0, order: int = DEFAULT_ORDER,
             threads: int | None = None) -> list:
    """Time every (cell, method) pair; records come back in job order.

    Calls :func:`pin_allocator` first, which changes malloc settings for the
    whole process.
    """
    if not cells:
        raise ValueError("empty benchmark grid")
    if reps < MIN_REPS:
        raise ValueError(f"at least {MIN_REPS} repetitions are needed for a median, got {reps}")
    bad = [m for m in methods if m not in ARMAX_METHODS]
    if bad or not methods:
        raise ValueError(f"benchmark methods must be a non-empty subset of {ARMAX_METHODS}, got {methods}")
    jobs = [(c, m) for c in cells for m in methods]
    pin_allocator()
    threads = threads or thread_count()
    if threads == 1:
        return [_on_thread(time_cell, c, m, reps, seed, order) for c, m in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda job: time_cell(job[0], job[1], reps, seed, order), jobs))


def fit_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float)), 1)[0])


AXES = ("f_k", "f_n", "p")


def slopes(records: list) -> dict:
    """``(method, axis, fixed values of the other axes) -> slope`` for every swept axis."""
    out = {}
    for axis in AXES:
        others = [a for a in AXES if a != axis]
        key = lambda r: (r.method, tuple(getattr(r, a) for a in others))
        for k, group in itertools.groupby(sorted(records, key=key), key=key):
            group = list(group)
            xs = [getattr(r, axis) for r in group]
            if len(set(xs)) >= 2:
                out[(k[0], axis, k[1])] = fit_slope(xs, [r.median_s for r in group])
    return out


def table_rows(records: list) -> list:
    """Rows ``method,f_k,f_n,p,median_s,slope_axis,slope`` sorted by method and cell.

    A record that lies on several swept axes gets one row per axis; a record
    on none gets a single row with empty slope fields.
    """
    fitted = slopes(records)
    rows = []
    for r in sorted(records, key=lambda r: (r.method, r.f_k, r.f_n, r.p)):
        hits = []
        for axis in AXES:
            fixed = tuple(getattr(r, a) for a in AXES if a != axis)
            if (r.method, axis, fixed) in fitted:
                hits.append((axis, fitted[(r.method, axis, fixed)]))
        for axis, s in hits or [("", None)]:
            rows.append((r.method, r.f_k, r.f_n, r.p, r.median_s, axis, s))
    return rows


def cells_from_grid(grid: dict) -> list:
    """Cells from explicit ``cells`` or from the product of ``f_k``, ``f_n`` and ``p`` lists."""
    if "cells" in grid:
        return [Cell(int(c["f_k"]), int(c["f_n"]), int(c["p"])) for c in grid["cells"]]
    axes = [grid.get(a, []) for a in AXES]
    return [Cell(int(a), int(b), int(c)) for a, b, c in itertools.product(*axes)]
