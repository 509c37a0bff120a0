"""Run the methods of a config, sample trajectories and collect the outputs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import SS_METHOD, ExperimentConfig
from .reach import ReachResult, estimate_initial_state_set, reach_ss_series, run_method
from .sampling import SAMPLING_DISTRIBUTION, SampleRun, containment_report, run_samples


@dataclass
class ExperimentResult:
    results: dict  # method tag -> ReachResult
    runs: list = field(default_factory=list)
    containment: dict = field(default_factory=dict)  # method tag -> {k: fraction}
    meta: dict = field(default_factory=dict)


def run_ss(cfg: ExperimentConfig) -> ReachResult:
    """State-space baseline from the initial state set estimated from ``y_init``."""
    ss = cfg.state_space()
    spec = cfg.spec()
    X0 = estimate_initial_state_set(ss, cfg.y_init, spec, cfg.p)
    return reach_ss_series(ss, X0, spec, cfg.p, cfg.p + cfg.k_h)


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Every requested method, each on its own label registry.

    Numerical failures (conversion, estimation, sampling equivalence)
    propagate to the caller.
    """
    m = cfg.armax()
    results = {}
    for method in cfg.methods:
        if method == SS_METHOD:
            results[method] = run_ss(cfg)
        else:
            results[method] = run_method(method, m, cfg.y_init, cfg.spec(), cfg.k_h, cfg.k_init)
    runs: list[SampleRun] = []
    containment = {}
    if cfg.n_samples > 0:
        runs = run_samples(m, cfg.y_init, cfg.spec(), cfg.k_h, cfg.n_samples, cfg.seed)
        containment = {method: containment_report(runs, res) for method, res in results.items()}
    meta = {
        "model_type": cfg.model_type,
        "p": cfg.p,
        "k_h": cfg.k_h,
        "methods": list(results),
        "n_samples": cfg.n_samples,
        "seed": cfg.seed,
        "sampling_distribution": SAMPLING_DISTRIBUTION,
        "timings_s": {k: r.total_time for k, r in results.items()},
    }
    if cfg.model_type == "ss":
        meta["observer_gain"] = np.asarray(cfg.observer_gain).tolist()
        meta["nilpotency_residual"] = cfg.nilpotency_residual
    if runs:
        meta["max_equivalence_error"] = max(r.equivalence_error for r in runs)
    return ExperimentResult(results, runs, containment, meta)


def hull_rows(results: dict) -> list:
    """``(method, k, dim, lower, upper)`` sorted by method, step and dimension."""
    rows = []
    for method in sorted(results):
        res = results[method]
        for k in res.steps:
            lo, hi = res.hull(k)
            rows.extend((method, k, d, float(lo[d]), float(hi[d])) for d in range(lo.size))
    return rows
