"""Monte-Carlo trajectories and containment checks against reachable sets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import CHANNELS, ArmaxModel, UncertaintySpec, simulate_armax
from .params import build_extended, params_direct
from .reach import ReachResult
from .sets import contains_points

SAMPLING_DISTRIBUTION = "uniform over the generator factor box [-1, 1]^q"
EQUIVALENCE_TOL = 1e-8


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based (Philox) generator keyed by ``(seed, stream)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, stream])))


def sample_point(z, rng: np.random.Generator, factors=None) -> np.ndarray:
    """``c + G lam`` with ``lam`` uniform on the factor box (or given)."""
    q = z.generators.shape[1]
    lam = rng.uniform(-1.0, 1.0, size=q) if factors is None else np.asarray(factors, dtype=float)
    return z.center + z.generators @ lam


@dataclass
class SampleRun:
    seed: int
    index: int
    u: np.ndarray
    w: np.ndarray
    v: np.ndarray
    y: np.ndarray  # from the stacked model
    y_recursive: np.ndarray  # from the ARMAX recursion
    first_step: int

    @property
    def equivalence_error(self) -> float:
        k = self.first_step
        return float(np.max(np.abs(self.y[k:] - self.y_recursive[k:]), initial=0.0))

    def output(self, k: int) -> np.ndarray:
        return self.y[k]


def stacked_outputs(m: ArmaxModel, y_init, ut: np.ndarray, k_last: int, params=None) -> np.ndarray:
    """``y(0..k_last)`` from the stacked model evaluated at every ``k >= p``.

    ``y(k)`` is the first block of ``A~(k) y~_init + sum_i B~_i(k) u~(k+ - i)``;
    ``ut`` must cover steps up to ``k_last + p - 1``. ``params`` may hold
    precomputed ``(A~(k), B~(k))`` for ``k = p..k_last``.
    """
    p, n_y = m.p, m.n_y
    y0 = np.asarray(y_init, dtype=float).reshape(-1)
    y = np.zeros((k_last + 1, n_y))
    y[:p] = y0.reshape(p, n_y)
    if params is None:
        sp = build_extended(m)
        params = [params_direct(sp, k) for k in range(p, k_last + 1)]
    for k, (A, B) in zip(range(p, k_last + 1), params):
        k_plus = k + p - 1
        stacked = A @ y0
        for i in range(k_plus + 1):
            stacked = stacked + B[i] @ ut[k_plus - i]
        y[k] = stacked[:n_y]
    return y


def run_samples(m: ArmaxModel, y_init, spec: UncertaintySpec, k_h: int, n_samples: int,
                seed: int = 0) -> list[SampleRun]:
    """Sample disturbance realizations and evaluate the output trajectories.

    Each run draws ``u(k), w(k), v(k)`` from the configured sets (uniform in
    the factor box) and evaluates the outputs both with the stacked model and
    with the ARMAX recursion. A disagreement above 1e-8 raises ``RuntimeError``.
    """
    if n_samples <= 0:
        return []
    p = m.p
    k_last = p + k_h
    n_steps = k_last + p
    templates = {c: [spec.template(c, k) for k in range(n_steps)] for c in CHANNELS}
    sp = build_extended(m)
    params = [params_direct(sp, k) for k in range(p, k_last + 1)]
    y0 = np.asarray(y_init, dtype=float).reshape(-1)
    runs = []
    for s in range(n_samples):
        rng = make_rng(seed, s)
        draws = {c: np.array([sample_point(z, rng) for z in templates[c]]) for c in CHANNELS}
        ut = np.hstack([draws[c] for c in CHANNELS])
        y = stacked_outputs(m, y0, ut, k_last, params)
        y_rec = simulate_armax(m, y0, ut, k_last)
        run = SampleRun(seed, s, draws["u"], draws["w"], draws["v"], y, y_rec, p)
        if run.equivalence_error > EQUIVALENCE_TOL * max(1.0, float(np.max(np.abs(y_rec)))):
            raise RuntimeError(f"stacked and recursive outputs disagree by {run.equivalence_error:.3e} (run {s})")
        runs.append(run)
    return runs


def containment_report(runs: list[SampleRun], result: ReachResult, tol: float = 1e-7) -> dict:
    """Fraction of sampled outputs inside ``Y(k)``, for each step of ``result``."""
    report = {}
    if not runs:
        return report
    for k in result.steps:
        if any(k >= r.y.shape[0] for r in runs):
            raise ValueError(f"sampled trajectories end before step {k}")
        inside = contains_points(result.set_at(k), np.array([r.y[k] for r in runs]), tol)
        report[k] = float(np.mean(inside))
    return report
