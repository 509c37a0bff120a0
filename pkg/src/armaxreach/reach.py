"""Reachable output sets of ARMAX models, plus the state-space baseline.

Methods (tags used in results and the CLI):

* ``ARMAX``: set-based evaluation of the ARMAX recursion with exact addition.
* ``ARMAX-DP``: the same recursion with Minkowski sums, i.e. dependencies dropped.
* ``ARMAX-ONESHOT``: direct evaluation of the stacked model at a given step.
* ``ARMAX-ALG1``: recursive evaluation of the stacked model for arbitrary sets.
* ``ARMAX-ALG2``: constant-plus-offset variant whose cost is linear in the horizon.
* ``SS``: state-space reachability from an initial state set.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .models import ArmaxModel, StateSpaceModel, UncertaintySpec
from .params import (
    Companion,
    StackedParams,
    b_tilde_direct,
    build_extended,
    params_by_recursion,
    params_direct,
    step_param,
)
from .sets import (
    DimensionError,
    LabelRegistry,
    SymbolicZonotope,
    Zonotope,
    exact_sum,
    interval_hull,
    linear_map,
    minkowski_sum,
    minkowski_sum_all,
)

PINV_RCOND = 1e-10


class EstimationError(RuntimeError):
    """The initial state cannot be recovered from the first p outputs."""


@dataclass
class ReachResult:
    """Output sets ``Y(k)`` for contiguous steps ``k_start..k_end``.

    Stacked methods store their stacked sets; the per-step sets are cut out
    of them on access, so unstacking is not part of the measured run time.
    """

    method: str
    n_y: int
    timings: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    _entries: dict = field(default_factory=dict, repr=False)
    _cache: dict = field(default_factory=dict, repr=False)

    def _add(self, k: int, source: SymbolicZonotope, row: int = 0):
        self._entries[k] = (source, row)

    @property
    def steps(self) -> list:
        return sorted(self._entries)

    def set_at(self, k: int) -> SymbolicZonotope:
        if k not in self._cache:
            source, row = self._entries[k]
            if row == 0 and source.dim == self.n_y:
                self._cache[k] = source
            else:
                self._cache[k] = source.rows(row, row + self.n_y)
        return self._cache[k]

    @property
    def sets(self) -> list:
        return [self.set_at(k) for k in self.steps]

    def hull(self, k: int):
        return interval_hull(self.set_at(k))

    def hulls(self) -> dict:
        return {k: self.hull(k) for k in self.steps}

    @property
    def total_time(self) -> float:
        return float(sum(self.timings))


def _y_init(m: ArmaxModel, y_init) -> np.ndarray:
    y = np.asarray(y_init, dtype=float)
    if y.size != m.p * m.n_y:
        raise DimensionError(f"y_init needs p * n_y = {m.p * m.n_y} entries, got {y.size}")
    return y.reshape(m.p, m.n_y)


def _check_spec(m: ArmaxModel, spec: UncertaintySpec, last_step: int):
    if (spec.n_u, spec.n_w, spec.n_v) != (m.n_u, m.n_w, m.n_v):
        raise DimensionError(
            f"uncertainty dims (u, w, v) = {(spec.n_u, spec.n_w, spec.n_v)} do not match the model "
            f"{(m.n_u, m.n_w, m.n_v)}")
    if spec.horizon is not None and spec.horizon < last_step:
        raise ValueError(f"input sets are needed up to step {last_step}, configured horizon is {spec.horizon}")


def _recursion_terms(m, Y, spec, k):
    terms = [linear_map(m.A_bar[i - 1], Y[k - i]) for i in range(1, m.p + 1)]
    terms += [linear_map(m.B_bar[i], spec.combined(k - i)) for i in range(m.p + 1)]
    return terms


def reach_dependent(m: ArmaxModel, y_init, spec: UncertaintySpec, k_h: int) -> ReachResult:
    """``Y(k)`` for ``k = p..p+k_h`` by the ARMAX recursion with exact addition.

    The first p outputs are the measured points; the result is exact.
    """
    if k_h < 0:
        raise ValueError("horizon must be non-negative")
    y0 = _y_init(m, y_init)
    _check_spec(m, spec, m.p + k_h)
    Y = [SymbolicZonotope.point(y) for y in y0]
    res = ReachResult("ARMAX", m.n_y)
    for k in range(m.p, m.p + k_h + 1):
        t0 = time.perf_counter()
        Y.append(exact_sum(_recursion_terms(m, Y, spec, k)))
        res.timings.append(time.perf_counter() - t0)
        res._add(k, Y[k])
    return res


def reach_dependent_dp(m: ArmaxModel, y_init, spec: UncertaintySpec, k_h: int) -> ReachResult:
    """Like :func:`reach_dependent` but every addition is a Minkowski sum.

    The second operand of each sum gets fresh labels, so all dependencies
    between the summands are discarded. Over-approximates the exact sets.
    """
    if k_h < 0:
        raise ValueError("horizon must be non-negative")
    y0 = _y_init(m, y_init)
    _check_spec(m, spec, m.p + k_h)
    reg = spec.registry
    Y = [SymbolicZonotope.point(y) for y in y0]
    res = ReachResult("ARMAX-DP", m.n_y)
    for k in range(m.p, m.p + k_h + 1):
        t0 = time.perf_counter()
        terms = _recursion_terms(m, Y, spec, k)
        acc = terms[0]
        for t in terms[1:]:
            acc = minkowski_sum(acc, t.relabel(reg))
        Y.append(acc)
        res.timings.append(time.perf_counter() - t0)
        res._add(k, acc)
    return res


def reach_oneshot(m: ArmaxModel, y_init, spec: UncertaintySpec, k: int) -> SymbolicZonotope:
    """Stacked set ``Y(k) x ... x Y(k+p-1)`` straight from the stacked model."""
    if k < m.p:
        raise ValueError(f"k = {k} must be at least p = {m.p}")
    y0 = _y_init(m, y_init).reshape(-1)
    k_plus = k + m.p - 1
    _check_spec(m, spec, k_plus)
    sp = build_extended(m)
    A, B = params_direct(sp, k)
    terms = [SymbolicZonotope.point(A @ y0)]
    terms += [linear_map(B[i], spec.combined(k_plus - i)) for i in range(k_plus + 1)]
    return minkowski_sum_all(terms)


def reach_oneshot_series(m: ArmaxModel, y_init, spec: UncertaintySpec, k_init: int | None,
                         k_h: int) -> ReachResult:
    """Evaluate :func:`reach_oneshot` at ``k_init, k_init + p, ...`` up to ``p + k_h``."""
    k_init = m.p if k_init is None else k_init
    last = m.p + k_h
    res = ReachResult("ARMAX-ONESHOT", m.n_y)
    for k in range(k_init, last + 1, m.p):
        t0 = time.perf_counter()
        Yt = reach_oneshot(m, y_init, spec, k)
        res.timings.append(time.perf_counter() - t0)
        _emit(res, Yt, k, m.p, m.n_y, last)
    return res


def _emit(res: ReachResult, stacked: SymbolicZonotope, k: int, p: int, n_y: int, last: int):
    for j in range(p):
        if k + j <= last:
            res._add(k + j, stacked, j * n_y)


def _refresh_middle(sp: StackedParams, B: dict, k: int, powers: list, comp: Companion):
    """Recompute ``B~_p .. B~_{2p-1}`` at step ``k`` (direct sum, then step recursion)."""
    p = sp.p
    B[p] = b_tilde_direct(sp, p, k, powers)
    at_k = StackedParams(sp.A_ext, sp.B_ext_blocks, p, sp.n_y, k=k, A_tilde=comp.power(k),
                         B_tilde={p: B[p]})
    for i in range(p, 2 * p - 1):
        at_k.B_tilde[i + 1] = step_param(at_k, i)
        B[i + 1] = at_k.B_tilde[i + 1]


def _check_start(m: ArmaxModel, k_init, k_h):
    k_init = m.p if k_init is None else k_init
    if k_init < m.p:
        raise ValueError(f"k_init = {k_init} must be at least p = {m.p}")
    if k_h < 0:
        raise ValueError("horizon must be non-negative")
    return k_init


def reach_alg1(m: ArmaxModel, y_init, spec: UncertaintySpec, k_init: int | None = None,
               k_h: int = 0) -> ReachResult:
    """Reachable sets for ``k = k_init..p+k_h`` by recursion on the stacked model.

    Each iteration produces ``p`` consecutive sets; sets past ``p + k_h``
    are dropped. ``meta['iterations']`` counts loop passes.
    """
    k_init = _check_start(m, k_init, k_h)
    p, n_y = m.p, m.n_y
    last = p + k_h
    y0 = _y_init(m, y_init).reshape(-1)
    _check_spec(m, spec, last + p - 1)
    U = spec.combined
    res = ReachResult("ARMAX-ALG1", n_y)

    t0 = time.perf_counter()
    sp = build_extended(m)
    comp = Companion(sp)
    powers = comp.powers(p)
    A_p = powers[p]
    k, k_plus = k_init, k_init + p - 1
    par = params_by_recursion(sp, k, comp=comp)
    B = par.B_tilde
    S = minkowski_sum_all(
        [SymbolicZonotope.point(par.A_tilde @ y0)]
        + [linear_map(B[i], U(k_plus - i)) for i in range(p, k_plus + 1)], check=False)
    setup = time.perf_counter() - t0
    iterations = 0
    while k <= last:
        t0 = time.perf_counter()
        Yt = minkowski_sum_all([S] + [linear_map(B[i], U(k_plus - i)) for i in range(p)], check=False)
        _emit(res, Yt, k, p, n_y, last)
        k += p
        k_plus += p
        if k < 3 * p:
            _refresh_middle(sp, B, k, powers, comp)
        S = minkowski_sum_all(
            [linear_map(A_p, S)] + [linear_map(B[i], U(k_plus - i)) for i in range(p, 2 * p)], check=False)
        res.timings.append(time.perf_counter() - t0)
        iterations += 1
    res.meta.update(setup_time=setup, iterations=iterations, k_init=k_init)
    return res


def reach_alg2(m: ArmaxModel, y_init, spec: UncertaintySpec, k_init: int | None = None,
               k_h: int = 0) -> ReachResult:
    """Reachable sets when every combined input set is ``U_c + u_v(i)``.

    Only linear maps of the fixed-size sets ``T_c1``, ``T_c2`` and Minkowski
    sums are performed per iteration, so the cost grows linearly with the
    horizon. Generator counts of ``T_c1`` and ``T_c2`` per iteration are
    recorded in ``meta``.
    """
    k_init = _check_start(m, k_init, k_h)
    p, n_y = m.p, m.n_y
    last = p + k_h
    y0 = _y_init(m, y_init).reshape(-1)
    _check_spec(m, spec, last + p - 1)
    dec = spec.decomposition()
    U_c, u_v = dec.const, dec.offset
    reg = spec.registry
    res = ReachResult("ARMAX-ALG2", n_y)

    def const_term(Bi):
        return SymbolicZonotope._from_blocks(Bi @ U_c.center, (Bi @ U_c.generators,),
                                             (reg.issue(U_c.n_generators),))

    def const_sum(mats):
        z = minkowski_sum_all([const_term(Bi) for Bi in mats], check=False)
        # fixed-size sets are kept as one block
        return SymbolicZonotope._from_blocks(z.center, (z.generators,), (z.labels,))

    t0 = time.perf_counter()
    sp = build_extended(m)
    comp = Companion(sp)
    powers = comp.powers(p)
    A_p = powers[p]
    k, k_plus = k_init, k_init + p - 1
    par = params_by_recursion(sp, k, comp=comp)
    B = par.B_tilde
    frozen = set(range(k_init))
    S_c = const_sum([B[i] for i in range(k)])
    T_c1 = const_sum([B[i] for i in range(k, k_plus + 1)])
    s_v = par.A_tilde @ y0 + sum(B[i] @ u_v(k_plus - i) for i in range(p, k_plus + 1))
    T_c2 = None
    setup = time.perf_counter() - t0
    n_tc1, n_tc2 = [], []
    while k <= last:
        t0 = time.perf_counter()
        Y_c = minkowski_sum_all([S_c, T_c1], check=False)
        y_v = s_v + sum(B[i] @ u_v(k_plus - i) for i in range(p))
        _emit(res, Y_c.translate(y_v), k, p, n_y, last)
        k += p
        k_plus += p
        valid = set(frozen)
        if k < 3 * p:
            _refresh_middle(sp, B, k, powers, comp)
            valid |= set(range(p, 2 * p))
        if k == k_init + p:
            idx = range(k - p, k_plus - p + 1)
            if all(i in valid for i in idx):
                mats = [B[i] for i in idx]
            else:
                now = params_by_recursion(sp, k, last=k_plus - p, comp=comp)
                mats = [now.B_tilde[i] for i in idx]
            T_c2 = const_sum(mats)
        S_c = minkowski_sum(S_c, T_c2.relabel(reg), check=False)
        T_c1 = linear_map(A_p, T_c1)
        T_c2 = linear_map(A_p, T_c2)
        s_v = A_p @ s_v + sum(B[i] @ u_v(k_plus - i) for i in range(p, 2 * p))
        n_tc1.append(T_c1.n_generators)
        n_tc2.append(T_c2.n_generators)
        res.timings.append(time.perf_counter() - t0)
    res.meta.update(setup_time=setup, iterations=len(n_tc1), k_init=k_init,
                    T_c1_generators=n_tc1, T_c2_generators=n_tc2)
    return res


def _independent(center, gens, registry: LabelRegistry) -> SymbolicZonotope:
    G = np.hstack(gens) if gens else np.zeros((np.size(center), 0))
    return SymbolicZonotope._from_blocks(np.asarray(center, dtype=float), (G,), (registry.issue(G.shape[1]),))


def _ss_terms(ss: StateSpaceModel, spec: UncertaintySpec, k: int, powers: list):
    """Center and generator blocks of ``D U(k) + V(k) + sum_i C A^{i-1} (B U(k-i) + W(k-i))``."""
    U, W, V = (lambda j: spec.template("u", j)), (lambda j: spec.template("w", j)), (lambda j: spec.template("v", j))
    c = ss.D @ U(k).center + V(k).center
    gens = [ss.D @ U(k).generators, V(k).generators]
    for i in range(1, k + 1):
        CA = ss.C @ powers[i - 1]
        c = c + CA @ (ss.B @ U(k - i).center + W(k - i).center)
        gens += [CA @ ss.B @ U(k - i).generators, CA @ W(k - i).generators]
    return c, gens


def reach_ss(ss: StateSpaceModel, X0, spec: UncertaintySpec, k: int) -> SymbolicZonotope:
    """``Y(k)`` of the state-space model; all summands treated as independent."""
    X0 = X0 if isinstance(X0, (SymbolicZonotope, Zonotope)) else Zonotope.point(X0)
    if X0.dim != ss.n_x:
        raise DimensionError(f"X0 has dimension {X0.dim}, expected {ss.n_x}")
    if (spec.n_u, spec.n_w, spec.n_v) != (ss.n_u, ss.n_x, ss.n_y):
        raise DimensionError("uncertainty dimensions do not match the state-space model")
    powers = [np.eye(ss.n_x)]
    for _ in range(k):
        powers.append(powers[-1] @ ss.A)
    c, gens = _ss_terms(ss, spec, k, powers)
    CAk = ss.C @ powers[k]
    return _independent(c + CAk @ X0.center, [CAk @ X0.generators] + gens, spec.registry)


def reach_ss_series(ss: StateSpaceModel, X0, spec: UncertaintySpec, k_first: int, k_last: int) -> ReachResult:
    res = ReachResult("SS", ss.n_y)
    for k in range(k_first, k_last + 1):
        t0 = time.perf_counter()
        Y = reach_ss(ss, X0, spec, k)
        res.timings.append(time.perf_counter() - t0)
        res._add(k, Y)
    return res


def estimate_initial_state_set(ss: StateSpaceModel, y_init, spec: UncertaintySpec, p: int) -> SymbolicZonotope:
    """Initial state set consistent with the first ``p`` measured outputs.

    ``X(0) = pinv(O_p) (y~_init + (-H(0)) x ... x (-H(p-1)))`` where ``H(k)``
    collects everything in ``y(k)`` except ``C A^k x(0)``. ``y_init`` may be
    a (p, n_y) array of measurements or a set of dimension ``p * n_y``.
    """
    O = ss.observability_matrix(p)
    s = np.linalg.svd(O, compute_uv=False)
    rank = int(np.sum(s > PINV_RCOND * s[0])) if s.size and s[0] > 0 else 0
    if rank < ss.n_x:
        raise EstimationError(f"observability matrix O_{p} has rank {rank} < n_x = {ss.n_x}")
    O_pinv = np.linalg.pinv(O, rcond=PINV_RCOND)
    if isinstance(y_init, (SymbolicZonotope, Zonotope)):
        c, gens = y_init.center.copy(), [y_init.generators]
    else:
        c, gens = np.asarray(y_init, dtype=float).reshape(-1).copy(), []
    if c.size != p * ss.n_y:
        raise DimensionError(f"initial outputs need {p * ss.n_y} entries, got {c.size}")
    powers = [np.eye(ss.n_x)]
    for _ in range(p):
        powers.append(powers[-1] @ ss.A)
    for k in range(p):
        hc, hg = _ss_terms(ss, spec, k, powers)
        rows = slice(k * ss.n_y, (k + 1) * ss.n_y)
        c[rows] -= hc
        for G in hg:
            padded = np.zeros((p * ss.n_y, G.shape[1]))
            padded[rows] = -G
            gens.append(padded)
    return _independent(O_pinv @ c, [O_pinv @ G for G in gens], spec.registry)


def run_method(method: str, m: ArmaxModel, y_init, spec: UncertaintySpec, k_h: int,
               k_init: int | None = None) -> ReachResult:
    """Dispatch an ARMAX method by its tag."""
    if method == "ARMAX":
        return reach_dependent(m, y_init, spec, k_h)
    if method == "ARMAX-DP":
        return reach_dependent_dp(m, y_init, spec, k_h)
    if method == "ARMAX-ONESHOT":
        return reach_oneshot_series(m, y_init, spec, k_init, k_h)
    if method == "ARMAX-ALG1":
        return reach_alg1(m, y_init, spec, k_init, k_h)
    if method == "ARMAX-ALG2":
        return reach_alg2(m, y_init, spec, k_init, k_h)
    raise ValueError(f"unknown method {method!r}")


ARMAX_METHODS = ("ARMAX", "ARMAX-DP", "ARMAX-ONESHOT", "ARMAX-ALG1", "ARMAX-ALG2")
