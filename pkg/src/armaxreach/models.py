"""State-space and ARMAX models, conversion between them, point simulation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .sets import (
    DimensionError,
    LabelRegistry,
    SymbolicZonotope,
    Zonotope,
    cartesian_product_all,
)

NILPOTENCY_TOL = 1e-8
CHANNELS = ("u", "w", "v")


class ConversionError(RuntimeError):
    """No valid deadbeat gain for the requested order."""

    def __init__(self, message: str, minimal_order: int | None = None):
        super().__init__(message)
        self.minimal_order = minimal_order


def _matrix(x, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim == 1:
        a = a.reshape(1, -1) if a.size else a.reshape(0, 0)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be a matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    """``x(k+1) = A x + B u + w``,  ``y = C x + D u + v``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray = None

    def __post_init__(self):
        A = _matrix(self.A, "A")
        B = _matrix(self.B, "B")
        C = _matrix(self.C, "C")
        n_x = A.shape[0]
        if A.shape != (n_x, n_x):
            raise DimensionError(f"A must be square, got {A.shape}")
        if B.shape[0] != n_x:
            raise DimensionError(f"B has {B.shape[0]} rows, expected {n_x}")
        if C.shape[1] != n_x:
            raise DimensionError(f"C has {C.shape[1]} columns, expected {n_x}")
        D = np.zeros((C.shape[0], B.shape[1])) if self.D is None else _matrix(self.D, "D")
        if D.shape != (C.shape[0], B.shape[1]):
            raise DimensionError(f"D has shape {D.shape}, expected {(C.shape[0], B.shape[1])}")
        for name, val in zip("ABCD", (A, B, C, D)):
            object.__setattr__(self, name, val)

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def n_y(self) -> int:
        return self.C.shape[0]

    def observability_matrix(self, p: int) -> np.ndarray:
        blocks, CA = [], self.C
        for _ in range(p):
            blocks.append(CA)
            CA = CA @ self.A
        return np.vstack(blocks)


@dataclass(frozen=True, eq=False)
class ArmaxModel:
    """``y(k) = sum_i A_bar[i-1] y(k-i) + sum_i B_bar[i] u~(k-i)``.

    ``A_bar`` holds p matrices (n_y x n_y) for lags 1..p and ``B_bar`` holds
    p+1 matrices (n_y x n_u~) for lags 0..p. The combined input is ordered
    (u, w, v).
    """

    A_bar: Sequence[np.ndarray]
    B_bar: Sequence[np.ndarray]
    n_u: int
    n_w: int
    n_v: int

    def __post_init__(self):
        A_bar = tuple(_matrix(a, f"A_bar[{i + 1}]") for i, a in enumerate(self.A_bar))
        B_bar = tuple(_matrix(b, f"B_bar[{i}]") for i, b in enumerate(self.B_bar))
        p = len(A_bar)
        if p < 1:
            raise ValueError("ARMAX order must be at least 1")
        if len(B_bar) != p + 1:
            raise DimensionError(f"expected {p + 1} B_bar matrices, got {len(B_bar)}")
        n_y = A_bar[0].shape[0]
        n_ut = self.n_u + self.n_w + self.n_v
        for i, a in enumerate(A_bar):
            if a.shape != (n_y, n_y):
                raise DimensionError(f"A_bar[{i + 1}] has shape {a.shape}, expected {(n_y, n_y)}")
        for i, b in enumerate(B_bar):
            if b.shape != (n_y, n_ut):
                raise DimensionError(f"B_bar[{i}] has shape {b.shape}, expected {(n_y, n_ut)}")
        object.__setattr__(self, "A_bar", A_bar)
        object.__setattr__(self, "B_bar", B_bar)

    @property
    def p(self) -> int:
        return len(self.A_bar)

    @property
    def n_y(self) -> int:
        return self.A_bar[0].shape[0]

    @property
    def n_ut(self) -> int:
        return self.n_u + self.n_w + self.n_v


def _as_template(z) -> Zonotope:
    if isinstance(z, Zonotope):
        return z
    if isinstance(z, SymbolicZonotope):
        return z.to_zonotope()
    return Zonotope.point(z)


def _is_per_step(val) -> bool:
    # a sequence of sets, or a 2-D array holding one point per row
    if isinstance(val, (Zonotope, SymbolicZonotope)):
        return False
    if isinstance(val, (list, tuple)) and val and isinstance(val[0], (Zonotope, SymbolicZonotope)):
        return True
    return np.ndim(val) == 2


@dataclass(frozen=True, eq=False)
class InputDecomposition:
    """Combined input sets written as a constant set plus a moving offset.

    ``offsets`` is either one vector (constant) or an array with one row per
    step.
    """

    const: Zonotope
    offsets: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "const", _as_template(self.const))
        off = np.asarray(self.offsets, dtype=float)
        if off.shape[-1] != self.const.dim:
            raise DimensionError("offset length does not match the constant set")
        object.__setattr__(self, "offsets", off)

    def offset(self, i: int) -> np.ndarray:
        if self.offsets.ndim == 1:
            return self.offsets
        if not 0 <= i < self.offsets.shape[0]:
            raise IndexError(f"no input offset for step {i}")
        return self.offsets[i]


class UncertaintySpec:
    """Input, process-disturbance and measurement-disturbance sets.

    Each channel is either one set used at every step or a sequence with one
    set per step. Labelled versions are created on first use, with fresh
    labels per (channel, step), and cached so that every query for the same
    step returns the same labels.

    Args:
        U, W, V: :class:`Zonotope` (or a point given as a vector), or a
            sequence of them.
        horizon: last step index that may be queried. Defaults to the
            shortest per-step sequence, or unbounded if all are constant.
        decomposition: optional :class:`InputDecomposition` of the combined
            sets; derived automatically when the generators do not vary.
        registry: label source; a fresh one is created if omitted.
    """

    def __init__(self, U, W, V, horizon: int | None = None,
                 decomposition: InputDecomposition | None = None,
                 registry: LabelRegistry | None = None):
        self._channels = {}
        lengths = []
        for name, val in zip(CHANNELS, (U, W, V)):
            if _is_per_step(val):
                seq = [_as_template(z) for z in val]
                if not seq:
                    raise ValueError(f"empty per-step sequence for channel {name}")
                if len({z.dim for z in seq}) != 1:
                    raise DimensionError(f"channel {name} changes dimension over time")
                self._channels[name] = seq
                lengths.append(len(seq))
            else:
                self._channels[name] = _as_template(val)
        if lengths:
            max_h = min(lengths) - 1
            if horizon is None:
                horizon = max_h
            elif horizon > max_h:
                raise ValueError(f"horizon {horizon} exceeds the {max_h + 1} per-step sets given")
        self.horizon = horizon
        self.registry = registry if registry is not None else LabelRegistry()
        self._cache: dict = {}
        self._combined: dict = {}
        self._decomposition = decomposition
        if decomposition is not None:
            self._check_decomposition(decomposition)

    def _dim(self, name: str) -> int:
        ch = self._channels[name]
        return ch.dim if isinstance(ch, Zonotope) else ch[0].dim

    @property
    def n_u(self) -> int:
        return self._dim("u")

    @property
    def n_w(self) -> int:
        return self._dim("w")

    @property
    def n_v(self) -> int:
        return self._dim("v")

    @property
    def n_ut(self) -> int:
        return self.n_u + self.n_w + self.n_v

    def _check_step(self, k: int):
        if k < 0 or (self.horizon is not None and k > self.horizon):
            raise IndexError(f"step {k} outside the configured horizon 0..{self.horizon}")

    def template(self, name: str, k: int) -> Zonotope:
        self._check_step(k)
        ch = self._channels[name]
        return ch if isinstance(ch, Zonotope) else ch[k]

    def is_constant(self, name: str) -> bool:
        return isinstance(self._channels[name], Zonotope)

    def channel(self, name: str, k: int) -> SymbolicZonotope:
        key = (name, k)
        if key not in self._cache:
            self._cache[key] = self.template(name, k).labeled(self.registry)
        return self._cache[key]

    def combined(self, k: int) -> SymbolicZonotope:
        if k not in self._combined:
            self._combined[k] = cartesian_product_all([self.channel(c, k) for c in CHANNELS])
        return self._combined[k]

    def combined_template(self, k: int) -> Zonotope:
        parts = [self.template(c, k) for c in CHANNELS]
        center = np.concatenate([z.center for z in parts])
        G = np.zeros((center.size, sum(z.n_generators for z in parts)))
        r = col = 0
        for z in parts:
            G[r:r + z.dim, col:col + z.n_generators] = z.generators
            r += z.dim
            col += z.n_generators
        return Zonotope(center, G)

    def prepare(self, last_step: int):
        """Label every combined set up to ``last_step`` ahead of time."""
        for k in range(last_step + 1):
            self.combined(k)

    def _check_decomposition(self, dec: InputDecomposition):
        if dec.const.dim != self.n_ut:
            raise DimensionError("decomposition dimension does not match the combined input")
        if self.horizon is not None:
            last = self.horizon
        elif dec.offsets.ndim == 2:
            last = dec.offsets.shape[0] - 1
        else:
            last = 0
        if dec.offsets.ndim == 2 and dec.offsets.shape[0] <= last:
            raise ValueError(f"decomposition offsets cover {dec.offsets.shape[0]} steps, need {last + 1}")
        for k in range(last + 1):
            t = self.combined_template(k)
            same_gens = t.generators.shape == dec.const.generators.shape and np.allclose(
                t.generators, dec.const.generators, atol=1e-12)
            if not same_gens or not np.allclose(t.center, dec.const.center + dec.offset(k), atol=1e-12):
                raise ValueError(f"input decomposition does not reproduce the combined set at step {k}")

    def decomposition(self) -> InputDecomposition:
        """Constant set plus offsets, or ``ValueError`` if the generators vary."""
        if self._decomposition is not None:
            return self._decomposition
        first = self.combined_template(0)
        const = Zonotope(np.zeros(first.dim), first.generators)
        if all(self.is_constant(c) for c in CHANNELS):
            self._decomposition = InputDecomposition(const, first.center)
            return self._decomposition
        offsets = []
        for k in range(self.horizon + 1):
            t = self.combined_template(k)
            if t.generators.shape != first.generators.shape or not np.array_equal(
                    t.generators, first.generators):
                raise ValueError("input sets change shape over time; no constant-plus-offset form")
            offsets.append(t.center)
        self._decomposition = InputDecomposition(const, np.array(offsets))
        return self._decomposition


def combined_input_set(spec: UncertaintySpec, k: int) -> SymbolicZonotope:
    """``U(k) x W(k) x V(k)`` with cached labels."""
    return spec.combined(k)


def _independent_columns(F: np.ndarray, G: np.ndarray, max_power: int):
    """Luenberger scan of ``g_i, F g_i, F^2 g_i, ...`` returning chain lengths."""
    n, m = G.shape
    basis = np.zeros((n, 0))
    lengths = [0] * m
    active = [True] * m
    powers = [G[:, i].copy() for i in range(m)]
    for _ in range(max_power):
        for i in range(m):
            if not active[i]:
                continue
            v = powers[i]
            if basis.shape[1]:
                resid = v - basis @ (basis.T @ v)
            else:
                resid = v
            scale_v = max(1.0, np.linalg.norm(v))
            if basis.shape[1] < n and np.linalg.norm(resid) > 1e-10 * scale_v:
                basis = np.hstack([basis, (resid / np.linalg.norm(resid))[:, None]])
                lengths[i] += 1
                powers[i] = F @ v
            else:
                active[i] = False
        if not any(active):
            break
    return lengths, basis.shape[1]


def deadbeat_gain(ss: StateSpaceModel, p: int) -> np.ndarray:
    """Observer gain ``M`` with ``(A + M C)^p = 0``.

    Deadbeat state feedback is designed for the dual pair ``(A^T, C^T)`` in
    Luenberger controller form; ``M`` is its transpose. The result is checked
    numerically before it is returned.

    Raises:
        ConversionError: if ``(A, C)`` is unobservable, or its observability
            index exceeds ``p`` (the minimal feasible order is attached).
    """
    A, C = ss.A, ss.C
    n = ss.n_x
    F, G = A.T, C.T
    lengths, rank = _independent_columns(F, G, n)
    if rank < n:
        raise ConversionError(
            f"observability rank test failed: rank {rank} < n_x = {n}; (A, C) is unobservable")
    index = max(lengths)
    if index > p:
        raise ConversionError(
            f"observability index {index} exceeds order p = {p}; smallest feasible order is {index}",
            minimal_order=index)
    inputs = [i for i in range(G.shape[1]) if lengths[i]]
    cols = []
    for i in inputs:
        v = G[:, i]
        for _ in range(lengths[i]):
            cols.append(v)
            v = F @ v
    T = np.column_stack(cols)
    Tinv = np.linalg.inv(T)
    rows, last_rows = [], []
    pos = 0
    for i in inputs:
        pos += lengths[i]
        q = Tinv[pos - 1]
        for _ in range(lengths[i]):
            rows.append(q)
            q = q @ F
        last_rows.append(len(rows) - 1)
    P = np.vstack(rows)
    Pinv = np.linalg.inv(P)
    F_bar = P @ F @ Pinv
    G_bar = P @ G
    shift = np.zeros((n, n))
    for r in range(n - 1):
        if r not in last_rows:
            shift[r, r + 1] = 1.0
    K_bar, *_ = np.linalg.lstsq(G_bar, shift - F_bar, rcond=None)
    M = (K_bar @ P).T
    validate_deadbeat(ss, M, p)
    return M


def nilpotency_residual(ss: StateSpaceModel, M: np.ndarray, p: int) -> float:
    return float(np.linalg.norm(np.linalg.matrix_power(ss.A + M @ ss.C, p), "fro"))


def validate_deadbeat(ss: StateSpaceModel, M, p: int) -> float:
    M = _matrix(M, "M")
    if M.shape != (ss.n_x, ss.n_y):
        raise DimensionError(f"M has shape {M.shape}, expected {(ss.n_x, ss.n_y)}")
    resid = nilpotency_residual(ss, M, p)
    bound = NILPOTENCY_TOL * max(1.0, np.linalg.norm(ss.A, "fro") ** p)
    if resid > bound:
        raise ConversionError(f"(A + M C)^{p} has norm {resid:.3e} > {bound:.3e}; M is not deadbeat")
    return resid


def ss_to_armax(ss: StateSpaceModel, M, p: int) -> ArmaxModel:
    """Equivalent ARMAX model of order ``p`` from a deadbeat observer gain."""
    M = _matrix(M, "M")
    validate_deadbeat(ss, M, p)
    n_x, n_u, n_y = ss.n_x, ss.n_u, ss.n_y
    D_ut = np.hstack([ss.D, np.zeros((n_y, n_x)), np.eye(n_y)])
    B_ut = np.hstack([ss.B, np.eye(n_x), np.zeros((n_x, n_y))])
    closed = ss.A + M @ ss.C
    right = B_ut + M @ D_ut
    A_bar, B_bar = [], [D_ut]
    CP = ss.C
    for _ in range(p):
        A_bar.append(-CP @ M)
        B_bar.append(CP @ right)
        CP = CP @ closed
    return ArmaxModel(A_bar, B_bar, n_u=n_u, n_w=n_x, n_v=n_y)


def _sequence(x, rows: int, cols: int, name: str) -> np.ndarray:
    if x is None:
        return np.zeros((rows, cols))
    a = np.asarray(x, dtype=float)
    if a.ndim == 1 and cols == a.size:
        a = np.tile(a, (rows, 1))
    if a.ndim != 2 or a.shape[1] != cols or a.shape[0] < rows:
        raise DimensionError(f"{name} needs shape ({rows}, {cols}), got {a.shape}")
    return a[:rows]


def simulate_ss(ss: StateSpaceModel, x0, u=None, w=None, v=None, horizon: int = 0) -> np.ndarray:
    """Outputs ``y(0..horizon)`` as an array of shape (horizon+1, n_y)."""
    x = np.asarray(x0, dtype=float).reshape(-1)
    if x.size != ss.n_x:
        raise DimensionError(f"x0 has length {x.size}, expected {ss.n_x}")
    K = horizon
    u = _sequence(u, K + 1, ss.n_u, "u")
    w = _sequence(w, K + 1, ss.n_x, "w")
    v = _sequence(v, K + 1, ss.n_y, "v")
    y = np.empty((K + 1, ss.n_y))
    for k in range(K + 1):
        y[k] = ss.C @ x + ss.D @ u[k] + v[k]
        x = ss.A @ x + ss.B @ u[k] + w[k]
    return y


def simulate_armax(m: ArmaxModel, y_init, ut, horizon: int) -> np.ndarray:
    """Outputs ``y(0..horizon)``; the first p rows are the given ``y_init``."""
    y_init = np.asarray(y_init, dtype=float).reshape(-1, m.n_y) if np.size(y_init) else np.zeros((0, m.n_y))
    if y_init.shape[0] != m.p:
        raise ValueError(f"need exactly p = {m.p} initial outputs, got {y_init.shape[0]}")
    ut = _sequence(ut, horizon + 1, m.n_ut, "u~")
    y = np.zeros((max(horizon + 1, m.p), m.n_y))
    y[:m.p] = y_init
    for k in range(m.p, horizon + 1):
        acc = m.B_bar[0] @ ut[k]
        for i in range(1, m.p + 1):
            acc = acc + m.A_bar[i - 1] @ y[k - i] + m.B_bar[i] @ ut[k - i]
        y[k] = acc
    return y[:horizon + 1]


def stack_inputs(u, w, v) -> np.ndarray:
    """Row-wise (u, w, v) concatenation into combined inputs."""
    return np.hstack([np.atleast_2d(u), np.atleast_2d(w), np.atleast_2d(v)])
