"""Time-varying parameters of the stacked (reformulated) ARMAX model.

The stacked output ``y~(k:k+p-1)`` obeys

    y~(k:k+) = A~(k) y~_init + sum_{i=0}^{k+} B~_i(k) u~(k+ - i),

with ``A~(k) = A_ext^k`` and ``B~_i(k) = sum_{j<k} A_ext^j B_ext,i-j``.
:func:`params_direct` evaluates these sums literally and serves as the
reference; the recursions used by the reachability algorithms live in
:func:`advance_params`, :func:`step_param` and :class:`Companion`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .models import ArmaxModel

EQ_TOL = 1e-12


class ContractError(ValueError):
    """A recursion was applied outside the index range where it holds."""


@dataclass
class StackedParams:
    """Extended matrices of a model, optionally with the parameters at step ``k``.

    ``B_tilde`` maps index i to ``B~_i(k)``; only indices that have been
    computed are present.
    """

    A_ext: np.ndarray
    B_ext_blocks: tuple
    p: int
    n_y: int
    k: int | None = None
    A_tilde: np.ndarray | None = None
    B_tilde: dict = field(default_factory=dict)

    def B_ext(self, i: int) -> np.ndarray:
        """``B_ext,i``; zero for i outside 0..p."""
        if 0 <= i <= self.p:
            return self.B_ext_blocks[i]
        return np.zeros_like(self.B_ext_blocks[0])

    @property
    def k_plus(self) -> int:
        return self.k + self.p - 1

    def at(self, i: int) -> np.ndarray:
        try:
            return self.B_tilde[i]
        except KeyError:
            raise ContractError(f"B~_{i}({self.k}) is not available in these parameters") from None


def build_extended(m: ArmaxModel) -> StackedParams:
    p, n_y = m.p, m.n_y
    A_ext = np.zeros((p * n_y, p * n_y))
    A_ext[:-n_y, n_y:] = np.eye((p - 1) * n_y)
    for i in range(1, p + 1):
        # bottom block row is [A_p ... A_1]
        col = (p - i) * n_y
        A_ext[-n_y:, col:col + n_y] = m.A_bar[i - 1]
    blocks = []
    for B in m.B_bar:
        Be = np.zeros((p * n_y, m.n_ut))
        Be[-n_y:] = B
        blocks.append(Be)
    return StackedParams(A_ext=A_ext, B_ext_blocks=tuple(blocks), p=p, n_y=n_y)


def params_direct(sp: StackedParams, k: int):
    """``(A~(k), [B~_0(k), ..., B~_{k+}(k)])`` by literal summation.

    Summands with a zero ``B_ext`` factor are skipped, which does not change
    the value.
    """
    if k < 1:
        raise ContractError("parameters are defined for k >= 1")
    p = sp.p
    powers = [np.eye(sp.A_ext.shape[0])]
    for _ in range(k):
        powers.append(powers[-1] @ sp.A_ext)
    k_plus = k + p - 1
    B = []
    for i in range(k_plus + 1):
        acc = np.zeros_like(sp.B_ext_blocks[0])
        for j in range(max(0, i - p), min(k - 1, i) + 1):
            acc = acc + powers[j] @ sp.B_ext(i - j)
        B.append(acc)
    return powers[k], B


def direct_params(sp: StackedParams, k: int) -> StackedParams:
    A, B = params_direct(sp, k)
    return StackedParams(sp.A_ext, sp.B_ext_blocks, sp.p, sp.n_y, k=k, A_tilde=A,
                         B_tilde=dict(enumerate(B)))


class Companion:
    """Products with the block-companion ``A_ext`` using only its bottom block row."""

    def __init__(self, sp: StackedParams):
        self.n_y = sp.n_y
        self.bottom = sp.A_ext[-sp.n_y:]

    def mul(self, X: np.ndarray) -> np.ndarray:
        """``A_ext @ X``."""
        return np.concatenate([X[self.n_y:], self.bottom @ X], axis=0)

    def power(self, k: int) -> np.ndarray:
        X = np.eye(self.bottom.shape[1])
        for _ in range(k):
            X = self.mul(X)
        return X

    def powers(self, k: int) -> list:
        """``[A_ext^0, ..., A_ext^k]``."""
        out = [np.eye(self.bottom.shape[1])]
        for _ in range(k):
            out.append(self.mul(out[-1]))
        return out


def advance_params(sp: StackedParams, dk: int) -> StackedParams:
    """Parameters at ``k + dk`` from those at ``k``.

    Only indices ``i >= p + dk`` can be advanced this way; the result holds
    exactly those (up to the new ``k+``).
    """
    if dk < 0:
        raise ContractError("dk must be non-negative")
    if sp.k is None or sp.A_tilde is None:
        raise ContractError("parameters at a step k are required")
    comp = Companion(sp)
    P = comp.power(dk)
    new_k = sp.k + dk
    B = {}
    for i in range(sp.p + dk, new_k + sp.p):
        src = i - dk
        if src not in sp.B_tilde:
            raise ContractError(f"B~_{src}({sp.k}) missing; cannot advance to index {i}")
        B[i] = P @ sp.B_tilde[src]
    return StackedParams(sp.A_ext, sp.B_ext_blocks, sp.p, sp.n_y, k=new_k,
                         A_tilde=P @ sp.A_tilde, B_tilde=B)


def advance_param(sp: StackedParams, i: int, dk: int) -> np.ndarray:
    """Single-index form of :func:`advance_params`; rejects ``i < p + dk``."""
    if i < sp.p + dk:
        raise ContractError(f"index {i} < p + dk = {sp.p + dk}: the shift recursion does not hold")
    return Companion(sp).power(dk) @ sp.at(i - dk)


def frozen_param_check(sp: StackedParams, i: int, k: int, dk: int) -> bool:
    """True when ``B~_i(k + dk)`` equals ``B~_i(k)`` (expected for every ``i < k``)."""
    if not (0 <= i < k) or dk < 0:
        raise ContractError(f"frozen-parameter property needs 0 <= i < k and dk >= 0 (i={i}, k={k}, dk={dk})")
    _, B_now = params_direct(sp, k)
    _, B_later = params_direct(sp, k + dk)
    return bool(np.allclose(B_now[i], B_later[i], rtol=0.0, atol=EQ_TOL))


def step_param(sp: StackedParams, i: int, k: int | None = None) -> np.ndarray:
    """``B~_{i+1}(k)`` from ``B~_i(k)``:

    ``A_ext B~_i + B_ext,i+1 - A_ext^k B_ext,i+1-k``.
    """
    if k is not None and k != sp.k:
        raise ContractError(f"parameters describe step {sp.k}, not {k}")
    k = sp.k
    if sp.A_tilde is None:
        raise ContractError("A~(k) is required")
    comp = Companion(sp)
    out = comp.mul(sp.at(i)) + sp.B_ext(i + 1)
    if 0 <= i + 1 - k <= sp.p:
        out = out - sp.A_tilde @ sp.B_ext(i + 1 - k)
    return out


def params_by_recursion(sp: StackedParams, k: int, last: int | None = None,
                        comp: Companion | None = None) -> StackedParams:
    """``A~(k)`` by companion products and ``B~_0..B~_last`` by chaining :func:`step_param`.

    ``last`` defaults to ``k+``.
    """
    comp = comp or Companion(sp)
    A = comp.power(k)
    out = StackedParams(sp.A_ext, sp.B_ext_blocks, sp.p, sp.n_y, k=k, A_tilde=A,
                        B_tilde={0: sp.B_ext(0).copy()})
    last = out.k_plus if last is None else last
    for i in range(last):
        out.B_tilde[i + 1] = step_param(out, i)
    return out


def b_tilde_direct(sp: StackedParams, i: int, k: int, powers: list) -> np.ndarray:
    """Single ``B~_i(k)`` by literal summation; ``powers`` must reach ``A_ext^min(k-1, i)``."""
    acc = np.zeros_like(sp.B_ext_blocks[0])
    for j in range(max(0, i - sp.p), min(k - 1, i) + 1):
        acc = acc + powers[j] @ sp.B_ext(i - j)
    return acc
