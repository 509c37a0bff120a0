"""Zonotopes and symbolic zonotopes.

A symbolic zonotope carries one integer label per generator column. Two
generators with the same label (in the same or in different sets) are driven
by the same factor in [-1, 1], which is what lets exact addition keep track of
dependencies between set-valued variables.

Generator storage is block-based: a Minkowski sum of label-disjoint sets only
concatenates references to the operands' blocks, so its cost does not depend
on how many generators the operands hold. Blocks are joined into one matrix on
first access to :attr:`SymbolicZonotope.generators`.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

DEFAULT_TOL = 1e-9
COMPACT_TOL = 1e-14
LP_FEAS_TOL = 1e-10


class DimensionError(ValueError):
    """Operand dimensions do not fit together."""


class LabelCollisionError(ValueError):
    """A Minkowski sum was requested on operands that share labels."""


def _as_vector(x) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.ndim != 1:
        raise DimensionError(f"expected a vector, got shape {v.shape}")
    return v


def _as_generators(G, n: int) -> np.ndarray:
    if G is None:
        return np.zeros((n, 0))
    G = np.asarray(G, dtype=float)
    if G.size == 0:
        return np.zeros((n, 0))
    if G.ndim == 1:
        G = G.reshape(n, -1)
    if G.ndim != 2 or G.shape[0] != n:
        raise DimensionError(f"generator matrix of shape {G.shape} does not match dimension {n}")
    return G


class LabelRegistry:
    """Monotone source of fresh generator labels for one analysis run."""

    def __init__(self, start: int = 1):
        if start < 1:
            raise ValueError("labels are positive integers")
        self._next = int(start)

    @property
    def next_label(self) -> int:
        return self._next

    def issue(self, count: int) -> np.ndarray:
        """Return ``count`` labels never handed out before."""
        labels = np.arange(self._next, self._next + count, dtype=np.int64)
        self._next += int(count)
        return labels


@dataclass(frozen=True, eq=False)
class Zonotope:
    """Plain zonotope ``{c + G lam : ||lam||_inf <= 1}`` without labels.

    Used as a template for uncertainty sets; labels are attached when the set
    enters an analysis (see :meth:`labeled`).
    """

    center: np.ndarray
    generators: np.ndarray = field(default=None)

    def __post_init__(self):
        c = _as_vector(self.center)
        G = _as_generators(self.generators, c.size)
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(G))):
            raise ValueError("zonotope entries must be finite")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "generators", G)

    @classmethod
    def point(cls, p) -> "Zonotope":
        return cls(p, None)

    @classmethod
    def box(cls, center, radius) -> "Zonotope":
        c = _as_vector(center)
        r = np.broadcast_to(np.asarray(radius, dtype=float), c.shape)
        keep = r != 0
        return cls(c, np.diag(r)[:, keep])

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def n_generators(self) -> int:
        return self.generators.shape[1]

    def labeled(self, registry: LabelRegistry) -> "SymbolicZonotope":
        return SymbolicZonotope(self.center, self.generators, registry.issue(self.n_generators))


@dataclass(frozen=True, eq=False)
class LabeledMatrix:
    columns: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        cols = np.asarray(self.columns, dtype=float)
        if cols.ndim != 2:
            raise DimensionError("labeled matrix columns must be 2-D")
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if labels.size != cols.shape[1]:
            raise DimensionError(f"{labels.size} labels for {cols.shape[1]} columns")
        if np.unique(labels).size != labels.size:
            raise ValueError("labels within a labeled matrix must be distinct")
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "labels", labels)


def _labeled_sum(parts: Sequence[tuple[np.ndarray, np.ndarray]], n: int):
    """Sum labeled matrices; shared labels are added, output sorted by label."""
    parts = [(G, l) for G, l in parts if l.size]
    if not parts:
        return np.zeros((n, 0)), np.zeros(0, dtype=np.int64)
    for G, _ in parts:
        if G.shape[0] != n:
            raise DimensionError(f"row count {G.shape[0]} does not match {n}")
    all_labels = np.concatenate([l for _, l in parts])
    uniq, inverse = np.unique(all_labels, return_inverse=True)
    out = np.zeros((n, uniq.size))
    offset = 0
    for G, l in parts:
        # labels are distinct inside one operand, so fancy-index accumulation is safe
        out[:, inverse[offset:offset + l.size]] += G
        offset += l.size
    return out, uniq


def labeled_add(a: LabeledMatrix, b: LabeledMatrix) -> LabeledMatrix:
    """Add two labeled matrices.

    Columns that carry the same label are summed, all others are carried over.
    The result is ordered by ascending label, which makes the operation
    commutative bit for bit.
    """
    if a.columns.shape[0] != b.columns.shape[0]:
        raise DimensionError(f"row counts differ: {a.columns.shape[0]} vs {b.columns.shape[0]}")
    cols, labels = _labeled_sum([(a.columns, a.labels), (b.columns, b.labels)], a.columns.shape[0])
    return LabeledMatrix(cols, labels)


class SymbolicZonotope:
    """Zonotope whose generator columns carry unique positive integer labels.

    Args:
        center: vector of length n.
        generators: n x q matrix (``None`` or empty for a point).
        labels: q distinct positive integers.
    """

    __slots__ = ("center", "_gblocks", "_lblocks", "_G", "_labels", "_q")

    def __init__(self, center, generators=None, labels=None):
        c = _as_vector(center)
        G = _as_generators(generators, c.size)
        if labels is None:
            if G.shape[1]:
                raise ValueError("labels are required when generators are given")
            labels = np.zeros(0, dtype=np.int64)
        labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        if labels.size != G.shape[1]:
            raise DimensionError(f"{labels.size} labels for {G.shape[1]} generators")
        if labels.size and (labels.min() < 1 or np.unique(labels).size != labels.size):
            raise ValueError("labels must be distinct positive integers")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(G))):
            raise ValueError("zonotope entries must be finite")
        self._init(c, (G,), (labels,))

    def _init(self, c, gblocks, lblocks):
        self.center = c
        self._gblocks = tuple(gblocks)
        self._lblocks = tuple(lblocks)
        self._q = sum(l.size for l in self._lblocks)
        if len(self._gblocks) == 1:
            self._G, self._labels = self._gblocks[0], self._lblocks[0]
        else:
            self._G = self._labels = None

    @classmethod
    def _from_blocks(cls, center, gblocks, lblocks) -> "SymbolicZonotope":
        z = cls.__new__(cls)
        keep = [i for i, l in enumerate(lblocks) if l.size]
        n = center.size
        if not keep:
            z._init(center, (np.zeros((n, 0)),), (np.zeros(0, dtype=np.int64),))
        else:
            z._init(center, [gblocks[i] for i in keep], [lblocks[i] for i in keep])
        return z

    @classmethod
    def point(cls, p) -> "SymbolicZonotope":
        return cls(p)

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def n_generators(self) -> int:
        return self._q

    @property
    def generators(self) -> np.ndarray:
        if self._G is None:
            self._G = np.hstack(self._gblocks)
            self._labels = np.concatenate(self._lblocks)
            self._gblocks, self._lblocks = (self._G,), (self._labels,)
        return self._G

    @property
    def labels(self) -> np.ndarray:
        self.generators
        return self._labels

    def as_labeled_matrix(self) -> LabeledMatrix:
        return LabeledMatrix(self.generators, self.labels)

    def to_zonotope(self) -> Zonotope:
        return Zonotope(self.center, self.generators)

    def translate(self, v) -> "SymbolicZonotope":
        """Shift by a vector; generator blocks are shared, not copied."""
        v = _as_vector(v)
        if v.size != self.dim:
            raise DimensionError(f"cannot translate dimension {self.dim} by vector of length {v.size}")
        return SymbolicZonotope._from_blocks(self.center + v, self._gblocks, self._lblocks)

    def relabel(self, registry: LabelRegistry) -> "SymbolicZonotope":
        """Same set with fresh labels, i.e. independent of every other set."""
        return SymbolicZonotope._from_blocks(
            self.center, self._gblocks, [registry.issue(l.size) for l in self._lblocks])

    def rows(self, start: int, stop: int) -> "SymbolicZonotope":
        """Projection onto the contiguous coordinates ``start:stop`` (views, no copy)."""
        return SymbolicZonotope._from_blocks(
            self.center[start:stop], [G[start:stop] for G in self._gblocks], self._lblocks)

    def __repr__(self):
        return f"SymbolicZonotope(dim={self.dim}, n_generators={self.n_generators})"


def exact_add(a: SymbolicZonotope, b: SymbolicZonotope) -> SymbolicZonotope:
    """Dependency-aware sum: generators with equal labels are merged."""
    return exact_sum([a, b])


def exact_sum(terms: Sequence[SymbolicZonotope]) -> SymbolicZonotope:
    """Exact addition of several symbolic zonotopes in one pass."""
    if not terms:
        raise ValueError("nothing to add")
    n = terms[0].dim
    for t in terms:
        if t.dim != n:
            raise DimensionError(f"dimensions differ: {n} vs {t.dim}")
    c = np.sum([t.center for t in terms], axis=0)
    G, labels = _labeled_sum([(t.generators, t.labels) for t in terms], n)
    return SymbolicZonotope._from_blocks(c, (G,), (labels,))


def minkowski_sum(a: SymbolicZonotope, b: SymbolicZonotope, check: bool = True) -> SymbolicZonotope:
    """Sum of independent sets.

    Raises :class:`LabelCollisionError` if the operands share a label; relabel
    one of them first when dropping the dependency is intended. ``check=False``
    skips that test for callers that guarantee disjointness by construction.
    """
    return minkowski_sum_all([a, b], check=check)


def minkowski_sum_all(terms: Sequence[SymbolicZonotope], check: bool = True) -> SymbolicZonotope:
    if not terms:
        raise ValueError("nothing to add")
    n = terms[0].dim
    for t in terms:
        if t.dim != n:
            raise DimensionError(f"dimensions differ: {n} vs {t.dim}")
    if check:
        labels = np.concatenate([t.labels for t in terms])
        if np.unique(labels).size != labels.size:
            raise LabelCollisionError("operands of a Minkowski sum share labels")
    c = terms[0].center.copy()
    for t in terms[1:]:
        c = c + t.center
    gblocks = [g for t in terms for g in t._gblocks]
    lblocks = [l for t in terms for l in t._lblocks]
    return SymbolicZonotope._from_blocks(c, gblocks, lblocks)


def linear_map(A, z: SymbolicZonotope) -> SymbolicZonotope:
    """Image of ``z`` under the matrix ``A``; labels are kept."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[1] != z.dim:
        raise DimensionError(f"matrix of shape {A.shape} cannot act on dimension {z.dim}")
    return SymbolicZonotope._from_blocks(A @ z.center, (A @ z.generators,), (z.labels,))


def scale(alpha: float, z: SymbolicZonotope) -> SymbolicZonotope:
    return SymbolicZonotope._from_blocks(alpha * z.center, (alpha * z.generators,), (z.labels,))


def cartesian_product(a: SymbolicZonotope, b: SymbolicZonotope) -> SymbolicZonotope:
    """Stack two sets; a label present in both yields one column spanning both blocks."""
    return cartesian_product_all([a, b])


def cartesian_product_all(sets: Sequence[SymbolicZonotope]) -> SymbolicZonotope:
    dims = [s.dim for s in sets]
    n = sum(dims)
    c = np.concatenate([s.center for s in sets]) if sets else np.zeros(0)
    parts = []
    row = 0
    for s, d in zip(sets, dims):
        padded = np.zeros((n, s.n_generators))
        padded[row:row + d] = s.generators
        parts.append((padded, s.labels))
        row += d
    G, labels = _labeled_sum(parts, n)
    return SymbolicZonotope._from_blocks(c, (G,), (labels,))


def compact(z: SymbolicZonotope, tol: float = COMPACT_TOL) -> SymbolicZonotope:
    """Drop generator columns whose Euclidean norm is below ``tol``."""
    G = z.generators
    keep = np.linalg.norm(G, axis=0) >= tol
    return SymbolicZonotope._from_blocks(z.center, (G[:, keep],), (z.labels[keep],))


def interval_hull(z) -> tuple[np.ndarray, np.ndarray]:
    """Tightest axis-aligned box ``(lower, upper)`` around ``z``."""
    radius = np.abs(z.generators).sum(axis=1)
    return z.center - radius, z.center + radius


def _contains_lp(z, d: np.ndarray, tol: float) -> bool:
    """LP test for ``c + d in z`` over the factor box.

    Solves ``min t  s.t.  |G lam - d| <= tol,  -t <= lam <= t`` and accepts
    when the optimum satisfies ``t <= 1 + tol``.
    """
    G = z.generators
    G = G[:, np.any(G != 0, axis=0)]
    n, q = G.shape
    if q == 0:
        return bool(np.all(np.abs(d) <= tol))
    # variables: lam (q), t
    cost = np.zeros(q + 1)
    cost[-1] = 1.0
    eye = np.eye(q)
    ones = np.ones((q, 1))
    zeros_n = np.zeros((n, 1))
    A_ub = np.block([
        [G, zeros_n],
        [-G, zeros_n],
        [eye, -ones],
        [-eye, -ones],
    ])
    b_ub = np.concatenate([d + tol, -d + tol, np.zeros(2 * q)])
    bounds = [(None, None)] * q + [(0, None)]
    res = linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs",
                  options={"primal_feasibility_tolerance": LP_FEAS_TOL,
                           "dual_feasibility_tolerance": LP_FEAS_TOL})
    if res.status != 0:
        return False
    # the solver's own feasibility slack must not widen the acceptance region
    lam = res.x[:-1]
    slack = LP_FEAS_TOL * (1.0 + np.abs(G).sum(axis=1))
    return bool(np.max(np.abs(lam), initial=0.0) <= 1.0 + tol + LP_FEAS_TOL
                and np.all(np.abs(G @ lam - d) <= tol + slack))


def _contains_planar(z, D: np.ndarray, tol: float) -> np.ndarray:
    """Facet test for sets of dimension <= 2, same acceptance region as the LP.

    The LP accepts exactly the zonotope ``(1 + tol) z (+) tol [-1, 1]^n``,
    whose facet normals are the generator normals and the coordinate axes.
    """
    G = z.generators
    n = G.shape[0]
    if n == 1:
        N = np.ones((1, 1))
    else:
        N = np.vstack([np.column_stack([-G[1], G[0]]), np.eye(2)])
        norms = np.linalg.norm(N, axis=1)
        N = N[norms > 0] / norms[norms > 0, None]
    support = (1.0 + tol) * np.abs(N @ G).sum(axis=1) + tol * np.abs(N).sum(axis=1)
    return np.all(np.abs(D @ N.T) <= support, axis=1)


def contains_points(z, points, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Vectorised :func:`contains_point` for an (m, n) array of points.

    A point is accepted when some factor vector with ``|lam| <= 1 + tol``
    reproduces it up to ``tol`` per coordinate. Sets of dimension <= 2 use an
    exact facet test, higher dimensions one LP per point.
    """
    P = np.atleast_2d(np.asarray(points, dtype=float))
    if P.shape[1] != z.dim:
        raise DimensionError(f"points of length {P.shape[1]} vs set dimension {z.dim}")
    D = P - z.center
    if z.dim <= 2:
        return _contains_planar(z, D, tol)
    return np.array([_contains_lp(z, d, tol) for d in D], dtype=bool)


def contains_point(z, p, tol: float = DEFAULT_TOL) -> bool:
    """``p in z`` up to ``tol``, decided over the factor box."""
    p = _as_vector(p)
    if p.size != z.dim:
        raise DimensionError(f"point of length {p.size} vs set dimension {z.dim}")
    return bool(contains_points(z, p[None], tol)[0])


def project_polygon(z, dims: tuple[int, int] = (0, 1), tol: float = 1e-12) -> np.ndarray:
    """Vertices of the 2-D projection of ``z``, counterclockwise.

    Returns an array of shape (m, 2); m = 1 for a point and m = 2 for a
    segment. Parallel generators are merged so that no vertex is collinear
    with its neighbours.
    """
    i, j = dims
    if i == j:
        raise ValueError("projection dimensions must differ")
    c = z.center[[i, j]]
    G = z.generators[[i, j], :]
    G = G[:, np.linalg.norm(G, axis=0) > tol]
    if G.shape[1] == 0:
        return c.reshape(1, 2)
    # orient every generator into the half-plane angle in [0, pi)
    flip = (G[1] < 0) | ((G[1] == 0) & (G[0] < 0))
    G = np.where(flip, -G, G)
    angle = np.arctan2(G[1], G[0])
    wrap = angle >= np.pi - 1e-12  # antiparallel to a direction near angle 0
    G = np.where(wrap, -G, G)
    angle = np.where(wrap, angle - np.pi, angle)
    order = np.argsort(angle, kind="stable")
    G, angle = G[:, order], angle[order]
    merged = [G[:, 0].copy()]
    last = angle[0]
    for k in range(1, G.shape[1]):
        if abs(angle[k] - last) <= 1e-12:
            merged[-1] += G[:, k]
        else:
            merged.append(G[:, k].copy())
            last = angle[k]
    M = np.array(merged).T
    start = c - M.sum(axis=1)
    verts = [start]
    for k in range(M.shape[1]):
        verts.append(verts[-1] + 2 * M[:, k])
    for k in range(M.shape[1] - 1):
        verts.append(verts[-1] - 2 * M[:, k])
    return np.array(verts)


def polygon_area(vertices: np.ndarray) -> float:
    if len(vertices) < 3:
        return 0.0
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def sign_pattern_points(z, dims: tuple[int, int] | None = None) -> np.ndarray:
    """All ``c + G s`` for ``s`` in {-1, 1}^q (brute force, small q only)."""
    c, G = z.center, z.generators
    if dims is not None:
        c, G = c[list(dims)], G[list(dims)]
    q = G.shape[1]
    if q == 0:
        return c[None, :].copy()
    signs = np.array(list(itertools.product((-1.0, 1.0), repeat=q)))
    return c + signs @ G.T
