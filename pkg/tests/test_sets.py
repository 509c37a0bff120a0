import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.spatial import ConvexHull

from armaxreach.sets import (
    DimensionError,
    LabelCollisionError,
    LabeledMatrix,
    LabelRegistry,
    SymbolicZonotope,
    Zonotope,
    _contains_lp,
    cartesian_product,
    compact,
    contains_point,
    contains_points,
    exact_add,
    exact_sum,
    interval_hull,
    labeled_add,
    linear_map,
    minkowski_sum,
    polygon_area,
    project_polygon,
    scale,
    sign_pattern_points,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


@st.composite
def symbolic_zonotopes(draw, n=None, max_q=6, first_label=1):
    n = draw(st.integers(1, 3)) if n is None else n
    q = draw(st.integers(0, max_q))
    c = draw(arrays(float, n, elements=finite))
    G = draw(arrays(float, (n, q), elements=finite))
    return SymbolicZonotope(c, G, np.arange(first_label, first_label + q))


def SZ(c, G, labels):
    return SymbolicZonotope(c, G, labels)


# --- labels -------------------------------------------------------------------

def test_registry_is_monotone_and_never_reissues():
    reg = LabelRegistry()
    a, b, c = reg.issue(3), reg.issue(0), reg.issue(2)
    seen = np.concatenate([a, b, c])
    assert np.unique(seen).size == seen.size
    assert np.all(np.diff(seen) > 0)
    assert reg.next_label == seen[-1] + 1


def test_symbolic_zonotope_rejects_duplicate_labels():
    with pytest.raises(ValueError):
        SZ([0.0], [[1.0, 2.0]], [3, 3])


def test_symbolic_zonotope_rejects_nonpositive_labels():
    with pytest.raises(ValueError):
        SZ([0.0], [[1.0]], [0])


# --- labeled_add --------------------------------------------------------------

def test_labeled_add_merges_shared_label():
    a = LabeledMatrix(np.array([[1.0, 0.0]]), np.array([1, 2]))
    b = LabeledMatrix(np.array([[2.0, 5.0]]), np.array([2, 3]))
    out = labeled_add(a, b)
    np.testing.assert_array_equal(out.columns, [[1.0, 2.0, 5.0]])
    np.testing.assert_array_equal(out.labels, [1, 2, 3])


def test_labeled_add_with_empty_is_identity():
    a = LabeledMatrix(np.array([[1.0, -4.0], [2.0, 3.0]]), np.array([4, 9]))
    out = labeled_add(a, LabeledMatrix(np.zeros((2, 0)), np.zeros(0, dtype=int)))
    np.testing.assert_array_equal(out.columns, a.columns)
    np.testing.assert_array_equal(out.labels, a.labels)


def test_labeled_add_cancellation_keeps_label():
    g = np.array([[1.5], [-2.0]])
    out = labeled_add(LabeledMatrix(g, np.array([7])), LabeledMatrix(-g, np.array([7])))
    np.testing.assert_array_equal(out.columns, np.zeros((2, 1)))
    np.testing.assert_array_equal(out.labels, [7])


def test_labeled_add_row_mismatch():
    with pytest.raises(DimensionError):
        labeled_add(LabeledMatrix(np.ones((1, 1)), np.array([1])), LabeledMatrix(np.ones((2, 1)), np.array([2])))


@given(symbolic_zonotopes(n=2), symbolic_zonotopes(n=2, first_label=4))
def test_labeled_add_commutes_bit_exactly(a, b):
    ab = labeled_add(a.as_labeled_matrix(), b.as_labeled_matrix())
    ba = labeled_add(b.as_labeled_matrix(), a.as_labeled_matrix())
    np.testing.assert_array_equal(ab.columns, ba.columns)
    np.testing.assert_array_equal(ab.labels, ba.labels)
    assert np.all(np.diff(ab.labels) > 0)


@given(symbolic_zonotopes(n=2), symbolic_zonotopes(n=2, first_label=3), symbolic_zonotopes(n=2, first_label=5))
def test_labeled_add_associative(a, b, c):
    A, B, C = (z.as_labeled_matrix() for z in (a, b, c))
    left = labeled_add(labeled_add(A, B), C)
    right = labeled_add(A, labeled_add(B, C))
    np.testing.assert_array_equal(left.labels, right.labels)
    np.testing.assert_allclose(left.columns, right.columns, atol=1e-12)


# --- exact addition and Minkowski sum ----------------------------------------

def test_exact_add_cancels_negated_copy():
    z = SZ([1.0], [[2.0]], [5])
    out = exact_add(z, scale(-1.0, z))
    np.testing.assert_array_equal(out.center, [0.0])
    np.testing.assert_array_equal(out.generators, [[0.0]])
    np.testing.assert_array_equal(out.labels, [5])


def test_exact_add_doubles_matched_labels():
    z = SZ([1.0, -1.0], [[1.0, 2.0], [0.0, 3.0]], [2, 8])
    out = exact_add(z, z)
    np.testing.assert_array_equal(out.center, 2 * z.center)
    np.testing.assert_array_equal(out.generators, 2 * z.generators)
    np.testing.assert_array_equal(out.labels, z.labels)


def test_minkowski_concatenates():
    out = minkowski_sum(SZ([1.0], [[2.0]], [1]), SZ([0.0], [[3.0]], [2]))
    np.testing.assert_array_equal(out.center, [1.0])
    np.testing.assert_array_equal(out.generators, [[2.0, 3.0]])
    np.testing.assert_array_equal(out.labels, [1, 2])


def test_minkowski_with_point_is_identity():
    a = SZ([1.0, 2.0], [[1.0], [1.0]], [3])
    out = minkowski_sum(a, SymbolicZonotope.point([0.0, 0.0]))
    np.testing.assert_array_equal(out.center, a.center)
    np.testing.assert_array_equal(out.generators, a.generators)


def test_minkowski_hull_one_dimensional():
    lo, hi = interval_hull(minkowski_sum(SZ([0.0], [[1.0]], [1]), SZ([0.0], [[1.0]], [2])))
    assert lo[0] == -2.0 and hi[0] == 2.0


def test_minkowski_rejects_shared_labels():
    z = SZ([0.0], [[1.0]], [1])
    with pytest.raises(LabelCollisionError):
        minkowski_sum(z, z)


def test_minkowski_dimension_mismatch():
    with pytest.raises(DimensionError):
        minkowski_sum(SZ([0.0], [[1.0]], [1]), SZ([0.0, 0.0], [[1.0], [0.0]], [2]))


@given(symbolic_zonotopes())
def test_exact_add_cancellation_property(z):
    out = exact_add(z, scale(-1.0, z))
    lo, hi = interval_hull(out)
    np.testing.assert_array_equal(lo, np.zeros(z.dim))
    np.testing.assert_array_equal(hi, np.zeros(z.dim))


@given(st.data())
def test_exact_equals_minkowski_on_disjoint_labels(data):
    a = data.draw(symbolic_zonotopes(n=2))
    b = data.draw(symbolic_zonotopes(n=2, first_label=100))
    ha, hb = interval_hull(exact_add(a, b)), interval_hull(minkowski_sum(a, b))
    np.testing.assert_allclose(ha[0], hb[0], atol=1e-12)
    np.testing.assert_allclose(ha[1], hb[1], atol=1e-12)


def test_exact_sum_matches_pairwise_adds():
    rng = np.random.default_rng(3)
    terms = [SZ(rng.standard_normal(2), rng.standard_normal((2, 3)), rng.choice(10, 3, replace=False) + 1)
             for _ in range(4)]
    pairwise = terms[0]
    for t in terms[1:]:
        pairwise = exact_add(pairwise, t)
    together = exact_sum(terms)
    np.testing.assert_array_equal(pairwise.labels, together.labels)
    np.testing.assert_allclose(pairwise.generators, together.generators, atol=1e-12)


# --- linear map, product ------------------------------------------------------

def test_linear_map_identity():
    z = SZ([1.0, 2.0], [[1.0, 0.5], [0.0, 1.0]], [1, 2])
    out = linear_map(np.eye(2), z)
    np.testing.assert_array_equal(out.generators, z.generators)
    np.testing.assert_array_equal(out.labels, z.labels)


def test_linear_map_zero_keeps_labeled_zero_columns():
    z = SZ([1.0, 2.0], [[1.0, 0.5], [0.0, 1.0]], [4, 6])
    out = linear_map(np.zeros((2, 2)), z)
    np.testing.assert_array_equal(out.center, [0.0, 0.0])
    np.testing.assert_array_equal(out.generators, np.zeros((2, 2)))
    np.testing.assert_array_equal(out.labels, [4, 6])


def test_linear_map_diagonal():
    out = linear_map([[2.0, 0.0], [0.0, 3.0]], SZ([1.0, 1.0], np.eye(2), [1, 2]))
    np.testing.assert_array_equal(out.center, [2.0, 3.0])
    np.testing.assert_array_equal(out.generators, [[2.0, 0.0], [0.0, 3.0]])
    np.testing.assert_array_equal(out.labels, [1, 2])


def test_linear_map_dimension_mismatch():
    with pytest.raises(DimensionError):
        linear_map(np.eye(3), SZ([1.0, 1.0], np.eye(2), [1, 2]))


@given(symbolic_zonotopes(n=2), arrays(float, (3, 2), elements=finite), arrays(float, (2, 2), elements=finite))
def test_linear_map_composition(z, A, B):
    left = linear_map(A, linear_map(B, z))
    right = linear_map(A @ B, z)
    scale_ = 1 + np.abs(A).sum() * np.abs(B).sum() * (1 + np.abs(z.generators).sum() + np.abs(z.center).sum())
    np.testing.assert_allclose(left.center, right.center, atol=1e-12 * scale_)
    np.testing.assert_allclose(left.generators, right.generators, atol=1e-12 * scale_)


def test_cartesian_disjoint_is_block_diagonal():
    a = SZ([1.0], [[2.0]], [1])
    b = SZ([3.0, 4.0], [[1.0], [5.0]], [2])
    out = cartesian_product(a, b)
    np.testing.assert_array_equal(out.center, [1.0, 3.0, 4.0])
    np.testing.assert_array_equal(out.generators, [[2.0, 0.0], [0.0, 1.0], [0.0, 5.0]])
    np.testing.assert_array_equal(out.labels, [1, 2])


def test_cartesian_with_point_appends_zero_rows():
    a = SZ([1.0, 2.0], [[1.0], [3.0]], [4])
    out = cartesian_product(a, SymbolicZonotope.point([0.0]))
    np.testing.assert_array_equal(out.center, [1.0, 2.0, 0.0])
    np.testing.assert_array_equal(out.generators, [[1.0], [3.0], [0.0]])


def test_cartesian_of_dependent_operands_shares_columns():
    a = SZ([0.0], [[1.0, 2.0]], [3, 5])
    out = cartesian_product(a, a)
    np.testing.assert_array_equal(out.generators, [[1.0, 2.0], [1.0, 2.0]])
    np.testing.assert_array_equal(out.labels, [3, 5])


def test_compact_drops_tiny_columns_only():
    z = SZ([0.0, 0.0], [[1.0, 0.0, 1e-16], [0.0, 0.0, 0.0]], [1, 2, 3])
    out = compact(z)
    np.testing.assert_array_equal(out.labels, [1])
    # the uncompacted set keeps its zero columns
    assert z.n_generators == 3


# --- hull, containment ----------------------------------------------------------

def test_hull_of_point():
    lo, hi = interval_hull(SymbolicZonotope.point([1.0, -2.0]))
    np.testing.assert_array_equal(lo, [1.0, -2.0])
    np.testing.assert_array_equal(hi, [1.0, -2.0])


def test_hull_sums_absolute_entries():
    lo, hi = interval_hull(SZ([0.0], [[1.0, -2.0]], [1, 2]))
    assert (lo[0], hi[0]) == (-3.0, 3.0)


@given(symbolic_zonotopes())
def test_hull_reflects_under_negation(z):
    lo, hi = interval_hull(z)
    lo2, hi2 = interval_hull(linear_map(-np.eye(z.dim), z))
    np.testing.assert_array_equal(lo2, -hi)
    np.testing.assert_array_equal(hi2, -lo)


@given(symbolic_zonotopes(max_q=8))
def test_hull_is_tight(z):
    # the hull bounds are attained at sign-pattern points of the factors
    pts = sign_pattern_points(z)
    lo, hi = interval_hull(z)
    scale_ = 1 + np.abs(z.generators).sum() + np.abs(z.center).sum()
    np.testing.assert_allclose(pts.max(axis=0), hi, atol=1e-12 * scale_)
    np.testing.assert_allclose(pts.min(axis=0), lo, atol=1e-12 * scale_)


def test_contains_center():
    z = SZ([1.0, 2.0, 3.0], np.ones((3, 2)), [1, 2])
    assert contains_point(z, z.center)


def test_contains_rejects_outside_factor_box():
    assert not contains_point(SZ([0.0], [[1.0]], [1]), [1.5], tol=0.0)


def test_contains_solves_factor_system():
    assert contains_point(SZ([0.0, 0.0], [[1.0, 1.0], [0.0, 1.0]], [1, 2]), [2.0, 1.0])


def test_contains_high_dimension_uses_program():
    z = SZ(np.zeros(3), np.eye(3), [1, 2, 3])
    assert contains_point(z, [1.0, -1.0, 0.5])
    assert not contains_point(z, [1.0, -1.0, 1.1])


@given(symbolic_zonotopes(max_q=6), st.data())
def test_sampled_factors_are_contained(z, data):
    lam = data.draw(arrays(float, z.n_generators, elements=st.floats(-1, 1)))
    assert contains_point(z, z.center + z.generators @ lam, 1e-9)


@given(symbolic_zonotopes(n=3, max_q=5), st.data())
def test_sampled_factors_are_contained_three_dimensions(z, data):
    lam = data.draw(arrays(float, z.n_generators, elements=st.floats(-1, 1)))
    assert contains_point(z, z.center + z.generators @ lam, 1e-9)


def _scaled(z, factor):
    return SymbolicZonotope(z.center, z.generators * factor, z.labels)


@given(st.integers(1, 2).flatmap(lambda n: symbolic_zonotopes(n=n, max_q=5)), st.data())
def test_planar_test_agrees_with_program(z, data):
    raw = data.draw(arrays(float, (10, z.dim), elements=finite))
    pts = z.center + raw * 0.3
    fast = contains_points(z, pts, 1e-9)
    slow = np.array([_contains_lp(z, p - z.center, 1e-9) for p in pts])
    # points within a relative 1e-6 band of the boundary may go either way
    inner = contains_points(_scaled(z, 1 - 1e-6), pts, 0.0)
    outer = contains_points(_scaled(z, 1 + 1e-6), pts, 1e-6)
    clear = inner == outer
    np.testing.assert_array_equal(fast[clear], slow[clear])
    np.testing.assert_array_equal(fast[clear], inner[clear])


def test_contains_dimension_mismatch():
    with pytest.raises(DimensionError):
        contains_point(SZ([0.0], [[1.0]], [1]), [0.0, 0.0])


# --- 2-D projection -------------------------------------------------------------

def test_polygon_of_unit_square():
    verts = project_polygon(SZ([0.0, 0.0], np.eye(2), [1, 2]))
    assert verts.shape == (4, 2)
    assert {tuple(v) for v in verts} == {(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)}
    assert polygon_area(verts) == pytest.approx(4.0)


def test_polygon_of_single_generator_is_segment():
    verts = project_polygon(SZ([0.0, 0.0], [[1.0], [1.0]], [1]))
    assert {tuple(v) for v in verts} == {(-1.0, -1.0), (1.0, 1.0)}


def test_polygon_of_point():
    verts = project_polygon(SymbolicZonotope.point([3.0, 4.0]))
    np.testing.assert_array_equal(verts, [[3.0, 4.0]])


def test_polygon_hexagon_matches_sign_patterns():
    z = SZ([0.0, 0.0], [[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]], [1, 2, 3])
    verts = project_polygon(z)
    assert verts.shape == (6, 2)
    expected = {(2.0, 2.0), (0.0, 2.0), (-2.0, 0.0), (-2.0, -2.0), (0.0, -2.0), (2.0, 0.0)}
    assert {tuple(v) for v in verts} == expected
    hull = ConvexHull(sign_pattern_points(z))
    assert {tuple(v) for v in sign_pattern_points(z)[hull.vertices]} == expected


def _inside_convex_polygon(verts, pts, atol):
    # counterclockwise polygon: every point is left of (or on) every edge
    edges = np.roll(verts, -1, axis=0) - verts
    rel = pts[:, None, :] - verts[None, :, :]
    cross = edges[None, :, 0] * rel[..., 1] - edges[None, :, 1] * rel[..., 0]
    lengths = np.linalg.norm(edges, axis=1)
    return np.all(cross >= -atol * lengths[None, :], axis=1)


@given(arrays(float, (2, 10), elements=st.floats(-5, 5)), st.integers(1, 10))
def test_polygon_matches_brute_force(G, q):
    G = G[:, :q]
    z = SZ([0.5, -1.0], G, np.arange(1, q + 1))
    verts = project_polygon(z)
    brute = sign_pattern_points(z)
    if np.linalg.matrix_rank(brute - brute.mean(axis=0), tol=1e-9) < 2:
        return  # degenerate: covered by the segment and point cases
    scale_ = 1 + np.abs(G).sum()
    assert polygon_area(verts) == pytest.approx(ConvexHull(brute).volume, rel=1e-9, abs=1e-9 * scale_ ** 2)
    # vertices are sign-pattern points, and every sign-pattern point lies in the polygon
    for v in verts:
        assert np.min(np.linalg.norm(brute - v, axis=1)) <= 1e-9 * scale_
    assert np.all(_inside_convex_polygon(verts, brute, 1e-9 * scale_))
    assert np.all(contains_points(z, verts, 1e-9))
    assert polygon_area(verts) > 0


@given(arrays(float, (2, 4), elements=st.floats(-5, 5)), st.integers(1, 4))
def test_polygon_vertices_contained_in_projection(G, q):
    z3 = SZ([0.0, 1.0, 2.0], np.vstack([G[:, :q], np.ones((1, q))]), np.arange(1, q + 1))
    verts = project_polygon(z3, (0, 1))
    assert np.all(contains_points(z3.rows(0, 2), verts, 1e-9))


def test_zonotope_validation():
    with pytest.raises(DimensionError):
        Zonotope(np.zeros(2), np.zeros((3, 1)))
    with pytest.raises(ValueError):
        Zonotope(np.array([np.nan]), np.zeros((1, 0)))
