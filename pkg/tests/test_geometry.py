import numpy as np
import pytest
from fractions import Fraction
from hypothesis import given, strategies as st

from charpent.geometry import (Gamma0, GeometryError, NoValidPentagon, UnsupportedOrder,
                               build_pentagon, classify_point, determinacy_region,
                               edge_quadrature, foot, polygon_area, polygon_quadrature)
from charpent.symbol import ZeroRoot, build_symbol


def test_foot_examples():
    assert foot((0.5, 0.3), -1.0) == pytest.approx(0.2)
    assert foot((0.5, 0.3), 1.0) == pytest.approx(0.8)
    assert foot((0.5, 0.0), 3.7) == 0.5
    with pytest.raises(ZeroRoot):
        foot((0.5, 0.3), 0.0)


def test_gamma0_validation():
    g = Gamma0(0.0, 2.0)
    assert g.length == 2.0 and g.normal == (0.0, -1.0) and g.tangent == (-1.0, 0.0)
    with pytest.raises(GeometryError):
        Gamma0(1.0, 1.0)
    with pytest.raises(GeometryError):
        Gamma0(0.0, float("inf"))


def test_determinacy_triangle(sym, unit_gamma):
    tri = determinacy_region(sym, unit_gamma)
    assert (tri.left_root, tri.right_root) == (-1.0, 1.0)
    assert tri.apex == pytest.approx((0.5, 0.5))
    assert sorted(tri.feet((0.5, 0.4))) == pytest.approx([0.1, 0.3, 0.7, 0.9])
    assert tri.contains((0.5, 0.4))
    assert not tri.contains((0.5, 0.6))
    assert tri.contains((0.5, 0.5)) and tri.contains((0.0, 0.0))


def test_one_sided_roots_triangle():
    sym = build_symbol((1, -10, 35, -50, 24))  # roots 1..4
    tri = determinacy_region(sym, Gamma0(0.0, 1.0))
    assert tri.height > 0
    assert tri.contains(tri.apex)
    feet = tri.feet(tri.apex)
    assert feet.min() == pytest.approx(0.0, abs=1e-12)
    assert feet.max() == pytest.approx(1.0, abs=1e-12)


def _tri_points(tri, rng, n):
    s, t = rng.random(n), rng.random(n)
    flip = s + t > 1
    s[flip], t[flip] = 1 - s[flip], 1 - t[flip]
    A, B, C = tri.vertices
    return A + np.outer(s, B - A) + np.outer(t, C - A)


@pytest.mark.parametrize("coeffs", [(1, 0, -5, 0, 4), (1, -10, 35, -50, 24), (0.5, 0.3, -2, 0.1, 0.4)])
def test_backward_closure(coeffs):
    sym = build_symbol(coeffs)
    tri = determinacy_region(sym, Gamma0(-0.3, 0.9))
    rng = np.random.default_rng(7)
    P = _tri_points(tri, rng, 1000)
    assert tri.contains(P, tol=1e-12).all()
    for lam in sym.roots:
        F = np.stack([foot(P, lam), np.zeros(len(P))], axis=-1)
        for s in np.linspace(0, 1, 20):
            assert tri.contains(P + s * (F - P), tol=1e-12).all()


def test_worked_pentagon(pentagon, sym):
    v = pentagon.vertices
    np.testing.assert_allclose(v, [[0.25, 0], [0.3, 0.1], [0.5, 0.3], [0.7, 0.1], [0.75, 0]],
                               atol=1e-15)
    assert pentagon.assignment == (1, 2, 3, 4)
    assert pentagon.area == pytest.approx(0.085, abs=1e-15)
    # edges are characteristic: outer normal orthogonal to the assigned a^j only
    for e in pentagon.edges[:4]:
        n = e.outer_normal()
        for d in sym.directions:
            dot = abs(n @ d.tangent)
            if d.index == e.root_index:
                assert dot <= 1e-12
            else:
                assert dot >= 0.1
    assert pentagon.edges[4].outer_normal().tolist() == pytest.approx([0.0, -1.0])


def test_pentagon_errors(sym):
    with pytest.raises(GeometryError):
        build_pentagon(sym, Gamma0(0, 1), (0.5, 0.0))
    with pytest.raises(NoValidPentagon):
        build_pentagon(sym, Gamma0(0, 1), (5.0, 0.1))


def test_classify_point(pentagon):
    v = pentagon.vertices
    assert classify_point(v, (0.5, 0.1)) == "inside"
    assert classify_point(v, (0.5, 0.0)) == "boundary"
    assert classify_point(v, (0.3, 0.1)) == "boundary"
    assert classify_point(v, (0.5, 0.31)) == "outside"
    assert pentagon.classify((0.26, 0.0001)) == "inside"


@given(st.floats(0.2, 0.8), st.floats(0.001, 0.35))
def test_classification_matches_half_planes(x, y):
    sym = build_symbol((1, 0, -5, 0, 4))
    pent = build_pentagon(sym, Gamma0(0.25, 0.75), (0.5, 0.3))
    inside = all(np.dot(np.array([x, y]) - e.start, e.outer_normal()) < -1e-12
                 for e in pent.edges)
    assert (classify_point(pent.vertices, (x, y)) == "inside") == inside


def _moment_exact(i, j, oracles):
    return float(Fraction(oracles["pentagon"]["moments"][f"{i},{j}"]))


@pytest.mark.parametrize("order", [3, 5, 7])
def test_polygon_rule_exact_on_monomials(order, pentagon, oracles):
    x, w = polygon_quadrature(pentagon.vertices, order)
    assert w.sum() == pytest.approx(pentagon.area, abs=1e-12)
    for i in range(order + 1):
        for j in range(order + 1 - i):
            got = w @ (x[:, 0] ** i * x[:, 1] ** j)
            assert got == pytest.approx(_moment_exact(i, j, oracles), abs=1e-12)


def test_unit_triangle_moment():
    x, w = polygon_quadrature([(0, 0), (1, 0), (0, 1)], 5)
    assert w @ (x[:, 0] ** 2 * x[:, 1]) == pytest.approx(1 / 60, abs=1e-12)


@pytest.mark.parametrize("order", [3, 5, 7])
def test_unit_square_weights(order):
    _, w = polygon_quadrature([(0, 0), (1, 0), (1, 1), (0, 1)], order, refine=3)
    assert w.sum() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("order", [3, 5, 7])
def test_edge_rule(order):
    x, w = edge_quadrature(((0.0, 0.0), (3.0, 4.0)), order, refine=2)
    assert w.sum() == pytest.approx(5.0, abs=1e-12)
    t = x[:, 0] / 3.0
    assert w @ t**order == pytest.approx(5.0 / (order + 1), abs=1e-12)


def test_unsupported_order(pentagon):
    with pytest.raises(UnsupportedOrder):
        polygon_quadrature(pentagon.vertices, 4)
    with pytest.raises(UnsupportedOrder):
        edge_quadrature(pentagon.edges[0], 9)


def test_polygon_area_orientation():
    sq = [(0, 0), (1, 0), (1, 1), (0, 1)]
    assert polygon_area(sq) == 1.0
    assert polygon_area(sq[::-1]) == -1.0
