"""Characteristic geometry on the half-plane x2 >= 0 and polygon quadrature.

Conventions: Gamma0 = [a, b] x {0} with outer normal (0, -1).  Polygons are
stored in the boundary order a -> O1 -> C -> O2 -> b (clockwise), so edge
tangents follow that traversal and Gamma0 is traversed with tangent (-1, 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import permutations
from typing import Optional, Sequence

import numpy as np

from .symbol import HyperbolicSymbol, ZeroRoot

__all__ = [
    "GeometryError",
    "NoValidPentagon",
    "UnsupportedOrder",
    "Gamma0",
    "Edge",
    "PentagonDomain",
    "DeterminacyTriangle",
    "foot",
    "determinacy_region",
    "build_pentagon",
    "polygon_area",
    "polygon_edges",
    "polygon_quadrature",
    "edge_quadrature",
    "classify_point",
    "POINT_TOL",
]

POINT_TOL = 1e-12


class GeometryError(ValueError):
    pass


class NoValidPentagon(GeometryError):
    pass


class UnsupportedOrder(GeometryError):
    pass


@dataclass(frozen=True)
class Gamma0:
    a: float
    b: float

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise GeometryError("Gamma0 endpoints must be finite")
        if self.b - self.a < 1e-6:
            raise GeometryError("Gamma0 needs b - a >= 1e-6")

    normal = (0.0, -1.0)
    tangent = (-1.0, 0.0)

    @property
    def length(self) -> float:
        return self.b - self.a


def foot(P, lam: float):
    """x1-coordinate where the characteristic through P with direction
    (1, -lam) meets x2 = 0.  Works elementwise on arrays of points."""
    if lam == 0:
        raise ZeroRoot("characteristic parallel to Gamma0 has no foot")
    P = np.asarray(P, dtype=float)
    out = P[..., 0] + P[..., 1] / lam
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Domain of determinacy


@dataclass(frozen=True)
class DeterminacyTriangle:
    """Points whose backward characteristic feet all lie in [a, b].

    The left lateral edge is {foot_left = a}, the right one {foot_right = b};
    ``left_root`` minimizes 1/lambda and ``right_root`` maximizes it.
    """

    a: float
    b: float
    left_root: float
    right_root: float
    apex: tuple
    roots: tuple = ()

    @property
    def vertices(self) -> np.ndarray:
        return np.array([[self.a, 0.0], [self.b, 0.0], list(self.apex)])

    @property
    def height(self) -> float:
        return self.apex[1]

    def feet(self, P) -> np.ndarray:
        P = np.asarray(P, dtype=float)
        return np.stack([foot(P, lam) for lam in self.roots], axis=-1)

    def lateral_distances(self, P):
        """Signed Chebyshev distances to the left and right lateral edges
        (positive on the inside)."""
        P = np.asarray(P, dtype=float)
        dl = (foot(P, self.left_root) - self.a) / (1.0 + 1.0 / abs(self.left_root))
        dr = (self.b - foot(P, self.right_root)) / (1.0 + 1.0 / abs(self.right_root))
        return dl, dr

    def contains(self, P, tol: float = POINT_TOL):
        P = np.asarray(P, dtype=float)
        f = self.feet(P)
        return ((P[..., 1] >= -tol) & (f.min(axis=-1) >= self.a - tol)
                & (f.max(axis=-1) <= self.b + tol))


def determinacy_region(sym: HyperbolicSymbol, g: Gamma0) -> DeterminacyTriangle:
    inv = [1.0 / lam for lam in sym.roots]
    left = sym.roots[int(np.argmin(inv))]
    right = sym.roots[int(np.argmax(inv))]
    height = (g.b - g.a) / (1.0 / right - 1.0 / left)
    apex_x1 = g.a - height / left
    return DeterminacyTriangle(g.a, g.b, left, right, (apex_x1, height), tuple(sym.roots))


# ---------------------------------------------------------------------------
# Polygons


@dataclass(frozen=True)
class Edge:
    start: tuple
    end: tuple
    root_index: Optional[int] = None

    @property
    def vector(self) -> np.ndarray:
        return np.subtract(self.end, self.start)

    @property
    def length(self) -> float:
        return float(np.hypot(*self.vector))

    @property
    def tangent(self) -> np.ndarray:
        return self.vector / self.length

    def outer_normal(self, clockwise: bool = True) -> np.ndarray:
        tx, ty = self.tangent
        return np.array([-ty, tx]) if clockwise else np.array([ty, -tx])


def polygon_area(vertices) -> float:
    """Signed shoelace area (positive for counterclockwise order)."""
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_edges(vertices, roots: Sequence[Optional[int]] | None = None):
    v = [tuple(map(float, p)) for p in np.asarray(vertices, dtype=float)]
    n = len(v)
    roots = roots if roots is not None else [None] * n
    return [Edge(v[i], v[(i + 1) % n], roots[i]) for i in range(n)]


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and 0 not in (d1, d2, d3, d4):
        return True
    return False


def _is_simple(vertices) -> bool:
    v = [tuple(p) for p in vertices]
    n = len(v)
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_cross(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]):
                return False
    return True


def _is_convex(vertices, clockwise: bool) -> bool:
    v = np.asarray(vertices, dtype=float)
    n = len(v)
    sign = -1.0 if clockwise else 1.0
    scale = max(1.0, float(np.abs(v).max()))
    for i in range(n):
        a, b, c = v[i], v[(i + 1) % n], v[(i + 2) % n]
        cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
        if sign * cross <= 1e-14 * scale**2:
            return False
    return True


@dataclass(frozen=True)
class PentagonDomain:
    """The pentagon a O1 C O2 b bounded by four characteristics and Gamma0.

    ``assignment`` gives the 1-based root index carried by the edges
    a->O1, O1->C, C->O2, O2->b; the closing edge b->a is Gamma0.
    """

    vertices: np.ndarray
    assignment: tuple
    edges: list = field(compare=False)

    @property
    def area(self) -> float:
        return abs(polygon_area(self.vertices))

    def normals(self):
        return [e.outer_normal(clockwise=True) for e in self.edges]

    def classify(self, P, tol: float = POINT_TOL):
        return classify_point(self.vertices, P, tol)


def _line_intersection(p, d, q, e):
    # p + s d = q + t e
    m = np.array([[d[0], -e[0]], [d[1], -e[1]]])
    det = np.linalg.det(m)
    if abs(det) < 1e-14:
        return None
    s, _ = np.linalg.solve(m, np.subtract(q, p))
    return np.asarray(p, dtype=float) + s * np.asarray(d, dtype=float)


def build_pentagon(sym: HyperbolicSymbol, g: Gamma0, C) -> PentagonDomain:
    """Pentagon through C built from the first valid root assignment.

    Assignments of four distinct roots to the edges (a->O1, O1->C, C->O2,
    O2->b) are enumerated in lexicographic order of root indices; the first
    one giving a simple convex pentagon with O1, O2 strictly above Gamma0 and
    not above C is returned.
    """
    C = np.asarray(C, dtype=float)
    if C[1] <= POINT_TOL:
        raise GeometryError("apex C must lie strictly above Gamma0")
    A = np.array([g.a, 0.0])
    B = np.array([g.b, 0.0])
    dirs = {d.index: d.tangent for d in sym.directions}
    for assignment in permutations(range(1, 5)):
        j1, j2, j3, j4 = assignment
        O1 = _line_intersection(A, dirs[j1], C, dirs[j2])
        O2 = _line_intersection(C, dirs[j3], B, dirs[j4])
        if O1 is None or O2 is None:
            continue
        verts = np.array([A, O1, C, O2, B])
        if not (0 < O1[1] <= C[1] + 1e-12 and 0 < O2[1] <= C[1] + 1e-12):
            continue
        if polygon_area(verts) >= 0 or not _is_simple(verts):
            continue
        if not _is_convex(verts, clockwise=True):
            continue
        edges = polygon_edges(verts, [j1, j2, j3, j4, None])
        return PentagonDomain(verts, assignment, edges)
    raise NoValidPentagon(f"no root assignment yields a valid pentagon for C={C.tolist()}")


def classify_point(vertices, P, tol: float = POINT_TOL) -> str:
    """'inside', 'boundary' or 'outside' for a convex polygon."""
    v = np.asarray(vertices, dtype=float)
    clockwise = polygon_area(v) < 0
    P = np.asarray(P, dtype=float)
    on_edge = False
    for e in polygon_edges(v):
        n = e.outer_normal(clockwise)
        s = float(np.dot(P - np.asarray(e.start), n))
        if s > tol:
            return "outside"
        if s >= -tol:
            on_edge = True
    return "boundary" if on_edge else "inside"


# ---------------------------------------------------------------------------
# Quadrature

# Symmetric triangle rules as (weight, barycentric orbit generator); weights
# are fractions of the triangle area.
_S3 = "centroid"
_S21 = "pair"
_S111 = "general"

_TRIANGLE_RULES = {
    # Dunavant degree 4 (6 points), used as the order-3 rule
    3: [
        (0.223381589678011, _S21, 0.445948490915965),
        (0.109951743655322, _S21, 0.091576213509771),
    ],
    # Radon degree 5 (7 points)
    5: [
        (9.0 / 40.0, _S3, None),
        ((155.0 - math.sqrt(15.0)) / 1200.0, _S21, (6.0 - math.sqrt(15.0)) / 21.0),
        ((155.0 + math.sqrt(15.0)) / 1200.0, _S21, (6.0 + math.sqrt(15.0)) / 21.0),
    ],
    # Dunavant degree 7 (13 points), parameters re-solved from the moment
    # equations to full double precision
    7: [
        (-0.14957004446768175063, _S3, None),
        (0.17561525743320781175, _S21, 0.26034596607903982693),
        (0.05334723560883849127, _S21, 0.065130102902215811538),
        (0.07711376089025714026, _S111, (0.048690315425316411793, 0.31286549600487386141)),
    ],
}


def _triangle_rule(order: int):
    if order not in _TRIANGLE_RULES:
        raise UnsupportedOrder(f"quadrature order must be one of 3, 5, 7 (got {order})")
    bary, weights = [], []
    for w, kind, g in _TRIANGLE_RULES[order]:
        if kind == _S3:
            pts = [(1 / 3, 1 / 3, 1 / 3)]
        elif kind == _S21:
            c = 1.0 - 2.0 * g
            pts = [(g, g, c), (g, c, g), (c, g, g)]
        else:
            p, q = g
            r = 1.0 - p - q
            pts = list(dict.fromkeys(permutations((p, q, r))))
        bary.extend(pts)
        weights.extend([w] * len(pts))
    w = np.array(weights)
    return np.array(bary), w / w.sum()


def _subdivide(tri: np.ndarray, k: int):
    """Split a triangle into k^2 congruent sub-triangles."""
    A, B, C = tri
    pts = lambda i, j: A + (B - A) * i / k + (C - A) * j / k  # noqa: E731
    out = []
    for i in range(k):
        for j in range(k - i):
            out.append((pts(i, j), pts(i + 1, j), pts(i, j + 1)))
            if i + j < k - 1:
                out.append((pts(i + 1, j), pts(i + 1, j + 1), pts(i, j + 1)))
    return out


def polygon_centroid(vertices) -> np.ndarray:
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    return np.array([((x + xn) * cross).sum(), ((y + yn) * cross).sum()]) / (6.0 * area)


def polygon_quadrature(poly, order: int = 7, refine: int = 1):
    """Area rule on a convex (star-shaped about its centroid) polygon.

    The polygon is fanned from its area centroid and each triangle gets the
    symmetric rule of the requested order, optionally on ``refine``^2
    congruent sub-triangles.  Returns (nodes of shape (n, 2), weights).
    """
    v = np.asarray(getattr(poly, "vertices", poly), dtype=float)
    bary, w = _triangle_rule(order)
    c = polygon_centroid(v)
    sign = math.copysign(1.0, polygon_area(v))
    nodes, weights = [], []
    for i in range(len(v)):
        tri = np.array([c, v[i], v[(i + 1) % len(v)]])
        if sign * polygon_area(tri) < 0:
            raise GeometryError("polygon is not star-shaped about its centroid")
        for sub in _subdivide(tri, refine):
            sub = np.asarray(sub)
            area = abs(polygon_area(sub))
            nodes.append(bary @ sub)
            weights.append(w * area)
    return np.concatenate(nodes), np.concatenate(weights)


def edge_quadrature(edge, order: int = 7, refine: int = 1):
    """Gauss-Legendre rule on a segment with ceil((order+1)/2) points per
    piece; ``refine`` splits the segment into equal pieces."""
    if order not in _TRIANGLE_RULES:
        raise UnsupportedOrder(f"quadrature order must be one of 3, 5, 7 (got {order})")
    if isinstance(edge, Edge):
        p0, p1 = np.asarray(edge.start), np.asarray(edge.end)
    else:
        p0, p1 = (np.asarray(p, dtype=float) for p in edge)
    npts = math.ceil((order + 1) / 2)
    x, w = np.polynomial.legendre.leggauss(npts)
    length = float(np.hypot(*(p1 - p0)))
    nodes, weights = [], []
    for k in range(refine):
        t = (k + 0.5 * (x + 1.0)) / refine
        nodes.append(p0 + np.outer(t, p1 - p0))
        weights.append(0.5 * w * length / refine)
    return np.concatenate(nodes), np.concatenate(weights)
