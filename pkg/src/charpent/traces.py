"""L-traces, Green-type identities and the wave-in-disk demonstration.

For the real constant-coefficient quartic operator the formal adjoint is L
itself.  Identities are checked by quadrature on polygons:

* flux form:  int_Omega (Lu v - u Lv) = oint F(u, v) . nu  with the bilinear
  concomitant F built term by term by telescoping;
* Gamma0 pairing form: v supported in a strip on Gamma0, boundary terms
  sum_j int_Gamma0 L_(3-j)u d_nu^j v with the L-traces computed from the
  Cauchy data only;
* factored form: the pentagon identity with the traces <nu, a^k> P...P u
  and v in the kernel of the adjoint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from . import expr as ex
from .geometry import (Gamma0, PentagonDomain, determinacy_region, edge_quadrature,
                       polygon_edges, polygon_quadrature, polygon_area)
from .solver import CauchyData, apply_operator, data_from_solution
from .symbol import HyperbolicSymbol

__all__ = [
    "TraceSet",
    "BumpSupportViolation",
    "IdentityResult",
    "Derivatives",
    "flux_terms",
    "gamma0_traces",
    "green_flux_residual",
    "strip_bump",
    "gamma0_identity_residual",
    "tilde_traces",
    "kernel_identity_residual",
    "wave_disk_demo",
    "adaptive_integrate",
]


class BumpSupportViolation(ValueError):
    pass


class Derivatives:
    """Memoized symbolic partial derivatives d1^i d2^k of one expression."""

    def __init__(self, node):
        self.node = ex.parse(node) if isinstance(node, str) else node
        self._cache = {(0, 0): self.node}

    def get(self, i: int, k: int):
        key = (i, k)
        if key not in self._cache:
            if k > 0:
                self._cache[key] = ex.derivative(self.get(i, k - 1), "x2")
            else:
                self._cache[key] = ex.derivative(self.get(i - 1, 0), "x1")
        return self._cache[key]

    def at(self, i: int, k: int, pts: np.ndarray) -> np.ndarray:
        return ex.eval_at(self.get(i, k), x1=pts[:, 0], x2=pts[:, 1])


# ---------------------------------------------------------------------------
# Traces on Gamma0


@dataclass(frozen=True)
class TraceSet:
    """L_(0)u .. L_(3)u on Gamma0 as expressions in x1."""

    traces: tuple

    def __getitem__(self, p: int):
        return self.traces[p]

    def evaluate(self, x1) -> np.ndarray:
        x1 = np.asarray(x1, dtype=float)
        return np.stack([ex.eval_at(t, x1=x1, x2=0.0) * np.ones_like(x1)
                         for t in self.traces])


def gamma0_traces(sym: HyperbolicSymbol, data: CauchyData, perturb: float = 0.0) -> TraceSet:
    """Traces on Gamma0 determined by the Cauchy data.

    With nu = (0, -1) and d2^k u = mu_k (mu = phi, -psi, sigma, -chi):

        L_(3-i) u = - sum_{p=i+1}^{4} a_p d1^(4-p) mu_(p-1-i),   i = 0..3

    i.e. L_(0)u = -a4 phi, L_(1)u = a4 psi - a3 phi',
    L_(2)u = -a4 sigma + a3 psi' - a2 phi'',
    L_(3)u = a4 chi - a3 sigma' + a2 psi'' - a1 phi'''.

    ``perturb`` shifts a3 inside L_(1) only; it exists for fault injection.
    """
    a = list(sym.coeffs.as_tuple())
    out = [None] * 4
    for i in range(4):
        total = ex.ZERO
        for p in range(i + 1, 5):
            coef = a[p] + (perturb if (i == 2 and p == 3) else 0.0)
            if coef == 0:
                continue
            term = ex.nth_derivative(data.mu(p - 1 - i), "x1", 4 - p)
            total = ex.sub(total, ex.mul(ex.Num(coef), term))
        out[3 - i] = total
    return TraceSet(tuple(out))


# ---------------------------------------------------------------------------
# Bilinear concomitant


@lru_cache(maxsize=None)
def flux_terms(coeffs: tuple):
    """Terms (coef, component, u-derivative, v-derivative) of F(u, v).

    For a_p d1^(4-p) d2^p with ordered factors d_1..d_4 (x1 first):
    F = sum_k (-1)^(k-1) e(d_k) (d_{k+1}..d_4 u)(d_1..d_{k-1} v), so that
    div F = a_p (D u) v - u (D v).  Components are 0 (x1) or 1 (x2);
    derivatives are (i, k) orders in (x1, x2).
    """
    terms = []
    for p, a in enumerate(coeffs):
        if a == 0:
            continue
        dirs = [0] * (4 - p) + [1] * p
        for k in range(4):
            after = dirs[k + 1:]
            before = dirs[:k]
            du = (after.count(0), after.count(1))
            dv = (before.count(0), before.count(1))
            terms.append(((-1) ** k * a, dirs[k], du, dv))
    return tuple(terms)


def _flux(sym, U: Derivatives, V: Derivatives, pts: np.ndarray) -> np.ndarray:
    F = np.zeros((len(pts), 2))
    for coef, comp, du, dv in flux_terms(sym.coeffs.as_tuple()):
        F[:, comp] += coef * U.at(*du, pts) * V.at(*dv, pts)
    return F


@dataclass
class IdentityResult:
    side_a: float
    side_b: float
    residual: float
    order: int
    details: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"side_a": self.side_a, "side_b": self.side_b,
                "residual": self.residual, "order": self.order}


def _vertices(poly):
    return np.asarray(getattr(poly, "vertices", poly), dtype=float)


def green_flux_residual(sym: HyperbolicSymbol, u, v, poly, order: int = 7,
                        refine: int = 1) -> IdentityResult:
    """|int (Lu v - u Lv) - oint F(u, v) . nu| on a convex polygon."""
    U, V = Derivatives(u), Derivatives(v)
    verts = _vertices(poly)
    clockwise = polygon_area(verts) < 0
    x, w = polygon_quadrature(verts, order, refine)
    Lu = ex.eval_at(apply_operator(sym, U.node), x1=x[:, 0], x2=x[:, 1])
    Lv = ex.eval_at(apply_operator(sym, V.node), x1=x[:, 0], x2=x[:, 1])
    area = float(w @ (Lu * V.at(0, 0, x) - U.at(0, 0, x) * Lv))
    boundary = 0.0
    for e in polygon_edges(verts):
        xe, we = edge_quadrature(e, order, refine)
        boundary += float(we @ (_flux(sym, U, V, xe) @ e.outer_normal(clockwise)))
    return IdentityResult(area, boundary, abs(area - boundary), order)


# ---------------------------------------------------------------------------
# Gamma0 pairing form


def strip_bump(left: float, right: float, height: float):
    """Polynomial bump on [left, right] x [0, height], vanishing to order 4 on
    the three sides away from Gamma0 and of unit size at (mid, 0)."""
    if not (right > left and height > 0):
        raise BumpSupportViolation("strip must have positive width and height")
    half = 0.5 * (right - left)
    text = (f"(((x1 - ({left!r}))*(({right!r}) - x1)/({half * half!r}))^4)"
            f"*((1 - x2/({height!r}))^4)")
    return ex.parse(text)


def _max_strip_height(region, left: float, right: float) -> float:
    """Tallest rectangle on [left, right] that fits in the triangle."""
    lo, hi = 0.0, region.height
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if np.all(region.contains(np.array([[left, mid], [right, mid]]))):
            lo = mid
        else:
            hi = mid
    return lo


def gamma0_identity_residual(sym: HyperbolicSymbol, data: CauchyData, u_star, g: Gamma0,
                             w=None, *, order: int = 7, refine: int = 24,
                             margin: float = 0.25, height: Optional[float] = None,
                             traces: Optional[TraceSet] = None) -> IdentityResult:
    """Check (Lu, v) - (u, Lv) = sum_j int_Gamma0 L_(3-j)u d_nu^j v.

    v = bump * w is supported in the strip [a + m, b - m] x [0, height], with
    m = margin * (b - a); the strip must lie in the domain of determinacy.
    The traces come from the Cauchy data (``gamma0_traces``), u* only
    supplies the area integrals.
    """
    region = determinacy_region(sym, g)
    m = margin * (g.b - g.a)
    left, right = g.a + m, g.b - m
    if height is None:
        height = 0.9 * _max_strip_height(region, left, right)
    corners = np.array([[left, 0.0], [right, 0.0], [right, height], [left, height]])
    if not np.all(region.contains(corners)):
        raise BumpSupportViolation("strip support leaves the domain of determinacy")

    bump = strip_bump(left, right, height)
    w = ex.parse(w) if isinstance(w, str) else (w if w is not None else ex.ONE)
    v = ex.mul(bump, w)
    U, V = Derivatives(u_star), Derivatives(v)
    x, wt = polygon_quadrature(corners, order, refine)
    Lu = ex.eval_at(apply_operator(sym, U.node), x1=x[:, 0], x2=x[:, 1])
    Lv = ex.eval_at(apply_operator(sym, V.node), x1=x[:, 0], x2=x[:, 1])
    area = float(wt @ (Lu * V.at(0, 0, x) - U.at(0, 0, x) * Lv))

    traces = traces if traces is not None else gamma0_traces(sym, data)
    xe, we = edge_quadrature(((left, 0.0), (right, 0.0)), order, refine)
    tr = traces.evaluate(xe[:, 0])
    boundary = 0.0
    for j in range(4):
        dnu = (-1) ** j * V.at(0, j, xe)
        boundary += float(we @ (tr[3 - j] * dnu))
    return IdentityResult(area, boundary, abs(area - boundary), order,
                          {"strip": corners.tolist()})


# ---------------------------------------------------------------------------
# Factored (pentagon) form


def _factor_expansion(lams: Sequence[float]) -> dict:
    """prod_j (d1 - lam_j d2) as {(i, k): coefficient}."""
    poly = {(0, 0): 1.0}
    for lam in lams:
        nxt: dict = {}
        for (i, k), c in poly.items():
            nxt[(i + 1, k)] = nxt.get((i + 1, k), 0.0) + c
            nxt[(i, k + 1)] = nxt.get((i, k + 1), 0.0) - lam * c
        poly = nxt
    return poly


def _apply_factors(D: Derivatives, lams, pts) -> np.ndarray:
    total = np.zeros(len(pts))
    for (i, k), c in _factor_expansion(lams).items():
        if c != 0:
            total += c * D.at(i, k, pts)
    return total


@dataclass
class EdgeTraces:
    edge: int
    root_index: Optional[int]
    nodes: np.ndarray
    weights: np.ndarray
    normal: np.ndarray
    values: dict


def tilde_traces(sym: HyperbolicSymbol, u_star, pentagon, order: int = 7):
    """Per-edge samples of <nu,a4> u, <nu,a3> P4 u, <nu,a2> P3 P4 u and
    <nu,a1> P2 P3 P4 u (the last one is L_(3)u)."""
    U = Derivatives(u_star)
    lam = sym.roots
    verts = _vertices(pentagon)
    clockwise = polygon_area(verts) < 0
    edges = getattr(pentagon, "edges", None) or polygon_edges(verts)
    out = []
    for idx, e in enumerate(edges):
        nu = e.outer_normal(clockwise)
        xe, we = edge_quadrature(e, order)
        pair = lambda j: nu[0] - lam[j - 1] * nu[1]  # noqa: E731  <nu, a^j>
        values = {
            0: pair(4) * U.at(0, 0, xe),
            1: pair(3) * _apply_factors(U, lam[3:], xe),
            2: pair(2) * _apply_factors(U, lam[2:], xe),
            3: pair(1) * _apply_factors(U, lam[1:], xe),
        }
        out.append(EdgeTraces(idx, e.root_index, xe, we, nu, values))
    return out


def kernel_profile(sym: HyperbolicSymbol, j: int, hprofile) -> ex.Node:
    """v = h(x2 + lambda_j x1), annihilated by P_j and hence by L."""
    hprofile = ex.parse(hprofile) if isinstance(hprofile, str) else hprofile
    lam = sym.roots[j - 1]
    arg = ex.add(ex.Var("x2"), ex.mul(ex.Num(lam), ex.Var("x1")))
    return ex.substitute(hprofile, {"x1": arg})


def kernel_identity_residual(sym: HyperbolicSymbol, u_star, j: int, hprofile, pentagon,
                             order: int = 7, refine: int = 1) -> IdentityResult:
    """Pentagon identity with v = h(x2 + lambda_j x1) in the adjoint kernel:

        int Lu v = a0 oint [L_(3)u v - ~L_(2)u P1 v + ~L_(1)u P2 P1 v
                            - ~L_(0)u P3 P2 P1 v] ds
    """
    U = Derivatives(u_star)
    V = Derivatives(kernel_profile(sym, j, hprofile))
    lam = sym.roots
    verts = _vertices(pentagon)
    clockwise = polygon_area(verts) < 0
    x, w = polygon_quadrature(verts, order, refine)
    Lu = ex.eval_at(apply_operator(sym, U.node), x1=x[:, 0], x2=x[:, 1])
    area = float(w @ (Lu * V.at(0, 0, x)))
    Lv = ex.eval_at(apply_operator(sym, V.node), x1=x[:, 0], x2=x[:, 1])
    adjoint_term = float(w @ (U.at(0, 0, x) * Lv))

    boundary = 0.0
    for e in polygon_edges(verts):
        nu = e.outer_normal(clockwise)
        xe, we = edge_quadrature(e, order, refine)
        pair = lambda k: nu[0] - lam[k - 1] * nu[1]  # noqa: E731
        integrand = (pair(1) * _apply_factors(U, lam[1:], xe) * V.at(0, 0, xe)
                     - pair(2) * _apply_factors(U, lam[2:], xe) * _apply_factors(V, lam[:1], xe)
                     + pair(3) * _apply_factors(U, lam[3:], xe) * _apply_factors(V, lam[:2], xe)
                     - pair(4) * U.at(0, 0, xe) * _apply_factors(V, lam[:3], xe))
        boundary += float(we @ integrand)
    boundary *= sym.a0
    return IdentityResult(area, boundary, abs(area - boundary), order,
                          {"adjoint_term": adjoint_term})


# ---------------------------------------------------------------------------
# Wave equation in the unit disk


_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)


def _gauss(f, a: float, b: float) -> float:
    x = 0.5 * (b - a) * _GL_X + 0.5 * (a + b)
    return 0.5 * (b - a) * float(_GL_W @ f(x))


def adaptive_integrate(f, breaks: Sequence[float], rel_tol: float = 1e-8,
                       max_panels: int = 20000):
    """Panel-bisection Gauss-Legendre quadrature of a vectorized f.

    Each panel is accepted when its 10-point value agrees with the sum over
    its two halves to ``rel_tol`` relative to the running total.  Returns
    (integral, number of accepted panels).
    """
    stack = [(a, b, _gauss(f, a, b)) for a, b in zip(breaks[:-1], breaks[1:])]
    scale = abs(sum(s[2] for s in stack)) or 1.0
    total = 0.0
    accepted = 0
    while stack:
        a, b, whole = stack.pop()
        m = 0.5 * (a + b)
        left, right = _gauss(f, a, m), _gauss(f, m, b)
        if abs(left + right - whole) <= rel_tol * scale or accepted + len(stack) > max_panels:
            total += left + right
            accepted += 2
            scale = max(scale, abs(total))
            continue
        stack.append((a, m, left))
        stack.append((m, b, right))
    return total, accepted


def _graded_breaks(width: float, end: float):
    br = [0.0]
    x = width
    while x < end:
        br.append(x)
        x *= 2.0
    br.append(end)
    return br


def _ring_integral(g, r: float, power: float, rel_tol: float):
    """4 r int_0^{pi/2} g(theta) (1 - r^2 cos^2 theta)^power d theta."""
    eps = math.sqrt(max(1.0 - r * r, 1e-300))

    def f(t):
        c = np.cos(t)
        s = np.sin(t)
        base = (1.0 - r * r) + r * r * s * s  # = 1 - r^2 cos^2, without cancellation
        return g(c, s) * base ** power

    val, panels = adaptive_integrate(f, _graded_breaks(0.25 * eps, 0.5 * math.pi), rel_tol)
    return 4.0 * r * val, panels


@dataclass
class WaveDiskReport:
    p: float
    rows: list  # (r, I, N, panels)
    slope: float
    raw_slope: float
    n_change: float  # |N(1-1e-6) - N(1-1e-4)| / N(1-1e-4)
    trace_blows_up: bool
    l2_increments: list
    in_l2: bool

    def verdicts(self) -> dict:
        return {
            "p": self.p,
            "trace_slope": self.slope,
            "raw_loglog_slope": self.raw_slope,
            "classical_trace": "blow-up" if self.trace_blows_up else "no blow-up",
            "l0_trace_relative_change": self.n_change,
            "membership": "u in L2(K)" if self.in_l2 else "u not in L2(K)",
        }


def _l2_increments(p: float, decades: int, rel_tol: float):
    """int of u^2 over the annuli 1 - 10^-k < |x| < 1 - 10^-(k+1)."""
    def ring(rho):
        return np.array([_ring_integral(lambda c, s: 1.0, float(r), 2 * p, rel_tol)[0]
                         for r in np.atleast_1d(rho)])

    edges = [0.0] + [1.0 - 10.0 ** (-k) for k in range(1, decades + 2)]
    incs = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        # ring() already includes the factor r of the polar measure
        val, _ = adaptive_integrate(ring, [lo, hi], rel_tol=1e-6)
        incs.append(val)
    return incs


def wave_disk_demo(p: float = -0.625, radii: Optional[Sequence[float]] = None,
                   rel_tol: float = 1e-8, decades: int = 8) -> WaveDiskReport:
    """Ring integrals of u = (1 - x1^2)^p for the operator d1 d2 in the disk.

    I(r) is the integral of u over |x| = r, N(r) that of |L_(0)u|^2 =
    |x1 x2 u|^2.  The blow-up exponent of I is fitted from successive
    differences, which removes the bounded part of I; the raw log-log slope
    is reported alongside.  L2(K) membership is judged from the decay of
    the integral of u^2 over annuli approaching the circle.
    """
    if not p < 0:
        raise ValueError("exponent p must be negative (nothing blows up otherwise)")
    if radii is None:
        radii = [1.0 - 10.0 ** (-k) for k in range(2, 7)]
    radii = sorted(float(r) for r in radii)
    if any(not 0.0 < r < 1.0 for r in radii):
        raise ValueError("radii must lie in (0, 1)")

    rows = []
    for r in radii:
        I, n1 = _ring_integral(lambda c, s: np.ones_like(c), r, p, rel_tol)
        N, n2 = _ring_integral(lambda c, s: (r * r * c * s) ** 2, r, 2 * p, rel_tol)
        rows.append((r, I, N, n1 + n2))

    eps = np.array([1.0 - r * r for r in radii])
    Is = np.array([row[1] for row in rows])
    raw_slope = float(np.polyfit(np.log(eps), np.log(Is), 1)[0]) if len(rows) > 1 else math.nan
    if len(rows) > 2:
        dI = np.abs(np.diff(Is))
        slope = float(np.polyfit(np.log(eps[:-1]), np.log(dI), 1)[0])
    else:
        slope = raw_slope
    # Cauchy test of the L_(0)-trace norm between two fixed radii near 1
    n_near = _ring_integral(lambda c, s: (c * s) ** 2 * (1 - 1e-4) ** 4, 1 - 1e-4, 2 * p, rel_tol)[0]
    n_nearer = _ring_integral(lambda c, s: (c * s) ** 2 * (1 - 1e-6) ** 4, 1 - 1e-6, 2 * p, rel_tol)[0]
    n_change = abs(n_nearer - n_near) / abs(n_near)

    incs = _l2_increments(p, decades, rel_tol)
    ratios = [b / a for a, b in zip(incs[1:-1], incs[2:]) if a > 0]
    in_l2 = bool(ratios) and all(q < 0.9 for q in ratios[-3:])
    return WaveDiskReport(p, rows, slope, raw_slope, n_change, slope < 0, incs, in_l2)
