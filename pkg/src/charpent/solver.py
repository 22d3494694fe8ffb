"""Cauchy problem solver: a cascade of four transport equations.

With roots lambda_1 < ... < lambda_4 and P_j = d1 - lambda_j d2 the equation
L u = f is solved as

    P1 w1 = f / a0,   P2 w2 = w1,   P3 w3 = w2,   P4 u = w3

on the domain of determinacy of Gamma0.  Each transport equation is
integrated exactly along its characteristic with composite Simpson; stage
fields are stored on a uniform grid and sampled bilinearly by the next stage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import expr as ex
from .geometry import DeterminacyTriangle, Gamma0, determinacy_region
from .symbol import HyperbolicSymbol, ZeroRoot, elementary_symmetric

__all__ = [
    "SolverError",
    "SourceUndefined",
    "EmptyRegion",
    "GridTooCoarse",
    "CauchyData",
    "ProblemInstance",
    "SolutionGrid",
    "OUTSIDE",
    "BOUNDARY_LAYER",
    "INTERIOR",
    "apply_operator",
    "data_from_solution",
    "stage_boundary",
    "transport_solve",
    "cascade_solve",
    "fd_residual",
    "max_error",
]

OUTSIDE, BOUNDARY_LAYER, INTERIOR = 0, 1, 2
MASK_MARGIN = 2  # cells between interior nodes and the lateral edges
_TOL = 1e-12


class SolverError(RuntimeError):
    pass


class SourceUndefined(SolverError):
    pass


class EmptyRegion(SolverError):
    pass


class GridTooCoarse(SolverError):
    pass


# ---------------------------------------------------------------------------
# Problem description


@dataclass(frozen=True)
class CauchyData:
    """u, d_nu u, d_nu^2 u, d_nu^3 u on Gamma0, with nu = (0, -1)."""

    phi: ex.Node
    psi: ex.Node
    sigma: ex.Node
    chi: ex.Node

    @classmethod
    def parse(cls, phi: str, psi: str, sigma: str, chi: str) -> "CauchyData":
        nodes = [ex.parse(t) for t in (phi, psi, sigma, chi)]
        for name, node in zip(("phi", "psi", "sigma", "chi"), nodes):
            if "x2" in ex.variables(node):
                raise ex.ExprError(f"{name} must depend on x1 only")
        return cls(*nodes)

    def mu(self, k: int) -> ex.Node:
        """k-th x2-derivative of u on Gamma0: phi, -psi, sigma, -chi."""
        node = (self.phi, self.psi, self.sigma, self.chi)[k]
        return node if k % 2 == 0 else ex.neg(node)

    def scaled(self, t: float) -> "CauchyData":
        c = ex.Num(float(t))
        return CauchyData(*(ex.mul(c, n) for n in (self.phi, self.psi, self.sigma, self.chi)))

    def texts(self) -> dict:
        return {k: ex.to_text(getattr(self, k)) for k in ("phi", "psi", "sigma", "chi")}


def data_from_solution(u) -> CauchyData:
    """Cauchy data induced on Gamma0 by a closed-form solution u(x1, x2)."""
    u = ex.parse(u) if isinstance(u, str) else u
    on_gamma = lambda node: ex.substitute(node, {"x2": 0.0})  # noqa: E731
    d = [ex.nth_derivative(u, "x2", k) for k in range(4)]
    return CauchyData(on_gamma(d[0]), on_gamma(ex.neg(d[1])),
                      on_gamma(d[2]), on_gamma(ex.neg(d[3])))


def apply_operator(sym: HyperbolicSymbol, u) -> ex.Node:
    """Symbolic L u = sum_p a_p d1^(4-p) d2^p u."""
    u = ex.parse(u) if isinstance(u, str) else u
    total = ex.ZERO
    for p, a in enumerate(sym.coeffs.as_tuple()):
        if a == 0:
            continue
        term = ex.nth_derivative(ex.nth_derivative(u, "x1", 4 - p), "x2", p)
        total = ex.add(total, ex.mul(ex.Num(a), term))
    return total


@dataclass(frozen=True)
class ProblemInstance:
    symbol: HyperbolicSymbol
    gamma0: Gamma0
    data: CauchyData
    f: ex.Node
    h: float = 0.02
    exact: Optional[ex.Node] = None  # manufactured solution, when known

    def __post_init__(self):
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ValueError("grid spacing h must be positive")

    @property
    def region(self) -> DeterminacyTriangle:
        return determinacy_region(self.symbol, self.gamma0)


# ---------------------------------------------------------------------------
# Grid


@dataclass
class SolutionGrid:
    """Node values on the lattice x = (x0 + i h, j h).

    ``mask`` classifies nodes (INTERIOR, BOUNDARY_LAYER, OUTSIDE) relative to
    the determinacy triangle; ``defined`` marks nodes that carry a computed
    value.  Undefined nodes store 0.0.
    """

    x0: float
    h: float
    values: np.ndarray
    mask: np.ndarray
    defined: np.ndarray
    region: Optional[DeterminacyTriangle] = field(default=None, repr=False)

    @property
    def shape(self):
        return self.values.shape

    @property
    def x1(self) -> np.ndarray:
        return self.x0 + self.h * np.arange(self.values.shape[1])

    @property
    def x2(self) -> np.ndarray:
        return self.h * np.arange(self.values.shape[0])

    def mesh(self):
        return np.meshgrid(self.x1, self.x2)

    def interior_points(self):
        X, Y = self.mesh()
        sel = self.mask == INTERIOR
        return X[sel], Y[sel], self.values[sel]

    def interpolate(self, x1, x2):
        """Bilinear interpolation; every touched cell must be fully defined."""
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        ny, nx = self.values.shape
        fx = (x1 - self.x0) / self.h
        fy = x2 / self.h
        if (np.any(fx < -1e-9) or np.any(fx > nx - 1 + 1e-9)
                or np.any(fy < -1e-9) or np.any(fy > ny - 1 + 1e-9)):
            raise SourceUndefined("interpolation point outside the grid")
        i = np.clip(np.floor(fx).astype(int), 0, nx - 2)
        j = np.clip(np.floor(fy).astype(int), 0, ny - 2)
        tx = fx - i
        ty = fy - j
        d = self.defined
        if not np.all(d[j, i] & d[j, i + 1] & d[j + 1, i] & d[j + 1, i + 1]):
            raise SourceUndefined("characteristic path enters a cell without source values")
        v = self.values
        return ((1 - ty) * ((1 - tx) * v[j, i] + tx * v[j, i + 1])
                + ty * ((1 - tx) * v[j + 1, i] + tx * v[j + 1, i + 1]))


def _lattice(region: DeterminacyTriangle, h: float):
    def count(length):
        r = length / h
        n = round(r) if abs(r - round(r)) < 1e-9 else math.ceil(r)
        return int(n) + 1

    nx = count(region.b - region.a)
    ny = count(region.height)
    x1 = region.a + h * np.arange(nx)
    x2 = h * np.arange(ny)
    return np.meshgrid(x1, x2)


def _classify(region: DeterminacyTriangle, X, Y, h):
    dl, dr = region.lateral_distances(np.stack([X, Y], axis=-1))
    dmin = np.minimum(dl, dr)
    mask = np.full(X.shape, OUTSIDE, dtype=np.int8)
    mask[dmin >= -_TOL] = BOUNDARY_LAYER
    mask[dmin >= MASK_MARGIN * h - _TOL] = INTERIOR
    return mask, dmin


# ---------------------------------------------------------------------------
# Transport


Source = Union[ex.Node, str, float, SolutionGrid, Callable]


def _source_fn(source: Source):
    if isinstance(source, SolutionGrid):
        return source.interpolate
    if isinstance(source, (int, float)):
        value = float(source)
        return lambda x1, x2: np.full(np.broadcast(x1, x2).shape, value)
    if isinstance(source, str):
        source = ex.parse(source)
    if isinstance(source, (ex.Num, ex.Var, ex.Neg, ex.Call, ex.BinOp)):
        node = source
        return lambda x1, x2: ex.eval_at(node, x1=x1, x2=x2)
    return source


def _boundary_fn(boundary):
    if isinstance(boundary, str):
        boundary = ex.parse(boundary)
    if isinstance(boundary, (ex.Num, ex.Var, ex.Neg, ex.Call, ex.BinOp)):
        node = boundary
        return lambda x1: ex.eval_at(node, x1=x1, x2=0.0)
    if isinstance(boundary, (int, float)):
        value = float(boundary)
        return lambda x1: np.full(np.shape(x1), value)
    return boundary


def _simpson_weights(n: int) -> np.ndarray:
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w / 3.0


def _march(lam, source, boundary, X, Y, nodes, h, values, defined, skip_errors=False):
    """Fill ``values`` at ``nodes`` row by row along characteristics.

    Row j lies at x2 = j h and uses n = 2 j Simpson subintervals.
    """
    rows = np.nonzero(nodes.any(axis=1))[0]
    for j in rows:
        cols = np.nonzero(nodes[j])[0]
        x1 = X[j, cols]
        x2 = Y[j, 0]
        ft = x1 + x2 / lam
        try:
            w = np.asarray(boundary(ft), dtype=float)
            if j > 0:
                n = 2 * int(j)
                s = np.linspace(0.0, x2, n + 1)
                frac = s / x2
                q1 = ft[:, None] + frac[None, :] * (x1 - ft)[:, None]
                q2 = np.broadcast_to(s, q1.shape)
                vals = np.asarray(source(q1, q2), dtype=float)
                integral = (x2 / n) * (vals @ _simpson_weights(n))
                w = w - integral / lam
        except (ex.DomainError, SourceUndefined):
            if skip_errors:
                continue
            raise
        values[j, cols] = w
        defined[j, cols] = True


def transport_solve(lam: float, source: Source, boundary, region: DeterminacyTriangle,
                    h: float, margin: float = 0.0) -> SolutionGrid:
    """Solve (d1 - lam d2) w = source with w(., 0) = boundary.

    Values are produced at nodes whose signed Chebyshev distance to both
    lateral edges of ``region`` is at least ``margin`` (negative margins reach
    slightly outside the triangle).  The characteristic integral is

        w(P) = boundary(foot) - (1/lam) * int_0^{x2(P)} source(Q(s)) ds

    along the straight path Q from the foot to P.
    """
    if lam == 0:
        raise ZeroRoot("transport along a characteristic parallel to Gamma0")
    X, Y = _lattice(region, h)
    mask, dmin = _classify(region, X, Y, h)
    nodes = dmin >= margin - _TOL
    values = np.zeros(X.shape)
    defined = np.zeros(X.shape, dtype=bool)
    inside = nodes & (dmin >= -_TOL)
    _march(lam, _source_fn(source), _boundary_fn(boundary), X, Y, inside, h,
           values, defined)
    if margin < 0:
        # data expressions are used slightly beyond Gamma0 here; failures
        # just leave those nodes undefined
        _march(lam, _source_fn(source), _boundary_fn(boundary), X, Y, nodes & ~inside,
               h, values, defined, skip_errors=True)
    return SolutionGrid(region.a, h, values, mask, defined, region)


def stage_boundary(data: CauchyData, suffix: Sequence[float]):
    """Boundary values of prod_{j in suffix} P_j u on Gamma0.

    (prod P_j) u = sum_k (-1)^k e_k d1^(m-k) d2^k u with m = len(suffix), and
    d2^k u = mu_k on Gamma0.
    """
    m = len(suffix)
    terms = []
    for k in range(m + 1):
        coef = (-1) ** k * elementary_symmetric(suffix, k)
        if coef != 0:
            terms.append((coef, ex.nth_derivative(data.mu(k), "x1", m - k)))

    def boundary(x1):
        total = np.zeros(np.shape(x1))
        for coef, node in terms:
            total = total + coef * ex.eval_at(node, x1=x1, x2=0.0)
        return total

    boundary.terms = terms
    return boundary


def cascade_solve(inst: ProblemInstance, order: Sequence[int] | None = None,
                  return_stages: bool = False):
    """Solve the Cauchy problem on the determinacy triangle.

    ``order`` permutes the 1-based root indices used by the four stages
    (default ascending).  The returned grid holds u at INTERIOR nodes.
    """
    sym = inst.symbol
    order = tuple(order) if order is not None else (1, 2, 3, 4)
    if sorted(order) != [1, 2, 3, 4]:
        raise ValueError("order must be a permutation of 1..4")
    lams = [sym.roots[k - 1] for k in order]
    region = inst.region
    h = inst.h
    X, Y = _lattice(region, h)
    mask, _ = _classify(region, X, Y, h)
    if not np.any(mask == INTERIOR):
        raise EmptyRegion(f"no interior grid nodes at h={h} "
                          f"(triangle height {region.height:.3g})")

    f_scaled = ex.mul(ex.Num(1.0 / sym.a0), inst.f)
    source: Source = f_scaled
    stages = []
    for k in range(4):
        # each stage needs one cell less of margin than the next one samples
        margin = (k - 1) * h
        bnd = stage_boundary(inst.data, lams[k + 1:])
        grid = transport_solve(lams[k], source, bnd, region, h, margin=margin)
        stages.append(grid)
        source = grid
    u = stages[-1]
    u.defined &= u.mask == INTERIOR
    u.values[~u.defined] = 0.0
    if return_stages:
        return u, stages
    return u


# ---------------------------------------------------------------------------
# Diagnostics

_D = {
    0: np.array([0.0, 0.0, 1.0, 0.0, 0.0]),
    1: np.array([0.0, -0.5, 0.0, 0.5, 0.0]),
    2: np.array([0.0, 1.0, -2.0, 1.0, 0.0]),
    3: np.array([-0.5, 1.0, 0.0, -1.0, 0.5]),
    4: np.array([1.0, -4.0, 6.0, -4.0, 1.0]),
}


def fd_residual(sym: HyperbolicSymbol, u: SolutionGrid, f):
    """Max |sum_p a_p D_p u - f| over nodes whose 5x5 stencil is interior.

    D_p is the tensor product of centered difference stencils for
    d1^(4-p) d2^p.  Returns (max residual, (x1, x2) of the worst node).
    """
    f = ex.parse(f) if isinstance(f, str) else f
    ok = u.mask == INTERIOR
    if ok.any(axis=0).sum() < 5 or ok.any(axis=1).sum() < 5:
        raise GridTooCoarse("need at least 5 interior nodes in each direction")
    ny, nx = u.shape
    deep = np.zeros_like(ok)
    inner = np.ones((ny - 4, nx - 4), dtype=bool)
    for dj in range(5):
        for di in range(5):
            inner &= ok[dj:dj + ny - 4, di:di + nx - 4]
    deep[2:-2, 2:-2] = inner
    if not deep.any():
        raise GridTooCoarse("no node has a fully interior 5x5 neighbourhood")
    h = u.h
    v = u.values
    total = np.zeros((ny - 4, nx - 4))
    for p, a in enumerate(sym.coeffs.as_tuple()):
        if a == 0:
            continue
        stencil = np.outer(_D[p], _D[4 - p]) / h**4  # rows: x2, cols: x1
        acc = np.zeros_like(total)
        for dj in range(5):
            for di in range(5):
                c = stencil[dj, di]
                if c != 0:
                    acc += c * v[dj:dj + ny - 4, di:di + nx - 4]
        total += a * acc
    X, Y = u.mesh()
    fx = np.zeros_like(total)
    fx[inner] = ex.eval_at(f, x1=X[2:-2, 2:-2][inner], x2=Y[2:-2, 2:-2][inner])
    res = np.where(inner, np.abs(total - fx), -np.inf)
    k = np.unravel_index(np.argmax(res), res.shape)
    return float(res[k]), (float(X[2 + k[0], 2 + k[1]]), float(Y[2 + k[0], 2 + k[1]]))


def max_error(u: SolutionGrid, exact, sel: np.ndarray | None = None) -> float:
    """Max |u - exact| over INTERIOR nodes (or a boolean selection)."""
    exact = ex.parse(exact) if isinstance(exact, str) else exact
    X, Y = u.mesh()
    sel = (u.mask == INTERIOR) if sel is None else sel
    ref = ex.eval_at(exact, x1=X[sel], x2=Y[sel])
    return float(np.max(np.abs(u.values[sel] - ref)))
