"""Quartic symbol classification and factorization into transport factors.

The operator

    L = a0 d1^4 + a1 d1^3 d2 + a2 d1^2 d2^2 + a3 d1 d2^3 + a4 d2^4

is hyperbolic when the characteristic polynomial a0 t^4 + ... + a4 has four
simple real roots.  Then L = a0 P1 P2 P3 P4 with P_j = d1 - lambda_j d2, the
derivative along the characteristic direction (1, -lambda_j).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

__all__ = [
    "SymbolError",
    "NonRealRoots",
    "MultipleRoots",
    "ZeroRoot",
    "DegenerateRoots",
    "SymbolCoefficients",
    "CharacteristicDirection",
    "HyperbolicSymbol",
    "build_symbol",
    "eval_symbol",
    "coeffs_from_roots",
    "elementary_symmetric",
]

GAP_TOL = 1e-6
IMAG_TOL = 1e-8
ZERO_ROOT_TOL = 1e-9
NEWTON_STEPS = 20


class SymbolError(ValueError):
    """The coefficients do not define a usable hyperbolic symbol."""


class NonRealRoots(SymbolError):
    pass


class MultipleRoots(SymbolError):
    pass


class ZeroRoot(SymbolError):
    pass


class DegenerateRoots(SymbolError):
    pass


@dataclass(frozen=True)
class SymbolCoefficients:
    a0: float
    a1: float
    a2: float
    a3: float
    a4: float

    def __post_init__(self):
        for name in ("a0", "a1", "a2", "a3", "a4"):
            value = getattr(self, name)
            if isinstance(value, complex) or not math.isfinite(float(value)):
                raise SymbolError(f"{name} must be a finite real number")
            object.__setattr__(self, name, float(value))

    @classmethod
    def of(cls, values: Sequence[float]) -> "SymbolCoefficients":
        if len(values) != 5:
            raise SymbolError("exactly five coefficients a0..a4 are required")
        return cls(*values)

    def as_tuple(self) -> tuple:
        return (self.a0, self.a1, self.a2, self.a3, self.a4)

    def scaled(self, c: float) -> "SymbolCoefficients":
        return SymbolCoefficients(*(c * a for a in self.as_tuple()))


@dataclass(frozen=True)
class CharacteristicDirection:
    index: int
    root: float

    @property
    def tangent(self) -> np.ndarray:
        """Factor vector a^j = (1, -lambda_j)."""
        return np.array([1.0, -self.root])

    @property
    def normal(self) -> np.ndarray:
        """Normal vector (lambda_j, 1), orthogonal to the tangent."""
        return np.array([self.root, 1.0])

    @property
    def slope(self) -> float:
        return -self.root

    @property
    def angle(self) -> float:
        return math.atan(self.slope)


@dataclass(frozen=True)
class HyperbolicSymbol:
    coeffs: SymbolCoefficients
    roots: tuple
    directions: tuple

    @property
    def a0(self) -> float:
        return self.coeffs.a0

    def apply_factor(self, k: int, dx1, dx2):
        """Combine partial derivatives into P_k u = u_x1 - lambda_k u_x2."""
        return dx1 - self.roots[k - 1] * dx2


def _poly(coeffs, t):
    a0, a1, a2, a3, a4 = coeffs
    return (((a0 * t + a1) * t + a2) * t + a3) * t + a4


def _dpoly(coeffs, t):
    a0, a1, a2, a3, _ = coeffs
    return ((4 * a0 * t + 3 * a1) * t + 2 * a2) * t + a3


def _two_sum(a: float, b: float):
    s = a + b
    z = s - a
    return s, (a - (s - z)) + (b - z)


def _split(a: float):
    c = 134217729.0 * a  # 2^27 + 1
    hi = c - (c - a)
    return hi, a - hi


def _two_prod(a: float, b: float):
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    return p, al * bl - (((p - ah * bh) - al * bh) - ah * bl)


def _comp_horner(coeffs, t: float) -> float:
    # compensated Horner: accurate as if evaluated in twice the working
    # precision, which clustered roots need for polishing
    acc = coeffs[0]
    err = 0.0
    for a in coeffs[1:]:
        p, ep = _two_prod(acc, t)
        acc, es = _two_sum(p, a)
        err = err * t + (ep + es)
    return acc + err


def _polish(coeffs, root: float) -> float:
    x = root
    res = abs(_comp_horner(coeffs, x))
    for _ in range(NEWTON_STEPS):
        d = _dpoly(coeffs, x)
        if d == 0 or res == 0:
            break
        x_new = x - _comp_horner(coeffs, x) / d
        if not math.isfinite(x_new) or x_new == x:
            break
        res_new = abs(_comp_horner(coeffs, x_new))
        if res_new >= res:
            break
        x, res = x_new, res_new
    return x


def _split_multiple(monic, eig) -> bool:
    # rounding splits an m-fold real root into a cluster of radius ~eps^(1/m),
    # possibly with complex members; p' vanishes at the cluster centre
    for z in eig[np.abs(eig.imag) > IMAG_TOL]:
        radius = 1e-3 * (1.0 + abs(z))
        cluster = eig[np.abs(eig - z) < radius]
        c = float(np.mean(cluster).real)
        if len(cluster) < 2 or abs(np.mean(cluster).imag) > IMAG_TOL:
            continue
        dp = abs(_dpoly(tuple(monic), c))
        if dp <= 1e-6 * max(1.0, abs(c)) ** 3:
            return True
    return False


def build_symbol(coeffs, gap_tol: float = GAP_TOL) -> HyperbolicSymbol:
    """Classify the symbol and factor it into four transport operators.

    Roots come from the eigenvalues of the (LAPACK-balanced) companion matrix
    and are then polished by Newton's method on the quartic.  Raises
    NonRealRoots, MultipleRoots or ZeroRoot when the equation is not strictly
    hyperbolic with Gamma0 = {x2 = 0} non-characteristic.
    """
    if not isinstance(coeffs, SymbolCoefficients):
        coeffs = SymbolCoefficients.of(coeffs)
    raw = np.array(coeffs.as_tuple())
    scale = np.max(np.abs(raw))
    if scale == 0 or abs(raw[0]) / scale <= 1e-12:
        raise SymbolError("leading coefficient a0 vanishes; the symbol is not quartic")
    monic = raw / raw[0]

    companion = np.zeros((4, 4))
    companion[0, :] = -monic[1:]
    companion[1:, :3] = np.eye(3)
    eig = np.linalg.eigvals(companion)

    # conjugate pairs closer than gap_tol are a split multiple root
    complex_part = eig[np.abs(eig.imag) > IMAG_TOL]
    if complex_part.size:
        if np.all(2 * np.abs(complex_part.imag) < gap_tol) or _split_multiple(monic, eig):
            raise MultipleRoots(f"multiple real root near {complex_part.real.tolist()}")
        raise NonRealRoots(f"non-real characteristic roots {np.round(eig, 12).tolist()}")

    roots = sorted(_polish(coeffs.as_tuple(), float(r)) for r in eig.real)
    for r in roots:
        if abs(r) < ZERO_ROOT_TOL:
            raise ZeroRoot("zero characteristic root: Gamma0 is characteristic")
    gaps = np.diff(roots)
    if np.any(gaps < gap_tol):
        raise MultipleRoots(f"characteristic roots {roots} closer than {gap_tol}")
    for r in roots:
        res = abs(_poly(tuple(raw), r))
        bound = 1e-9 * scale * max(1.0, abs(r)) ** 4
        if res > bound:
            raise SymbolError(f"root {r} not resolved (residual {res:.3g})")

    directions = tuple(CharacteristicDirection(j + 1, r) for j, r in enumerate(roots))
    return HyperbolicSymbol(coeffs, tuple(roots), directions)


def eval_symbol(sym, xi):
    """L(xi) = a0 xi1^4 + a1 xi1^3 xi2 + ... + a4 xi2^4 (arrays broadcast)."""
    coeffs = sym.coeffs if isinstance(sym, HyperbolicSymbol) else sym
    if not isinstance(coeffs, SymbolCoefficients):
        coeffs = SymbolCoefficients.of(coeffs)
    x1, x2 = xi
    a0, a1, a2, a3, a4 = coeffs.as_tuple()
    return (a0 * x1**4 + a1 * x1**3 * x2 + a2 * x1**2 * x2**2
            + a3 * x1 * x2**3 + a4 * x2**4)


def elementary_symmetric(values: Sequence[float], k: int) -> float:
    if k == 0:
        return 1.0
    return math.fsum(math.prod(c) for c in combinations(values, k))


def coeffs_from_roots(a0: float, roots: Sequence[float],
                      gap_tol: float = GAP_TOL) -> SymbolCoefficients:
    """Coefficients a_k = a0 (-1)^k e_k(roots) of a0 prod (t - lambda_j)."""
    roots = sorted(float(r) for r in roots)
    if len(roots) != 4:
        raise DegenerateRoots("four roots are required")
    if any(abs(r) < ZERO_ROOT_TOL for r in roots):
        raise DegenerateRoots("roots must be nonzero")
    if any(b - a < gap_tol for a, b in zip(roots, roots[1:])):
        raise DegenerateRoots("roots must be distinct")
    return SymbolCoefficients(*(a0 * (-1) ** k * elementary_symmetric(roots, k)
                                for k in range(5)))
