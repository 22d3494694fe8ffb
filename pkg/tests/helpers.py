"""Shared utilities for the test suite (not collected)."""

import numpy as np

from charpent import expr as ex
from charpent.solver import INTERIOR, SolutionGrid, _classify, _lattice


def sampled_grid(region, h, u):
    """Grid holding the exact values of expression ``u`` on the lattice."""
    u = ex.parse(u) if isinstance(u, str) else u
    X, Y = _lattice(region, h)
    mask, _ = _classify(region, X, Y, h)
    vals = np.asarray(ex.eval_at(u, x1=X, x2=Y), dtype=float) * np.ones(X.shape)
    return SolutionGrid(region.a, h, vals, mask, np.ones(X.shape, bool), region)


def common_node_errors(grids, exact):
    """Max error of successive h/2 refinements on the coarse interior nodes."""
    exact = ex.parse(exact) if isinstance(exact, str) else exact
    coarse = grids[0]
    X, Y = coarse.mesh()
    sel = coarse.mask == INTERIOR
    ny = min(g.values[:: 2**k].shape[0] for k, g in enumerate(grids))
    sel[ny:] = False
    ref = ex.eval_at(exact, x1=X[sel], x2=Y[sel])
    errs = []
    for k, g in enumerate(grids):
        s = 2 ** k
        v = g.values[::s, ::s][:ny, : sel.shape[1]]
        errs.append(float(np.max(np.abs(v[sel[:ny]] - ref))))
    return errs


def observed_orders(errs):
    e = np.asarray(errs)
    return np.log2(e[:-1] / e[1:])


def random_tree(rng: np.random.Generator, depth: int) -> str:
    """Random expression text whose derivatives stay bounded on [-1, 1]^2."""
    if depth == 0 or rng.random() < 0.2:
        choice = rng.integers(3)
        if choice == 0:
            return "x1"
        if choice == 1:
            return "x2"
        return repr(round(float(rng.uniform(-2, 2)), 3))
    a = random_tree(rng, depth - 1)
    kind = rng.integers(10)
    if kind < 4:
        b = random_tree(rng, depth - 1)
        op = "+-*"[kind % 3]
        return f"({a} {op} {b})"
    if kind == 4:
        return f"({a}) / (2 + sin({random_tree(rng, depth - 1)}))"
    if kind == 5:
        return f"({a})^{int(rng.integers(2, 4))}"
    if kind == 6:
        return f"sqrt(1 + ({a})^2)"
    if kind == 7:
        return f"log(2 + cos({a}))"
    fn = ("sin", "cos", "tanh", "exp")[int(rng.integers(4))]
    if fn == "exp":
        return f"exp(sin({a}))"
    return f"{fn}({a})"
