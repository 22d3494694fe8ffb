"""Empirical test of the maximum principle.

If Lu = f <= 0 in the domain of determinacy and the four L-traces of the
Cauchy data are nonnegative on Gamma0, then u <= 0 there.  Instances are
drawn from the kernel of L, u* = -sum_j c_j exp(theta_j (x2 + lambda_j x1)),
so that f = 0 and the exact solution is known in closed form.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import expr as ex
from .geometry import Gamma0
from .solver import (INTERIOR, ProblemInstance, cascade_solve, data_from_solution,
                     max_error)
from .symbol import build_symbol, coeffs_from_roots
from .traces import gamma0_traces

__all__ = [
    "Infeasible",
    "HypothesisReport",
    "Verdict",
    "check_hypotheses",
    "verify_conclusion",
    "generate_instance",
    "instance_config",
    "batch_verify",
    "CHECK_TOL",
    "CONCLUSION_TOL",
]

CHECK_TOL = 1e-10
CONCLUSION_TOL = 1e-6
MAX_DRAWS = 500
ROOT_RANGE = (0.3, 3.0)
ROOT_GAP = 0.2
CONDITIONS = ("f", "L0", "L1", "L2", "L3")


class Infeasible(RuntimeError):
    def __init__(self, seed):
        super().__init__(f"no admissible instance found for seed {seed}")
        self.seed = seed


@dataclass
class HypothesisReport:
    """Sampled minima of -f and of the traces L_(0)u..L_(3)u."""

    minima: dict
    worst_points: dict
    check_tol: float = CHECK_TOL

    @property
    def passed(self) -> dict:
        return {k: bool(v >= -self.check_tol) for k, v in self.minima.items()}

    @property
    def all_pass(self) -> bool:
        return all(self.passed.values())

    def as_dict(self) -> dict:
        return {"all_pass": self.all_pass,
                "conditions": {k: {"min": self.minima[k], "pass": self.passed[k],
                                   "worst_point": list(self.worst_points[k])}
                               for k in CONDITIONS}}


@dataclass
class Verdict:
    max_u: float
    argmax: tuple
    conclusion_tol: float = CONCLUSION_TOL
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_u <= self.conclusion_tol

    def as_dict(self) -> dict:
        return {"max_u": self.max_u, "argmax": list(self.argmax), "pass": self.passed,
                "conclusion_tol": self.conclusion_tol,
                "violations": [list(v) for v in self.violations]}


def _triangle_samples(region, n: int) -> np.ndarray:
    # collapsed square: rows of points on segments from Gamma0 to the apex
    s, t = np.meshgrid(np.linspace(0.0, 1.0, n), np.linspace(0.0, 1.0, n))
    base = np.stack([region.a + t * (region.b - region.a), np.zeros_like(t)], axis=-1)
    pts = (1.0 - s)[..., None] * base + s[..., None] * np.asarray(region.apex)
    return pts.reshape(-1, 2)


def check_hypotheses(inst: ProblemInstance, n_samples: int = 41,
                     check_tol: float = CHECK_TOL) -> HypothesisReport:
    """Sample -f on the determinacy triangle and the traces on Gamma0."""
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    pts = _triangle_samples(inst.region, n_samples)
    negf = -np.broadcast_to(ex.eval_at(inst.f, x1=pts[:, 0], x2=pts[:, 1]), len(pts))
    k = int(np.argmin(negf))
    minima = {"f": float(negf[k])}
    worst = {"f": (float(pts[k, 0]), float(pts[k, 1]))}

    xs = np.linspace(inst.gamma0.a, inst.gamma0.b, n_samples)
    values = gamma0_traces(inst.symbol, inst.data).evaluate(xs)
    for p in range(4):
        k = int(np.argmin(values[p]))
        minima[f"L{p}"] = float(values[p, k])
        worst[f"L{p}"] = (float(xs[k]), 0.0)
    return HypothesisReport(minima, worst, check_tol)


def verify_conclusion(inst: ProblemInstance, conclusion_tol: float = CONCLUSION_TOL,
                      max_violations: int = 20) -> Verdict:
    """Solve and report max u over the interior nodes."""
    u = cascade_solve(inst)
    X, Y = u.mesh()
    sel = u.mask == INTERIOR
    vals = np.where(sel, u.values, -np.inf)
    k = np.unravel_index(np.argmax(vals), vals.shape)
    bad = np.argwhere(sel & (u.values > conclusion_tol))[:max_violations]
    violations = [(float(X[j, i]), float(Y[j, i]), float(u.values[j, i])) for j, i in bad]
    return Verdict(float(vals[k]), (float(X[k]), float(Y[k])), conclusion_tol, violations)


# ---------------------------------------------------------------------------
# Instance generation


def _draw_roots(rng: np.random.Generator):
    # two negative and two positive roots so that a4 = a0 * prod(roots) > 0,
    # which L_(0)u = -a4 phi >= 0 with phi < 0 requires
    while True:
        mags = rng.uniform(*ROOT_RANGE, size=4)
        roots = np.sort(np.concatenate([-mags[:2], mags[2:]]))
        if np.all(np.diff(roots) >= ROOT_GAP):
            return [float(r) for r in roots]


def _mode_text(c: float, theta: float, lam: float) -> str:
    if theta == 0.0:
        return f"({c!r})"
    return f"({c!r})*exp(({theta!r})*(x2 + ({lam!r})*x1))"


def _kernel_solution(cs, thetas, lams) -> str:
    modes = [_mode_text(c, t, l) for c, t, l in zip(cs, thetas, lams) if c != 0]
    return "-(" + " + ".join(modes) + ")"


def _instance(sym, g, u_text: str, h: float) -> ProblemInstance:
    u = ex.parse(u_text)
    return ProblemInstance(sym, g, data_from_solution(u), ex.ZERO, h, exact=u)


def generate_instance(seed: int, h: float = 0.01, n_samples: int = 21) -> ProblemInstance:
    """Seeded instance from the kernel of L whose hypotheses all pass.

    Up to 500 random combinations are tried; then single modes with
    c = 1 and theta of either sign, and finally the constant mode theta = 0.
    """
    return _generate(seed, h, n_samples)[0]


def _generate(seed: int, h: float, n_samples: int = 21):
    rng = np.random.default_rng(seed)
    roots = _draw_roots(rng)
    a0 = float(rng.uniform(0.5, 2.0))
    sym = build_symbol(coeffs_from_roots(a0, roots))
    lams = sym.roots
    g = Gamma0(0.0, 1.0)

    xs = np.linspace(g.a, g.b, n_samples)
    tails = _trace_factors(sym)

    def admissible(cs, thetas):
        # closed-form screen first; the symbolic check confirms the survivor
        if np.min(_mode_traces(cs, thetas, lams, tails, xs)) < -CHECK_TOL:
            return None
        inst = _instance(sym, g, _kernel_solution(cs, thetas, lams), h)
        return inst if check_hypotheses(inst, n_samples).all_pass else None

    for _ in range(MAX_DRAWS):
        cs = [float(c) for c in rng.uniform(0.0, 1.0, size=4)]
        thetas = [float(t) for t in rng.uniform(-1.0, 1.0, size=4)]
        if sum(cs) <= 0.0:
            continue
        inst = admissible(cs, thetas)
        if inst is not None:
            return inst, "mixed"
    for j in range(4):
        for theta in (-1.0, 1.0):
            cs = [0.0] * 4
            cs[j] = 1.0
            thetas = [0.0] * 4
            thetas[j] = theta
            inst = admissible(cs, thetas)
            if inst is not None:
                return inst, "single"
    inst = admissible([1.0, 0.0, 0.0, 0.0], [0.0] * 4)
    if inst is None:
        raise Infeasible(seed)
    return inst, "constant"


def _trace_factors(sym) -> np.ndarray:
    """S[j, i] = sum_{p > i} a_p lambda_j^(4-p), i = 0..3."""
    a = sym.coeffs.as_tuple()
    return np.array([[sum(a[p] * lam ** (4 - p) for p in range(i + 1, 5)) for i in range(4)]
                     for lam in sym.roots])


def _mode_traces(cs, thetas, lams, tails, xs) -> np.ndarray:
    # u = -c exp(theta (x2 + lam x1)) has L_(k)u = c theta^k S_(3-k) exp(theta lam x1)
    out = np.zeros((4, len(xs)))
    for j, (c, t, lam) in enumerate(zip(cs, thetas, lams)):
        if c == 0:
            continue
        e = np.exp(t * lam * xs)
        for k in range(4):
            out[k] += c * t ** k * tails[j, 3 - k] * e
    return out


def instance_config(inst: ProblemInstance, seed: Optional[int] = None,
                    conclusion_tol: float = CONCLUSION_TOL) -> dict:
    """Config document (cli format) that reproduces ``inst``."""
    cfg = {
        "coefficients": list(inst.symbol.coeffs.as_tuple()),
        "gamma0": {"a": inst.gamma0.a, "b": inst.gamma0.b},
        "data": inst.data.texts(),
        "f": ex.to_text(inst.f),
        "grid": {"h": inst.h, "quad_order": 7},
        "tolerances": {"check_tol": CHECK_TOL, "conclusion_tol": conclusion_tol},
    }
    if seed is not None:
        cfg["seed"] = seed
    if inst.exact is not None:
        cfg["manufactured"] = {"u": ex.to_text(inst.exact)}
    return cfg


# ---------------------------------------------------------------------------
# Batch


def _run_one(args):
    seed, h = args
    try:
        inst, family = _generate(seed, h)
    except Infeasible:
        return {"seed": seed, "infeasible": True}
    report = check_hypotheses(inst)
    verdict = verify_conclusion(inst)
    return {
        "seed": seed,
        "infeasible": False,
        "family": family,
        "hypotheses_pass": report.all_pass,
        "pass": verdict.passed,
        "max_u": verdict.max_u,
        "error": max_error(cascade_solve(inst), inst.exact) if not verdict.passed else None,
        "config": instance_config(inst, seed) if not verdict.passed else None,
    }


def _workers() -> int:
    raw = os.environ.get("CHARPENT_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)


def _write_json(path: Path, obj) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2) + "\n")
    os.replace(tmp, path)


def batch_verify(n: int, seed0: int = 1, h: float = 0.01,
                 dump_dir: Optional[str] = None) -> dict:
    """Generate and verify n instances with seeds seed0 .. seed0 + n - 1.

    Failing instances are written to ``dump_dir`` as config files.  The
    summary depends only on (n, seed0, h).
    """
    if n < 1:
        raise ValueError("batch size must be at least 1")
    jobs = [(seed0 + i, h) for i in range(n)]
    workers = min(_workers(), n)
    if workers == 1:
        results = [_run_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))

    feasible = [r for r in results if not r["infeasible"]]
    failures = [r for r in feasible if not r["pass"]]
    worst = max(feasible, key=lambda r: r["max_u"]) if feasible else None
    dumps = []
    if dump_dir is not None and failures:
        out = Path(dump_dir)
        out.mkdir(parents=True, exist_ok=True)
        for r in failures:
            path = out / f"failure_seed{r['seed']}.json"
            _write_json(path, r["config"])
            dumps.append(str(path))
    return {
        "n": n,
        "seed0": seed0,
        "h": h,
        "instances_run": len(feasible),
        "infeasible": [r["seed"] for r in results if r["infeasible"]],
        "families": {k: sum(r["family"] == k for r in feasible)
                     for k in ("mixed", "single", "constant")},
        "hypothesis_pass": sum(r["hypotheses_pass"] for r in feasible),
        "conclusion_pass": sum(r["pass"] for r in feasible),
        "worst_max_u": worst["max_u"] if worst else None,
        "worst_seed": worst["seed"] if worst else None,
        "failures": [{"seed": r["seed"], "max_u": r["max_u"], "max_error": r["error"]}
                     for r in failures],
        "dumps": dumps,
    }
