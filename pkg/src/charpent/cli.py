"""Command-line front end.

    charpent <classify|solve|green|maxprin|maxprin-batch|wave-disk>
             --config <path> [--out <path>] [--seed N] [--h H]

Exit codes: 0 success, 1 usage error, 2 invalid config, 3 non-hyperbolic
symbol, 4 verification or solve failure.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from . import expr as ex
from .geometry import Gamma0, GeometryError, build_pentagon, determinacy_region
from .maxprin import (CHECK_TOL, CONCLUSION_TOL, batch_verify, check_hypotheses,
                      generate_instance, instance_config, verify_conclusion)
from .solver import (INTERIOR, CauchyData, ProblemInstance, SolverError,
                     cascade_solve, data_from_solution, fd_residual, max_error)
from .symbol import SymbolError, build_symbol
from .traces import (gamma0_identity_residual, gamma0_traces, green_flux_residual,
                     kernel_identity_residual, wave_disk_demo)

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_SYMBOL, EXIT_FAIL = 0, 1, 2, 3, 4
COMMANDS = ("classify", "solve", "green", "maxprin", "maxprin-batch", "wave-disk")

_NUM = {"type": "number"}
_TEXT = {"type": "string"}
_POS = {"type": "number", "exclusiveMinimum": 0}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["coefficients"],
    "properties": {
        "coefficients": {"type": "array", "items": _NUM, "minItems": 5, "maxItems": 5},
        "gamma0": {"type": "object", "additionalProperties": False,
                   "required": ["a", "b"], "properties": {"a": _NUM, "b": _NUM}},
        "C": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
        "data": {"type": "object", "additionalProperties": False,
                 "required": ["phi", "psi", "sigma", "chi"],
                 "properties": {k: _TEXT for k in ("phi", "psi", "sigma", "chi")}},
        "f": _TEXT,
        "grid": {"type": "object", "additionalProperties": False,
                 "properties": {"h": _POS, "quad_order": {"enum": [3, 5, 7]}}},
        "tolerances": {"type": "object", "additionalProperties": False,
                       "properties": {"check_tol": _POS, "conclusion_tol": _POS,
                                      "identity_tol": _POS}},
        "seed": {"type": "integer"},
        "disk_demo": {"type": "object", "additionalProperties": False,
                      "properties": {"p": _NUM,
                                     "radii": {"type": "array", "items": _NUM, "minItems": 1}}},
        "manufactured": {"type": "object", "additionalProperties": False,
                         "properties": {"u": _TEXT, "v": _TEXT, "profile": _TEXT,
                                        "root_index": {"enum": [1, 2, 3, 4]}}},
        "batch": {"type": "object", "additionalProperties": False,
                  "properties": {"n": {"type": "integer"}}},
    },
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    coefficients: tuple
    gamma0: tuple = (0.0, 1.0)
    C: Optional[tuple] = None
    data: Optional[dict] = None
    f: str = "0"
    h: float = 0.02
    quad_order: int = 7
    check_tol: float = CHECK_TOL
    conclusion_tol: float = CONCLUSION_TOL
    identity_tol: float = 1e-6
    seed: Optional[int] = None
    disk_p: float = -0.625
    disk_radii: Optional[tuple] = None
    manufactured: dict = field(default_factory=dict)
    batch_n: int = 100

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        try:
            jsonschema.validate(doc, CONFIG_SCHEMA)
        except jsonschema.ValidationError as err:
            where = "/".join(str(p) for p in err.absolute_path) or "<root>"
            raise ConfigError(f"{where}: {err.message}") from None
        g = doc.get("gamma0", {"a": 0.0, "b": 1.0})
        grid = doc.get("grid", {})
        tol = doc.get("tolerances", {})
        disk = doc.get("disk_demo", {})
        cfg = cls(
            coefficients=tuple(float(a) for a in doc["coefficients"]),
            gamma0=(float(g["a"]), float(g["b"])),
            C=tuple(float(c) for c in doc["C"]) if "C" in doc else None,
            data=dict(doc["data"]) if "data" in doc else None,
            f=doc.get("f", "0"),
            h=float(grid.get("h", 0.02)),
            quad_order=int(grid.get("quad_order", 7)),
            check_tol=float(tol.get("check_tol", CHECK_TOL)),
            conclusion_tol=float(tol.get("conclusion_tol", CONCLUSION_TOL)),
            identity_tol=float(tol.get("identity_tol", 1e-6)),
            seed=doc.get("seed"),
            disk_p=float(disk.get("p", -0.625)),
            disk_radii=tuple(float(r) for r in disk["radii"]) if "radii" in disk else None,
            manufactured=dict(doc.get("manufactured", {})),
            batch_n=int(doc.get("batch", {}).get("n", 100)),
        )
        cfg._check_expressions()
        return cfg

    def _check_expressions(self):
        texts = {"f": self.f, **{f"data.{k}": v for k, v in (self.data or {}).items()},
                 **{f"manufactured.{k}": v for k, v in self.manufactured.items()
                    if k != "root_index"}}
        for name, text in texts.items():
            try:
                ex.parse(text)
            except ex.ExprError as err:
                raise ConfigError(f"{name}: {err}") from None
        if self.data is not None:
            try:
                CauchyData.parse(**self.data)
            except ex.ExprError as err:
                raise ConfigError(f"data: {err}") from None

    def to_dict(self) -> dict:
        doc = {"coefficients": list(self.coefficients),
               "gamma0": {"a": self.gamma0[0], "b": self.gamma0[1]}}
        if self.C is not None:
            doc["C"] = list(self.C)
        if self.data is not None:
            doc["data"] = dict(self.data)
        doc["f"] = self.f
        doc["grid"] = {"h": self.h, "quad_order": self.quad_order}
        doc["tolerances"] = {"check_tol": self.check_tol,
                             "conclusion_tol": self.conclusion_tol,
                             "identity_tol": self.identity_tol}
        if self.seed is not None:
            doc["seed"] = self.seed
        disk = {"p": self.disk_p}
        if self.disk_radii is not None:
            disk["radii"] = list(self.disk_radii)
        doc["disk_demo"] = disk
        if self.manufactured:
            doc["manufactured"] = dict(self.manufactured)
        doc["batch"] = {"n": self.batch_n}
        return doc


def load_config(path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, UnicodeDecodeError) as err:
        raise ConfigError(f"cannot read config: {err}") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"invalid JSON at line {err.lineno} column {err.colno}: {err.msg}") from None
    return RunConfig.from_dict(doc)


# ---------------------------------------------------------------------------
# Output helpers


def write_atomic(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        write_atomic(out, text)
    else:
        sys.stdout.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=True) + "\n"


def grid_csv(u) -> str:
    X, Y = u.mesh()
    buf = io.StringIO()
    buf.write("x1,x2,u,mask\n")
    vals = np.where(u.defined, u.values, np.nan)
    for x1, x2, v, m in zip(X.ravel(), Y.ravel(), vals.ravel(), u.mask.ravel()):
        buf.write(f"{x1:.17g},{x2:.17g},{v:.17g},{int(m)}\n")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Commands


def _symbol(cfg: RunConfig):
    return build_symbol(cfg.coefficients)


def _gamma0(cfg: RunConfig) -> Gamma0:
    try:
        return Gamma0(*cfg.gamma0)
    except GeometryError as err:
        raise ConfigError(str(err)) from None


def _data(cfg: RunConfig) -> CauchyData:
    if cfg.data is not None:
        return CauchyData.parse(**cfg.data)
    if "u" in cfg.manufactured:
        return data_from_solution(cfg.manufactured["u"])
    raise ConfigError("config needs 'data' or 'manufactured.u'")


def _instance(cfg: RunConfig) -> ProblemInstance:
    sym = _symbol(cfg)
    exact = ex.parse(cfg.manufactured["u"]) if "u" in cfg.manufactured else None
    return ProblemInstance(sym, _gamma0(cfg), _data(cfg), ex.parse(cfg.f), cfg.h, exact)


def cmd_classify(cfg: RunConfig, args) -> int:
    sym = _symbol(cfg)
    report = {
        "coefficients": list(sym.coeffs.as_tuple()),
        "hyperbolic": True,
        "roots": list(sym.roots),
        "slopes": [d.slope for d in sym.directions],
        "factor_vectors": [d.tangent.tolist() for d in sym.directions],
        "normals": [d.normal.tolist() for d in sym.directions],
    }
    _emit(_json(report), args.out)
    return EXIT_OK


def cmd_solve(cfg: RunConfig, args) -> int:
    inst = _instance(cfg)
    u = cascade_solve(inst)
    _emit(grid_csv(u), args.out)
    summary = {"interior_nodes": int((u.mask == INTERIOR).sum()), "h": inst.h}
    try:
        res, where = fd_residual(inst.symbol, u, inst.f)
        summary["fd_residual"] = {"max": res, "at": list(where)}
    except SolverError as err:
        summary["fd_residual"] = {"skipped": str(err)}
    if inst.exact is not None:
        summary["max_error"] = max_error(u, inst.exact)
    (sys.stderr if args.out is None else sys.stdout).write(_json(summary))
    return EXIT_OK


def _default_pentagon(g: Gamma0, sym):
    # C above the midpoint of Gamma0, at the first height that closes a pentagon
    region = determinacy_region(sym, g)
    mid = 0.5 * (g.a + g.b)
    for t in np.linspace(1.05, 4.0, 60):
        try:
            return build_pentagon(sym, g, (mid, t * region.height))
        except GeometryError:
            continue
    raise ConfigError("no point C above Gamma0 closes a pentagon; set 'C'")


def cmd_green(cfg: RunConfig, args) -> int:
    sym = _symbol(cfg)
    g = _gamma0(cfg)
    man = cfg.manufactured
    if "u" not in man:
        raise ConfigError("green needs 'manufactured.u'")
    u, v = man["u"], man.get("v", "1")
    if cfg.C is None:
        pent = _default_pentagon(g, sym)
    else:
        try:
            pent = build_pentagon(sym, g, cfg.C)
        except GeometryError as err:
            raise ConfigError(f"C: {err}") from None
    data = _data(cfg)
    traces = gamma0_traces(sym, data, perturb=args.corrupt_trace)
    order = cfg.quad_order
    results = {
        "flux": green_flux_residual(sym, u, v, pent, order=order),
        "gamma0": gamma0_identity_residual(sym, data, u, g, order=order, traces=traces),
        "kernel": kernel_identity_residual(sym, u, int(man.get("root_index", 1)),
                                           man.get("profile", "x"), pent, order=order),
    }
    report = {k: {**r.as_dict(), "pass": r.residual <= cfg.identity_tol}
              for k, r in results.items()}
    report["tolerance"] = cfg.identity_tol
    ok = all(r.residual <= cfg.identity_tol for r in results.values())
    report["pass"] = ok
    _emit(_json(report), args.out)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_maxprin(cfg: RunConfig, args) -> int:
    if cfg.data is None and "u" not in cfg.manufactured:
        if cfg.seed is None:
            raise ConfigError("maxprin needs 'data', 'manufactured.u' or a seed")
        inst = generate_instance(cfg.seed, h=cfg.h)
    else:
        inst = _instance(cfg)
    hyp = check_hypotheses(inst, check_tol=cfg.check_tol)
    verdict = verify_conclusion(inst, conclusion_tol=cfg.conclusion_tol)
    report = {"hypotheses": hyp.as_dict(), "verdict": verdict.as_dict(),
              "pass": hyp.all_pass and verdict.passed}
    if cfg.seed is not None:
        report["instance"] = instance_config(inst, cfg.seed, cfg.conclusion_tol)
    _emit(_json(report), args.out)
    return EXIT_OK if report["pass"] else EXIT_FAIL


def cmd_maxprin_batch(cfg: RunConfig, args) -> int:
    if cfg.batch_n < 1:
        raise ConfigError("batch.n must be at least 1")
    seed0 = cfg.seed if cfg.seed is not None else 1
    dump_dir = Path(args.out).parent if args.out else Path("charpent_failures")
    summary = batch_verify(cfg.batch_n, seed0, cfg.h, dump_dir=str(dump_dir))
    _emit(_json(summary), args.out)
    ok = summary["conclusion_pass"] == summary["instances_run"] == cfg.batch_n
    return EXIT_OK if ok else EXIT_FAIL


def cmd_wave_disk(cfg: RunConfig, args) -> int:
    try:
        rep = wave_disk_demo(cfg.disk_p, cfg.disk_radii)
    except ValueError as err:
        raise ConfigError(f"disk_demo: {err}") from None
    buf = io.StringIO()
    buf.write("r,I,N,panels\n")
    for r, I, N, panels in rep.rows:
        buf.write(f"{r:.17g},{I:.17g},{N:.17g},{panels}\n")
    _emit(buf.getvalue(), args.out)
    (sys.stderr if args.out is None else sys.stdout).write(_json(rep.verdicts()))
    return EXIT_OK


HANDLERS = {
    "classify": cmd_classify,
    "solve": cmd_solve,
    "green": cmd_green,
    "maxprin": cmd_maxprin,
    "maxprin-batch": cmd_maxprin_batch,
    "wave-disk": cmd_wave_disk,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="charpent",
                description="Cauchy problem lab for quartic hyperbolic operators.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--h", type=float, help="override the grid spacing")
    p.add_argument("--corrupt-trace", type=float, default=0.0, help=argparse.SUPPRESS)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.h is not None:
            if not args.h > 0:
                raise ConfigError("--h must be positive")
            cfg.h = args.h
        return HANDLERS[args.command](cfg, args)
    except ConfigError as err:
        print(f"charpent: invalid config: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except SymbolError as err:
        print(f"charpent: not hyperbolic: {err}", file=sys.stderr)
        return EXIT_SYMBOL
    except (SolverError, ex.ExprError, GeometryError) as err:
        print(f"charpent: failed: {err}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
