"""Small expression language for data functions.

Expressions are scalar functions of ``x1`` and ``x2`` (``x`` is an alias of
``x1``).  They are parsed once into an immutable tree, evaluated on floats or
numpy arrays, and differentiated symbolically.

Grammar::

    expression := term (('+' | '-') term)*
    term       := factor (('*' | '/') factor)*
    factor     := base ('^' factor)?
    base       := number | constant | function '(' expression ')'
                | '(' expression ')' | variable | '-' factor

``^`` is right-associative and binds tighter than unary minus, so ``-x^2``
is ``-(x^2)``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

__all__ = [
    "ExprError",
    "ParseError",
    "UnboundVariable",
    "DomainError",
    "NonDifferentiable",
    "Node",
    "Num",
    "Var",
    "Neg",
    "Call",
    "BinOp",
    "parse",
    "eval_at",
    "derivative",
    "nth_derivative",
    "substitute",
    "to_text",
    "variables",
    "FUNCTIONS",
]

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt", "abs", "tanh", "cosh", "sinh")
CONSTANTS = {"pi": math.pi, "e": math.e}
VARIABLES = {"x1": "x1", "x2": "x2", "x": "x1"}


class ExprError(ValueError):
    pass


class ParseError(ExprError):
    def __init__(self, offset: int, expected: str, text: str = ""):
        self.offset = offset
        self.expected = expected
        super().__init__(f"at offset {offset}: expected {expected}"
                         + (f" in {text!r}" if text else ""))


class UnboundVariable(ExprError):
    pass


class DomainError(ExprError, ArithmeticError):
    pass


class NonDifferentiable(ExprError):
    pass


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class Call:
    fn: str
    arg: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


Node = Union[Num, Var, Neg, Call, BinOp]

# ---------------------------------------------------------------------------
# Parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ParseError(pos, "a number, name or operator", text)
        start = m.start(m.lastgroup)
        tokens.append((m.lastgroup, m.group(m.lastgroup), start))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    @property
    def tok(self):
        return self.tokens[self.i]

    def _fail(self, expected: str):
        raise ParseError(self.tok[2], expected, self.text)

    def _accept(self, value: str) -> bool:
        if self.tok[0] == "op" and self.tok[1] == value:
            self.i += 1
            return True
        return False

    def parse(self) -> Node:
        node = self.expression()
        if self.tok[0] != "end":
            self._fail("an operator or end of input")
        return node

    def expression(self) -> Node:
        node = self.term()
        while self.tok[0] == "op" and self.tok[1] in "+-":
            op = self.tok[1]
            self.i += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.tok[0] == "op" and self.tok[1] in "*/":
            op = self.tok[1]
            self.i += 1
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Node:
        node = self.base()
        if self._accept("^"):
            node = BinOp("^", node, self.factor())
        return node

    def base(self) -> Node:
        kind, value, offset = self.tok
        if kind == "num":
            self.i += 1
            return Num(float(value))
        if kind == "name":
            self.i += 1
            if value in FUNCTIONS:
                if not self._accept("("):
                    self._fail(f"'(' after {value}")
                arg = self.expression()
                if not self._accept(")"):
                    self._fail("')'")
                return Call(value, arg)
            if value in VARIABLES:
                return Var(VARIABLES[value])
            if value in CONSTANTS:
                return Num(CONSTANTS[value])
            raise ParseError(offset, f"a known name (got unknown identifier {value!r})",
                             self.text)
        if self._accept("("):
            node = self.expression()
            if not self._accept(")"):
                self._fail("')'")
            return node
        if self._accept("-"):
            return Neg(self.factor())
        self._fail("a number, variable, function call, '(' or '-'")


def parse(text: str) -> Node:
    """Parse expression text into a tree; raises ParseError with an offset."""
    if not isinstance(text, str):
        raise TypeError("expression text must be a string")
    return _Parser(text).parse()


def _as_node(expr) -> Node:
    if isinstance(expr, str):
        return parse(expr)
    if isinstance(expr, (int, float)):
        return Num(float(expr))
    return expr


# ---------------------------------------------------------------------------
# Evaluation


def _check(value, what: str):
    if not np.all(np.isfinite(value)):
        raise DomainError(f"non-finite result in {what}")
    return value


def _eval(node: Node, env):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        try:
            return env[node.name]
        except KeyError:
            raise UnboundVariable(f"variable {node.name!r} is not bound") from None
    if isinstance(node, Neg):
        return -_eval(node.arg, env)
    if isinstance(node, Call):
        x = _eval(node.arg, env)
        fn = node.fn
        if fn == "log":
            if np.any(np.asarray(x) <= 0):
                raise DomainError("log of a non-positive value")
            return np.log(x)
        if fn == "sqrt":
            if np.any(np.asarray(x) < 0):
                raise DomainError("sqrt of a negative value")
            return np.sqrt(x)
        if fn in ("exp", "cosh", "sinh"):
            with np.errstate(over="ignore"):
                return _check(getattr(np, fn)(x), fn)
        if fn == "abs":
            return np.abs(x)
        return getattr(np, fn)(x)
    # BinOp
    left = _eval(node.left, env)
    right = _eval(node.right, env)
    op = node.op
    with np.errstate(all="ignore"):
        if op == "+":
            return _check(left + right, "addition")
        if op == "-":
            return _check(left - right, "subtraction")
        if op == "*":
            return _check(left * right, "multiplication")
        if op == "/":
            if np.any(np.asarray(right) == 0):
                raise DomainError("division by zero")
            return _check(left / right, "division")
        # power
        base = np.asarray(left, dtype=float)
        expo = np.asarray(right, dtype=float)
        integral = expo == np.round(expo)
        if np.any((base < 0) & ~integral):
            raise DomainError("fractional power of a negative value")
        if np.any((base == 0) & (expo < 0)):
            raise DomainError("negative power of zero")
        out = np.power(base, expo)
        if out.ndim == 0:
            out = float(out)
        return _check(out, "power")


def eval_at(ast, bindings: Mapping[str, object] | None = None, **kw):
    """Evaluate ``ast`` with variable bindings (floats or arrays).

    Bindings may use ``x1``, ``x2`` or the alias ``x``.  The result has the
    broadcast shape of the bindings.  Division by zero, logs of non-positive
    values and the like raise DomainError rather than produce NaN or Inf.
    """
    env = {}
    for key, value in {**(bindings or {}), **kw}.items():
        if key not in VARIABLES:
            raise UnboundVariable(f"unknown variable {key!r}")
        env[VARIABLES[key]] = value
    node = _as_node(ast)
    out = _eval(node, env)
    shape = np.broadcast(*[np.asarray(v) for v in env.values()]).shape if env else ()
    if shape:
        out = np.broadcast_to(np.asarray(out, dtype=float), shape).copy()
    else:
        out = float(out)
    return _check(out, "expression")


# ---------------------------------------------------------------------------
# Construction helpers with light constant folding

ZERO = Num(0.0)
ONE = Num(1.0)


def _is(node, value):
    return isinstance(node, Num) and node.value == value


def add(a, b):
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value + b.value)
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    return BinOp("+", a, b)


def sub(a, b):
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value - b.value)
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return neg(b)
    return BinOp("-", a, b)


def mul(a, b):
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value * b.value)
    if _is(a, 0.0) or _is(b, 0.0):
        return ZERO
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    return BinOp("*", a, b)


def div(a, b):
    if _is(a, 0.0) and not _is(b, 0.0):
        return ZERO
    if _is(b, 1.0):
        return a
    if isinstance(a, Num) and isinstance(b, Num) and b.value != 0:
        return Num(a.value / b.value)
    return BinOp("/", a, b)


def neg(a):
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def power(a, b):
    if _is(b, 1.0):
        return a
    if _is(b, 0.0):
        return ONE
    return BinOp("^", a, b)


def call(fn, a):
    return Call(fn, a)


# ---------------------------------------------------------------------------
# Differentiation


def _d(node: Node, var: str) -> Node:
    if isinstance(node, Num):
        return ZERO
    if isinstance(node, Var):
        return ONE if node.name == var else ZERO
    if isinstance(node, Neg):
        return neg(_d(node.arg, var))
    if isinstance(node, Call):
        u = node.arg
        du = _d(u, var)
        if _is(du, 0.0):
            return ZERO
        fn = node.fn
        if fn == "sin":
            outer = call("cos", u)
        elif fn == "cos":
            outer = neg(call("sin", u))
        elif fn == "exp":
            outer = node
        elif fn == "log":
            return div(du, u)
        elif fn == "sqrt":
            return div(du, mul(Num(2.0), node))
        elif fn == "tanh":
            outer = sub(ONE, power(node, Num(2.0)))
        elif fn == "cosh":
            outer = call("sinh", u)
        elif fn == "sinh":
            outer = call("cosh", u)
        else:
            raise NonDifferentiable(f"{fn} is not differentiable symbolically")
        return mul(outer, du)
    a, b = node.left, node.right
    da, db = _d(a, var), _d(b, var)
    op = node.op
    if op == "+":
        return add(da, db)
    if op == "-":
        return sub(da, db)
    if op == "*":
        return add(mul(da, b), mul(a, db))
    if op == "/":
        return div(sub(mul(da, b), mul(a, db)), power(b, Num(2.0)))
    # power
    if isinstance(b, Num):
        c = b.value
        return mul(mul(Num(c), power(a, Num(c - 1.0))), da)
    # f^g = exp(g log f)
    return mul(node, add(mul(db, call("log", a)), div(mul(b, da), a)))


def derivative(ast, var: str) -> Node:
    """Symbolic partial derivative with respect to ``x1``/``x``/``x2``."""
    if var not in VARIABLES:
        raise UnboundVariable(f"unknown variable {var!r}")
    return _d(_as_node(ast), VARIABLES[var])


def nth_derivative(ast, var: str, n: int) -> Node:
    node = _as_node(ast)
    for _ in range(n):
        node = derivative(node, var)
    return node


def substitute(ast, replacements: Mapping[str, object]) -> Node:
    """Replace variables by subtrees (or numbers)."""
    subs = {VARIABLES[k]: _as_node(v) for k, v in replacements.items()}

    def walk(node):
        if isinstance(node, Var):
            return subs.get(node.name, node)
        if isinstance(node, Num):
            return node
        if isinstance(node, Neg):
            return Neg(walk(node.arg))
        if isinstance(node, Call):
            return Call(node.fn, walk(node.arg))
        return BinOp(node.op, walk(node.left), walk(node.right))

    return walk(_as_node(ast))


def variables(ast) -> set:
    node = _as_node(ast)
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Num):
        return set()
    if isinstance(node, (Neg, Call)):
        return variables(node.arg)
    return variables(node.left) | variables(node.right)


# ---------------------------------------------------------------------------
# Printing


def to_text(ast) -> str:
    """Fully parenthesized text that parses back to an equivalent tree."""
    node = _as_node(ast)
    if isinstance(node, Num):
        text = repr(float(node.value))
        return f"({text})" if node.value < 0 or text.startswith("-") else text
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{to_text(node.arg)})"
    if isinstance(node, Call):
        return f"{node.fn}({to_text(node.arg)})"
    return f"({to_text(node.left)} {node.op} {to_text(node.right)})"
