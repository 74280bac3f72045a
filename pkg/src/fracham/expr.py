"""Scalar expression language for the model functions (Lagrangians and their relatives).

Expressions are immutable trees of constants and variables combined by
arithmetic (including powers and negation) and a small table of elementary
functions.  Variables belong to a closed family::

    t, q<k>, v<k>, p<k>, P<k>, qbar<k>, Qbar<k>      (1 <= k <= N)

where ``v<k>`` stands for the combined Caputo velocity of coordinate ``k``.

Evaluation is vectorised: bindings may be floats or numpy arrays of a common
shape, which is how expressions are evaluated on a whole time grid at once.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Union

import numpy as np

__all__ = [
    "Expr",
    "Const",
    "Var",
    "Add",
    "Sub",
    "Mul",
    "Div",
    "Pow",
    "Neg",
    "Func",
    "ExprError",
    "ExprSyntaxError",
    "UnknownIdentifier",
    "IndexOutOfRange",
    "EvalDomainError",
    "MissingBinding",
    "FUNCTIONS",
    "parse",
    "diff",
    "evaluate",
    "substitute",
    "free_vars",
    "to_string",
    "simplify",
    "var_kind",
    "is_zero",
    "const_value",
]

Number = Union[float, np.ndarray]


class ExprError(ValueError):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownIdentifier(ExprError):
    pass


class IndexOutOfRange(ExprError):
    pass


class MissingBinding(ExprError):
    pass


class EvalDomainError(ExprError, ArithmeticError):
    """Raised when an expression is evaluated outside its domain.

    ``index`` is the flat position of the first offending element when the
    bindings were arrays, ``None`` for scalar evaluation.
    """

    def __init__(self, message: str, index: int | None = None):
        where = "" if index is None else f" (node {index})"
        super().__init__(message + where)
        self.index = index


# ---------------------------------------------------------------------------
# AST


class Expr:
    """Base node.  Operators build *unsimplified* trees, as the parser does."""

    __slots__ = ()

    def __add__(self, other):
        return Add(self, _wrap(other))

    def __radd__(self, other):
        return Add(_wrap(other), self)

    def __sub__(self, other):
        return Sub(self, _wrap(other))

    def __rsub__(self, other):
        return Sub(_wrap(other), self)

    def __mul__(self, other):
        return Mul(self, _wrap(other))

    def __rmul__(self, other):
        return Mul(_wrap(other), self)

    def __truediv__(self, other):
        return Div(self, _wrap(other))

    def __pow__(self, other):
        return Pow(self, _wrap(other))

    def __neg__(self):
        return Neg(self)

    def __str__(self):
        return to_string(self)


def _wrap(x) -> Expr:
    if isinstance(x, Expr):
        return x
    return Const(float(x))


@dataclass(frozen=True, eq=True)
class Const(Expr):
    value: float


@dataclass(frozen=True, eq=True)
class Var(Expr):
    name: str


@dataclass(frozen=True, eq=True)
class Add(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=True)
class Sub(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=True)
class Mul(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=True)
class Div(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=True)
class Pow(Expr):
    base: Expr
    exponent: Expr


@dataclass(frozen=True, eq=True)
class Neg(Expr):
    operand: Expr


@dataclass(frozen=True, eq=True)
class Func(Expr):
    name: str
    arg: Expr


ZERO = Const(0.0)
ONE = Const(1.0)


# ---------------------------------------------------------------------------
# Function table.  Each entry: numpy kernel, derivative builder (arg -> Expr),
# and an optional domain check returning a boolean mask of bad elements.


@dataclass(frozen=True)
class _FuncDef:
    kernel: Callable[[Number], Number]
    derivative: Callable[[Expr], Expr]
    bad: Callable[[np.ndarray], np.ndarray] | None = None
    domain: str = ""


FUNCTIONS: dict[str, _FuncDef] = {
    "sin": _FuncDef(np.sin, lambda u: Func("cos", u)),
    "cos": _FuncDef(np.cos, lambda u: Neg(Func("sin", u))),
    "exp": _FuncDef(np.exp, lambda u: Func("exp", u)),
    "log": _FuncDef(np.log, lambda u: Div(ONE, u), lambda x: ~(x > 0), "log of non-positive value"),
}


# ---------------------------------------------------------------------------
# Variables

_VAR_RE = re.compile(r"^(qbar|Qbar|q|v|p|P)([1-9][0-9]*)$")

VARIABLE_KINDS = ("q", "v", "p", "P", "qbar", "Qbar")


def var_kind(name: str) -> tuple[str, int | None]:
    """Split a variable name into ``(kind, index)``; ``("t", None)`` for time."""
    if name == "t":
        return "t", None
    m = _VAR_RE.match(name)
    if not m:
        raise UnknownIdentifier(f"unknown identifier {name!r}")
    return m.group(1), int(m.group(2))


# ---------------------------------------------------------------------------
# Parser

_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()])"
    r")"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN_RE.match(text, pos)
        if not m or m.end() == pos:
            offset = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExprSyntaxError(f"unexpected character {text[offset]!r}", offset)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, n_coords: int):
        self.text = text
        self.n = n_coords
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, off = self.take()
        if val != value or kind != "op":
            found = "end of input" if kind == "end" else repr(val)
            raise ExprSyntaxError(f"expected {value!r}, found {found}", off)

    def parse(self) -> Expr:
        e = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected token {val!r}", off)
        return e

    def expr(self) -> Expr:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)
        return node

    def term(self) -> Expr:
        node = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.factor()
            node = Mul(node, rhs) if op == "*" else Div(node, rhs)
        return node

    def factor(self) -> Expr:
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.take()
            return Neg(self.factor())
        base = self.base()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.take()
            return Pow(base, self.factor())
        return base

    def base(self) -> Expr:
        kind, val, off = self.take()
        if kind == "num":
            return Const(float(val))
        if kind == "ident":
            if val in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Func(val, arg)
            try:
                vkind, index = var_kind(val)
            except UnknownIdentifier:
                raise UnknownIdentifier(f"unknown identifier {val!r} at offset {off}") from None
            if index is not None and not 1 <= index <= self.n:
                raise IndexOutOfRange(
                    f"index {index} of {val!r} out of range 1..{self.n} at offset {off}"
                )
            return Var(val)
        if kind == "op" and val == "(":
            e = self.expr()
            self.expect(")")
            return e
        found = "end of input" if kind == "end" else repr(val)
        raise ExprSyntaxError(f"unexpected {found}", off)


def parse(text: str, n_coords: int) -> Expr:
    """Parse ``text`` into an expression over coordinates ``1..n_coords``."""
    if n_coords < 1:
        raise ValueError("n_coords must be at least 1")
    return _Parser(text, n_coords).parse()


# ---------------------------------------------------------------------------
# Printing

_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2, Neg: 3, Pow: 4}


def _prec(e: Expr) -> int:
    if isinstance(e, Const) and (e.value < 0 or math.copysign(1.0, e.value) < 0):
        return 3  # prints with a leading minus
    return _PREC.get(type(e), 5)


def _fmt_const(x: float) -> str:
    if math.isfinite(x) and x == int(x) and abs(x) < 1e15:
        return str(int(x)) if x != 0 else "0"
    return repr(float(x))


def to_string(e: Expr) -> str:
    """Render ``e`` in the input grammar with minimal parentheses."""
    if isinstance(e, Const):
        return _fmt_const(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Func):
        return f"{e.name}({to_string(e.arg)})"
    if isinstance(e, Neg):
        inner = to_string(e.operand)
        if _prec(e.operand) < 3:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(e, Pow):
        b = to_string(e.base)
        if _prec(e.base) <= 4:
            b = f"({b})"
        x = to_string(e.exponent)
        if _prec(e.exponent) < 5:
            x = f"({x})"
        return f"{b}^{x}"
    op = {Add: " + ", Sub: " - ", Mul: "*", Div: "/"}[type(e)]
    p = _PREC[type(e)]
    lhs = to_string(e.left)
    if _prec(e.left) < p:
        lhs = f"({lhs})"
    rhs = to_string(e.right)
    rp = _prec(e.right)
    if rp <= p and not (rp == 3 and p < 3):
        rhs = f"({rhs})"
    return f"{lhs}{op}{rhs}"


# ---------------------------------------------------------------------------
# Structure helpers


def free_vars(e: Expr) -> frozenset[str]:
    if isinstance(e, Const):
        return frozenset()
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, (Neg,)):
        return free_vars(e.operand)
    if isinstance(e, Func):
        return free_vars(e.arg)
    if isinstance(e, Pow):
        return free_vars(e.base) | free_vars(e.exponent)
    return free_vars(e.left) | free_vars(e.right)


def const_value(e: Expr) -> float | None:
    return e.value if isinstance(e, Const) else None


def is_zero(e: Expr) -> bool:
    return isinstance(e, Const) and e.value == 0.0


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables by expressions, folding constants in the result."""
    if isinstance(e, Const):
        return e
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, Neg):
        return neg(substitute(e.operand, mapping))
    if isinstance(e, Func):
        return func(e.name, substitute(e.arg, mapping))
    if isinstance(e, Pow):
        return power(substitute(e.base, mapping), substitute(e.exponent, mapping))
    build = _BUILDERS[type(e)]
    return build(substitute(e.left, mapping), substitute(e.right, mapping))


# ---------------------------------------------------------------------------
# Smart constructors: constant folding and identity elimination only.


def _is_int(x: float) -> bool:
    return math.isfinite(x) and x == int(x)


def add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if is_zero(b):
        return a
    if is_zero(a):
        return b
    if isinstance(b, Neg):
        return sub(a, b.operand)
    if isinstance(b, Const) and b.value < 0:
        return Sub(a, Const(-b.value))
    if isinstance(b, Mul) and isinstance(b.left, Const) and b.left.value < 0:
        return Sub(a, mul(Const(-b.left.value), b.right))
    return Add(a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if is_zero(b):
        return a
    if is_zero(a):
        return neg(b)
    if isinstance(b, Neg):
        return add(a, b.operand)
    if isinstance(b, Const) and b.value < 0:
        return Add(a, Const(-b.value))
    if isinstance(b, Mul) and isinstance(b.left, Const) and b.left.value < 0:
        return Add(a, mul(Const(-b.left.value), b.right))
    return Sub(a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if is_zero(a) or is_zero(b):
        return ZERO
    if isinstance(b, Const) and not isinstance(a, Const):
        a, b = b, a
    if isinstance(a, Const):
        if a.value == 1.0:
            return b
        if a.value == -1.0:
            return neg(b)
        if isinstance(b, Mul) and isinstance(b.left, Const):
            return mul(Const(a.value * b.left.value), b.right)
        if isinstance(b, Neg):
            return mul(Const(-a.value), b.operand)
    if isinstance(a, Neg) and isinstance(b, Neg):
        return mul(a.operand, b.operand)
    return Mul(a, b)


def div(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const) and b.value != 0.0:
        return Const(a.value / b.value)
    if isinstance(b, Const) and b.value == 1.0:
        return a
    if is_zero(a):
        return ZERO
    return Div(a, b)


def power(a: Expr, b: Expr) -> Expr:
    if isinstance(b, Const):
        if b.value == 0.0:
            return ONE
        if b.value == 1.0:
            return a
        if isinstance(a, Const):
            x, y = a.value, b.value
            if (x > 0) or (x == 0 and y > 0) or (x < 0 and _is_int(y)):
                return Const(x**y)
    return Pow(a, b)


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value) if a.value != 0.0 else ZERO
    if isinstance(a, Neg):
        return a.operand
    if isinstance(a, Mul) and isinstance(a.left, Const):
        return mul(Const(-a.left.value), a.right)
    return Neg(a)


def func(name: str, a: Expr) -> Expr:
    if isinstance(a, Const):
        fd = FUNCTIONS[name]
        arr = np.asarray(a.value)
        if fd.bad is None or not bool(fd.bad(arr)):
            return Const(float(fd.kernel(a.value)))
    return Func(name, a)


_BUILDERS = {Add: add, Sub: sub, Mul: mul, Div: div}


def simplify(e: Expr) -> Expr:
    """Bottom-up constant folding and identity elimination."""
    return substitute(e, {})


# ---------------------------------------------------------------------------
# Differentiation


def diff(e: Expr, var: str) -> Expr:
    """Exact partial derivative of ``e`` with respect to variable ``var``."""
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == var else ZERO
    if var not in free_vars(e):
        return ZERO
    if isinstance(e, Neg):
        return neg(diff(e.operand, var))
    if isinstance(e, Add):
        return add(diff(e.left, var), diff(e.right, var))
    if isinstance(e, Sub):
        return sub(diff(e.left, var), diff(e.right, var))
    if isinstance(e, Mul):
        f, g = simplify(e.left), simplify(e.right)
        return add(mul(diff(f, var), g), mul(f, diff(g, var)))
    if isinstance(e, Div):
        f, g = simplify(e.left), simplify(e.right)
        df, dg = diff(f, var), diff(g, var)
        if is_zero(dg):
            return div(df, g)
        return div(sub(mul(df, g), mul(f, dg)), power(g, Const(2.0)))
    if isinstance(e, Func):
        u = simplify(e.arg)
        return mul(simplify(FUNCTIONS[e.name].derivative(u)), diff(u, var))
    if isinstance(e, Pow):
        f, g = simplify(e.base), simplify(e.exponent)
        df = diff(f, var)
        if var not in free_vars(g):
            # g * f^(g-1) * f'
            return mul(mul(g, power(f, sub(g, ONE))), df)
        # d exp(g log f) = f^g (g' log f + g f'/f)
        dg = diff(g, var)
        inner = add(mul(dg, func("log", f)), mul(g, div(df, f)))
        return mul(power(f, g), inner)
    raise TypeError(f"unknown node {type(e).__name__}")


# ---------------------------------------------------------------------------
# Evaluation


def _first_bad(mask) -> int | None:
    arr = np.asarray(mask)
    if arr.ndim == 0:
        return None
    return int(np.flatnonzero(arr)[0])


def _check(mask, message: str):
    if np.any(mask):
        raise EvalDomainError(message, _first_bad(mask))


def evaluate(e: Expr, bindings: Mapping[str, Number]) -> Number:
    """Evaluate ``e`` in IEEE double precision.

    Array bindings are broadcast together.  Raises :class:`MissingBinding`
    for unbound variables and :class:`EvalDomainError` for division by zero,
    logarithms of non-positive values and invalid powers.
    """
    with np.errstate(all="ignore"):
        return _eval(e, bindings)


def _eval(e: Expr, b: Mapping[str, Number]) -> Number:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return b[e.name]
        except KeyError:
            raise MissingBinding(f"no binding for variable {e.name!r}") from None
    if isinstance(e, Neg):
        return -_eval(e.operand, b)
    if isinstance(e, Add):
        return _eval(e.left, b) + _eval(e.right, b)
    if isinstance(e, Sub):
        return _eval(e.left, b) - _eval(e.right, b)
    if isinstance(e, Mul):
        return _eval(e.left, b) * _eval(e.right, b)
    if isinstance(e, Div):
        num = _eval(e.left, b)
        den = _eval(e.right, b)
        _check(np.asarray(den) == 0, "division by zero")
        return num / den
    if isinstance(e, Func):
        x = _eval(e.arg, b)
        fd = FUNCTIONS[e.name]
        if fd.bad is not None:
            _check(fd.bad(np.asarray(x)), fd.domain)
        return fd.kernel(x)
    if isinstance(e, Pow):
        x = _eval(e.base, b)
        y = _eval(e.exponent, b)
        xa, ya = np.asarray(x), np.asarray(y)
        integral = np.isfinite(ya) & (ya == np.round(ya))
        _check((xa < 0) & ~integral, "non-integer power of a negative value")
        _check((xa == 0) & (ya < 0), "negative power of zero")
        return x**y
    raise TypeError(f"unknown node {type(e).__name__}")
