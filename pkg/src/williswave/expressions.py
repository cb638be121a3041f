"""Closed-form scalar fields of (x1, x2, x3, t) with exact derivatives.

Coefficient fields are given as plain-text formulas in a small grammar
(numbers, the variables x1 x2 x3 t, the constant pi, + - * / ^ with integer
exponents, and the functions sin, cos, exp).  Keeping the fields in closed
form lets every spatial and temporal derivative the assembly needs be taken
symbolically instead of by finite differencing.

Grammar::

    expr   := term  (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := ("+" | "-") unary | power
    power  := atom [("^" | "**") exponent]      # exponent: integer literal
    atom   := NUMBER | "pi" | "x1" | "x2" | "x3" | "t"
            | ("sin" | "cos" | "exp") "(" expr ")"
            | "(" expr ")"

Evaluation broadcasts over numpy arrays, so a parsed expression can be
sampled on a whole grid in one call.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

VARIABLES = ("x1", "x2", "x3", "t")
FUNCTIONS = ("sin", "cos", "exp")

_NUMPY_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
_MATH_FUNCS = {"sin": math.sin, "cos": math.cos, "exp": math.exp}


class ExpressionError(ValueError):
    """Raised for unparsable text or unsupported constructs."""


# ---------------------------------------------------------------------------
# AST nodes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Num:
    value: float


@dataclass(frozen=True)
class _Var:
    name: str


@dataclass(frozen=True)
class _Add:
    a: object
    b: object


@dataclass(frozen=True)
class _Sub:
    a: object
    b: object


@dataclass(frozen=True)
class _Mul:
    a: object
    b: object


@dataclass(frozen=True)
class _Div:
    a: object
    b: object


@dataclass(frozen=True)
class _Neg:
    a: object


@dataclass(frozen=True)
class _Pow:
    a: object
    n: int


@dataclass(frozen=True)
class _Fun:
    name: str
    a: object


# Folding constructors.  They keep derivative trees small; exactness is not
# affected because only identities with 0 and 1 and pure-constant subtrees
# are rewritten.


def _num(v) -> _Num:
    return _Num(float(v))


def _is_num(node, value=None) -> bool:
    if not isinstance(node, _Num):
        return False
    return value is None or node.value == value


def _add(a, b):
    if _is_num(a, 0.0):
        return b
    if _is_num(b, 0.0):
        return a
    if isinstance(a, _Num) and isinstance(b, _Num):
        return _num(a.value + b.value)
    return _Add(a, b)


def _sub(a, b):
    if _is_num(b, 0.0):
        return a
    if isinstance(a, _Num) and isinstance(b, _Num):
        return _num(a.value - b.value)
    if _is_num(a, 0.0):
        return _neg(b)
    return _Sub(a, b)


def _mul(a, b):
    if _is_num(a, 0.0) or _is_num(b, 0.0):
        return _num(0.0)
    if _is_num(a, 1.0):
        return b
    if _is_num(b, 1.0):
        return a
    if isinstance(a, _Num) and isinstance(b, _Num):
        return _num(a.value * b.value)
    return _Mul(a, b)


def _div(a, b):
    if _is_num(b, 0.0):
        raise ExpressionError("division by constant zero")
    if _is_num(a, 0.0):
        return _num(0.0)
    if _is_num(b, 1.0):
        return a
    if isinstance(a, _Num) and isinstance(b, _Num):
        return _num(a.value / b.value)
    return _Div(a, b)


def _neg(a):
    if isinstance(a, _Num):
        return _num(-a.value)
    if isinstance(a, _Neg):
        return a.a
    return _Neg(a)


def _pow(a, n: int):
    if n == 0:
        return _num(1.0)
    if n == 1:
        return a
    if isinstance(a, _Num):
        return _num(a.value**n)
    return _Pow(a, n)


def _fun(name, a):
    if isinstance(a, _Num):
        return _num(_MATH_FUNCS[name](a.value))
    return _Fun(name, a)


def _evaluate(node, env):
    if isinstance(node, _Num):
        return node.value
    if isinstance(node, _Var):
        return env[node.name]
    if isinstance(node, _Add):
        return _evaluate(node.a, env) + _evaluate(node.b, env)
    if isinstance(node, _Sub):
        return _evaluate(node.a, env) - _evaluate(node.b, env)
    if isinstance(node, _Mul):
        return _evaluate(node.a, env) * _evaluate(node.b, env)
    if isinstance(node, _Div):
        return _evaluate(node.a, env) / _evaluate(node.b, env)
    if isinstance(node, _Neg):
        return -_evaluate(node.a, env)
    if isinstance(node, _Pow):
        return _evaluate(node.a, env) ** node.n
    if isinstance(node, _Fun):
        return _NUMPY_FUNCS[node.name](_evaluate(node.a, env))
    raise TypeError(f"unknown node {node!r}")


def _derivative(node, var: str):
    if isinstance(node, (_Num,)):
        return _num(0.0)
    if isinstance(node, _Var):
        return _num(1.0 if node.name == var else 0.0)
    if isinstance(node, _Add):
        return _add(_derivative(node.a, var), _derivative(node.b, var))
    if isinstance(node, _Sub):
        return _sub(_derivative(node.a, var), _derivative(node.b, var))
    if isinstance(node, _Mul):
        return _add(
            _mul(_derivative(node.a, var), node.b),
            _mul(node.a, _derivative(node.b, var)),
        )
    if isinstance(node, _Div):
        num = _sub(
            _mul(_derivative(node.a, var), node.b),
            _mul(node.a, _derivative(node.b, var)),
        )
        return _div(num, _pow(node.b, 2))
    if isinstance(node, _Neg):
        return _neg(_derivative(node.a, var))
    if isinstance(node, _Pow):
        return _mul(
            _mul(_num(node.n), _pow(node.a, node.n - 1)),
            _derivative(node.a, var),
        )
    if isinstance(node, _Fun):
        da = _derivative(node.a, var)
        if node.name == "sin":
            return _mul(_fun("cos", node.a), da)
        if node.name == "cos":
            return _neg(_mul(_fun("sin", node.a), da))
        if node.name == "exp":
            return _mul(_fun("exp", node.a), da)
    raise TypeError(f"unknown node {node!r}")


def _depends(node, var: str) -> bool:
    if isinstance(node, _Num):
        return False
    if isinstance(node, _Var):
        return node.name == var
    if isinstance(node, (_Add, _Sub, _Mul, _Div)):
        return _depends(node.a, var) or _depends(node.b, var)
    if isinstance(node, (_Neg, _Pow, _Fun)):
        return _depends(node.a, var)
    raise TypeError(f"unknown node {node!r}")


def _unparse(node) -> str:
    if isinstance(node, _Num):
        return repr(node.value)
    if isinstance(node, _Var):
        return node.name
    if isinstance(node, _Add):
        return f"({_unparse(node.a)} + {_unparse(node.b)})"
    if isinstance(node, _Sub):
        return f"({_unparse(node.a)} - {_unparse(node.b)})"
    if isinstance(node, _Mul):
        return f"({_unparse(node.a)} * {_unparse(node.b)})"
    if isinstance(node, _Div):
        return f"({_unparse(node.a)} / {_unparse(node.b)})"
    if isinstance(node, _Neg):
        return f"(-{_unparse(node.a)})"
    if isinstance(node, _Pow):
        return f"({_unparse(node.a)}^{node.n})"
    if isinstance(node, _Fun):
        return f"{node.name}({_unparse(node.a)})"
    raise TypeError(f"unknown node {node!r}")


# ---------------------------------------------------------------------------
# Tokenizer / parser
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[()+\-*/^])"
    r")"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            remainder = text[pos:].strip()
            if not remainder:
                break
            raise ExpressionError(f"unexpected character at {pos}: {remainder[:10]!r}")
        pos = m.end()
        if m.group("num") is not None:
            tokens.append(("num", m.group("num")))
        elif m.group("name") is not None:
            tokens.append(("name", m.group("name")))
        else:
            op = m.group("op")
            tokens.append(("op", "^" if op == "**" else op))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else (None, None)

    def take(self):
        tok = self.peek()
        self.pos += 1
        return tok

    def expect_op(self, op: str):
        kind, val = self.take()
        if kind != "op" or val != op:
            raise ExpressionError(f"expected {op!r} in {self.text!r}")

    def parse(self):
        node = self.expr()
        if self.pos != len(self.tokens):
            raise ExpressionError(f"trailing input in {self.text!r}")
        return node

    def expr(self):
        node = self.term()
        while True:
            kind, val = self.peek()
            if kind == "op" and val in "+-":
                self.take()
                rhs = self.term()
                node = _add(node, rhs) if val == "+" else _sub(node, rhs)
            else:
                return node

    def term(self):
        node = self.unary()
        while True:
            kind, val = self.peek()
            if kind == "op" and val in "*/":
                self.take()
                rhs = self.unary()
                node = _mul(node, rhs) if val == "*" else _div(node, rhs)
            else:
                return node

    def unary(self):
        kind, val = self.peek()
        if kind == "op" and val in "+-":
            self.take()
            inner = self.unary()
            return inner if val == "+" else _neg(inner)
        return self.power()

    def power(self):
        base = self.atom()
        kind, val = self.peek()
        if kind == "op" and val == "^":
            self.take()
            return _pow(base, self.exponent())
        return base

    def exponent(self) -> int:
        sign = 1
        kind, val = self.peek()
        parenthesized = kind == "op" and val == "("
        if parenthesized:
            self.take()
            kind, val = self.peek()
        if kind == "op" and val in "+-":
            self.take()
            sign = -1 if val == "-" else 1
            kind, val = self.peek()
        if kind != "num" or any(c in val for c in ".eE"):
            raise ExpressionError(f"exponent must be an integer literal in {self.text!r}")
        self.take()
        if parenthesized:
            self.expect_op(")")
        return sign * int(val)

    def atom(self):
        kind, val = self.take()
        if kind == "num":
            return _num(float(val))
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        if kind == "name":
            if val == "pi":
                return _num(math.pi)
            if val in VARIABLES:
                return _Var(val)
            if val in FUNCTIONS:
                self.expect_op("(")
                node = self.expr()
                self.expect_op(")")
                return _fun(val, node)
            raise ExpressionError(f"unknown name {val!r} in {self.text!r}")
        raise ExpressionError(f"unexpected end of input in {self.text!r}")


# ---------------------------------------------------------------------------
# Public wrapper
# ---------------------------------------------------------------------------


class Expression:
    """An immutable scalar field of (x1, x2, x3, t) with exact derivatives.

    Instances support +, -, *, / with other expressions or numbers, so
    composite coefficient fields can be built programmatically.
    """

    __slots__ = ("node", "text", "_diff_cache")

    def __init__(self, node, text: str | None = None):
        object.__setattr__(self, "node", node)
        object.__setattr__(self, "text", text if text is not None else _unparse(node))
        object.__setattr__(self, "_diff_cache", {})

    @classmethod
    def parse(cls, text: str) -> "Expression":
        return cls(_Parser(str(text)).parse(), str(text))

    @classmethod
    def constant(cls, value: float) -> "Expression":
        return cls(_num(value), repr(float(value)))

    def __call__(self, x1, x2, x3, t):
        env = {"x1": x1, "x2": x2, "x3": x3, "t": t}
        return _evaluate(self.node, env)

    def diff(self, var: str) -> "Expression":
        if var not in VARIABLES:
            raise ExpressionError(f"cannot differentiate with respect to {var!r}")
        cached = self._diff_cache.get(var)
        if cached is None:
            cached = Expression(_derivative(self.node, var))
            self._diff_cache[var] = cached
        return cached

    def depends_on(self, var: str) -> bool:
        return _depends(self.node, var)

    @property
    def is_constant(self) -> bool:
        return isinstance(self.node, _Num)

    def constant_value(self) -> float:
        if not self.is_constant:
            raise ExpressionError(f"{self.text!r} is not constant")
        return self.node.value

    def __repr__(self) -> str:
        return f"Expression({self.text!r})"

    # algebra on expressions, for building coefficient fields in code

    @staticmethod
    def _coerce(other):
        if isinstance(other, Expression):
            return other.node
        if isinstance(other, (int, float)):
            return _num(other)
        return NotImplemented

    def _binary(self, other, op):
        rhs = Expression._coerce(other)
        if rhs is NotImplemented:
            return NotImplemented
        return Expression(op(self.node, rhs))

    def __add__(self, other):
        return self._binary(other, _add)

    def __radd__(self, other):
        return self._binary(other, lambda a, b: _add(b, a))

    def __sub__(self, other):
        return self._binary(other, _sub)

    def __rsub__(self, other):
        return self._binary(other, lambda a, b: _sub(b, a))

    def __mul__(self, other):
        return self._binary(other, _mul)

    def __rmul__(self, other):
        return self._binary(other, lambda a, b: _mul(b, a))

    def __truediv__(self, other):
        return self._binary(other, _div)

    def __rtruediv__(self, other):
        return self._binary(other, lambda a, b: _div(b, a))

    def __neg__(self):
        return Expression(_neg(self.node))


def as_expression(value) -> Expression:
    """Coerce a string, number, or Expression to an Expression."""
    if isinstance(value, Expression):
        return value
    if isinstance(value, (int, float)):
        return Expression.constant(value)
    if isinstance(value, str):
        return Expression.parse(value)
    raise ExpressionError(f"cannot interpret {value!r} as an expression")


ZERO = Expression.constant(0.0)
ONE = Expression.constant(1.0)
