"""Small expression grammar for space-time coefficients.

Grammar (whitespace-insensitive, standard precedence)::

    expr   := term  (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := "-" unary | atom
    atom   := NUMBER | "x" | "t" | "(" expr ")"
            | ("sin" | "cos" | "exp") "(" expr ")"
            | "pow" "(" expr "," expr ")"

Parsed expressions evaluate vectorized over numpy arrays, know whether they
depend on x or t, can emit canonical source, and differentiate with respect
to t symbolically (product/quotient/chain rules; pow only for t-free
exponents).  Expressions polynomial in t are always differentiable.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "CoeffExpr",
    "ExprError",
    "ExprSyntaxError",
    "UnknownIdentifierError",
    "parse_coeff_expr",
]


class ExprError(ValueError):
    """Base class for grammar errors; carries the byte offset."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at offset {position})")
        self.position = position


class ExprSyntaxError(ExprError):
    """Malformed input; ``expected`` lists the acceptable token kinds."""

    def __init__(self, message: str, position: int, expected: tuple[str, ...] = ()):
        if expected:
            message = f"{message}; expected one of: {', '.join(expected)}"
        super().__init__(message, position)
        self.expected = expected


class UnknownIdentifierError(ExprError):
    def __init__(self, name: str, position: int):
        super().__init__(f"unknown identifier '{name}'", position)
        self.name = name


class NotTimeDifferentiable(ValueError):
    """Raised when no symbolic time derivative is available."""


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}


@dataclass(frozen=True)
class _Num:
    v: float

    def ev(self, x, t):
        return self.v


@dataclass(frozen=True)
class _Var:
    name: str  # "x" or "t"

    def ev(self, x, t):
        return x if self.name == "x" else t


@dataclass(frozen=True)
class _Neg:
    a: "_Node"

    def ev(self, x, t):
        return -self.a.ev(x, t)


@dataclass(frozen=True)
class _Bin:
    op: str
    a: "_Node"
    b: "_Node"

    def ev(self, x, t):
        va, vb = self.a.ev(x, t), self.b.ev(x, t)
        if self.op == "+":
            return va + vb
        if self.op == "-":
            return va - vb
        if self.op == "*":
            return va * vb
        return va / vb


@dataclass(frozen=True)
class _Pow:
    a: "_Node"
    b: "_Node"

    def ev(self, x, t):
        return self.a.ev(x, t) ** self.b.ev(x, t)


@dataclass(frozen=True)
class _Call:
    fn: str
    a: "_Node"

    def ev(self, x, t):
        return _FUNCS[self.fn](self.a.ev(x, t))


_Node = Union[_Num, _Var, _Neg, _Bin, _Pow, _Call]


def _is_num(node, value=None):
    return isinstance(node, _Num) and (value is None or node.v == value)


def _simplify(node: _Node) -> _Node:
    if isinstance(node, (_Num, _Var)):
        return node
    if isinstance(node, _Neg):
        a = _simplify(node.a)
        if _is_num(a):
            return _Num(-a.v)
        if isinstance(a, _Neg):
            return a.a
        return _Neg(a)
    if isinstance(node, _Call):
        a = _simplify(node.a)
        if _is_num(a):
            return _Num(float(_FUNCS[node.fn](a.v)))
        return _Call(node.fn, a)
    if isinstance(node, _Pow):
        a, b = _simplify(node.a), _simplify(node.b)
        if _is_num(b, 1.0):
            return a
        if _is_num(b, 0.0):
            return _Num(1.0)
        if _is_num(a) and _is_num(b):
            return _Num(float(a.v**b.v))
        return _Pow(a, b)
    a, b = _simplify(node.a), _simplify(node.b)
    op = node.op
    if _is_num(a) and _is_num(b):
        return _Num(_Bin(op, a, b).ev(0.0, 0.0))
    if op == "+":
        if _is_num(a, 0.0):
            return b
        if _is_num(b, 0.0):
            return a
    elif op == "-":
        if _is_num(b, 0.0):
            return a
        if _is_num(a, 0.0):
            return _simplify(_Neg(b))
    elif op == "*":
        if _is_num(a, 0.0) or _is_num(b, 0.0):
            return _Num(0.0)
        if _is_num(a, 1.0):
            return b
        if _is_num(b, 1.0):
            return a
    elif op == "/":
        if _is_num(a, 0.0) and not _is_num(b, 0.0):
            return _Num(0.0)
        if _is_num(b, 1.0):
            return a
    return _Bin(op, a, b)


def _depends(node: _Node, name: str) -> bool:
    if isinstance(node, _Var):
        return node.name == name
    if isinstance(node, _Num):
        return False
    if isinstance(node, _Neg):
        return _depends(node.a, name)
    if isinstance(node, _Call):
        return _depends(node.a, name)
    return _depends(node.a, name) or _depends(node.b, name)


def _diff_t(node: _Node) -> _Node:
    if isinstance(node, _Num):
        return _Num(0.0)
    if isinstance(node, _Var):
        return _Num(1.0 if node.name == "t" else 0.0)
    if isinstance(node, _Neg):
        return _Neg(_diff_t(node.a))
    if isinstance(node, _Call):
        da = _diff_t(node.a)
        if node.fn == "sin":
            outer: _Node = _Call("cos", node.a)
        elif node.fn == "cos":
            outer = _Neg(_Call("sin", node.a))
        else:
            outer = _Call("exp", node.a)
        return _Bin("*", outer, da)
    if isinstance(node, _Pow):
        if _depends(node.b, "t"):
            raise NotTimeDifferentiable(
                "cannot differentiate pow with a t-dependent exponent"
            )
        if not _depends(node.a, "t"):
            return _Num(0.0)
        # d/dt a^c = c * a^(c-1) * a'
        c = node.b
        return _Bin(
            "*",
            _Bin("*", c, _Pow(node.a, _Bin("-", c, _Num(1.0)))),
            _diff_t(node.a),
        )
    da, db = _diff_t(node.a), _diff_t(node.b)
    if node.op in "+-":
        return _Bin(node.op, da, db)
    if node.op == "*":
        return _Bin("+", _Bin("*", da, node.b), _Bin("*", node.a, db))
    # quotient rule
    num = _Bin("-", _Bin("*", da, node.b), _Bin("*", node.a, db))
    return _Bin("/", num, _Pow(node.b, _Num(2.0)))


def _poly_t(node: _Node) -> bool:
    """True when t occurs only in polynomial positions."""
    if isinstance(node, (_Num, _Var)):
        return True
    if isinstance(node, _Neg):
        return _poly_t(node.a)
    if isinstance(node, _Call):
        return not _depends(node.a, "t")
    if isinstance(node, _Pow):
        if not _depends(node.a, "t") and not _depends(node.b, "t"):
            return True
        return (
            isinstance(node.b, _Num)
            and node.b.v >= 0.0
            and float(node.b.v).is_integer()
            and _poly_t(node.a)
        )
    if node.op == "/":
        return _poly_t(node.a) and not _depends(node.b, "t")
    return _poly_t(node.a) and _poly_t(node.b)


def _to_source(node: _Node) -> str:
    if isinstance(node, _Num):
        return repr(node.v)
    if isinstance(node, _Var):
        return node.name
    if isinstance(node, _Neg):
        return f"(-{_to_source(node.a)})"
    if isinstance(node, _Call):
        return f"{node.fn}({_to_source(node.a)})"
    if isinstance(node, _Pow):
        return f"pow({_to_source(node.a)},{_to_source(node.b)})"
    return f"({_to_source(node.a)}{node.op}{_to_source(node.b)})"


# ---------------------------------------------------------------------------
# Tokenizer / parser
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/(),]))"
)


def _tokenize(src: str):
    tokens = []
    pos = 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None or m.end() == pos:
            stripped = src[pos:].lstrip()
            if not stripped:
                break
            at = pos + (len(src[pos:]) - len(stripped))
            raise ExprSyntaxError(
                f"unexpected character {src[at]!r}", at,
                ("number", "identifier", "operator"),
            )
        if m.lastgroup == "num":
            tokens.append(("num", m.group("num"), m.start("num")))
        elif m.lastgroup == "ident":
            tokens.append(("ident", m.group("ident"), m.start("ident")))
        else:
            tokens.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    tokens.append(("end", "", len(src)))
    return tokens


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str):
        kind, val, pos = self.peek()
        if kind != "op" or val != op:
            raise ExprSyntaxError(f"got {val!r}" if val else "unexpected end", pos, (f"'{op}'",))
        return self.take()

    def parse(self) -> _Node:
        node = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"trailing input {val!r}", pos, ("'+'", "'-'", "'*'", "'/'", "end"))
        return node

    def expr(self) -> _Node:
        node = self.term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.take()
                node = _Bin(val, node, self.term())
            else:
                return node

    def term(self) -> _Node:
        node = self.unary()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "*/":
                self.take()
                node = _Bin(val, node, self.unary())
            else:
                return node

    def unary(self) -> _Node:
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.take()
            return _Neg(self.unary())
        return self.atom()

    def atom(self) -> _Node:
        kind, val, pos = self.take()
        if kind == "num":
            return _Num(float(val))
        if kind == "ident":
            if val in ("x", "t"):
                return _Var(val)
            if val in _FUNCS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return _Call(val, arg)
            if val == "pow":
                self.expect_op("(")
                base = self.expr()
                self.expect_op(",")
                exponent = self.expr()
                self.expect_op(")")
                return _Pow(base, exponent)
            raise UnknownIdentifierError(val, pos)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        raise ExprSyntaxError(
            f"got {val!r}" if val else "unexpected end of input", pos,
            ("number", "'x'", "'t'", "'sin'", "'cos'", "'exp'", "'pow'", "'('", "'-'"),
        )


# ---------------------------------------------------------------------------
# Public wrapper
# ---------------------------------------------------------------------------


class CoeffExpr:
    """An evaluable space-time coefficient parsed from grammar source."""

    __slots__ = ("_node", "source")

    def __init__(self, node: _Node, source: str):
        self._node = node
        self.source = source

    def __call__(self, x, t):
        val = self._node.ev(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
        return _broadcast_like(val, x, t)

    @property
    def depends_on_x(self) -> bool:
        return _depends(self._node, "x")

    @property
    def depends_on_t(self) -> bool:
        return _depends(self._node, "t")

    @property
    def is_zero(self) -> bool:
        return _is_num(self._node, 0.0)

    @property
    def is_polynomial_in_t(self) -> bool:
        return _poly_t(self._node)

    @property
    def symbolically_differentiable(self) -> bool:
        try:
            _diff_t(self._node)
        except NotTimeDifferentiable:
            return False
        return True

    def diff_t(self) -> "CoeffExpr":
        node = _simplify(_diff_t(self._node))
        return CoeffExpr(node, _to_source(node))

    def to_source(self) -> str:
        return _to_source(self._node)

    def __repr__(self):
        return f"CoeffExpr({self.source!r})"


def _broadcast_like(val, x, t):
    """Always hand back an array matching broadcast(x, t); constants expand."""
    xa = np.asarray(x, dtype=float)
    ta = np.asarray(t, dtype=float)
    shape = np.broadcast_shapes(xa.shape, ta.shape)
    out = np.broadcast_to(np.asarray(val, dtype=float), shape)
    if shape == ():
        return float(out)
    return np.array(out, dtype=float)


def parse_coeff_expr(src: str) -> CoeffExpr:
    """Parse grammar source into an evaluable coefficient.

    Raises ExprSyntaxError (with byte offset and expected-token set) on
    malformed input and UnknownIdentifierError for names outside the
    grammar.
    """
    node = _simplify(_Parser(src).parse())
    return CoeffExpr(node, src)
