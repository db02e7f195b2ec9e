"""Expression language for structural equations.

A small recursive-descent parser producing an immutable AST, a precedence-aware
printer, and two evaluators: a vectorised numeric one over numpy arrays and an
affine one used by abduction (values kept as ``const + coef @ u``).
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

__all__ = [
    "Expr", "Num", "Var", "Unary", "Binary", "If",
    "ExprSyntaxError", "EvaluationError", "NonlinearError",
    "parse_expression", "tokenize", "references", "format_expr",
    "evaluate", "Affine", "evaluate_affine", "substitute",
]


class ExprSyntaxError(ValueError):
    """Syntax error with a 1-based line and column."""

    def __init__(self, message: str, line: int = 1, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.message = message
        self.line = line
        self.column = column


class EvaluationError(ArithmeticError):
    """Raised on division by zero or other hard evaluation failures."""

    def __init__(self, message: str, variable: str | None = None):
        super().__init__(message if variable is None else f"{variable}: {message}")
        self.variable = variable


class NonlinearError(ValueError):
    """Expression is not affine in the symbolic inputs."""


# --------------------------------------------------------------------------- AST


class Expr:
    __slots__ = ()


@dataclass(frozen=True)
class Num(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Unary(Expr):
    op: str  # "-" or "not"
    operand: Expr


@dataclass(frozen=True)
class Binary(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class If(Expr):
    cond: Expr
    then: Expr
    orelse: Expr


ARITH = ("+", "-", "*", "/")
COMPARE = ("==", "!=", "<", "<=", ">", ">=")
LOGIC = ("and", "or")

# binding strength used by both parser and printer
_PREC = {"or": 1, "and": 2, **{op: 3 for op in COMPARE}, "+": 4, "-": 4, "*": 5, "/": 5}
_UNARY_PREC = 6
_IF_PREC = 0


def references(expr: Expr) -> frozenset[str]:
    """Names of all variables referenced by ``expr``."""
    out: set[str] = set()
    stack = [expr]
    while stack:
        e = stack.pop()
        if isinstance(e, Var):
            out.add(e.name)
        elif isinstance(e, Unary):
            stack.append(e.operand)
        elif isinstance(e, Binary):
            stack.extend((e.left, e.right))
        elif isinstance(e, If):
            stack.extend((e.cond, e.then, e.orelse))
    return frozenset(out)


def substitute(expr: Expr, mapping: Mapping[str, Expr]) -> Expr:
    if isinstance(expr, Var):
        return mapping.get(expr.name, expr)
    if isinstance(expr, Unary):
        return Unary(expr.op, substitute(expr.operand, mapping))
    if isinstance(expr, Binary):
        return Binary(expr.op, substitute(expr.left, mapping), substitute(expr.right, mapping))
    if isinstance(expr, If):
        return If(substitute(expr.cond, mapping), substitute(expr.then, mapping),
                  substitute(expr.orelse, mapping))
    return expr


# ---------------------------------------------------------------------- tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t]+)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<id>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>==|!=|<=|>=|[-+*/()<>])
    """,
    re.VERBOSE,
)
KEYWORDS = frozenset({"if", "then", "else", "and", "or", "not"})


@dataclass(frozen=True)
class Token:
    kind: str  # num, id, op, kw, end
    text: str
    line: int
    column: int


def tokenize(text: str, line: int = 1, column: int = 1) -> list[Token]:
    """Split ``text`` into tokens; ``column`` is the offset of text[0] in its line."""
    tokens: list[Token] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", line, column + pos)
        kind = m.lastgroup
        if kind != "ws":
            word = m.group()
            if kind == "id" and word in KEYWORDS:
                kind = "kw"
            tokens.append(Token(kind, word, line, column + pos))
        pos = m.end()
    tokens.append(Token("end", "", line, column + len(text)))
    return tokens


# ------------------------------------------------------------------------- parser


class _Parser:
    def __init__(self, tokens: list[Token], resolve: Callable[[Token], Expr] | None):
        self.tokens = tokens
        self.i = 0
        self.resolve = resolve

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def error(self, message: str, tok: Token | None = None) -> ExprSyntaxError:
        tok = tok or self.tok
        return ExprSyntaxError(message, tok.line, tok.column)

    def accept(self, *texts: str) -> Token | None:
        tok = self.tok
        if tok.kind in ("op", "kw") and tok.text in texts:
            self.i += 1
            return tok
        return None

    def expect(self, text: str) -> Token:
        tok = self.accept(text)
        if tok is None:
            found = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}")
        return tok

    def parse(self) -> Expr:
        e = self.expression()
        if self.tok.kind != "end":
            raise self.error(f"unexpected token {self.tok.text!r}")
        return e

    def expression(self) -> Expr:
        if self.accept("if"):
            cond = self.expression()
            self.expect("then")
            then = self.expression()
            self.expect("else")
            return If(cond, then, self.expression())
        return self.binary(1)

    def binary(self, level: int) -> Expr:
        if level > 5:
            return self.unary()
        ops = {1: ("or",), 2: ("and",), 3: COMPARE, 4: ("+", "-"), 5: ("*", "/")}[level]
        left = self.binary(level + 1)
        while True:
            tok = self.accept(*ops)
            if tok is None:
                return left
            right = self.binary(level + 1)
            left = Binary(tok.text, left, right)
            if level == 3 and self.tok.text in COMPARE and self.tok.kind == "op":
                raise self.error("comparison operators do not chain; add parentheses")

    def unary(self) -> Expr:
        tok = self.accept("-", "not")
        if tok is not None:
            operand = self.unary()
            if tok.text == "-" and isinstance(operand, Num):
                return Num(-operand.value)
            return Unary(tok.text, operand)
        return self.primary()

    def primary(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            self.i += 1
            return Num(float(tok.text))
        if tok.kind == "id":
            self.i += 1
            return self.resolve(tok) if self.resolve else Var(tok.text)
        if self.accept("("):
            e = self.expression()
            self.expect(")")
            return e
        if tok.kind == "kw" and tok.text == "if":
            return self.expression()
        found = tok.text or "end of input"
        raise self.error(f"expected an expression, found {found!r}")


def parse_expression(
    text: str,
    line: int = 1,
    column: int = 1,
    resolve: Callable[[Token], Expr] | None = None,
) -> Expr:
    """Parse an expression.

    ``resolve`` maps identifier tokens to AST nodes, which lets the model parser
    turn discrete labels into literal codes and reject undeclared names with a
    precise position.
    """
    return _Parser(tokenize(text, line, column), resolve).parse()


# ------------------------------------------------------------------------ printer


def _format_num(v: float) -> str:
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _prec(e: Expr) -> int:
    if isinstance(e, Binary):
        return _PREC[e.op]
    if isinstance(e, Unary):
        return _UNARY_PREC
    if isinstance(e, If):
        return _IF_PREC
    if isinstance(e, Num) and (e.value < 0 or math.copysign(1.0, e.value) < 0):
        return _UNARY_PREC
    return 10


def format_expr(e: Expr) -> str:
    """Render ``e`` with the minimum parentheses needed to re-parse identically."""
    if isinstance(e, Num):
        if e.value < 0:
            return "-" + _format_num(-e.value)
        return _format_num(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        inner = _wrap(e.operand, _prec(e.operand) < _UNARY_PREC)
        return f"not {inner}" if e.op == "not" else f"-{inner}"
    if isinstance(e, Binary):
        p = _PREC[e.op]
        # comparisons are non-associative; arithmetic and logic are left-assoc
        left = _wrap(e.left, _prec(e.left) < p or (_prec(e.left) == p and e.op in COMPARE))
        right = _wrap(e.right, _prec(e.right) <= p)
        return f"{left} {e.op} {right}"
    if isinstance(e, If):
        # nested ifs in the condition or then-branch need parentheses only for readability
        return (f"if {format_expr(e.cond)} then {_wrap(e.then, isinstance(e.then, If))} "
                f"else {format_expr(e.orelse)}")
    raise TypeError(f"not an expression: {e!r}")


def _wrap(e: Expr, paren: bool) -> str:
    s = format_expr(e)
    return f"({s})" if paren else s


# ---------------------------------------------------------------------- evaluator


def _truth(x: np.ndarray) -> np.ndarray:
    return x != 0


def evaluate(expr: Expr, env: Mapping[str, np.ndarray], n: int) -> np.ndarray:
    """Evaluate ``expr`` over ``n`` rows; env values are float arrays of length n.

    Branches of a conditional are evaluated only on the rows that select them, so
    a division by zero in an untaken branch is not an error.
    """
    if isinstance(expr, Num):
        return np.full(n, expr.value)
    if isinstance(expr, Var):
        return np.asarray(env[expr.name], dtype=float)
    if isinstance(expr, Unary):
        v = evaluate(expr.operand, env, n)
        return -v if expr.op == "-" else (~_truth(v)).astype(float)
    if isinstance(expr, Binary):
        a = evaluate(expr.left, env, n)
        op = expr.op
        if op in LOGIC:
            # short-circuit per row, consistent with conditional semantics
            ta = _truth(a)
            out = ta.copy() if op == "or" else np.zeros(n, dtype=bool)
            idx = np.flatnonzero(~ta) if op == "or" else np.flatnonzero(ta)
            if idx.size:
                b = evaluate(expr.right, _subset(env, idx, expr.right), idx.size)
                out[idx] = _truth(b)
            return out.astype(float)
        b = evaluate(expr.right, env, n)
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            if np.any(b == 0):
                raise EvaluationError("division by zero")
            return a / b
        if op == "==":
            return (a == b).astype(float)
        if op == "!=":
            return (a != b).astype(float)
        if op == "<":
            return (a < b).astype(float)
        if op == "<=":
            return (a <= b).astype(float)
        if op == ">":
            return (a > b).astype(float)
        if op == ">=":
            return (a >= b).astype(float)
        raise ValueError(f"unknown operator {op!r}")
    if isinstance(expr, If):
        c = _truth(evaluate(expr.cond, env, n))
        out = np.empty(n)
        for mask, branch in ((c, expr.then), (~c, expr.orelse)):
            idx = np.flatnonzero(mask)
            if idx.size == n:
                return evaluate(branch, env, n)
            if idx.size:
                out[idx] = evaluate(branch, _subset(env, idx, branch), idx.size)
        return out
    raise TypeError(f"not an expression: {expr!r}")


def _subset(env: Mapping[str, np.ndarray], idx: np.ndarray, expr: Expr) -> dict:
    return {k: np.asarray(env[k])[idx] for k in references(expr)}


# ----------------------------------------------------------------- affine algebra


@dataclass
class Affine:
    """Batch of affine forms ``const[s] + coef[s] @ u`` over ``S`` states."""

    const: np.ndarray  # (S,)
    coef: np.ndarray   # (S, G)

    @property
    def is_constant(self) -> bool:
        return not np.any(self.coef)

    def take(self, idx: np.ndarray) -> "Affine":
        return Affine(self.const[idx], self.coef[idx])

    @classmethod
    def constant(cls, values: np.ndarray, g: int) -> "Affine":
        values = np.asarray(values, dtype=float)
        return cls(values, np.zeros((values.shape[0], g)))


def evaluate_affine(expr: Expr, env: Mapping[str, Affine], s: int, g: int) -> Affine:
    """Evaluate ``expr`` symbolically, keeping results affine in the G inputs.

    Raises :class:`NonlinearError` when a product, quotient, comparison or
    condition would involve a non-constant operand.
    """
    if isinstance(expr, Num):
        return Affine.constant(np.full(s, expr.value), g)
    if isinstance(expr, Var):
        return env[expr.name]
    if isinstance(expr, Unary):
        v = evaluate_affine(expr.operand, env, s, g)
        if expr.op == "-":
            return Affine(-v.const, -v.coef)
        _need_const(v, "not")
        return Affine.constant((v.const == 0).astype(float), g)
    if isinstance(expr, Binary):
        op = expr.op
        a = evaluate_affine(expr.left, env, s, g)
        if op in LOGIC:
            _need_const(a, op)
            ta = a.const != 0
            idx = np.flatnonzero(~ta if op == "or" else ta)
            out = ta.copy() if op == "or" else np.zeros(s, dtype=bool)
            if idx.size:
                b = evaluate_affine(expr.right, _subset_affine(env, idx, expr.right), idx.size, g)
                _need_const(b, op)
                out[idx] = b.const != 0
            return Affine.constant(out.astype(float), g)
        b = evaluate_affine(expr.right, env, s, g)
        if op == "+":
            return Affine(a.const + b.const, a.coef + b.coef)
        if op == "-":
            return Affine(a.const - b.const, a.coef - b.coef)
        if op == "*":
            if a.is_constant:
                return Affine(a.const * b.const, a.const[:, None] * b.coef)
            if b.is_constant:
                return Affine(a.const * b.const, b.const[:, None] * a.coef)
            raise NonlinearError("product of two non-constant terms")
        if op == "/":
            if not b.is_constant:
                raise NonlinearError("division by a non-constant term")
            if np.any(b.const == 0):
                raise EvaluationError("division by zero")
            return Affine(a.const / b.const, a.coef / b.const[:, None])
        _need_const(a, op)
        _need_const(b, op)
        num = evaluate(Binary(op, Var("a"), Var("b")), {"a": a.const, "b": b.const}, s)
        return Affine.constant(num, g)
    if isinstance(expr, If):
        c = evaluate_affine(expr.cond, env, s, g)
        _need_const(c, "if")
        t = c.const != 0
        const = np.empty(s)
        coef = np.empty((s, g))
        for mask, branch in ((t, expr.then), (~t, expr.orelse)):
            idx = np.flatnonzero(mask)
            if idx.size == s:
                return evaluate_affine(branch, env, s, g)
            if idx.size:
                r = evaluate_affine(branch, _subset_affine(env, idx, branch), idx.size, g)
                const[idx] = r.const
                coef[idx] = r.coef
        return Affine(const, coef)
    raise TypeError(f"not an expression: {expr!r}")


def _need_const(v: Affine, what: str) -> None:
    if not v.is_constant:
        raise NonlinearError(f"'{what}' applied to a term that depends on continuous noise")


def _subset_affine(env: Mapping[str, Affine], idx: np.ndarray, expr: Expr) -> dict:
    return {k: env[k].take(idx) for k in references(expr)}
