"""Line-oriented model description language.

::

    model three-var
    background U_Z ~ normal(0, 1)
    discrete A in {female=0, male=1}
    var Z = U_Z
    var A = if 0.8 * Z + U_A > 0 then 1 else 0
    protected A
    outcome Y

One statement per line; ``#`` starts a comment.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from .expr import ExprSyntaxError, Expr, Num, Token, Var, format_expr, parse_expression, _format_num
from .model import (BACKGROUND, OBSERVED, ModelError, NoiseDist, ScmModel, VariableDecl,
                    validate)

__all__ = ["ParseError", "parse_model", "parse_models", "format_model"]

_IDENT = r"[A-Za-z_][A-Za-z0-9_]*"
_NAME_RE = re.compile(r"[A-Za-z0-9_][A-Za-z0-9_.\-]*$")
_FLOAT = r"[-+]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][-+]?\d+)?"
_BACKGROUND_RE = re.compile(rf"background\s+({_IDENT})\s*~\s*([a-z]+)\s*\((.*)\)\s*$")
_DISCRETE_RE = re.compile(rf"discrete\s+({_IDENT})\s+in\s*\{{(.*)\}}\s*$")
_VAR_RE = re.compile(rf"var\s+({_IDENT})\s*=\s*")
_TAG_RE = re.compile(rf"(protected|outcome|prediction)\s+({_IDENT})\s*$")
_FAMILIES = {"normal": 2, "bernoulli": 1, "categorical": None}


class ParseError(ModelError):
    """Model text could not be turned into a valid model."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None,
                 findings=()):
        where = f"line {line}, column {column or 1}: " if line is not None else ""
        super().__init__(where + message, findings)
        self.line = line
        self.column = column


@dataclass
class _Stmt:
    kind: str
    line: int
    column: int
    name: str
    payload: object = None


def _strip_comment(line: str) -> str:
    i = line.find("#")
    return line if i < 0 else line[:i]


def _split_blocks(text: str) -> list[list[tuple[int, str]]]:
    blocks: list[list[tuple[int, str]]] = [[]]
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = _strip_comment(raw).rstrip()
        if not body.strip():
            continue
        if body.split(None, 1)[0] == "model" and blocks[-1]:
            blocks.append([])
        blocks[-1].append((lineno, body))
    return [b for b in blocks if b]


def parse_models(text: str) -> list[ScmModel]:
    """Parse a file holding one or more ``model`` blocks."""
    return [_parse_block(b) for b in _split_blocks(text)]


def parse_model(text: str) -> ScmModel:
    """Parse and validate exactly one model."""
    blocks = _split_blocks(text)
    if not blocks:
        raise ParseError("empty model description", 1, 1)
    if len(blocks) > 1:
        raise ParseError("more than one model in input; use parse_models", blocks[1][0][0], 1)
    return _parse_block(blocks[0])


def _parse_args(body: str, lineno: int, col: int) -> list[float]:
    parts = [p.strip() for p in body.split(",")] if body.strip() else []
    out = []
    for p in parts:
        if not re.fullmatch(_FLOAT, p):
            raise ParseError(f"expected a number, found {p!r}", lineno, col)
        out.append(float(p))
    return out


def _parse_block(lines: list[tuple[int, str]]) -> ScmModel:
    name = "model"
    stmts: list[_Stmt] = []
    for lineno, body in lines:
        indent = len(body) - len(body.lstrip())
        s = body.strip()
        col = indent + 1
        word = s.split(None, 1)[0]
        if word == "model":
            rest = s[len("model"):].strip()
            if not _NAME_RE.match(rest):
                raise ParseError(f"invalid model name {rest!r}", lineno, col + len("model "))
            name = rest
        elif word == "background":
            m = _BACKGROUND_RE.match(s)
            if not m:
                raise ParseError("expected 'background <id> ~ <family>(<args>)'", lineno, col)
            ident, family, args = m.groups()
            if family not in _FAMILIES:
                raise ParseError(f"unknown noise family {family!r}", lineno, col + m.start(2))
            params = _parse_args(args, lineno, col + m.start(3))
            need = _FAMILIES[family]
            if (need is not None and len(params) != need) or not params:
                raise ParseError(f"{family} takes {need or 'one or more'} argument(s)", lineno,
                                 col + m.start(3))
            dist = NoiseDist(family, tuple(params))
            problems = dist.problems()
            if problems:
                raise ParseError(f"{ident}: {problems[0]}", lineno, col + m.start(3))
            stmts.append(_Stmt("background", lineno, col + m.start(1), ident, dist))
        elif word == "discrete":
            m = _DISCRETE_RE.match(s)
            if not m:
                raise ParseError("expected 'discrete <id> in {<label>=<int>, ...}'", lineno, col)
            ident, body_ = m.groups()
            labels: list[tuple[str, int]] = []
            codes: list[int] = []
            for item in [x.strip() for x in body_.split(",")] if body_.strip() else []:
                lm = re.fullmatch(rf"(?:({_IDENT})\s*=\s*)?([-+]?\d+)", item)
                if not lm:
                    raise ParseError(f"bad domain entry {item!r}", lineno, col + m.start(2))
                code = int(lm.group(2))
                if code in codes:
                    raise ParseError(f"duplicate code {code} in domain of {ident}", lineno, col + m.start(2))
                if lm.group(1):
                    if any(l == lm.group(1) for l, _ in labels):
                        raise ParseError(f"duplicate label {lm.group(1)!r}", lineno, col + m.start(2))
                    labels.append((lm.group(1), code))
                codes.append(code)
            if not codes:
                raise ParseError(f"empty domain for {ident}", lineno, col + m.start(2))
            stmts.append(_Stmt("discrete", lineno, col + m.start(1), ident, (tuple(codes), tuple(labels))))
        elif word == "var":
            m = _VAR_RE.match(s)
            if not m:
                raise ParseError("expected 'var <id> = <expression>'", lineno, col)
            stmts.append(_Stmt("var", lineno, col + m.start(1), m.group(1), (s[m.end():], col + m.end())))
        elif word in ("protected", "outcome", "prediction"):
            m = _TAG_RE.match(s)
            if not m:
                raise ParseError(f"expected '{word} <id>'", lineno, col)
            stmts.append(_Stmt("tag", lineno, col + m.start(2), m.group(2), word))
        else:
            raise ParseError(f"unknown statement {word!r}", lineno, col)

    # pass 1: declarations
    order: list[str] = []
    roles: dict[str, str] = {}
    where: dict[str, _Stmt] = {}
    for st in stmts:
        if st.kind in ("background", "var"):
            if st.name in roles:
                prev = where[st.name]
                raise ParseError(f"duplicate declaration of {st.name} (first declared on line {prev.line})",
                                 st.line, st.column)
            roles[st.name] = BACKGROUND if st.kind == "background" else OBSERVED
            where[st.name] = st
            order.append(st.name)
    domains: dict[str, tuple] = {}
    tags: dict[str, set[str]] = {n: set() for n in order}
    for st in stmts:
        if st.kind == "discrete":
            if st.name not in roles:
                raise ParseError(f"discrete domain for undeclared variable {st.name}", st.line, st.column)
            if roles[st.name] == BACKGROUND:
                raise ParseError(f"{st.name} is background; its domain comes from its distribution",
                                 st.line, st.column)
            if st.name in domains:
                raise ParseError(f"duplicate domain declaration for {st.name}", st.line, st.column)
            domains[st.name] = st.payload
        elif st.kind == "tag":
            if st.name not in roles:
                raise ParseError(f"{st.payload} tag on undeclared variable {st.name}", st.line, st.column)
            tags[st.name].add(st.payload)

    label_codes: dict[str, set[int]] = {}
    for codes, labels in domains.values():
        for label, code in labels:
            label_codes.setdefault(label, set()).add(code)

    def resolve(tok: Token) -> Expr:
        if tok.text in roles:
            return Var(tok.text)
        codes = label_codes.get(tok.text)
        if codes is not None:
            if len(codes) > 1:
                raise ExprSyntaxError(f"label {tok.text!r} is ambiguous across domains", tok.line, tok.column)
            return Num(float(next(iter(codes))))
        raise ExprSyntaxError(f"undeclared variable {tok.text!r}", tok.line, tok.column)

    # pass 2: expressions
    equations: dict[str, Expr] = {}
    noise: dict[str, NoiseDist] = {}
    for st in stmts:
        if st.kind == "var":
            text, c0 = st.payload
            try:
                equations[st.name] = parse_expression(text, st.line, c0, resolve)
            except ExprSyntaxError as exc:
                raise ParseError(exc.message, exc.line, exc.column) from None
        elif st.kind == "background":
            noise[st.name] = st.payload

    variables = []
    for n in order:
        if roles[n] == BACKGROUND:
            kind = "discrete" if noise[n].is_discrete else "continuous"
            variables.append(VariableDecl(n, BACKGROUND, kind, tags=frozenset(tags[n])))
        else:
            dom = domains.get(n)
            variables.append(VariableDecl(
                n, OBSERVED, "discrete" if dom else "continuous",
                dom[0] if dom else None, dom[1] if dom else (), frozenset(tags[n])))
    model = ScmModel(name, tuple(variables), equations, noise)
    report = validate(model)
    if not report.ok:
        first = report.findings[0]
        st = where.get(first.variables[0]) if first.variables else None
        raise ParseError(first.message, st.line if st else None, st.column if st else None,
                         report.findings)
    return model


def format_model(model: ScmModel) -> str:
    """Canonical text for ``model``; :func:`parse_model` inverts it."""
    lines = [f"model {model.name}"]
    for v in model.variables:
        if v.is_background:
            d = model.noise[v.name]
            args = ", ".join(_format_num(p) for p in d.params)
            lines.append(f"background {v.name} ~ {d.family}({args})")
            continue
        if v.domain is not None:
            names = dict((c, l) for l, c in v.labels)
            items = ", ".join(f"{names[c]}={c}" if c in names else str(c) for c in v.domain)
            lines.append(f"discrete {v.name} in {{{items}}}")
        lines.append(f"var {v.name} = {format_expr(model.equations[v.name])}")
    for tag in ("protected", "outcome", "prediction"):
        for v in model.variables:
            if tag in v.tags:
                lines.append(f"{tag} {v.name}")
    return "\n".join(lines) + "\n"
