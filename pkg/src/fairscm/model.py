"""Structural causal model types and core operations."""
from __future__ import annotations

import csv
import heapq
import io
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import rng
from .expr import EvaluationError, Expr, Num, evaluate, references

__all__ = [
    "VariableDecl", "NoiseDist", "ScmModel", "UnitAssignment", "Dataset",
    "Finding", "ValidationReport", "ModelError", "InterventionError", "DataError",
    "validate", "topological_order", "evaluate_unit", "evaluate_batch", "sample",
    "intervene", "descendants", "ancestors", "support", "enumerate_background",
    "exact_distribution", "drop_variable", "draw_background",
]

BACKGROUND = "background"
OBSERVED = "observed"
TAGS = ("protected", "outcome", "prediction")


class ModelError(ValueError):
    """A model violates a structural invariant."""

    def __init__(self, message: str, findings: Sequence["Finding"] = ()):
        super().__init__(message)
        self.findings = tuple(findings)


class InterventionError(ValueError):
    pass


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseDist:
    """Distribution of one background variable."""

    family: str  # "normal" | "bernoulli" | "categorical"
    params: tuple[float, ...]

    @classmethod
    def normal(cls, mean: float, stddev: float) -> "NoiseDist":
        return cls("normal", (float(mean), float(stddev)))

    @classmethod
    def bernoulli(cls, p: float) -> "NoiseDist":
        return cls("bernoulli", (float(p),))

    @classmethod
    def categorical(cls, *probs: float) -> "NoiseDist":
        return cls("categorical", tuple(float(p) for p in probs))

    @property
    def is_discrete(self) -> bool:
        return self.family != "normal"

    def problems(self) -> list[str]:
        if self.family == "normal":
            if len(self.params) != 2:
                return ["normal takes (mean, stddev)"]
            mean, sd = self.params
            out = [] if math.isfinite(mean) else ["normal mean must be finite"]
            if not (sd > 0 and math.isfinite(sd)):
                out.append("normal stddev must be positive")
            return out
        if self.family == "bernoulli":
            if len(self.params) != 1 or not 0.0 <= self.params[0] <= 1.0:
                return ["bernoulli p must lie in [0, 1]"]
            return []
        if self.family == "categorical":
            p = np.asarray(self.params)
            if p.size == 0 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
                return ["categorical probabilities must be nonnegative and sum to 1"]
            return []
        return [f"unknown noise family {self.family!r}"]

    def probabilities(self) -> np.ndarray:
        """Probability vector over codes 0..k-1 (discrete families only)."""
        if self.family == "bernoulli":
            p = self.params[0]
            return np.array([1.0 - p, p])
        if self.family == "categorical":
            return np.asarray(self.params, dtype=float)
        raise TypeError("continuous distribution has no probability vector")

    def support(self) -> tuple[int, ...] | None:
        if self.family == "normal":
            return None
        return tuple(range(len(self.probabilities())))

    def transform(self, u: np.ndarray) -> np.ndarray:
        """Map uniforms on (0, 1) to draws from this distribution."""
        if self.family == "normal":
            from scipy.special import ndtri

            mean, sd = self.params
            return mean + sd * ndtri(u)
        return rng.categorical(self.probabilities(), u).astype(float)


@dataclass(frozen=True)
class VariableDecl:
    name: str
    role: str  # "background" | "observed"
    kind: str = "continuous"  # "continuous" | "discrete"
    domain: tuple[int, ...] | None = None
    labels: tuple[tuple[str, int], ...] = ()
    tags: frozenset[str] = frozenset()

    @property
    def is_background(self) -> bool:
        return self.role == BACKGROUND

    def code(self, label: str) -> int:
        for name, code in self.labels:
            if name == label:
                return code
        raise KeyError(label)


@dataclass(frozen=True)
class Finding:
    code: str
    message: str
    variables: tuple[str, ...] = ()


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple[Finding, ...]

    @property
    def ok(self) -> bool:
        return not self.findings

    def codes(self) -> list[str]:
        return [f.code for f in self.findings]

    def __str__(self) -> str:
        if self.ok:
            return "model is valid"
        return "\n".join(f"{f.code}: {f.message}" for f in self.findings)


@dataclass(frozen=True, eq=False)
class ScmModel:
    """The (U, V, F) triplet: declarations, structural equations, noise laws.

    Instances are never mutated; :func:`intervene` and :func:`drop_variable`
    return new models.
    """

    name: str
    variables: tuple[VariableDecl, ...]
    equations: Mapping[str, Expr]
    noise: Mapping[str, NoiseDist]

    def __post_init__(self) -> None:
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "equations", dict(self.equations))
        object.__setattr__(self, "noise", dict(self.noise))

    # structural equality, used by round-trip checks
    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ScmModel):
            return NotImplemented
        return (self.name == other.name and self.variables == other.variables
                and self.equations == other.equations and self.noise == other.noise)

    __hash__ = object.__hash__

    @cached_property
    def _index(self) -> dict[str, VariableDecl]:
        return {v.name: v for v in self.variables}

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.variables]

    @property
    def observed(self) -> list[str]:
        return [v.name for v in self.variables if not v.is_background]

    @property
    def background(self) -> list[str]:
        return [v.name for v in self.variables if v.is_background]

    def decl(self, name: str) -> VariableDecl:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"unknown variable {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def parents(self, name: str) -> list[str]:
        """Parents in declaration order (observed and background)."""
        eq = self.equations.get(name)
        if eq is None:
            return []
        refs = references(eq)
        return [v for v in self.names if v in refs]

    @cached_property
    def edges(self) -> tuple[tuple[str, str], ...]:
        return tuple((p, c) for c in self.names for p in self.parents(c))

    def children(self, name: str) -> list[str]:
        return [c for p, c in self.edges if p == name]

    def _tagged(self, tag: str) -> str | None:
        hits = [v.name for v in self.variables if tag in v.tags]
        return hits[0] if hits else None

    @property
    def protected(self) -> str | None:
        return self._tagged("protected")

    @property
    def outcome(self) -> str | None:
        return self._tagged("outcome")

    @property
    def prediction(self) -> str | None:
        return self._tagged("prediction")

    def to_dsl(self) -> str:
        from .dsl import format_model

        return format_model(self)

    def fingerprint(self) -> str:
        import hashlib

        return hashlib.sha256(self.to_dsl().encode()).hexdigest()[:16]


@dataclass(frozen=True)
class UnitAssignment:
    """Values of every variable for one unit."""

    values: Mapping[str, float]

    def __getitem__(self, name: str) -> float:
        return self.values[name]


# ------------------------------------------------------------------- validation


def _find_cycle(names: Sequence[str], parents: Mapping[str, Sequence[str]]) -> list[str] | None:
    color = dict.fromkeys(names, 0)
    stack_path: list[str] = []

    def visit(v: str) -> list[str] | None:
        color[v] = 1
        stack_path.append(v)
        for p in parents.get(v, ()):
            if p not in color:
                continue
            if color[p] == 1:
                # edges point parent -> child, so reverse the discovered chain
                cyc = stack_path[stack_path.index(p):] + [p]
                return cyc[::-1]
            if color[p] == 0:
                found = visit(p)
                if found:
                    return found
        stack_path.pop()
        color[v] = 2
        return None

    for v in names:
        if color[v] == 0:
            found = visit(v)
            if found:
                return found
    return None


def validate(model: ScmModel) -> ValidationReport:
    """Check every structural invariant; problems are returned as findings."""
    out: list[Finding] = []
    seen: set[str] = set()
    for v in model.variables:
        if v.name in seen:
            out.append(Finding("DUPLICATE_DECLARATION", f"{v.name} is declared twice", (v.name,)))
        seen.add(v.name)
        if v.domain is not None:
            if not v.domain:
                out.append(Finding("EMPTY_DOMAIN", f"{v.name} has an empty domain", (v.name,)))
            elif len(set(v.domain)) != len(v.domain):
                out.append(Finding("DUPLICATE_DOMAIN_CODE", f"{v.name} repeats a domain code", (v.name,)))
        if v.is_background and v.tags:
            out.append(Finding("TAG_ON_BACKGROUND",
                               f"background variable {v.name} cannot be tagged {sorted(v.tags)}", (v.name,)))

    for name, eq in model.equations.items():
        if name not in seen:
            out.append(Finding("EQUATION_FOR_UNDECLARED", f"equation for undeclared {name}", (name,)))
            continue
        if model.decl(name).is_background:
            out.append(Finding("BACKGROUND_HAS_EQUATION",
                               f"background variable {name} has a structural equation", (name,)))
        for ref in sorted(references(eq)):
            if ref not in seen:
                out.append(Finding("UNDECLARED_REFERENCE",
                                   f"equation for {name} references undeclared {ref}", (name, ref)))
    for v in model.variables:
        if v.is_background:
            dist = model.noise.get(v.name)
            if dist is None:
                out.append(Finding("MISSING_NOISE", f"background {v.name} has no distribution", (v.name,)))
            else:
                for msg in dist.problems():
                    out.append(Finding("INVALID_NOISE", f"{v.name}: {msg}", (v.name,)))
        else:
            if v.name not in model.equations:
                out.append(Finding("MISSING_EQUATION", f"observed {v.name} has no equation", (v.name,)))
            if v.name in model.noise:
                out.append(Finding("NOISE_ON_OBSERVED", f"observed {v.name} has a noise law", (v.name,)))
    for name in model.noise:
        if name not in seen:
            out.append(Finding("NOISE_FOR_UNDECLARED", f"noise law for undeclared {name}", (name,)))

    for tag in TAGS:
        hits = [v.name for v in model.variables if tag in v.tags]
        if len(hits) > 1:
            out.append(Finding(f"MULTIPLE_{tag.upper()}",
                               f"more than one variable tagged {tag}: {', '.join(hits)}", tuple(hits)))

    parents = {n: [r for r in references(e) if r in seen] for n, e in model.equations.items()}
    cycle = _find_cycle(list(dict.fromkeys(v.name for v in model.variables)), parents)
    if cycle:
        out.append(Finding("CYCLE", "cycle detected: " + " -> ".join(cycle), tuple(cycle[:-1])))
    return ValidationReport(tuple(out))


def ensure_valid(model: ScmModel) -> ScmModel:
    report = validate(model)
    if not report.ok:
        raise ModelError(str(report), report.findings)
    return model


# ------------------------------------------------------------------------ graph


def topological_order(model: ScmModel) -> list[str]:
    """Background variables first, then observed ones; ties by declaration order."""
    index = {n: i for i, n in enumerate(model.names)}
    order = list(model.background)
    observed = model.observed
    pending = {v: {p for p in model.parents(v) if p in index and not model.decl(p).is_background}
               for v in observed}
    heap = [index[v] for v in observed if not pending[v]]
    heapq.heapify(heap)
    children: dict[str, list[str]] = {v: [] for v in observed}
    for v in observed:
        for p in pending[v]:
            children[p].append(v)
    while heap:
        v = model.names[heapq.heappop(heap)]
        order.append(v)
        for c in children[v]:
            pending[c].discard(v)
            if not pending[c]:
                heapq.heappush(heap, index[c])
    if len(order) != len(model.names):
        raise ModelError("model graph has a cycle")
    return order


def descendants(model: ScmModel, v: str) -> set[str]:
    """Variables reachable from ``v`` along directed edges, excluding ``v``."""
    model.decl(v)
    kids: dict[str, list[str]] = {}
    for p, c in model.edges:
        kids.setdefault(p, []).append(c)
    out: set[str] = set()
    stack = [v]
    while stack:
        for c in kids.get(stack.pop(), ()):
            if c not in out:
                out.add(c)
                stack.append(c)
    out.discard(v)
    return out


def ancestors(model: ScmModel, v: str) -> set[str]:
    out: set[str] = set()
    stack = [v]
    while stack:
        for p in model.parents(stack.pop()):
            if p not in out:
                out.add(p)
                stack.append(p)
    out.discard(v)
    return out


# ------------------------------------------------------------------- evaluation


def evaluate_batch(model: ScmModel, u: Mapping[str, np.ndarray], n: int | None = None,
                   *, check_domains: bool = True) -> dict[str, np.ndarray]:
    """Push background values through the equations; returns every variable."""
    if n is None:
        n = len(next(iter(u.values()))) if u else 1
    values: dict[str, np.ndarray] = {}
    for name in model.background:
        if name not in u:
            raise ValueError(f"no value for background variable {name}")
        values[name] = np.broadcast_to(np.asarray(u[name], dtype=float), (n,))
        if check_domains:
            _check_domain(model, name, values[name], background=True)
    for name in topological_order(model):
        if name in values:
            continue
        eq = model.equations[name]
        try:
            values[name] = evaluate(eq, values, n)
        except EvaluationError as exc:
            raise EvaluationError(str(exc), name) from None
        if check_domains:
            _check_domain(model, name, values[name])
    return values


def _check_domain(model: ScmModel, name: str, vals: np.ndarray, background: bool = False) -> None:
    if background:
        dom = model.noise[name].support()
    else:
        dom = model.decl(name).domain
    if dom is None:
        if background and not np.all(np.isfinite(vals)):
            raise EvaluationError("non-finite background value", name)
        return
    bad = ~np.isin(vals, dom)
    if np.any(bad):
        raise EvaluationError(f"value {vals[bad][0]!r} outside discrete domain {list(dom)}", name)


def evaluate_unit(model: ScmModel, u: Mapping[str, float]) -> UnitAssignment:
    """Deterministically evaluate one unit from its background values."""
    vals = evaluate_batch(model, {k: np.array([float(v)]) for k, v in u.items()}, 1)
    return UnitAssignment({k: float(vals[k][0]) for k in model.names})


def draw_background(model: ScmModel, rows: np.ndarray, seed: int) -> dict[str, np.ndarray]:
    """Prior draws of every background variable for the given row counters."""
    return {name: model.noise[name].transform(rng.uniform(seed, f"bg:{name}", rows))
            for name in model.background}


def sample(model: ScmModel, n: int, seed: int, start: int = 0) -> "Dataset":
    """Ancestral sampling of rows ``start .. start+n-1``.

    Row ``i`` depends only on ``(model, seed, i)``, so chunks can be drawn
    independently and concatenated.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rows = np.arange(start, start + n, dtype=np.uint64)
    vals = evaluate_batch(model, draw_background(model, rows, seed), n)
    return Dataset.from_columns(model.names, vals,
                                provenance={"source": "sampled", "seed": int(seed),
                                            "start": int(start), "model": model.name})


# ------------------------------------------------------------------ intervention


def _value_in_domain(model: ScmModel, name: str, value: float) -> None:
    dom = model.decl(name).domain
    if dom is not None and value not in dom:
        raise InterventionError(f"value {value:g} for {name} outside domain {list(dom)}")


def intervene(model: ScmModel, assignments: Mapping[str, float]) -> ScmModel:
    """Replace each assigned variable's equation by a constant (do-operator)."""
    eqs = dict(model.equations)
    for name, value in assignments.items():
        if name not in model:
            raise InterventionError(f"unknown variable {name!r}")
        if model.decl(name).is_background:
            raise InterventionError(f"cannot intervene on background variable {name}")
        value = float(value)
        if not math.isfinite(value):
            raise InterventionError(f"non-finite value for {name}")
        _value_in_domain(model, name, value)
        eqs[name] = Num(value)
    return ScmModel(model.name, model.variables, eqs, model.noise)


def drop_variable(model: ScmModel, name: str) -> ScmModel:
    """Remove ``name`` and its descendants, plus background variables left unused."""
    gone = descendants(model, name) | {name}
    gone = {g for g in gone if not model.decl(g).is_background}
    eqs = {k: e for k, e in model.equations.items() if k not in gone}
    used = set().union(*(references(e) for e in eqs.values())) if eqs else set()
    keep = [v for v in model.variables
            if (v.name not in gone) and (not v.is_background or v.name in used)]
    noise = {k: d for k, d in model.noise.items() if any(v.name == k for v in keep)}
    return ScmModel(model.name, tuple(keep), eqs, noise)


# ------------------------------------------------------------------- enumeration


def enumerate_background(model: ScmModel, names: Sequence[str] | None = None,
                         limit: int = 1 << 20) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """All joint states of discrete background variables with prior masses."""
    names = list(model.background if names is None else names)
    supports = []
    for n in names:
        s = model.noise[n].support()
        if s is None:
            raise TypeError(f"{n} is continuous and cannot be enumerated")
        supports.append(s)
    total = math.prod(len(s) for s in supports)
    if total > limit:
        raise ValueError(f"{total} background states exceed the enumeration limit {limit}")
    grids = np.meshgrid(*[np.asarray(s, dtype=float) for s in supports], indexing="ij") if names else []
    states = {n: g.ravel() for n, g in zip(names, grids)}
    probs = np.ones(total)
    pgrids = np.meshgrid(*[model.noise[n].probabilities() for n in names], indexing="ij") if names else []
    for g in pgrids:
        probs = probs * g.ravel()
    return states, probs


def exact_distribution(model: ScmModel, variables: Sequence[str],
                       condition: Mapping[str, float] | None = None) -> dict[tuple, float]:
    """Exact joint law of ``variables`` for an all-discrete model, optionally conditioned."""
    states, probs = enumerate_background(model)
    vals = evaluate_batch(model, states, len(probs))
    keep = np.ones(len(probs), dtype=bool)
    for k, v in (condition or {}).items():
        keep &= vals[k] == float(v)
    mass = probs[keep].sum()
    if mass <= 0:
        raise ZeroDivisionError("conditioning event has probability zero")
    table: dict[tuple, float] = {}
    cols = np.column_stack([vals[v][keep] for v in variables]) if variables else np.zeros((keep.sum(), 0))
    for row, p in zip(map(tuple, cols), probs[keep]):
        table[row] = table.get(row, 0.0) + p / mass
    return dict(sorted(table.items()))


def support(model: ScmModel, name: str) -> tuple[float, ...] | None:
    """Finite value set of ``name``, or None when it is continuous."""
    d = model.decl(name)
    if d.is_background:
        s = model.noise[name].support()
        return None if s is None else tuple(float(x) for x in s)
    if d.domain is not None:
        return tuple(float(x) for x in d.domain)
    bg = [a for a in ancestors(model, name) if model.decl(a).is_background]
    if any(model.noise[b].support() is None for b in bg):
        return None
    try:
        states, probs = enumerate_background(model, bg)
    except ValueError:
        return None
    sub = {b: states[b] for b in bg}
    full = {b: sub.get(b, np.zeros(len(probs))) for b in model.background}
    vals = evaluate_batch(model, full, len(probs), check_domains=False)
    return tuple(float(x) for x in np.unique(vals[name]))


# ----------------------------------------------------------------------- dataset


def _fmt(v: float) -> str:
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


@dataclass(frozen=True, eq=False)
class Dataset:
    """Named numeric columns over a row-major table."""

    columns: tuple[str, ...]
    data: np.ndarray
    provenance: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        cols = tuple(self.columns)
        if len(set(cols)) != len(cols):
            raise DataError("column names must be unique")
        arr = np.asarray(self.data, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != len(cols):
            raise DataError("data shape does not match columns")
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_columns(cls, names: Sequence[str], values: Mapping[str, np.ndarray],
                     provenance: Mapping[str, object] | None = None) -> "Dataset":
        n = len(np.asarray(values[names[0]])) if names else 0
        data = np.column_stack([np.broadcast_to(np.asarray(values[c], dtype=float), (n,))
                                for c in names]) if names else np.zeros((0, 0))
        return cls(tuple(names), data, dict(provenance or {}))

    def __len__(self) -> int:
        return self.data.shape[0]

    def __contains__(self, name: str) -> bool:
        return name in self.columns

    def column(self, name: str) -> np.ndarray:
        try:
            return self.data[:, self.columns.index(name)]
        except ValueError:
            raise KeyError(f"no column {name!r}") from None

    def as_dict(self) -> dict[str, np.ndarray]:
        return {c: self.data[:, i] for i, c in enumerate(self.columns)}

    def select(self, names: Iterable[str]) -> "Dataset":
        names = list(names)
        return Dataset(tuple(names), np.column_stack([self.column(c) for c in names]),
                       self.provenance)

    def rows(self, idx: np.ndarray) -> "Dataset":
        return Dataset(self.columns, self.data[idx], self.provenance)

    def to_csv(self, target: str | Path | io.TextIOBase | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.data:
            w.writerow([_fmt(v) for v in row])
        text = buf.getvalue()
        if isinstance(target, (str, Path)):
            Path(target).write_text(text)
        elif target is not None:
            target.write(text)
        return text

    @classmethod
    def from_csv(cls, source: str | Path | io.TextIOBase, model: ScmModel | None = None) -> "Dataset":
        """Read comma-separated values with a header row.

        With a model, discrete columns accept their declared labels and are
        checked against their domains.
        """
        if isinstance(source, (str, Path)):
            path = Path(source)
            text = path.read_text()
            where = str(path)
        else:
            text = source.read()
            where = "<stream>"
        reader = csv.reader(io.StringIO(text))
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{where}: empty file") from None
        if len(set(header)) != len(header):
            raise DataError(f"{where}: duplicate column names")
        decls = {c: model.decl(c) for c in header if model is not None and c in model}
        rows = []
        for lineno, raw in enumerate(reader, start=2):
            if not raw or all(not x.strip() for x in raw):
                continue
            if len(raw) != len(header):
                raise DataError(f"{where}:{lineno}: expected {len(header)} fields, got {len(raw)}")
            row = []
            for col, cell in zip(header, raw):
                cell = cell.strip()
                if cell == "" or cell.lower() in ("na", "nan", "null"):
                    raise DataError(f"{where}:{lineno}: missing value in column {col!r}")
                try:
                    val = float(cell)
                except ValueError:
                    d = decls.get(col)
                    try:
                        val = float(d.code(cell)) if d is not None else None
                    except KeyError:
                        val = None
                    if val is None:
                        raise DataError(f"{where}:{lineno}: non-numeric value {cell!r} in column {col!r}") from None
                if not math.isfinite(val):
                    raise DataError(f"{where}:{lineno}: non-finite value in column {col!r}")
                d = decls.get(col)
                if d is not None and d.domain is not None and val not in d.domain:
                    raise DataError(f"{where}:{lineno}: value {cell!r} outside domain of {col}")
                row.append(val)
            rows.append(row)
        data = np.array(rows, dtype=float).reshape(len(rows), len(header))
        return cls(tuple(header), data, {"source": "ingested", "path": where})
