"""Statistical and causal fairness gaps.

Probability-based gaps are maxima of absolute differences of empirical
conditional frequencies across protected groups. Distributional gaps use
total-variation distance between prediction samples.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np

from .counterfactual import (EdgeSet, abduct_batch, counterfactual_world, edge_world, factual_world,
                             prediction_slot)
from .model import Dataset, ScmModel, intervene, sample, support
from .predictors import Predictor

__all__ = [
    "StratumDetail", "GroupGap", "IndividualFairnessConfig", "Violation", "CfPoint", "CfGapReport",
    "demographic_parity_gap", "equalised_odds_gap", "calibration_gap", "individual_fairness_report",
    "counterfactual_fairness_gap", "path_specific_cf_gap", "interventional_gap",
    "tv_distance", "paired_tv", "evidence_grid", "DEFAULT_BINS", "DEFAULT_MIN_COUNT",
]

DEFAULT_BINS = 64
DEFAULT_MIN_COUNT = 30
IF_MAX_ROWS = 10_000

PredictorLike = Union[str, Predictor]


class MetricError(ValueError):
    pass


# ------------------------------------------------------------------ group gaps


@dataclass
class StratumDetail:
    stratum: str
    value: float
    probabilities: dict[float, float]
    counts: dict[float, int]
    gap: float
    skipped: bool = False

    def to_dict(self) -> dict:
        return {
            "stratum": self.stratum,
            "value": self.value,
            "probabilities": {_key(k): v for k, v in self.probabilities.items()},
            "counts": {_key(k): v for k, v in self.counts.items()},
            "gap": self.gap,
            "skipped": self.skipped,
        }


@dataclass
class GroupGap:
    criterion: str
    gap: float
    strata: list[StratumDetail] = field(default_factory=list)
    n: int = 0
    se: float | None = None

    @property
    def skipped(self) -> list[str]:
        return [s.stratum for s in self.strata if s.skipped]

    def to_dict(self) -> dict:
        out = {"criterion": self.criterion, "gap": self.gap, "n": self.n,
               "strata": [s.to_dict() for s in self.strata], "skipped": self.skipped}
        if self.se is not None:
            out["se"] = self.se
        return out


def _key(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def _discrete(col: np.ndarray, name: str) -> np.ndarray:
    col = np.asarray(col, dtype=float)
    if not np.all(np.isfinite(col)):
        raise MetricError(f"column {name} has non-finite values")
    return col


def _conditional_gap(criterion: str, event: np.ndarray, group: np.ndarray, strata: np.ndarray,
                     describe, levels: Sequence[float], target_of, min_count: int, alpha: float) -> GroupGap:
    details: list[StratumDetail] = []
    for s in np.unique(strata, axis=0):
        in_s = np.all(strata == s, axis=1)
        tval = target_of(s)
        counts = {float(a): int(np.sum(in_s & (group == a))) for a in levels}
        k = len(np.unique(event))
        probs = {}
        for a in levels:
            m = in_s & (group == a)
            hits = int(np.sum(event[m] == tval))
            denom = counts[float(a)] + alpha * k
            probs[float(a)] = (hits + alpha) / denom if denom > 0 else float("nan")
        skipped = min(counts.values()) < max(min_count, 1)
        gap = 0.0 if skipped else max(abs(probs[a] - probs[b]) for a, b in itertools.combinations(probs, 2)) \
            if len(probs) > 1 else 0.0
        details.append(StratumDetail(describe(s), float(tval), probs if not skipped else
                                     {a: p for a, p in probs.items() if np.isfinite(p)},
                                     counts, float(gap), skipped))
    live = [d for d in details if not d.skipped]
    if not live:
        raise MetricError(f"{criterion}: every stratum is below the minimum count {min_count}")
    return GroupGap(criterion, max(d.gap for d in live), details, int(len(group)))


def demographic_parity_gap(data: Dataset, pred: str, protected: str, *, strata: Sequence[str] = (),
                           min_count: int = 0, alpha: float = 0.0) -> GroupGap:
    """max_y max_{a,a'} |P(pred=y | A=a[, strata]) - P(pred=y | A=a'[, strata])|."""
    yhat = _discrete(data.column(pred), pred)
    group = _discrete(data.column(protected), protected)
    levels = np.unique(group)
    if strata:
        cols = np.column_stack([data.column(c) for c in strata])
    else:
        cols = np.zeros((len(group), 0))
        for a in levels:
            if not np.any(group == a):
                raise MetricError(f"protected group {a:g} has no rows")
    ys = np.unique(yhat)
    # one stratum per (strata value, prediction value)
    rows = []
    for y in ys:
        rows.append(np.column_stack([cols, np.full(len(group), y)]))
    stacked_strata = np.vstack(rows)
    stacked_event = np.tile(yhat, len(ys))
    stacked_group = np.tile(group, len(ys))

    def describe(s):
        parts = [f"{c}={_key(v)}" for c, v in zip(strata, s[:-1])]
        return ", ".join(parts + [f"{pred}={_key(s[-1])}"])

    gap = _conditional_gap("demographic_parity", stacked_event, stacked_group, stacked_strata, describe,
                           levels, lambda s: s[-1], min_count, alpha)
    gap.n = len(group)
    return gap


def equalised_odds_gap(data: Dataset, pred: str, protected: str, outcome: str, *,
                       min_count: int = DEFAULT_MIN_COUNT, alpha: float = 0.0) -> GroupGap:
    """max_y max_{a,a'} |P(pred=y | A=a, Y=y) - P(pred=y | A=a', Y=y)|."""
    yhat = _discrete(data.column(pred), pred)
    y = _discrete(data.column(outcome), outcome)
    group = _discrete(data.column(protected), protected)
    return _conditional_gap("equalised_odds", yhat, group, y[:, None],
                            lambda s: f"{outcome}={_key(s[0])}", np.unique(group),
                            lambda s: s[0], min_count, alpha)


def calibration_gap(data: Dataset, pred: str, protected: str, outcome: str, *,
                    min_count: int = DEFAULT_MIN_COUNT, alpha: float = 0.0) -> GroupGap:
    """max_y max_{a,a'} |P(Y=y | A=a, pred=y) - P(Y=y | A=a', pred=y)|."""
    yhat = _discrete(data.column(pred), pred)
    y = _discrete(data.column(outcome), outcome)
    group = _discrete(data.column(protected), protected)
    return _conditional_gap("calibration", y, group, yhat[:, None],
                            lambda s: f"{pred}={_key(s[0])}", np.unique(group),
                            lambda s: s[0], min_count, alpha)


# ---------------------------------------------------------- individual fairness


@dataclass(frozen=True)
class IndividualFairnessConfig:
    columns: tuple[str, ...]
    delta: float = 0.0
    epsilon: float = 0.0
    metric: str = "standardized-euclidean"
    max_rows: int = IF_MAX_ROWS

    def __post_init__(self) -> None:
        if self.delta < 0 or self.epsilon < 0:
            raise ValueError("delta and epsilon must be nonnegative")
        if self.metric not in ("standardized-euclidean", "euclidean"):
            raise ValueError(f"unknown metric {self.metric!r}")


@dataclass(frozen=True)
class Violation:
    i: int
    j: int
    distance: float
    divergence: float

    def to_dict(self) -> dict:
        return {"i": self.i, "j": self.j, "distance": self.distance, "divergence": self.divergence}


def individual_fairness_report(data: Dataset, pred: str, cfg: IndividualFairnessConfig) -> list[Violation]:
    """Pairs closer than delta whose predictions differ by more than epsilon."""
    X = np.column_stack([data.column(c) for c in cfg.columns]).astype(float)
    yhat = data.column(pred).astype(float)
    n = X.shape[0]
    if n > cfg.max_rows:
        raise MetricError(f"{n} rows exceed the pairwise-scan limit {cfg.max_rows}; raise max_rows to override")
    if cfg.metric == "standardized-euclidean":
        sd = X.std(axis=0)
        sd[sd == 0] = 1.0
        X = X / sd
    out: list[Violation] = []
    block = 512
    for start in range(0, n, block):
        xi = X[start:start + block]
        d = np.sqrt(np.maximum(((xi[:, None, :] - X[None, :, :]) ** 2).sum(-1), 0.0))
        div = np.abs(yhat[start:start + block, None] - yhat[None, :])
        ii, jj = np.nonzero((d <= cfg.delta) & (div > cfg.epsilon))
        for a, b in zip(ii + start, jj):
            if a < b:
                out.append(Violation(int(a), int(b), float(d[a - start, b]), float(div[a - start, b])))
    out.sort(key=lambda v: (-v.divergence, v.i, v.j))
    return out


# ---------------------------------------------------------------- TV distance


SNAP_TOL = 1e-9


def _snap(pooled: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cluster values closer than a relative round-off tolerance; returns (ids, representatives)."""
    order = np.sort(np.unique(pooled))
    if order.size == 0:
        return np.zeros(0, int), order
    gaps = np.diff(order) > SNAP_TOL * (1.0 + np.abs(order[1:]))
    cluster = np.concatenate([[0], np.cumsum(gaps)])
    reps = order[np.concatenate([[True], gaps])]
    return cluster[np.searchsorted(order, pooled)], reps


def _categories(x: np.ndarray, y: np.ndarray, bins: int) -> tuple[np.ndarray, np.ndarray, int]:
    ids, reps = _snap(np.concatenate([x, y]))
    if reps.size <= bins:
        return ids[:len(x)], ids[len(x):], max(reps.size, 1)
    lo, hi = float(reps[0]), float(reps[-1])
    edges = np.linspace(lo, hi, bins + 1)
    rep_bin = np.clip(np.searchsorted(edges, reps, side="right") - 1, 0, bins - 1)
    cats = rep_bin[ids]
    return cats[:len(x)], cats[len(x):], bins


def tv_distance(x: np.ndarray, y: np.ndarray, bins: int = DEFAULT_BINS) -> float:
    """Total variation between two samples: exact categories, or equal-width bins when continuous."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    cx, cy, k = _categories(x, y, bins)
    px = np.bincount(cx, minlength=k) / len(x)
    py = np.bincount(cy, minlength=k) / len(y)
    return float(0.5 * np.abs(px - py).sum())


def paired_tv(x: np.ndarray, y: np.ndarray, bins: int = DEFAULT_BINS) -> tuple[float, float]:
    """TV between paired samples and a conservative standard error from paired differences."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    n = len(x)
    cx, cy, k = _categories(x, y, bins)
    px = np.bincount(cx, minlength=k) / n
    py = np.bincount(cy, minlength=k) / n
    tv = float(0.5 * np.abs(px - py).sum())
    se = 0.0
    for c in np.union1d(np.unique(cx), np.unique(cy)):
        d = (cx == c).astype(float) - (cy == c).astype(float)
        se += float(d.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return tv, 0.5 * se


# ------------------------------------------------------- model-based audits


def _outputs(pred: PredictorLike, model: ScmModel, values: Mapping[str, np.ndarray], n: int) -> np.ndarray:
    if isinstance(pred, str):
        if pred not in values:
            raise MetricError(f"unknown prediction variable {pred!r}")
        return np.asarray(values[pred], dtype=float)
    return pred.evaluate_world(model, values, n)


def _protected(model: ScmModel, attr: str | None) -> str:
    attr = attr or model.protected
    if attr is None:
        raise MetricError("model tags no protected variable")
    return attr


def _levels(model: ScmModel, attr: str, levels: Sequence[float] | None) -> list[float]:
    if levels is not None:
        return [float(v) for v in levels]
    s = support(model, attr)
    if s is None:
        raise MetricError(f"{attr} is continuous; pass explicit protected levels")
    return list(s)


@dataclass
class CfPoint:
    index: int
    evidence: dict[str, float]
    factual: float | None
    counter: float | None
    tv: float
    se: float
    failed: str | None = None

    def to_dict(self) -> dict:
        return {"index": self.index, "evidence": {k: self.evidence[k] for k in sorted(self.evidence)},
                "factual": self.factual, "counter": self.counter, "tv": self.tv, "se": self.se,
                "failed": self.failed}


@dataclass
class CfGapReport:
    criterion: str
    points: list[CfPoint]
    n: int
    seed: int

    @property
    def ok_points(self) -> list[CfPoint]:
        return [p for p in self.points if p.failed is None]

    @property
    def max_gap(self) -> float:
        return max((p.tv for p in self.ok_points), default=0.0)

    @property
    def mean_gap(self) -> float:
        ok = self.ok_points
        return float(np.mean([p.tv for p in ok])) if ok else 0.0

    @property
    def gap(self) -> float:
        return self.max_gap

    @property
    def se(self) -> float:
        return max((p.se for p in self.ok_points), default=0.0)

    @property
    def failed(self) -> int:
        return sum(p.failed is not None for p in self.points)

    def to_dict(self) -> dict:
        return {"criterion": self.criterion, "gap": self.max_gap, "max_gap": self.max_gap,
                "mean_gap": self.mean_gap, "se": self.se, "n": self.n, "seed": self.seed,
                "failed_points": self.failed, "points": [p.to_dict() for p in self.points]}


def _audit_worlds(criterion: str, model: ScmModel, pred: PredictorLike,
                  evidence_points: Sequence[Mapping[str, float]], n: int, seed: int,
                  levels: Sequence[float] | None, attr: str | None, make_worlds, bins: int) -> CfGapReport:
    attr = _protected(model, attr)
    levels = _levels(model, attr, levels)
    points: list[CfPoint] = []
    if not evidence_points:
        return CfGapReport(criterion, points, n, seed)
    keys = sorted({k for e in evidence_points for k in e})
    for e in evidence_points:
        if set(e) != set(keys):
            raise MetricError("every evidence point must mention the same variables")
        if attr not in e:
            raise MetricError(f"evidence must include the protected variable {attr}")
    ev = {k: np.array([float(e[k]) for e in evidence_points]) for k in keys}
    try:
        post, failed = abduct_batch(model, ev, strict=False)
    except Exception as exc:  # unsupported model: every point fails the same way
        msg = str(exc)
        return CfGapReport(criterion, [CfPoint(i, dict(e), float(e[attr]), None, 0.0, 0.0, msg)
                                       for i, e in enumerate(evidence_points)], n, seed)
    draws = post.draw_rows(n, seed)
    for i, e in enumerate(evidence_points):
        a = float(e[attr])
        if failed[i]:
            points.append(CfPoint(i, dict(e), a, None, 0.0, 0.0, "evidence has zero probability"))
            continue
        u = {k: v[i * n:(i + 1) * n] for k, v in draws.items()}
        for a2 in levels:
            if a2 == a:
                continue
            try:
                fact = factual_world(model, u, {k: float(e[k]) for k in keys}, n)
                left, right = make_worlds(u, fact, attr, a, a2)
                tv, se = paired_tv(_outputs(pred, model, left, n), _outputs(pred, model, right, n), bins)
                points.append(CfPoint(i, dict(e), a, a2, tv, se))
            except (ArithmeticError, ValueError) as exc:
                points.append(CfPoint(i, dict(e), a, a2, 0.0, 0.0, str(exc)))
    return CfGapReport(criterion, points, n, seed)


def counterfactual_fairness_gap(model: ScmModel, pred: PredictorLike, evidence_points: Sequence[Mapping[str, float]],
                                n: int = 1000, seed: int = 0, *, levels: Sequence[float] | None = None,
                                attr: str | None = None, bins: int = DEFAULT_BINS) -> CfGapReport:
    """TV between the prediction under the factual attribute and each counterfactual one.

    Both worlds share the abducted background draws.
    """

    def worlds(u, fact, attr, a, a2):
        return (counterfactual_world(model, u, {attr: a}, n, fact),
                counterfactual_world(model, u, {attr: a2}, n, fact))

    return _audit_worlds("counterfactual_fairness", model, pred, evidence_points, n, seed, levels, attr,
                         worlds, bins)


def path_specific_cf_gap(model: ScmModel, pred: PredictorLike, active: EdgeSet,
                         evidence_points: Sequence[Mapping[str, float]], n: int = 1000, seed: int = 0, *,
                         levels: Sequence[float] | None = None, attr: str | None = None,
                         bins: int = DEFAULT_BINS) -> CfGapReport:
    """TV between the factual prediction and the one with a' sent along ``active`` edges only."""
    attr_ = _protected(model, attr)
    active.validate(model, attr_)
    slot = prediction_slot(model)

    def worlds(u, fact, attr, a, a2):
        base = counterfactual_world(model, u, {attr: a}, n, fact)
        mod = edge_world(model, base, attr, a2, active, n)
        if (attr, slot) not in active:
            mod = dict(mod)
            mod[attr] = base[attr]  # the predictor reads A along an inactive edge
        return base, mod

    return _audit_worlds("path_specific_fairness", model, pred, evidence_points, n, seed, levels, attr,
                         worlds, bins)


def interventional_gap(model: ScmModel, pred: PredictorLike, a: float, a2: float, n: int = 100_000,
                       seed: int = 0, *, attr: str | None = None, bins: int = DEFAULT_BINS) -> GroupGap:
    """TV between prediction laws under do(A=a) and do(A=a'), with common random numbers."""
    attr = _protected(model, attr)
    left = sample(intervene(model, {attr: a}), n, seed).as_dict()
    right = sample(intervene(model, {attr: a2}), n, seed).as_dict()
    x, y = _outputs(pred, model, left, n), _outputs(pred, model, right, n)
    tv, se = paired_tv(x, y, bins)
    detail = StratumDetail(f"do({attr})", 0.0, {float(a): float(np.mean(x)), float(a2): float(np.mean(y))},
                           {float(a): n, float(a2): n}, tv)
    return GroupGap("interventional", tv, [detail], n, se)


# ---------------------------------------------------------------- evidence grid


def evidence_grid(data: Dataset, columns: Sequence[str], cap: int = 256, seed: int = 0) -> list[dict[str, float]]:
    """Distinct rows of ``columns``; uniformly subsampled to ``cap`` with a seeded draw."""
    X = np.column_stack([data.column(c) for c in columns])
    uniq = np.unique(X, axis=0)
    if len(uniq) > cap:
        from . import rng

        keys = rng.bits(seed, "evidence-grid", np.arange(len(uniq)))
        uniq = uniq[np.sort(np.argsort(keys, kind="stable")[:cap])]
    return [{c: float(v) for c, v in zip(columns, row)} for row in uniq]
