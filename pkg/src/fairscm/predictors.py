"""Linear predictors trained under the causal fairness regimes.

Every predictor is ``w . features + b``. A feature is either a model variable
(observed or background) or a *clamped* evaluation of a variable: its value
recomputed with the protected attribute set to one fixed level along the
unfair edges while every other input keeps its factual value.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg

from .counterfactual import EdgeSet, abduct_batch, edge_world, prediction_slot
from .expr import NonlinearError, evaluate_affine, Affine
from .model import (Dataset, ScmModel, ancestors, descendants, drop_variable,
                    enumerate_background, support, topological_order)

__all__ = [
    "Feature", "Predictor", "RegimeError", "SingularDesignError", "REGIMES",
    "train_unconstrained", "train_counterfactually_fair", "train_interventional_linear",
    "train_path_specific", "predict", "predict_batch", "check_regime", "total_effects",
    "tainted_variables", "load_predictor",
]

REGIMES = ("unconstrained", "counterfactually-fair", "interventional-constrained", "path-specific-fair")
FORMAT = "fairscm-predictor"
CONSTRAINT_TOL = 1e-8


class RegimeError(ValueError):
    """Predictor recipe or weights break the invariants of its regime."""


class SingularDesignError(ValueError):
    pass


@dataclass(frozen=True)
class Feature:
    name: str
    level: float | None = None  # protected level for clamped features

    @property
    def clamped(self) -> bool:
        return self.level is not None

    @property
    def label(self) -> str:
        return self.name if self.level is None else f"{self.name}[a={self.level:g}]"


@dataclass(frozen=True, eq=False)
class Predictor:
    regime: str
    features: tuple[Feature, ...]
    weights: np.ndarray
    intercept: float
    target: str
    protected: str | None = None
    unfair_edges: tuple[tuple[str, str], ...] = ()
    n_mc: int = 1
    diagnostics: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if w.shape[0] != len(self.features):
            raise ValueError("one weight per feature required")
        object.__setattr__(self, "weights", w)

    # -- recipe -----------------------------------------------------------

    def background_features(self, model: ScmModel) -> list[str]:
        return [f.name for f in self.features if not f.clamped and model.decl(f.name).is_background]

    def needs_abduction(self, model: ScmModel) -> bool:
        if self.background_features(model):
            return True
        return any(model.decl(p).is_background
                   for f in self.features if f.clamped for p in _clamp_inputs(model, self, f.name))

    def required_inputs(self, model: ScmModel) -> list[str]:
        """Observed variables a row must supply."""
        if self.needs_abduction(model):
            return [v for v in drop_variable(model, self.target).observed]
        need: set[str] = set()
        for f in self.features:
            if f.clamped:
                need |= set(_clamp_inputs(model, self, f.name))
            else:
                need.add(f.name)
        return [v for v in model.observed if v in need]

    # -- evaluation -------------------------------------------------------

    def design(self, model: ScmModel, values: Mapping[str, np.ndarray], n: int) -> np.ndarray:
        """Feature matrix for fully specified worlds (background values included)."""
        cols = []
        clamped: dict[float, dict[str, np.ndarray]] = {}
        for f in self.features:
            if f.clamped:
                if f.level not in clamped:
                    clamped[f.level] = edge_world(model, _complete(model, values, n), self.protected,
                                                  f.level, EdgeSet(self.unfair_edges), n)
                cols.append(clamped[f.level][f.name])
            else:
                cols.append(np.broadcast_to(np.asarray(values[f.name], dtype=float), (n,)))
        return np.column_stack(cols) if cols else np.zeros((n, 0))

    def evaluate_world(self, model: ScmModel, values: Mapping[str, np.ndarray], n: int) -> np.ndarray:
        return self.design(model, values, n) @ self.weights + self.intercept

    # -- serialisation ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": 1,
            "regime": self.regime,
            "target": self.target,
            "protected": self.protected,
            "unfair_edges": [list(e) for e in self.unfair_edges],
            "n_mc": int(self.n_mc),
            "features": [{"name": f.name, "level": f.level} for f in self.features],
            "weights": [float(w) for w in self.weights],
            "intercept": float(self.intercept),
            "diagnostics": _jsonable(dict(self.diagnostics)),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: Mapping) -> "Predictor":
        if d.get("format") != FORMAT:
            raise ValueError("not a predictor record")
        return cls(
            regime=d["regime"],
            features=tuple(Feature(f["name"], None if f["level"] is None else float(f["level"]))
                           for f in d["features"]),
            weights=np.asarray(d["weights"], dtype=float),
            intercept=float(d["intercept"]),
            target=d["target"],
            protected=d.get("protected"),
            unfair_edges=tuple(tuple(e) for e in d.get("unfair_edges", [])),
            n_mc=int(d.get("n_mc", 1)),
            diagnostics=d.get("diagnostics", {}),
        )

    @classmethod
    def from_json(cls, text: str) -> "Predictor":
        return cls.from_dict(json.loads(text))


def load_predictor(path: str | Path) -> Predictor:
    return Predictor.from_json(Path(path).read_text())


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    return x


def _complete(model: ScmModel, values: Mapping[str, np.ndarray], n: int) -> dict[str, np.ndarray]:
    # clamped recomputation only reads inputs it needs; fill the rest so lookups succeed
    out = {k: np.broadcast_to(np.asarray(v, dtype=float), (n,)) for k, v in values.items()}
    for name in model.names:
        out.setdefault(name, np.full(n, np.nan))
    return out


def _clamp_inputs(model: ScmModel, pred: Predictor, name: str) -> list[str]:
    """Variables read (directly or through clamped recomputation) by a clamped feature."""
    tainted = tainted_variables(model, pred.protected, EdgeSet(pred.unfair_edges))
    out: set[str] = set()
    stack = [name]
    seen = set()
    while stack:
        v = stack.pop()
        if v in seen:
            continue
        seen.add(v)
        for p in model.parents(v):
            if p in tainted:
                stack.append(p)
            else:
                out.add(p)
    return sorted(out)


# ------------------------------------------------------------------ fitting


def _fit(X: np.ndarray, y: np.ndarray, ridge: float = 0.0, allow_rank_deficient: bool = False):
    n, p = X.shape
    xm = X.mean(axis=0) if n else np.zeros(p)
    ym = float(y.mean())
    Xc = X - xm
    yc = y - ym
    if p == 0:
        return np.zeros(0), ym, {"rank": 0}
    if ridge > 0:
        w = np.linalg.solve(Xc.T @ Xc + ridge * np.eye(p), Xc.T @ yc)
        rank = p
    else:
        w, _, rank, sv = np.linalg.lstsq(Xc, yc, rcond=None)
        if rank < p and not allow_rank_deficient:
            raise SingularDesignError(
                f"design matrix has rank {rank} < {p} features; pass ridge > 0 to regularise")
    b = ym - float(xm @ w)
    return w, b, {"rank": int(rank)}


def _mse(X, y, w, b) -> float:
    r = y - (X @ w + b)
    return float(np.mean(r ** 2))


def _columns(data: Dataset, names: Sequence[str]) -> np.ndarray:
    missing = [c for c in names if c not in data]
    if missing:
        raise ValueError(f"data lacks required column(s): {', '.join(missing)}")
    return np.column_stack([data.column(c) for c in names]) if names else np.zeros((len(data), 0))


def _excluded(model: ScmModel, target: str) -> set[str]:
    out = descendants(model, target) | {target}
    if model.prediction:
        out.add(model.prediction)
    return out


def _require_target(model: ScmModel, data: Dataset, target: str | None) -> str:
    target = target or model.outcome
    if target is None:
        raise ValueError("no target given and the model tags no outcome")
    if target not in data:
        raise ValueError(f"data has no column {target!r}")
    return target


def train_unconstrained(model: ScmModel, data: Dataset, target: str | None = None, *,
                        features: Sequence[str] | None = None, ridge: float = 0.0) -> Predictor:
    """Ordinary least squares of the target on every other observed variable."""
    target = _require_target(model, data, target)
    if features is None:
        skip = _excluded(model, target)
        features = [v for v in model.observed if v not in skip]
    X = _columns(data, features)
    y = data.column(target)
    w, b, info = _fit(X, y, ridge)
    return Predictor("unconstrained", tuple(Feature(f) for f in features), w, b, target,
                     model.protected, diagnostics={"loss": _mse(X, y, w, b), "n": len(y),
                                                   "ridge": ridge, **info})


# -------------------------------------------------------------- abducted rows


def _abducted_rows(reduced: ScmModel, data: Dataset, n_mc: int, seed: int):
    """Posterior draws for each data row; returns (values, row index, n_mc used, dropped)."""
    evidence = {v: data.column(v) for v in reduced.observed}
    post, failed = abduct_batch(reduced, evidence, strict=False)
    if np.all(post.is_point_mass() | failed):
        n_mc = 1
    draws = post.draw_rows(n_mc, seed)
    idx = np.repeat(np.arange(len(data)), n_mc)
    keep = ~failed[idx]
    values = {k: v[keep] for k, v in draws.items()}
    for v in reduced.observed:
        values[v] = evidence[v][idx][keep]
    return values, idx[keep], n_mc, int(failed.sum())


def cf_admissible(model: ScmModel, target: str) -> tuple[list[str], list[str]]:
    """Observed non-descendants of the protected attribute and informative background variables."""
    a = model.protected
    reduced = drop_variable(model, target)
    desc = descendants(reduced, a)
    skip = _excluded(model, target) | {a} | desc
    obs = [v for v in reduced.observed if v not in skip]
    banned = ancestors(reduced, a)
    bgs = sorted({p for d in desc if not reduced.decl(d).is_background for p in reduced.parents(d)
                  if reduced.decl(p).is_background and p not in banned},
                 key=reduced.names.index)
    return obs, bgs


def train_counterfactually_fair(model: ScmModel, data: Dataset, target: str | None = None,
                                n_mc: int = 50, seed: int = 0) -> Predictor:
    """Least squares on non-descendants of A plus posterior draws of background variables.

    Each training row is expanded into ``n_mc`` rows carrying independent
    posterior draws. Only the target's data column is used: the target's
    structural equation is removed before abduction.
    """
    target = _require_target(model, data, target)
    if model.protected is None:
        raise ValueError("model tags no protected variable")
    reduced = drop_variable(model, target)
    obs, bgs = cf_admissible(model, target)
    values, idx, n_mc_used, dropped = _abducted_rows(reduced, data, n_mc, seed)
    feats = obs + bgs
    X = np.column_stack([values[f] for f in feats]) if feats else np.zeros((len(idx), 0))
    y = data.column(target)[idx]
    w, b, info = _fit(X, y)
    pred = Predictor("counterfactually-fair", tuple(Feature(f) for f in feats), w, b, target,
                     model.protected, n_mc=n_mc_used,
                     diagnostics={"loss": _mse(X, y, w, b), "n": len(data), "n_mc": n_mc_used,
                                  "seed": seed, "dropped_rows": dropped, **info})
    check_regime(pred, model)
    return pred


# -------------------------------------------------------------- interventional


def total_effects(model: ScmModel, attr: str | None = None) -> dict[str, float]:
    """d E[V | do(attr = a)] / d a for every observed variable.

    Exact for models whose equations are affine in the Gaussian background
    and in the attribute once the discrete background is fixed.
    """
    attr = attr or model.protected
    bg = model.background
    gaussian = [b for b in bg if not model.noise[b].is_discrete]
    discrete = [b for b in bg if model.noise[b].is_discrete]
    states, prior = enumerate_background(model, discrete)
    s, g = len(prior), len(gaussian) + 1
    env: dict[str, Affine] = {d: Affine.constant(states[d], g) for d in discrete}
    for k, name in enumerate(gaussian):
        coef = np.zeros((s, g))
        coef[:, k] = 1.0
        env[name] = Affine(np.zeros(s), coef)
    coef = np.zeros((s, g))
    coef[:, -1] = 1.0
    env[attr] = Affine(np.zeros(s), coef)
    try:
        for name in topological_order(model):
            if name not in env:
                env[name] = evaluate_affine(model.equations[name], env, s, g)
    except NonlinearError as exc:
        raise ValueError(f"total effect of {attr} is not linear in this model ({exc})") from None
    return {v: float(prior @ env[v].coef[:, -1]) for v in model.observed}


def train_interventional_linear(model: ScmModel, data: Dataset, target: str | None = None, *,
                                features: Sequence[str] | None = None) -> Predictor:
    """Least squares subject to zero total effect of A on the prediction.

    The constraint ``sum_V w_V t_V = 0`` (``t_V`` the total effect of A on V)
    is eliminated by writing ``w = N beta`` with ``N`` a null-space basis.
    """
    target = _require_target(model, data, target)
    a = model.protected
    if a is None:
        raise ValueError("model tags no protected variable")
    if features is None:
        skip = _excluded(model, target)
        features = [v for v in model.observed if v not in skip]
    t_all = total_effects(model, a)
    t = np.array([t_all[f] for f in features])
    X = _columns(data, features)
    y = data.column(target)
    if np.any(t != 0):
        N = scipy.linalg.null_space(t[None, :])
    else:
        N = np.eye(len(features))
    beta, b, info = _fit(X @ N, y)
    w = N @ beta
    residual = float(abs(t @ w))
    pred = Predictor("interventional-constrained", tuple(Feature(f) for f in features), w, b, target, a,
                     diagnostics={"loss": _mse(X, y, w, b), "n": len(y), "total_effects": t,
                                  "constraint_residual": residual, **info})
    check_regime(pred, model)
    return pred


# -------------------------------------------------------------- path-specific


def tainted_variables(model: ScmModel, attr: str, unfair: EdgeSet) -> set[str]:
    """Variables reachable from ``attr`` along a directed path that uses an unfair edge."""
    out: set[str] = set()
    for name in topological_order(model):
        if model.decl(name).is_background or name == attr:
            continue
        for p in model.parents(name):
            if (p, name) in unfair or p in out:
                out.add(name)
                break
    return out


def _protected_levels(model: ScmModel, attr: str) -> list[float]:
    levels = support(model, attr)
    if levels is None:
        raise ValueError(f"protected variable {attr} is continuous; clamping needs finite levels")
    return list(levels)


def path_specific_recipe(model: ScmModel, target: str, unfair: EdgeSet) -> list[Feature]:
    a = model.protected
    slot = prediction_slot(model)
    reduced = drop_variable(model, target)
    tainted = tainted_variables(reduced, a, unfair) & set(reduced.observed)
    skip = _excluded(model, target) | {a}
    for t in tainted:
        if a in reduced.parents(t) and (a, t) not in unfair and (a, slot) in unfair:
            raise ValueError(
                f"{t} mixes a fair edge from {a} with unfair paths while {a}->{slot} is unfair; "
                "its clamped value would expose the factual attribute")
    levels = _protected_levels(model, a)
    feats = [Feature(t, lv) for t in reduced.observed if t in tainted and t not in skip for lv in levels]
    if (a, slot) not in unfair:
        feats.append(Feature(a))
    feats += [Feature(v) for v in reduced.observed if v not in tainted and v not in skip]
    banned = ancestors(reduced, a)
    bgs = [b for b in reduced.background
           if b not in banned and any(b in reduced.parents(t) for t in tainted)]
    feats += [Feature(b) for b in bgs]
    return feats


def train_path_specific(model: ScmModel, data: Dataset, target: str | None = None,
                        unfair_edges: EdgeSet | None = None, n_mc: int = 50, seed: int = 0) -> Predictor:
    """Least squares on clamped, admissible and abducted features.

    A tainted variable (one fed by an unfair path) enters once per protected
    level, recomputed with that level pushed along the unfair edges, so no
    feature reveals which level is factual.
    """
    target = _require_target(model, data, target)
    a = model.protected
    if a is None:
        raise ValueError("model tags no protected variable")
    unfair = unfair_edges or EdgeSet()
    unfair.validate(model, a)
    feats = path_specific_recipe(model, target, unfair)
    reduced = drop_variable(model, target)
    shell = Predictor("path-specific-fair", tuple(feats), np.zeros(len(feats)), 0.0, target, a,
                      tuple(sorted(unfair.edges)), n_mc)
    if shell.needs_abduction(model):
        values, idx, n_mc_used, dropped = _abducted_rows(reduced, data, n_mc, seed)
    else:
        values = {v: data.column(v) for v in reduced.observed if v in data}
        idx, n_mc_used, dropped = np.arange(len(data)), 1, 0
    X = shell.design(reduced, values, len(idx))
    y = data.column(target)[idx]
    w, b, info = _fit(X, y, allow_rank_deficient=True)
    pred = Predictor("path-specific-fair", tuple(feats), w, b, target, a, tuple(sorted(unfair.edges)),
                     n_mc_used, diagnostics={"loss": _mse(X, y, w, b), "n": len(data), "n_mc": n_mc_used,
                                             "seed": seed, "dropped_rows": dropped, **info})
    check_regime(pred, model)
    return pred


# ----------------------------------------------------------------- checking


def check_regime(pred: Predictor, model: ScmModel) -> None:
    """Raise :class:`RegimeError` if the predictor breaks its regime's invariants."""
    names = {f.name for f in pred.features}
    unknown = names - set(model.names)
    if unknown:
        raise RegimeError(f"features reference unknown variables: {sorted(unknown)}")
    if pred.regime == "counterfactually-fair":
        a = pred.protected
        desc, anc = descendants(model, a), ancestors(model, a)
        bad = [f.label for f in pred.features
               if f.clamped or f.name == a or
               (f.name in anc if model.decl(f.name).is_background else f.name in desc)]
        if bad:
            raise RegimeError(f"counterfactually fair recipe uses descendants of {a}: {bad}")
    elif pred.regime == "interventional-constrained":
        t = total_effects(model, pred.protected)
        res = abs(sum(w * t[f.name] for f, w in zip(pred.features, pred.weights)
                      if not model.decl(f.name).is_background))
        if res > CONSTRAINT_TOL * max(1.0, float(np.abs(pred.weights).max(initial=0.0))):
            raise RegimeError(f"total effect of {pred.protected} on the prediction is {res:.3g}, not 0")
    elif pred.regime == "path-specific-fair":
        unfair = EdgeSet(pred.unfair_edges)
        tainted = tainted_variables(model, pred.protected, unfair)
        slot = prediction_slot(model)
        for f in pred.features:
            if f.clamped and f.name not in tainted:
                raise RegimeError(f"clamped feature {f.label} is not on an unfair path")
            if not f.clamped and f.name in tainted:
                raise RegimeError(f"raw feature {f.name} lies on an unfair path")
            if not f.clamped and f.name == pred.protected and (pred.protected, slot) in unfair:
                raise RegimeError(f"{pred.protected} feeds the prediction through an unfair edge")


# ----------------------------------------------------------------- predicting


def predict_batch(pred: Predictor, model: ScmModel, data: Dataset | Mapping[str, np.ndarray],
                  n_mc: int | None = None, seed: int = 0) -> np.ndarray:
    """Predictions for each row; posterior features are averaged over ``n_mc`` draws."""
    cols = data.as_dict() if isinstance(data, Dataset) else {k: np.atleast_1d(np.asarray(v, float))
                                                             for k, v in data.items()}
    n = len(next(iter(cols.values()))) if cols else 1
    need = pred.required_inputs(model)
    missing = [v for v in need if v not in cols]
    if missing:
        raise ValueError(f"row lacks required variable(s): {', '.join(missing)}")
    if not pred.needs_abduction(model):
        return pred.evaluate_world(model, cols, n)
    reduced = drop_variable(model, pred.target)
    evidence = {v: cols[v] for v in reduced.observed}
    post, _ = abduct_batch(reduced, evidence)
    k = 1 if np.all(post.is_point_mass()) else int(n_mc or pred.n_mc or 1)
    draws = post.draw_rows(k, seed)
    idx = np.repeat(np.arange(n), k)
    values = dict(draws)
    for v in reduced.observed:
        values[v] = evidence[v][idx]
    out = pred.evaluate_world(reduced, values, n * k)
    return out.reshape(n, k).mean(axis=1)


def predict(pred: Predictor, model: ScmModel, row: Mapping[str, float], n_mc: int | None = None,
            seed: int = 0) -> float:
    """Prediction for a single evidence row."""
    return float(predict_batch(pred, model, {k: [v] for k, v in row.items()}, n_mc, seed)[0])
