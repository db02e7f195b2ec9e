"""Registry of built-in models with checkable expected facts.

Each fact names a quantity, the value it should take and a tolerance. The
provenance tag says where the expected value comes from: ``worked-example``
(a published worked example), ``derived`` (computed by an independent oracle
such as enumeration or closed-form conditioning) or ``trivial``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .counterfactual import (EdgeSet, abduct, abduct_batch, all_downstream_edges,
                             counterfactual_world, factual_world)
from .dsl import parse_models
from .metrics import (counterfactual_fairness_gap, demographic_parity_gap, evidence_grid,
                      interventional_gap, path_specific_cf_gap, tv_distance)
from .model import (Dataset, ScmModel, enumerate_background, evaluate_batch, exact_distribution,
                    intervene, sample)
from .predictors import (Feature, Predictor, train_counterfactually_fair, train_interventional_linear,
                         train_path_specific, train_unconstrained)

__all__ = ["Fact", "FactResult", "Scenario", "scenario", "names", "REGISTRY", "crossworld_table",
           "consistency_fraction", "N_FACT"]

N_FACT = 100_000
RELATIONS = ("approx", "at_least", "at_most")


@dataclass(frozen=True)
class Fact:
    key: str
    description: str
    expected: float
    tolerance: float
    provenance: str
    check: Callable[["Scenario", int], float] = field(repr=False, compare=False)
    relation: str = "approx"

    def holds(self, observed: float) -> bool:
        if not np.isfinite(observed):
            return False
        if self.relation == "at_least":
            return observed >= self.expected - self.tolerance
        if self.relation == "at_most":
            return observed <= self.expected + self.tolerance
        return abs(observed - self.expected) <= self.tolerance


@dataclass(frozen=True)
class FactResult:
    key: str
    description: str
    observed: float
    expected: float
    tolerance: float
    relation: str
    provenance: str
    passed: bool
    error: str | None = None

    def to_dict(self) -> dict:
        return {"key": self.key, "description": self.description, "observed": self.observed,
                "expected": self.expected, "tolerance": self.tolerance, "relation": self.relation,
                "provenance": self.provenance, "passed": self.passed, "error": self.error}


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    summary: str
    source: str
    facts: tuple[Fact, ...] = ()
    unfair_edges: tuple[str, ...] = ()

    @cached_property
    def models(self) -> list[ScmModel]:
        return parse_models(self.source)

    @property
    def model(self) -> ScmModel:
        return self.models[0]

    @property
    def twin(self) -> ScmModel | None:
        return self.models[1] if len(self.models) > 1 else None

    def fact(self, key: str) -> Fact:
        for f in self.facts:
            if f.key == key:
                return f
        raise KeyError(key)

    def verify(self, seed: int = 0, keys: list[str] | None = None) -> list[FactResult]:
        out = []
        for f in self.facts:
            if keys is not None and f.key not in keys:
                continue
            try:
                obs = float(f.check(self, seed))
                out.append(FactResult(f.key, f.description, obs, f.expected, f.tolerance, f.relation,
                                      f.provenance, f.holds(obs)))
            except Exception as exc:  # a failing check is a failed fact, reported
                out.append(FactResult(f.key, f.description, float("nan"), f.expected, f.tolerance,
                                      f.relation, f.provenance, False, f"{type(exc).__name__}: {exc}"))
        return out


# ------------------------------------------------------------------ helpers


def _do_mean(sc: Scenario, var: str, assign: dict, seed: int, n: int = N_FACT) -> float:
    return float(sample(intervene(sc.model, assign), n, seed).column(var).mean())


def _exact_prob(model: ScmModel, var: str, value: float, condition: dict | None = None) -> float:
    table = exact_distribution(model, [var], condition)
    return float(sum(p for k, p in table.items() if k[0] == value))


def crossworld_table(model: ScmModel, var: str, attr: str, levels: list[float]) -> dict[tuple, float]:
    """Exact joint law of ``var`` across worlds do(attr=level), by enumerating the background."""
    states, probs = enumerate_background(model)
    cols = [evaluate_batch(intervene(model, {attr: lv}), states, len(probs))[var] for lv in levels]
    table: dict[tuple, float] = {}
    for key, p in zip(zip(*cols), probs):
        table[key] = table.get(key, 0.0) + float(p)
    return dict(sorted(table.items()))


def _table_tv(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def consistency_fraction(model: ScmModel, data: Dataset, draws: int = 4, seed: int = 0) -> float:
    """Share of units whose every observed value is reproduced under do(A = factual A)."""
    attr = model.protected or model.observed[0]
    evidence = {v: data.column(v) for v in model.observed}
    post, failed = abduct_batch(model, evidence)
    u = post.draw_rows(draws, seed)
    idx = np.repeat(np.arange(len(data)), draws)
    m = len(idx)
    ev = {k: v[idx] for k, v in evidence.items()}
    fact = factual_world(model, u, ev, m)
    world = counterfactual_world(model, u, {attr: ev[attr]}, m, fact)
    ok = np.ones(m, dtype=bool)
    for v in model.observed:
        ok &= world[v] == ev[v]
    return float(ok.reshape(len(data), draws).all(axis=1).mean())


def _consistency_fact() -> Fact:
    def check(sc: Scenario, seed: int) -> float:
        fractions = []
        for m in sc.models:
            data = sample(m, 200, seed + 7)
            fractions.append(consistency_fraction(m, data, seed=seed))
        return min(fractions)

    return Fact("consistency", "intervening at the factual attribute value reproduces every observed value",
                1.0, 0.0, "trivial", check)


def _grid(model: ScmModel, columns: list[str], seed: int, rows: int = 16) -> list[dict[str, float]]:
    return evidence_grid(sample(model, rows, seed + 101), columns, cap=rows, seed=seed)


# ------------------------------------------------------------ three-var-gaussian

THREE_VAR = """\
# Z confounds A and Y
model three-var-gaussian
background U_Z ~ normal(0, 1)
background U_A ~ normal(0, 1)
background U_Y ~ normal(0, 1)
var Z = U_Z
var A = 0.8 * Z + U_A
var Y = 1.2 * A + 0.5 * Z + U_Y
protected A
outcome Y
"""


def _conditional_mean(model: ScmModel, var: str, evidence: dict) -> float:
    post = abduct(model, evidence)
    mu, _ = post.gaussian_moments()
    u = {name: np.array([v]) for name, v in zip(post.gaussian, mu)}
    return float(evaluate_batch(model, u, 1)[var][0])


def _three_var_facts() -> tuple[Fact, ...]:
    facts = []
    for a in (-1.0, 0.0, 1.0):
        facts.append(Fact(f"do_mean_{a:+g}", f"E[Y | do(A={a:g})] equals 1.2 a", 1.2 * a, 0.01,
                          "trivial" if a == 0 else "worked-example",
                          lambda sc, seed, a=a: _do_mean(sc, "Y", {"A": a}, seed)))
    for a in (-1.0, 1.0):
        facts.append(Fact(
            f"confounding_{a:+g}", f"E[Y | do(A={a:g})] - E[Y | A={a:g}] equals the confounding term -0.4/1.64 a",
            -0.4 / 1.64 * a, 0.02, "derived",
            lambda sc, seed, a=a: _do_mean(sc, "Y", {"A": a}, seed) - _conditional_mean(sc.model, "Y", {"A": a})))
    return tuple(facts)


# ------------------------------------------------------------------- coin flip

COIN_FLIP = """\
# Y flips with A for every unit, yet its interventional law ignores A
model coin-flip-counterexample
background U_A ~ bernoulli(0.5)
background U_Y ~ bernoulli(0.5)
discrete A in {0, 1}
var A = U_A
discrete Y in {0, 1}
var Y = if A == 1 then U_Y else 1 - U_Y
protected A
outcome Y
"""


def flip_fraction(model: ScmModel, units: int, seed: int, draws: int = 8) -> float:
    """Share of abducted units with Y(1 - a) = 1 - y for every posterior draw."""
    data = sample(model, units, seed + 13)
    ev = {"A": data.column("A"), "Y": data.column("Y")}
    post, _ = abduct_batch(model, ev)
    u = post.draw_rows(draws, seed)
    idx = np.repeat(np.arange(units), draws)
    e = {k: v[idx] for k, v in ev.items()}
    fact = factual_world(model, u, e, len(idx))
    world = counterfactual_world(model, u, {"A": 1 - e["A"]}, len(idx), fact)
    ok = (world["Y"] == 1 - e["Y"]).reshape(units, draws).all(axis=1)
    return float(ok.mean())


def _coin_facts() -> tuple[Fact, ...]:
    return (
        Fact("do_a1", "P(Y=1 | do(A=1)) = 1/2 by enumeration", 0.5, 1e-12, "worked-example",
             lambda sc, s: _exact_prob(intervene(sc.model, {"A": 1}), "Y", 1.0)),
        Fact("do_a0", "P(Y=1 | do(A=0)) = 1/2 by enumeration", 0.5, 1e-12, "worked-example",
             lambda sc, s: _exact_prob(intervene(sc.model, {"A": 0}), "Y", 1.0)),
        Fact("unit_flip", "Y(a, u) = 1 - Y(1 - a, u) for 1000 abducted units", 1.0, 0.0, "worked-example",
             lambda sc, s: flip_fraction(sc.model, 1000, s)),
        Fact("interventional_gap", "interventional gap of the predictor Y is 0", 0.0, 0.01, "worked-example",
             lambda sc, s: interventional_gap(sc.model, "Y", 0, 1, N_FACT, s).gap, "at_most"),
        Fact("cf_gap", "counterfactual gap of the predictor Y is 1", 1.0, 0.0, "worked-example",
             lambda sc, s: counterfactual_fairness_gap(
                 sc.model, "Y", [{"A": a, "Y": y} for a in (0, 1) for y in (0, 1)], 200, s).max_gap),
    )


# -------------------------------------------------------------------- chain-axy

CHAIN = """\
# A -> X -> Y with X invertible in its own noise
model chain-axy
background U_A ~ bernoulli(0.5)
background U_X ~ normal(0, 1)
background U_Y ~ normal(0, 1)
discrete A in {0, 1}
var A = U_A
var X = A + U_X
var Y = X + U_Y
protected A
outcome Y
"""


def noise_predictor(name: str, target: str, protected: str) -> Predictor:
    """The predictor that returns one background variable unchanged."""
    return Predictor("counterfactually-fair", (Feature(name),), np.ones(1), 0.0, target, protected)


def _chain_facts() -> tuple[Fact, ...]:
    def cf(sc, seed, pred):
        return counterfactual_fairness_gap(sc.model, pred, _grid(sc.model, ["A", "X"], seed), 500, seed).max_gap

    def trained(sc, seed, fair):
        data = sample(sc.model, N_FACT, seed)
        pred = train_counterfactually_fair(sc.model, data, "Y", seed=seed) if fair else \
            train_unconstrained(sc.model, data, "Y")
        return cf(sc, seed, pred)

    return (
        Fact("noise_predictor_gap", "a predictor of U_X alone has counterfactual gap 0", 0.0, 0.0,
             "worked-example", lambda sc, s: cf(sc, s, noise_predictor("U_X", "Y", "A"))),
        Fact("x_predictor_gap", "the predictor X has counterfactual gap 1 (unit-shifted point masses)",
             1.0, 0.0, "derived", lambda sc, s: cf(sc, s, "X")),
        Fact("fair_trained_gap", "trained counterfactually fair predictor has gap at most 0.02", 0.0, 0.02,
             "derived", lambda sc, s: trained(sc, s, True), "at_most"),
        Fact("baseline_gap", "unconstrained least squares has gap at least 0.2", 0.2, 0.0, "derived",
             lambda sc, s: trained(sc, s, False), "at_least"),
    )


# ------------------------------------------------------ four-var-interventional

FOUR_VAR = """\
# Z confounds A, X and Y; X mediates A
model four-var-interventional
background U_Z ~ normal(0, 1)
background U_A ~ normal(0, 1)
background U_X ~ normal(0, 1)
background U_Y ~ normal(0, 1)
var Z = U_Z
var A = 0.6 * Z + U_A
var X = 1.5 * A + 0.7 * Z + U_X
var Y = 0.8 * A + 0.5 * Z + 1.0 * X + U_Y
protected A
outcome Y
"""


def _four_var_facts() -> tuple[Fact, ...]:
    def fit(sc, seed):
        return train_interventional_linear(sc.model, sample(sc.model, N_FACT, seed), "Y")

    def residual(sc, seed):
        p = fit(sc, seed)
        w = dict(zip([f.name for f in p.features], p.weights))
        return abs(w["A"] + w["X"] * 1.5)

    def excess(sc, seed):
        g = interventional_gap(sc.model, fit(sc, seed), 0, 1, N_FACT, seed)
        return g.gap - 2 * g.se

    def baseline(sc, seed):
        p = train_unconstrained(sc.model, sample(sc.model, N_FACT, seed), "Y")
        return interventional_gap(sc.model, p, 0, 1, N_FACT, seed).gap

    return (
        Fact("constraint", "fitted weights satisfy w_A + w_X * 1.5 = 0", 0.0, 1e-8, "worked-example", residual),
        Fact("interventional_gap", "interventional gap minus two standard errors is at most 0", 0.0, 0.0,
             "derived", excess, "at_most"),
        Fact("baseline_gap", "unconstrained fit has interventional gap at least 0.1", 0.1, 0.0, "derived",
             baseline, "at_least"),
    )


# --------------------------------------------------------- fig2-path-specific

FIG2 = """\
# A reaches X1 directly and through X2; only A -> X1 and A -> Yhat are unfair
model fig2-path-specific
background U_A ~ bernoulli(0.5)
background U_X2 ~ normal(0, 1)
background U_X1 ~ normal(0, 1)
background U_Y ~ normal(0, 1)
discrete A in {0, 1}
var A = U_A
var X2 = 0.8 * A + U_X2
var X1 = 1.0 * A + 0.5 * X2 + U_X1
var Y = 1.0 * X1 + 0.7 * X2 + U_Y
protected A
outcome Y
"""
FIG2_UNFAIR = ("A->X1", "A->Yhat")


def _fig2_facts() -> tuple[Fact, ...]:
    active = EdgeSet(FIG2_UNFAIR)

    def psf(sc, seed, pred, edges=active):
        return path_specific_cf_gap(sc.model, pred, edges, _grid(sc.model, ["A", "X1", "X2"], seed),
                                    500, seed).max_gap

    def trained(sc, seed):
        pred = train_path_specific(sc.model, sample(sc.model, N_FACT, seed), "Y", active, seed=seed)
        return psf(sc, seed, pred)

    def full_vs_cf(sc, seed):
        grid = _grid(sc.model, ["A", "X1", "X2"], seed)
        full = all_downstream_edges(sc.model, "A")
        a = path_specific_cf_gap(sc.model, "X1", full, grid, 500, seed)
        b = counterfactual_fairness_gap(sc.model, "X1", grid, 500, seed)
        return max(abs(p.tv - q.tv) for p, q in zip(a.points, b.points))

    return (
        Fact("x2_gap", "the predictor X2 has path-specific gap 0", 0.0, 0.0, "worked-example",
             lambda sc, s: psf(sc, s, "X2")),
        Fact("x1_gap", "the predictor X1 has path-specific gap at least 0.1", 0.1, 0.0, "worked-example",
             lambda sc, s: psf(sc, s, "X1"), "at_least"),
        Fact("trained_gap", "trained path-specific predictor has gap at most 0.02", 0.0, 0.02, "derived",
             trained, "at_most"),
        Fact("full_edges", "all downstream edges active reproduces the counterfactual gap", 0.0, 0.0,
             "trivial", full_vs_cf),
    )


# --------------------------------------------------------------------- berkeley

BERKELEY = """\
# department choice depends on gender; admission depends only on department
model berkeley
background U_A ~ bernoulli(0.5)
background U_DW ~ categorical(0.45, 0.10, 0.10, 0.20, 0.10, 0.05)
background U_DM ~ categorical(0.30, 0.10, 0.15, 0.20, 0.20, 0.05)
background U_Y0 ~ bernoulli(0.01)
background U_Y1 ~ bernoulli(0.02)
background U_Y2 ~ bernoulli(0.03)
background U_Y3 ~ bernoulli(0.95)
background U_Y4 ~ bernoulli(0.97)
background U_Y5 ~ bernoulli(0.99)
discrete A in {female=0, male=1}
var A = U_A
discrete D in {dept_a=0, dept_b=1, dept_c=2, dept_d=3, dept_e=4, dept_f=5}
var D = if A == male then U_DM else U_DW
discrete Y in {reject=0, admit=1}
var Y = if D == dept_a then U_Y0 else if D == dept_b then U_Y1 else if D == dept_c then U_Y2 else if D == dept_d then U_Y3 else if D == dept_e then U_Y4 else U_Y5
protected A
outcome Y
"""


def _berkeley_facts() -> tuple[Fact, ...]:
    def rate(sc, seed, a):
        d = sample(sc.model, N_FACT, seed)
        return float(d.column("Y")[d.column("A") == a].mean())

    def agg_gap(sc, seed):
        return demographic_parity_gap(sample(sc.model, N_FACT, seed), "Y", "A").gap

    def dept_gap(sc, seed):
        return demographic_parity_gap(sample(sc.model, N_FACT, seed), "Y", "A", strata=["D"]).gap

    return (
        Fact("rate_female", "sampled admission rate of women", 0.346, 0.01, "worked-example",
             lambda sc, s: rate(sc, s, 0)),
        Fact("rate_male", "sampled admission rate of men", 0.443, 0.01, "worked-example",
             lambda sc, s: rate(sc, s, 1)),
        Fact("exact_gap", "exact aggregate admission gap by enumeration", 0.097, 1e-12, "derived",
             lambda sc, s: _exact_prob(sc.model, "Y", 1, {"A": 1}) - _exact_prob(sc.model, "Y", 1, {"A": 0})),
        Fact("aggregate_gap", "sampled aggregate demographic-parity gap", 0.097, 0.01, "worked-example",
             agg_gap),
        Fact("department_gap", "sampled per-department demographic-parity gap", 0.0, 0.01, "derived",
             dept_gap, "at_most"),
        Fact("do_gap", "interventional gap of admission, carried entirely by department choice", 0.097, 0.01,
             "derived", lambda sc, s: interventional_gap(sc.model, "Y", 0, 1, N_FACT, s).gap),
        Fact("direct_gap", "with A -> D deemed fair no unfair path reaches the decision", 0.0, 0.0, "derived",
             lambda sc, s: path_specific_cf_gap(sc.model, "Y", EdgeSet(["A->Yhat"]),
                                                _grid(sc.model, ["A", "D"], s), 200, s).max_gap),
    )


# ------------------------------------------------------------- selection bias

SELECTION_I = """\
# selection is independent of everything
model selection-bias-i
background U_R ~ bernoulli(0.5)
background U_D0 ~ bernoulli(0.2)
background U_D1 ~ bernoulli(0.3)
background U_S ~ bernoulli(0.3)
discrete Race in {0, 1}
var Race = U_R
discrete Drugs in {0, 1}
var Drugs = if Race == 1 then U_D1 else U_D0
discrete Selected in {0, 1}
var Selected = U_S
protected Race
outcome Drugs
"""

SELECTION_II = """\
# selection is a common effect of Race and H; H drives Drugs
model selection-bias-ii
background U_R ~ bernoulli(0.5)
background U_H ~ bernoulli(0.3)
background U_D0 ~ bernoulli(0.1)
background U_D1 ~ bernoulli(0.8)
background U_S00 ~ bernoulli(0.05)
background U_S01 ~ bernoulli(0.5)
background U_S10 ~ bernoulli(0.5)
background U_S11 ~ bernoulli(0.9)
discrete Race in {0, 1}
var Race = U_R
discrete H in {0, 1}
var H = U_H
discrete Drugs in {0, 1}
var Drugs = if H == 1 then U_D1 else U_D0
discrete Selected in {0, 1}
var Selected = if Race == 1 then (if H == 1 then U_S11 else U_S10) else (if H == 1 then U_S01 else U_S00)
protected Race
outcome Drugs
"""

# P(H=1 | Race, Selected=1) by Bayes: 0.27/0.62 and 0.15/0.185
SELECTION_II_GAP = (0.1 + 0.7 * 0.15 / 0.185) - (0.1 + 0.7 * 0.27 / 0.62)


def _race_gap(model: ScmModel, condition: dict) -> float:
    p = [_exact_prob(model, "Drugs", 1, {"Race": r, **condition}) for r in (0, 1)]
    return abs(p[1] - p[0])


def _sampled_race_gap(data: Dataset, mask: np.ndarray | None = None) -> float:
    if mask is not None:
        data = data.rows(np.flatnonzero(mask))
    return demographic_parity_gap(data, "Drugs", "Race").gap


def _selection_i_facts() -> tuple[Fact, ...]:
    return (
        Fact("conditional_gap", "exact race gap among the selected", 0.1, 1e-12, "derived",
             lambda sc, s: _race_gap(sc.model, {"Selected": 1})),
        Fact("same_gap", "conditioning on selection leaves the race gap unchanged", 0.0, 1e-12, "worked-example",
             lambda sc, s: abs(_race_gap(sc.model, {"Selected": 1}) - _race_gap(sc.model, {}))),
    )


def _selection_ii_facts() -> tuple[Fact, ...]:
    def sampled_cond(sc, seed):
        d = sample(sc.model, N_FACT, seed)
        return _sampled_race_gap(d, d.column("Selected") == 1)

    def sampled_do(sc, seed):
        return _sampled_race_gap(sample(intervene(sc.model, {"Selected": 1}), N_FACT, seed))

    return (
        Fact("conditional_gap", "exact race gap in Drugs among the selected", SELECTION_II_GAP, 1e-12,
             "derived", lambda sc, s: _race_gap(sc.model, {"Selected": 1})),
        Fact("sampled_conditional_gap", "sampled race gap among the selected", SELECTION_II_GAP, 0.02,
             "derived", sampled_cond),
        Fact("do_gap", "exact race gap in Drugs under do(Selected=1)", 0.0, 1e-12, "worked-example",
             lambda sc, s: _race_gap(intervene(sc.model, {"Selected": 1}), {})),
        Fact("sampled_do_gap", "sampled race gap under do(Selected=1)", 0.0, 0.01, "worked-example",
             sampled_do, "at_most"),
    )


# ----------------------------------------------------------------------- twins

TWIN = """\
# two equation sets with one observational law
model twin-nonidentifiable
background U_A ~ bernoulli(0.5)
background U ~ categorical(0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1)
discrete A in {0, 1}
var A = U_A
discrete Y in {0, 1}
var Y = if A == 0 then U >= 7 else U >= 4
protected A
outcome Y

model twin-nonidentifiable-reversed
background U_A ~ bernoulli(0.5)
background U ~ categorical(0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1)
discrete A in {0, 1}
var A = U_A
discrete Y in {0, 1}
var Y = if A == 0 then U >= 7 else U <= 5
protected A
outcome Y
"""


def _twin_facts() -> tuple[Fact, ...]:
    def observational(sc, seed):
        p = exact_distribution(sc.model, ["A", "Y"])
        q = exact_distribution(sc.twin, ["A", "Y"])
        return max(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in set(p) | set(q))

    def exact_tv(sc, seed):
        return _table_tv(crossworld_table(sc.model, "Y", "A", [0, 1]),
                         crossworld_table(sc.twin, "Y", "A", [0, 1]))

    def worlds(m, seed):
        u = {b: v for b, v in sample(m, N_FACT, seed).as_dict().items() if b in m.background}
        return [evaluate_batch(intervene(m, {"A": a}), u, N_FACT)["Y"] for a in (0, 1)]

    def marginals(sc, seed):
        w1, w2 = worlds(sc.model, seed), worlds(sc.twin, seed)
        return max(abs(w1[k].mean() - w2[k].mean()) for k in (0, 1))

    def sampled_tv(sc, seed):
        w1, w2 = worlds(sc.model, seed), worlds(sc.twin, seed)
        return tv_distance(2 * w1[0] + w1[1], 2 * w2[0] + w2[1])

    return (
        Fact("observational", "observational tables agree exactly", 0.0, 0.0, "derived", observational),
        Fact("crossworld_tv", "exact TV between the joints of (Y(0), Y(1))", 0.6, 1e-12, "derived", exact_tv),
        Fact("sampled_marginals", "sampled marginals of Y(a) agree", 0.0, 0.01, "derived", marginals, "at_most"),
        Fact("sampled_crossworld_tv", "sampled cross-world TV", 0.6, 0.02, "derived", sampled_tv),
    )


# --------------------------------------------------------------------- registry


def _build() -> dict[str, Scenario]:
    specs = [
        ("three-var-gaussian", "confounded linear-Gaussian model: intervening differs from conditioning",
         THREE_VAR, _three_var_facts(), ()),
        ("coin-flip-counterexample", "interventionally fair yet counterfactually unfair outcome",
         COIN_FLIP, _coin_facts(), ()),
        ("chain-axy", "A -> X -> Y chain; predictors of U_X are counterfactually fair", CHAIN, _chain_facts(), ()),
        ("four-var-interventional", "zero total effect of A on a linear predictor", FOUR_VAR,
         _four_var_facts(), ()),
        ("fig2-path-specific", "path-specific fairness with unfair edges A -> X1 and A -> Yhat", FIG2,
         _fig2_facts(), FIG2_UNFAIR),
        ("berkeley", "aggregate admission gap explained by department choice", BERKELEY, _berkeley_facts(), ()),
        ("selection-bias-i", "selection independent of race and drugs", SELECTION_I, _selection_i_facts(), ()),
        ("selection-bias-ii", "selection as a common effect of race and a hidden driver", SELECTION_II,
         _selection_ii_facts(), ()),
        ("twin-nonidentifiable", "same observational law, different cross-world joints", TWIN, _twin_facts(), ()),
    ]
    return {name: Scenario(name, summary, src, facts + (_consistency_fact(),), unfair)
            for name, summary, src, facts, unfair in specs}


REGISTRY: dict[str, Scenario] = _build()


def names() -> list[str]:
    return list(REGISTRY)


def scenario(name: str) -> Scenario:
    try:
        return REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; known: {', '.join(REGISTRY)}") from None
