"""Abduction, counterfactual and cross-world sampling, path-specific worlds.

Abduction is exact for two families and their combination: every discrete
background variable is enumerated, and given a discrete state every equation
must be affine in the Gaussian background variables. Within a state the
evidence is then jointly Gaussian (possibly degenerate) and conditioning is
closed form; the states are reweighted by prior mass times evidence
likelihood.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import rng
from .expr import Affine, EvaluationError, NonlinearError, evaluate, evaluate_affine
from .model import (Dataset, ScmModel, ancestors, descendants, enumerate_background,
                    evaluate_batch, intervene, topological_order)

__all__ = [
    "Evidence", "EdgeSet", "PosteriorU", "PREDICTOR_SLOT",
    "UnsupportedModelError", "ZeroProbabilityEvidence", "AbductionError",
    "abduct", "abduct_batch", "counterfactual_sample", "crossworld_sample",
    "path_specific_eval", "path_specific_worlds", "factual_world", "counterfactual_world",
    "edge_world", "descendant_closure", "all_downstream_edges", "parse_edge", "prediction_slot",
]

PREDICTOR_SLOT = "Yhat"
_CONSISTENCY_TOL = 1e-9
_PSD_TOL = 1e-10

Evidence = Mapping[str, float]


class AbductionError(ValueError):
    pass


class UnsupportedModelError(AbductionError):
    """Model outside the exactly-solvable families."""


class ZeroProbabilityEvidence(AbductionError):
    """Evidence has zero probability (or density) under the model."""


# ---------------------------------------------------------------------- edges


@dataclass(frozen=True)
class EdgeSet:
    """Directed edges ``(parent, child)`` selected for path-specific propagation."""

    edges: frozenset[tuple[str, str]] = frozenset()

    def __init__(self, edges: Iterable[tuple[str, str] | str] = ()):
        out = set()
        for e in edges:
            if isinstance(e, str):
                e = parse_edge(e)
            out.add((str(e[0]), str(e[1])))
        object.__setattr__(self, "edges", frozenset(out))

    def __contains__(self, edge: tuple[str, str]) -> bool:
        return edge in self.edges

    def __iter__(self):
        return iter(sorted(self.edges))

    def __len__(self) -> int:
        return len(self.edges)

    def validate(self, model: ScmModel, attr: str | None = None) -> None:
        slot = prediction_slot(model)
        graph = set(model.edges)
        reach = None if attr is None else descendant_closure(model, attr)
        for p, c in self.edges:
            if (p, c) not in graph and not (c == slot and p in model and slot not in model):
                raise ValueError(f"edge {p}->{c} is not in the model graph")
            if reach is not None and p not in reach:
                raise ValueError(f"edge {p}->{c} does not originate from {attr} or its descendants")

    def __str__(self) -> str:
        return ", ".join(f"{p}->{c}" for p, c in self) or "{}"


def parse_edge(text: str) -> tuple[str, str]:
    parts = [p.strip() for p in text.split("->")]
    if len(parts) != 2 or not all(parts):
        raise ValueError(f"bad edge {text!r}; expected PARENT->CHILD")
    return parts[0], parts[1]


def prediction_slot(model: ScmModel) -> str:
    return model.prediction or PREDICTOR_SLOT


def descendant_closure(model: ScmModel, attr: str) -> set[str]:
    return descendants(model, attr) | {attr}


def all_downstream_edges(model: ScmModel, attr: str, include_slot: bool = True) -> EdgeSet:
    """Every edge leaving ``attr`` or one of its descendants, plus ``attr -> slot``."""
    reach = descendant_closure(model, attr)
    edges = [(p, c) for p, c in model.edges if p in reach]
    slot = prediction_slot(model)
    if include_slot and slot not in model:
        edges.append((attr, slot))
    return EdgeSet(edges)


# ------------------------------------------------------------------ posterior


@dataclass(frozen=True, eq=False)
class PosteriorU:
    """Posterior over background variables for one or more evidence rows.

    ``weights[i, s]`` is the mass of discrete state ``s`` for row ``i``; within
    a state the Gaussian background variables have mean ``means[i, s]`` and a
    row-independent covariance ``covs[s]``. Background variables that are not
    ancestors of the evidence keep their prior (``free``).
    """

    discrete: tuple[str, ...]
    gaussian: tuple[str, ...]
    free: tuple[str, ...]
    states: np.ndarray   # (S, D)
    weights: np.ndarray  # (N, S)
    means: np.ndarray    # (N, S, G)
    covs: np.ndarray     # (S, G, G)
    factors: np.ndarray  # (S, G, G)
    priors: Mapping[str, object]

    @property
    def n_rows(self) -> int:
        return self.weights.shape[0]

    @property
    def names(self) -> tuple[str, ...]:
        return self.discrete + self.gaussian + self.free

    @property
    def mode(self) -> str:
        """``degenerate``, ``exact-gaussian``, ``exact-discrete`` or ``mixture`` (row 0)."""
        w = self.weights[0]
        live = np.flatnonzero(w > 0)
        free_random = any(self.priors[f].support() is None or len(self.priors[f].support()) > 1
                          for f in self.free)
        zero_cov = [float(np.max(np.abs(self.covs[s]), initial=0.0)) <= 1e-12 for s in live]
        if len(live) == 1 and zero_cov[0] and not free_random:
            return "degenerate"
        if len(live) == 1:
            return "exact-gaussian"
        if all(zero_cov):
            return "exact-discrete"
        return "mixture"

    def point(self) -> dict[str, float]:
        """The point mass of a degenerate posterior (row 0)."""
        if self.mode != "degenerate":
            raise ValueError(f"posterior is {self.mode}, not a point mass")
        s = int(np.flatnonzero(self.weights[0] > 0)[0])
        out = {n: float(v) for n, v in zip(self.discrete, self.states[s])}
        out.update({n: float(v) for n, v in zip(self.gaussian, self.means[0, s])})
        for f in self.free:
            out[f] = float(self.priors[f].support()[0]) if self.priors[f].support() else math.nan
        return out

    def discrete_support(self, row: int = 0) -> list[tuple[float, dict[str, float]]]:
        """(mass, assignment) pairs of the enumerated discrete states."""
        w = self.weights[row]
        return [(float(w[s]), {n: float(v) for n, v in zip(self.discrete, self.states[s])})
                for s in np.flatnonzero(w > 0)]

    def gaussian_moments(self, row: int = 0) -> tuple[np.ndarray, np.ndarray]:
        """Mean and covariance of the Gaussian block, mixing over discrete states."""
        w = self.weights[row]
        mu = np.einsum("s,sg->g", w, self.means[row])
        dev = self.means[row] - mu
        cov = np.einsum("s,sgh->gh", w, self.covs) + np.einsum("s,sg,sh->gh", w, dev, dev)
        return mu, cov

    def _sample(self, post_row: np.ndarray, ctr_row: np.ndarray, ctr_col: np.ndarray,
                seed: int) -> dict[str, np.ndarray]:
        m = post_row.shape[0]
        out: dict[str, np.ndarray] = {}
        cum = np.cumsum(self.weights, axis=1)
        cum[:, -1] = 1.0
        u = rng.uniform(seed, "post:component", ctr_row, ctr_col)
        comp = np.minimum((u[:, None] >= cum[post_row]).sum(axis=1), self.weights.shape[1] - 1)
        for j, name in enumerate(self.discrete):
            out[name] = self.states[comp, j].astype(float)
        g = len(self.gaussian)
        if g:
            z = np.column_stack([rng.normal(seed, f"post:z:{k}", ctr_row, ctr_col) for k in range(g)])
            vals = self.means[post_row, comp] + np.einsum("mgh,mh->mg", self.factors[comp], z)
            for k, name in enumerate(self.gaussian):
                out[name] = vals[:, k]
        for name in self.free:
            out[name] = self.priors[name].transform(rng.uniform(seed, f"post:free:{name}", ctr_row, ctr_col))
        assert all(v.shape == (m,) for v in out.values())
        return out

    def draw(self, n: int, seed: int, start: int = 0, row: int = 0) -> dict[str, np.ndarray]:
        """``n`` draws for one evidence row; draw ``i`` depends only on (seed, start+i)."""
        ids = np.arange(start, start + n, dtype=np.uint64)
        return self._sample(np.full(n, row), ids, np.zeros(n, dtype=np.uint64), seed)

    def draw_rows(self, n_mc: int, seed: int, row_offset: int = 0) -> dict[str, np.ndarray]:
        """``n_mc`` draws per evidence row, returned flattened row-major (N*n_mc,)."""
        n = self.n_rows
        post_row = np.repeat(np.arange(n), n_mc)
        ctr_row = post_row.astype(np.uint64) + np.uint64(row_offset)
        ctr_col = np.tile(np.arange(n_mc, dtype=np.uint64), n)
        return self._sample(post_row, ctr_row, ctr_col, seed)

    def is_point_mass(self) -> np.ndarray:
        """Per-row flag: the posterior is a single point."""
        live = self.weights > 0
        zero_cov = np.array([np.max(np.abs(c), initial=0.0) <= 1e-12 for c in self.covs])
        free_fixed = all(self.priors[f].support() is not None and len(self.priors[f].support()) == 1
                         for f in self.free)
        return (live.sum(axis=1) == 1) & np.all(~live | zero_cov[None, :], axis=1) & free_fixed


def _as_rows(evidence: Mapping[str, object]) -> tuple[dict[str, np.ndarray], int]:
    arrays = {k: np.atleast_1d(np.asarray(v, dtype=float)) for k, v in evidence.items()}
    n = max((a.shape[0] for a in arrays.values()), default=1)
    return {k: np.broadcast_to(a, (n,)) for k, a in arrays.items()}, n


def _check_evidence(model: ScmModel, evidence: Mapping[str, np.ndarray]) -> None:
    for k, v in evidence.items():
        if k not in model:
            raise AbductionError(f"evidence on unknown variable {k!r}")
        d = model.decl(k)
        if d.is_background:
            raise AbductionError(f"evidence may only mention observed variables, not {k}")
        if d.domain is not None and not np.all(np.isin(v, d.domain)):
            raise AbductionError(f"evidence value for {k} outside domain {list(d.domain)}")
        if not np.all(np.isfinite(v)):
            raise AbductionError(f"non-finite evidence for {k}")


def abduct_batch(model: ScmModel, evidence: Mapping[str, object],
                 *, strict: bool = True) -> tuple[PosteriorU, np.ndarray]:
    """Posterior over U for each evidence row.

    Returns the posterior and a boolean mask of rows whose evidence had zero
    probability. With ``strict`` such rows raise instead.
    """
    ev, n = _as_rows(evidence)
    _check_evidence(model, ev)
    evars = list(ev)
    relevant = set()
    for e in evars:
        relevant |= ancestors(model, e)
    bg = model.background
    gaussian = tuple(b for b in bg if not model.noise[b].is_discrete)
    discrete = tuple(b for b in bg if model.noise[b].is_discrete and b in relevant)
    free = tuple(b for b in bg if model.noise[b].is_discrete and b not in relevant)
    g = len(gaussian)

    states, prior = enumerate_background(model, discrete)
    s_count = len(prior)
    env: dict[str, Affine] = {}
    for d in discrete:
        env[d] = Affine.constant(states[d], g)
    for k, name in enumerate(gaussian):
        coef = np.zeros((s_count, g))
        coef[:, k] = 1.0
        env[name] = Affine(np.zeros(s_count), coef)
    need = set(evars)
    for e in evars:
        need |= ancestors(model, e)
    try:
        for name in topological_order(model):
            if name in env or name not in need:
                continue
            env[name] = evaluate_affine(model.equations[name], env, s_count, g)
    except NonlinearError as exc:
        raise UnsupportedModelError(
            f"abduction needs equations affine in Gaussian noise given the discrete noise ({exc})") from None
    except EvaluationError as exc:
        raise AbductionError(str(exc)) from None

    m = np.array([model.noise[x].params[0] for x in gaussian])
    var = np.array([model.noise[x].params[1] ** 2 for x in gaussian])
    sigma = np.diag(var)
    vals = np.column_stack([ev[e] for e in evars]) if evars else np.zeros((n, 0))
    scale = 1.0 + (np.max(np.abs(vals), axis=1) if evars else np.zeros(n))

    logw = np.full((n, s_count), -np.inf)
    rank = np.zeros(s_count, dtype=int)
    means = np.empty((n, s_count, g))
    covs = np.empty((s_count, g, g))
    factors = np.empty((s_count, g, g))
    with np.errstate(divide="ignore"):
        logprior = np.log(prior)
    for s in range(s_count):
        if prior[s] <= 0:
            means[:, s] = m
            covs[s] = sigma
            factors[s] = np.diag(np.sqrt(var))
            continue
        c = np.array([env[e].const[s] for e in evars])
        B = np.array([env[e].coef[s] for e in evars]).reshape(len(evars), g)
        mu_e = c + B @ m
        S_e = B @ sigma @ B.T
        lam, Q = np.linalg.eigh(S_e) if evars else (np.zeros(0), np.zeros((0, 0)))
        tol = _PSD_TOL * max(1.0, float(lam.max(initial=0.0)))
        rng_mask = lam > tol
        resid = vals - mu_e
        Qn, Qr, lr = Q[:, ~rng_mask], Q[:, rng_mask], lam[rng_mask]
        ok = np.all(np.abs(resid @ Qn) <= _CONSISTENCY_TOL * scale[:, None], axis=1)
        proj = resid @ Qr
        logdens = -0.5 * np.sum(proj ** 2 / lr, axis=1) - 0.5 * np.sum(np.log(2 * np.pi * lr))
        logw[:, s] = np.where(ok, logprior[s] + logdens, -np.inf)
        rank[s] = int(rng_mask.sum())
        # K = Sigma B' S_e^+ restricted to the range of S_e
        K = sigma @ B.T @ (Qr / lr) @ Qr.T if g else np.zeros((0, len(evars)))
        means[:, s] = m + resid @ K.T
        cov = sigma - K @ B @ sigma
        cov = 0.5 * (cov + cov.T)
        ev_c, vec_c = np.linalg.eigh(cov) if g else (np.zeros(0), np.zeros((0, 0)))
        if g and ev_c.min() < -_PSD_TOL * max(1.0, float(np.abs(ev_c).max())):
            raise AbductionError("posterior covariance is not positive semidefinite")
        ev_c = np.clip(ev_c, 0.0, None)
        ev_c[ev_c <= _PSD_TOL * max(1.0, float(ev_c.max(initial=0.0)))] = 0.0
        cov = (vec_c * ev_c) @ vec_c.T if g else cov
        covs[s] = cov
        factors[s] = vec_c * np.sqrt(ev_c) if g else cov

    # atoms dominate densities: keep, per row, the consistent states of least rank
    finite = np.isfinite(logw)
    failed = ~finite.any(axis=1)
    rank_rows = np.where(finite, rank[None, :], np.iinfo(int).max)
    min_rank = rank_rows.min(axis=1)
    keep = finite & (rank_rows == min_rank[:, None])
    logw = np.where(keep, logw, -np.inf)
    top = np.max(np.where(keep, logw, -np.inf), axis=1)
    top[failed] = 0.0
    w = np.where(keep, np.exp(logw - top[:, None]), 0.0)
    tot = w.sum(axis=1)
    tot[failed] = 1.0
    w = w / tot[:, None]
    if strict and failed.any():
        i = int(np.flatnonzero(failed)[0])
        shown = {k: float(ev[k][i]) for k in evars}
        raise ZeroProbabilityEvidence(f"evidence {shown} has zero probability under {model.name}")
    live = np.flatnonzero(w.any(axis=0)) if s_count else np.zeros(0, dtype=int)
    if live.size == 0:
        live = np.array([0])
    state_mat = np.column_stack([states[d] for d in discrete]) if discrete else np.zeros((s_count, 0))
    post = PosteriorU(
        discrete=discrete, gaussian=gaussian, free=free,
        states=state_mat[live], weights=w[:, live], means=means[:, live], covs=covs[live],
        factors=factors[live], priors={f: model.noise[f] for f in free},
    )
    return post, failed


def abduct(model: ScmModel, evidence: Evidence) -> PosteriorU:
    """Exact posterior P(U | evidence) for a single evidence point."""
    post, _ = abduct_batch(model, {k: [v] for k, v in evidence.items()})
    return post


# --------------------------------------------------------------- counterfactuals


def factual_world(model: ScmModel, u: Mapping[str, np.ndarray], evidence: Mapping[str, np.ndarray],
                  n: int) -> dict[str, np.ndarray]:
    """Evaluate the model at ``u`` with evidence variables pinned to their observed values.

    Under the posterior the evidence holds almost surely; pinning removes the
    round-off that solving for ``u`` leaves behind.
    """
    vals = evaluate_batch(model, u, n)
    for k, v in evidence.items():
        vals[k] = np.broadcast_to(np.asarray(v, dtype=float), (n,)).copy()
    return vals


def counterfactual_world(model: ScmModel, u: Mapping[str, np.ndarray], assignments: Mapping[str, object],
                         n: int, factual: Mapping[str, np.ndarray] | None = None) -> dict[str, np.ndarray]:
    """Prediction step: evaluate under do(assignments) sharing ``u`` with the factual world.

    Rows where every input of a variable matches the factual world keep the
    factual value exactly (consistency without floating-point drift).
    """
    mutilated = intervene(model, {k: float(np.atleast_1d(v)[0]) for k, v in assignments.items()})
    vals: dict[str, np.ndarray] = {b: np.broadcast_to(np.asarray(u[b], dtype=float), (n,))
                                   for b in model.background}
    same: dict[str, np.ndarray] = {b: np.ones(n, dtype=bool) for b in model.background}
    for name in topological_order(model):
        if name in vals:
            continue
        if name in assignments:
            v = np.broadcast_to(np.asarray(assignments[name], dtype=float), (n,)).copy()
            unchanged = (v == factual[name]) if factual is not None else np.zeros(n, dtype=bool)
        else:
            env = {p: vals[p] for p in model.parents(name)}
            try:
                v = evaluate(mutilated.equations[name], env, n)
            except EvaluationError as exc:
                raise EvaluationError(str(exc), name) from None
            unchanged = np.ones(n, dtype=bool)
            for p in model.parents(name):
                unchanged &= same[p]
            if factual is not None:
                v = np.where(unchanged, factual[name], v)
            else:
                unchanged = np.zeros(n, dtype=bool)
        vals[name] = v
        same[name] = unchanged
    # domain checks on the result
    for name in model.observed:
        dom = model.decl(name).domain
        if dom is not None and not np.all(np.isin(vals[name], dom)):
            bad = vals[name][~np.isin(vals[name], dom)][0]
            raise EvaluationError(f"value {bad!r} outside discrete domain {list(dom)}", name)
    return vals


def _evidence_arrays(evidence: Evidence) -> dict[str, np.ndarray]:
    return {k: np.array([float(v)]) for k, v in evidence.items()}


def counterfactual_sample(model: ScmModel, evidence: Evidence, intervention: Mapping[str, float],
                          n: int, seed: int) -> Dataset:
    """Abduction, action, prediction: n draws of every variable under the intervention."""
    post = abduct(model, evidence)
    u = post.draw(n, seed)
    fact = factual_world(model, u, evidence, n)
    vals = counterfactual_world(model, u, intervention, n, fact)
    return Dataset.from_columns(model.names, vals, {"source": "counterfactual", "seed": int(seed)})


def crossworld_sample(model: ScmModel, evidence: Evidence, interventions: Sequence[Mapping[str, float]],
                      n: int, seed: int) -> Dataset:
    """Joint draws of several counterfactual worlds sharing one abducted unit per row.

    Observed columns are suffixed ``@k`` for world ``k``; background columns
    appear once.
    """
    post = abduct(model, evidence)
    u = post.draw(n, seed)
    fact = factual_world(model, u, evidence, n)
    cols: dict[str, np.ndarray] = {b: u[b] for b in model.background}
    names = list(model.background)
    for k, iv in enumerate(interventions):
        vals = counterfactual_world(model, u, iv, n, fact)
        for v in model.observed:
            cols[f"{v}@{k}"] = vals[v]
            names.append(f"{v}@{k}")
    return Dataset.from_columns(names, cols, {"source": "crossworld", "seed": int(seed)})


# --------------------------------------------------------------- path-specific


def edge_world(model: ScmModel, base: Mapping[str, np.ndarray], attr: str, counter: float,
               active: EdgeSet, n: int) -> dict[str, np.ndarray]:
    """Modified world: along active edges inputs come from this world, elsewhere from ``base``.

    ``attr`` takes ``counter`` in the modified world. A variable tagged as the
    prediction reads every non-protected input from the modified world.
    """
    mod: dict[str, np.ndarray] = {b: base[b] for b in model.background}
    mod[attr] = np.full(n, float(counter))
    same: dict[str, np.ndarray] = {attr: mod[attr] == base[attr]}
    pred = model.prediction
    for name in topological_order(model):
        if name in mod:
            continue
        parents = model.parents(name)
        env = {}
        unchanged = np.ones(n, dtype=bool)
        for p in parents:
            if model.decl(p).is_background:
                env[p] = base[p]
            elif (p, name) in active or (name == pred and p != attr):
                env[p] = mod[p]
                unchanged &= same[p]
            else:
                env[p] = base[p]
        try:
            v = evaluate(model.equations[name], env, n)
        except EvaluationError as exc:
            raise EvaluationError(str(exc), name) from None
        # inputs identical to the baseline world: keep the baseline value exactly
        b = np.broadcast_to(np.asarray(base[name], dtype=float), (n,))
        keep = unchanged & np.isfinite(b)
        mod[name] = np.where(keep, b, v)
        same[name] = keep
    return mod


def path_specific_worlds(model: ScmModel, u: Mapping[str, np.ndarray], attr: str, baseline: float,
                         counter: float, active: EdgeSet, n: int | None = None,
                         ) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
    """Baseline world under do(attr=baseline) and the edge-restricted modified world."""
    if model.protected is not None and attr != model.protected:
        raise ValueError(f"{attr} is not the protected variable ({model.protected})")
    if model.decl(attr).is_background:
        raise ValueError(f"{attr} is a background variable")
    active.validate(model, attr)
    if n is None:
        n = len(next(iter(u.values()))) if u else 1
    base = evaluate_batch(intervene(model, {attr: baseline}), u, n)
    intervene(model, {attr: counter})  # domain check
    return base, edge_world(model, base, attr, counter, active, n)


def path_specific_eval(model: ScmModel, u: Mapping[str, float], attr: str, baseline: float,
                       counter: float, active: EdgeSet):
    """Single-unit modified-world assignment for the given active edges."""
    from .model import UnitAssignment

    arrays = {k: np.array([float(v)]) for k, v in u.items()}
    _, mod = path_specific_worlds(model, arrays, attr, baseline, counter, active, 1)
    return UnitAssignment({k: float(mod[k][0]) for k in model.names})
