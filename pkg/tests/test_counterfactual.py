import itertools
import math

import numpy as np
import pytest

from fairscm.counterfactual import (AbductionError, EdgeSet, UnsupportedModelError, ZeroProbabilityEvidence,
                                    abduct, abduct_batch, all_downstream_edges, counterfactual_sample,
                                    crossworld_sample, path_specific_eval)
from fairscm.dsl import parse_model
from fairscm.model import enumerate_background, evaluate_batch, evaluate_unit, intervene
from fairscm.scenarios import scenario


def three_var():
    return scenario("three-var-gaussian").model


# --------------------------------------------------------------------- abduction


def test_full_evidence_gives_point_mass():
    post = abduct(three_var(), {"A": 1, "Y": 1, "Z": 0.5})
    assert post.mode == "degenerate"
    u = post.point()
    # oracle: invert each equation in turn
    assert u["U_Z"] == pytest.approx(0.5)
    assert u["U_A"] == pytest.approx(1 - 0.8 * 0.5)
    assert u["U_Y"] == pytest.approx(1 - 1.2 - 0.25)


def _condition(mu, cov, h, value):
    # oracle: Gaussian conditioning on the linear constraints h @ u = value
    s = h @ cov @ h.T
    k = cov @ h.T @ np.linalg.inv(s)
    return mu + k @ (value - h @ mu), cov - k @ h @ cov


@pytest.mark.parametrize("evidence", [{"A": 1.0}, {"Y": 2.0}, {"A": 1.0, "Y": 1.0}, {"Z": -0.3, "Y": 0.2}])
def test_partial_evidence_matches_gaussian_conditioning(evidence):
    m = three_var()
    post = abduct(m, evidence)
    assert post.mode == "exact-gaussian"
    # rows of h express Z, A, Y in (U_Z, U_A, U_Y)
    rows = {"Z": [1, 0, 0], "A": [0.8, 1, 0], "Y": [1.2 * 0.8 + 0.5, 1.2, 1]}
    h = np.array([rows[k] for k in evidence])
    mu, cov = _condition(np.zeros(3), np.eye(3), h, np.array(list(evidence.values())))
    got_mu, got_cov = post.gaussian_moments()
    idx = [post.gaussian.index(n) for n in ("U_Z", "U_A", "U_Y")]
    np.testing.assert_allclose(got_mu[idx], mu, atol=1e-12)
    np.testing.assert_allclose(got_cov[np.ix_(idx, idx)], cov, atol=1e-12)
    assert post.gaussian_moments()[1].shape == (3, 3)


def test_posterior_draws_hit_the_evidence():
    m = three_var()
    post = abduct(m, {"A": 1.0})
    u = post.draw(20_000, seed=3)
    vals = evaluate_batch(m, u, 20_000)
    np.testing.assert_allclose(vals["A"], 1.0, atol=1e-12)
    mu, cov = post.gaussian_moments()
    k = post.gaussian.index("U_Z")
    assert abs(u["U_Z"].mean() - mu[k]) < 4 * math.sqrt(cov[k, k] / 20_000)


def test_discrete_bayes_rule():
    m = scenario("berkeley").model
    ev = {"A": 1, "D": 2, "Y": 1}
    post = abduct(m, ev)
    # oracle: filter the enumerated prior by the evidence and renormalise
    states, prior = enumerate_background(m)
    vals = evaluate_batch(m, states, len(prior))
    keep = np.ones(len(prior), dtype=bool)
    for k, v in ev.items():
        keep &= vals[k] == v
    want = prior * keep / (prior * keep).sum()
    for name in m.background:
        for value in np.unique(states[name]):
            if name in post.discrete:
                got = sum(w for w, a in post.discrete_support() if a[name] == value)
            else:  # free variables keep their prior
                got = m.noise[name].probabilities()[int(value)]
            assert got == pytest.approx(want[states[name] == value].sum(), abs=1e-12)


def test_mixture_posterior_weights():
    m = scenario("chain-axy").model
    x = 0.3
    post = abduct(m, {"X": x})
    assert post.mode == "mixture"
    support = {a["U_A"]: w for w, a in post.discrete_support()}
    # oracle: P(U_A = a | X = x) proportional to 0.5 * phi(x - a)
    phi = {a: 0.5 * math.exp(-0.5 * (x - a) ** 2) for a in (0.0, 1.0)}
    z = sum(phi.values())
    for a in (0.0, 1.0):
        assert support[a] == pytest.approx(phi[a] / z, abs=1e-12)
    d = post.draw(5000, seed=1)
    np.testing.assert_allclose(d["U_X"], x - d["U_A"], atol=1e-12)


def test_free_background_keeps_prior():
    m = three_var()
    post = abduct(m, {"Z": 0.1})
    u = post.draw(50_000, seed=2)
    assert abs(u["U_Y"].mean()) < 4 / math.sqrt(50_000)
    assert abs(u["U_Y"].std() - 1) < 0.02


def test_batch_rows_are_independent_posteriors():
    m = three_var()
    post, failed = abduct_batch(m, {"A": np.array([1.0, -1.0, 0.0]), "Z": np.array([0.0, 0.5, 2.0])})
    assert not failed.any()
    for i, (a, z) in enumerate([(1.0, 0.0), (-1.0, 0.5), (0.0, 2.0)]):
        single = abduct(m, {"A": a, "Z": z})
        np.testing.assert_allclose(post.gaussian_moments(i)[0], single.gaussian_moments(0)[0], atol=1e-12)


def test_zero_probability_evidence():
    m = parse_model("model z\nbackground U ~ bernoulli(0.5)\ndiscrete A in {0, 1}\nvar A = U\n"
                    "discrete Y in {0, 1}\nvar Y = A\n")
    with pytest.raises(ZeroProbabilityEvidence):
        abduct(m, {"A": 1, "Y": 0})
    post, failed = abduct_batch(m, {"A": np.array([1.0, 1.0]), "Y": np.array([0.0, 1.0])}, strict=False)
    assert failed.tolist() == [True, False]


def test_unsupported_and_invalid_evidence():
    m = parse_model("model q\nbackground U ~ normal(0, 1)\nvar X = U * U\n")
    with pytest.raises(UnsupportedModelError):
        abduct(m, {"X": 1.0})
    with pytest.raises(AbductionError, match="only mention observed"):
        abduct(three_var(), {"U_Z": 1.0})
    with pytest.raises(AbductionError, match="outside domain"):
        abduct(scenario("coin-flip-counterexample").model, {"A": 3})


def test_degenerate_gaussian_consistency_check():
    # X and Y both equal U: contradictory evidence has probability zero
    m = parse_model("model d\nbackground U ~ normal(0, 1)\nvar X = U\nvar Y = 2 * X\n")
    with pytest.raises(ZeroProbabilityEvidence):
        abduct(m, {"X": 1.0, "Y": 3.0})
    assert abduct(m, {"X": 1.0, "Y": 2.0}).mode == "degenerate"


# ---------------------------------------------------------------- counterfactuals


def test_counterfactual_sample_three_var():
    m = three_var()
    d = counterfactual_sample(m, {"A": 1, "Y": 1, "Z": 0.5}, {"A": 0}, 10, 0)
    # oracle: U_Y = -0.45, so Y(A=0) = 0.5 * 0.5 - 0.45
    np.testing.assert_allclose(d.column("Y"), -0.2, atol=1e-12)
    np.testing.assert_allclose(d.column("Z"), 0.5, atol=0)


def test_crossworld_coin_flip():
    m = scenario("coin-flip-counterexample").model
    for a, y in itertools.product((0, 1), repeat=2):
        d = crossworld_sample(m, {"A": a, "Y": y}, [{"A": 0}, {"A": 1}], 50, 0)
        assert np.all(d.column(f"Y@{a}") == y)
        assert np.all(d.column(f"Y@{1 - a}") == 1 - y)
        assert "U_Y" in d.columns and "U_Y@0" not in d.columns


# ------------------------------------------------------------------ path-specific

TRIANGLE = """\
model triangle
background U_A ~ bernoulli(0.5)
background U_M ~ bernoulli(0.3)
background U_Y ~ bernoulli(0.6)
discrete A in {0, 1}
var A = U_A
discrete M in {0, 1}
var M = if A == 1 then 1 - U_M else U_M
discrete Y in {0, 1}
var Y = if M == 1 then (if A == 1 then 1 else U_Y) else (if A == 1 then U_Y else 0)
"""

F = {
    "M": lambda p, u: 1 - u["U_M"] if p["A"] == 1 else u["U_M"],
    "Y": lambda p, u: (1 if p["A"] == 1 else u["U_Y"]) if p["M"] == 1 else (u["U_Y"] if p["A"] == 1 else 0),
}
PARENTS = {"M": ["A"], "Y": ["A", "M"]}


def _base(v, u, a):
    # value of v under do(A = a), by recursion on the equations
    if v == "A":
        return a
    return F[v]({p: _base(p, u, a) for p in PARENTS[v]}, u)


def _nested(v, u, a, a2, active):
    # nested counterfactual: active edges carry the modified value, others the baseline one
    if v == "A":
        return a2
    inputs = {p: _nested(p, u, a, a2, active) if (p, v) in active else _base(p, u, a) for p in PARENTS[v]}
    return F[v](inputs, u)


def test_path_specific_matches_nested_recursion_over_all_edge_subsets():
    m = parse_model(TRIANGLE)
    edges = [("A", "M"), ("A", "Y"), ("M", "Y")]
    states, _ = enumerate_background(m)
    checked = 0
    for r in range(len(edges) + 1):
        for subset in itertools.combinations(edges, r):
            active = EdgeSet(subset)
            for i in range(len(states["U_A"])):
                u = {k: float(v[i]) for k, v in states.items()}
                for a, a2 in itertools.product((0, 1), repeat=2):
                    got = path_specific_eval(m, u, "A", a, a2, active)
                    for v in ("M", "Y"):
                        assert got[v] == _nested(v, u, a, a2, set(subset)), (subset, u, a, a2, v)
                    checked += 1
    assert checked == 8 * 8 * 4


def test_empty_and_full_edge_sets():
    m = parse_model(TRIANGLE)
    states, _ = enumerate_background(m)
    full = all_downstream_edges(m, "A")
    assert ("A", "Yhat") in full
    for i in range(len(states["U_A"])):
        u = {k: float(v[i]) for k, v in states.items()}
        for a, a2 in itertools.product((0, 1), repeat=2):
            none = path_specific_eval(m, u, "A", a, a2, EdgeSet())
            base = evaluate_unit(intervene(m, {"A": a}), u)
            assert none["M"] == base["M"] and none["Y"] == base["Y"]
            all_ = path_specific_eval(m, u, "A", a, a2, full)
            cf = evaluate_unit(intervene(m, {"A": a2}), u)
            assert all_["M"] == cf["M"] and all_["Y"] == cf["Y"]


def test_edge_set_validation():
    m = scenario("fig2-path-specific").model
    EdgeSet(["A->X1", "X2->X1", "A->Yhat"]).validate(m, "A")
    with pytest.raises(ValueError, match="not in the model graph"):
        EdgeSet(["A->Y"]).validate(m, "A")
    with pytest.raises(ValueError, match="does not originate"):
        EdgeSet(["U_X1->X1"]).validate(m, "A")
    with pytest.raises(ValueError, match="bad edge"):
        EdgeSet(["A-X1"])
    assert str(EdgeSet(["X2->X1", "A->X1"])) == "A->X1, X2->X1"
