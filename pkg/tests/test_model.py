import io
import itertools

import numpy as np
import pytest

from conftest import random_discrete_scm
from fairscm import rng
from fairscm.dsl import parse_model
from fairscm.model import (Dataset, DataError, InterventionError, ancestors, descendants, drop_variable,
                           enumerate_background, evaluate_unit, exact_distribution, intervene, sample,
                           support, topological_order)
from fairscm.scenarios import scenario


def _chain(order):
    lines = ["model chain", "background U ~ normal(0, 1)"]
    for i, v in enumerate(order):
        parent = "U" if v == "V0" else f"V{int(v[1:]) - 1}"
        lines.append(f"var {v} = {parent} + 1")
    return parse_model("\n".join(lines) + "\n")


def _dfs_order(parents: dict[str, list[str]]) -> list[str]:
    # oracle: post-order depth-first search
    out, seen = [], set()

    def visit(v):
        if v in seen:
            return
        seen.add(v)
        for p in parents[v]:
            visit(p)
        out.append(v)

    for v in parents:
        visit(v)
    return out


def test_topological_order_on_scrambled_chain():
    names = [f"V{i}" for i in range(8)]
    rs = np.random.default_rng(3)
    scrambled = list(rs.permutation(names))
    m = _chain(scrambled)
    order = [v for v in topological_order(m) if v in names]
    assert order == names
    oracle = [v for v in _dfs_order({v: m.parents(v) for v in m.names}) if v in names]
    assert order == oracle


def test_order_respects_edges_on_random_models():
    rs = np.random.default_rng(5)
    for k in range(20):
        m = parse_model(random_discrete_scm(rs, f"m{k}")[0])
        pos = {v: i for i, v in enumerate(topological_order(m))}
        assert all(pos[p] < pos[c] for p, c in m.edges)


def test_descendants_and_ancestors():
    m = scenario("fig2-path-specific").model
    assert descendants(m, "A") == {"X1", "X2", "Y"}
    assert descendants(m, "X1") == {"Y"}
    assert ancestors(m, "X1") == {"A", "X2", "U_A", "U_X1", "U_X2"}


def test_sampling_is_row_addressable():
    m = scenario("three-var-gaussian").model
    full = sample(m, 1000, 11)
    a = sample(m, 400, 11, start=0)
    b = sample(m, 600, 11, start=400)
    for v in m.names:
        np.testing.assert_array_equal(full.column(v), np.concatenate([a.column(v), b.column(v)]))
    other = sample(m, 1000, 12)
    assert not np.array_equal(full.column("Y"), other.column("Y"))


def test_bernoulli_proportion():
    m = parse_model("model b\nbackground U ~ bernoulli(0.5)\ndiscrete X in {0, 1}\nvar X = U\n")
    p = sample(m, 100_000, 0).column("X").mean()
    assert 0.49 <= p <= 0.51


def test_gaussian_mean_within_three_se():
    m = scenario("three-var-gaussian").model
    y = sample(m, 100_000, 1).column("Y")
    # Var(Y) = Var(1.2 A + 0.5 Z + U_Y) with A = 0.8 Z + U_A
    var = (1.2 * 0.8 + 0.5) ** 2 + 1.2 ** 2 + 1
    assert abs(y.mean()) <= 3 * np.sqrt(var / len(y))
    assert abs(y.var() - var) < 0.05 * var


def test_categorical_frequencies():
    m = parse_model("model c\nbackground U ~ categorical(0.2, 0.5, 0.3)\nvar X = U\n")
    x = sample(m, 100_000, 2).column("X")
    freq = np.bincount(x.astype(int), minlength=3) / len(x)
    se = np.sqrt(np.array([0.2, 0.5, 0.3]) * 0.8 / len(x))
    assert np.all(np.abs(freq - [0.2, 0.5, 0.3]) <= 4 * se)


def test_truncated_factorisation_by_hand():
    m = scenario("selection-bias-ii").model
    table = exact_distribution(intervene(m, {"Selected": 1}), ["Race", "Drugs", "Selected"])
    # oracle: under do(Selected=1), Race and Drugs keep their own factors
    for r, d in itertools.product((0, 1), repeat=2):
        p_d = 0.3 * 0.8 + 0.7 * 0.1
        want = 0.5 * (p_d if d else 1 - p_d)
        assert table[(r, d, 1)] == pytest.approx(want, abs=1e-12)
    assert sum(table.values()) == pytest.approx(1.0, abs=1e-12)


def test_exact_distribution_matches_random_oracle():
    rs = np.random.default_rng(8)
    for k in range(10):
        src, oracle = random_discrete_scm(rs, f"m{k}")
        m = parse_model(src)
        want = oracle({})
        got = exact_distribution(m, m.observed)
        for key in itertools.product((0, 1), repeat=len(m.observed)):
            assert got.get(tuple(float(x) for x in key), 0.0) == pytest.approx(want.get(key, 0.0), abs=1e-12)


def test_intervene_is_pure_and_checked():
    m = scenario("coin-flip-counterexample").model
    mm = intervene(m, {"A": 1})
    assert m.equations["A"] != mm.equations["A"]
    assert exact_distribution(mm, ["A"]) == {(1.0,): 1.0}
    with pytest.raises(InterventionError, match="outside domain"):
        intervene(m, {"A": 2})
    with pytest.raises(InterventionError, match="background"):
        intervene(m, {"U_A": 1})
    with pytest.raises(InterventionError, match="unknown"):
        intervene(m, {"Q": 1})


def test_drop_variable_removes_descendants_and_unused_noise():
    m = scenario("fig2-path-specific").model
    r = drop_variable(m, "X1")
    assert r.observed == ["A", "X2"]
    assert "U_X1" not in r.names and "U_Y" not in r.names


def test_support():
    m = scenario("berkeley").model
    assert support(m, "D") == tuple(float(i) for i in range(6))
    assert support(m, "U_DW") == tuple(float(i) for i in range(6))
    assert support(scenario("chain-axy").model, "X") is None


def test_enumerate_background_masses():
    m = scenario("twin-nonidentifiable").model
    states, probs = enumerate_background(m)
    assert len(probs) == 20
    assert probs.sum() == pytest.approx(1.0)


def test_evaluate_unit():
    m = scenario("fig2-path-specific").model
    u = evaluate_unit(m, {"U_A": 1, "U_X2": 0.5, "U_X1": -1, "U_Y": 0})
    assert u["X2"] == pytest.approx(1.3)
    assert u["X1"] == pytest.approx(1 + 0.65 - 1)
    assert u["Y"] == pytest.approx(u["X1"] + 0.7 * 1.3)


def test_dataset_csv_round_trip():
    m = scenario("berkeley").model
    d = sample(m, 50, 0)
    text = d.to_csv()
    assert text.splitlines()[0] == ",".join(m.names)
    back = Dataset.from_csv(io.StringIO(text), m)
    for v in m.names:
        np.testing.assert_array_equal(back.column(v), d.column(v))


def test_dataset_csv_labels_and_errors():
    m = scenario("berkeley").model
    back = Dataset.from_csv(io.StringIO("A,D,Y\nmale,dept_b,admit\nfemale,0,0\n"), m)
    assert back.column("A").tolist() == [1.0, 0.0]
    assert back.column("D").tolist() == [1.0, 0.0]
    with pytest.raises(DataError):
        Dataset.from_csv(io.StringIO("A,Y\nmaybe,1\n"), m)
    with pytest.raises(DataError):
        Dataset.from_csv(io.StringIO("A,Y\n1\n"), m)


# --------------------------------------------------------------------------- rng


def test_rng_chunk_independence():
    rows = np.arange(0, 10_000, dtype=np.uint64)
    whole = rng.uniform(4, "s", rows)
    parts = np.concatenate([rng.uniform(4, "s", rows[i:i + 1000]) for i in range(0, 10_000, 1000)])
    np.testing.assert_array_equal(whole, parts)
    assert not np.array_equal(whole, rng.uniform(4, "t", rows))
    assert not np.array_equal(whole, rng.uniform(5, "s", rows))
    assert not np.array_equal(whole, rng.uniform(4, "s", rows, 1))


def test_rng_uniform_and_normal_moments():
    rows = np.arange(200_000, dtype=np.uint64)
    u = rng.uniform(0, "m", rows)
    assert u.min() >= 0 and u.max() < 1
    assert abs(u.mean() - 0.5) < 4 * np.sqrt(1 / 12 / len(u))
    z = rng.normal(0, "m", rows)
    assert abs(z.mean()) < 4 / np.sqrt(len(z))
    assert abs(z.std() - 1) < 0.01
