import itertools

import numpy as np
import pytest

from fairscm.counterfactual import EdgeSet
from fairscm.metrics import (IndividualFairnessConfig, MetricError, calibration_gap, counterfactual_fairness_gap,
                             demographic_parity_gap, equalised_odds_gap, evidence_grid, individual_fairness_report,
                             interventional_gap, paired_tv, path_specific_cf_gap, tv_distance)
from fairscm.model import Dataset, sample
from fairscm.scenarios import noise_predictor, scenario


def table(a, yhat, y=None, **extra):
    cols = {"A": np.asarray(a, float), "P": np.asarray(yhat, float)}
    if y is not None:
        cols["Y"] = np.asarray(y, float)
    cols.update({k: np.asarray(v, float) for k, v in extra.items()})
    return Dataset.from_columns(list(cols), cols)


# ---------------------------------------------------------------- hand counts


def _rate(rows, event, given):
    # oracle: count matching rows one at a time
    num = den = 0
    for r in rows:
        if all(r[k] == v for k, v in given.items()):
            den += 1
            num += all(r[k] == v for k, v in event.items())
    return num / den


def _rows(d):
    return [dict(zip(d.columns, r)) for r in d.data]


def oracle_dp(d):
    rows = _rows(d)
    return max(abs(_rate(rows, {"P": y}, {"A": a}) - _rate(rows, {"P": y}, {"A": b}))
               for y in {r["P"] for r in rows} for a, b in itertools.combinations(sorted({r["A"] for r in rows}), 2))


def oracle_eo(d):
    rows = _rows(d)
    return max(abs(_rate(rows, {"P": y}, {"A": a, "Y": y}) - _rate(rows, {"P": y}, {"A": b, "Y": y}))
               for y in {r["Y"] for r in rows} for a, b in itertools.combinations(sorted({r["A"] for r in rows}), 2))


def oracle_cal(d):
    rows = _rows(d)
    return max(abs(_rate(rows, {"Y": y}, {"A": a, "P": y}) - _rate(rows, {"Y": y}, {"A": b, "P": y}))
               for y in {r["P"] for r in rows} for a, b in itertools.combinations(sorted({r["A"] for r in rows}), 2))


def test_demographic_parity_by_hand():
    d = table([0, 0, 0, 0, 1, 1, 1, 1], [1, 0, 0, 0, 1, 1, 1, 0])
    g = demographic_parity_gap(d, "P", "A")
    assert g.gap == pytest.approx(0.5)
    assert g.n == 8


@pytest.mark.parametrize("seed", range(5))
def test_group_gaps_match_double_loop(seed):
    rs = np.random.default_rng(seed)
    n = 400
    a = rs.integers(0, 3, n)
    y = (rs.random(n) < 0.3 + 0.2 * (a == 1)).astype(int)
    p = (rs.random(n) < 0.2 + 0.5 * y).astype(int)
    d = table(a, p, y)
    assert demographic_parity_gap(d, "P", "A").gap == pytest.approx(oracle_dp(d), abs=1e-12)
    assert equalised_odds_gap(d, "P", "A", "Y", min_count=0).gap == pytest.approx(oracle_eo(d), abs=1e-12)
    assert calibration_gap(d, "P", "A", "Y", min_count=0).gap == pytest.approx(oracle_cal(d), abs=1e-12)


def _expand(cells):
    # cells[(a, y, p)] = count
    a, y, p = [], [], []
    for (ai, yi, pi), c in cells.items():
        a += [ai] * c
        y += [yi] * c
        p += [pi] * c
    return table(a, p, y)


def _search(want_eo_zero: bool):
    # brute force over small cell counts for a table with one gap zero and the other positive
    for counts in itertools.product(range(1, 4), repeat=8):
        cells = dict(zip(itertools.product((0, 1), repeat=3), counts))
        d = _expand(cells)
        eo, cal = oracle_eo(d), oracle_cal(d)
        if want_eo_zero and eo == 0 and cal > 0:
            return d, eo, cal
        if not want_eo_zero and cal == 0 and eo > 0:
            return d, eo, cal
    raise AssertionError("no table found")


@pytest.mark.parametrize("want_eo_zero", [True, False])
def test_calibration_and_equalised_odds_disagree(want_eo_zero):
    d, eo, cal = _search(want_eo_zero)
    assert equalised_odds_gap(d, "P", "A", "Y", min_count=0).gap == pytest.approx(eo, abs=1e-12)
    assert calibration_gap(d, "P", "A", "Y", min_count=0).gap == pytest.approx(cal, abs=1e-12)


def test_gap_invariants():
    rs = np.random.default_rng(9)
    n = 300
    a = rs.integers(0, 2, n)
    y = rs.integers(0, 2, n)
    p = rs.integers(0, 2, n)
    base = [demographic_parity_gap(table(a, p, y), "P", "A").gap,
            equalised_odds_gap(table(a, p, y), "P", "A", "Y").gap,
            calibration_gap(table(a, p, y), "P", "A", "Y").gap]
    perm = rs.permutation(n)
    swapped = [demographic_parity_gap(table(1 - a, p, y), "P", "A").gap,
               equalised_odds_gap(table(1 - a, p, y), "P", "A", "Y").gap,
               calibration_gap(table(1 - a, p, y), "P", "A", "Y").gap]
    permuted = [demographic_parity_gap(table(a[perm], p[perm], y[perm]), "P", "A").gap,
                equalised_odds_gap(table(a[perm], p[perm], y[perm]), "P", "A", "Y").gap,
                calibration_gap(table(a[perm], p[perm], y[perm]), "P", "A", "Y").gap]
    assert all(0 <= g <= 1 for g in base)
    np.testing.assert_allclose(base, swapped, atol=1e-15)
    np.testing.assert_allclose(base, permuted, atol=1e-15)
    # a prediction independent of everything has zero gap when it is constant
    assert demographic_parity_gap(table(a, np.ones(n), y), "P", "A").gap == 0


def test_strata_and_min_count():
    # within each stratum the groups agree; pooled they do not
    a = [0] * 10 + [1] * 10
    s = [0] * 8 + [1] * 2 + [0] * 2 + [1] * 8
    p = [0] * 8 + [1] * 2 + [0] * 2 + [1] * 8
    d = table(a, p, S=s)
    assert demographic_parity_gap(d, "P", "A").gap == pytest.approx(0.6)
    assert demographic_parity_gap(d, "P", "A", strata=["S"]).gap == 0.0
    g = demographic_parity_gap(d, "P", "A", strata=["S"], min_count=2)
    assert g.gap == 0.0 and g.skipped == []
    with pytest.raises(MetricError, match="minimum count"):
        demographic_parity_gap(d, "P", "A", strata=["S"], min_count=3)


def test_equalised_odds_skips_thin_strata():
    a = [0] * 40 + [1] * 40
    y = [0] * 35 + [1] * 5 + [0] * 35 + [1] * 5
    p = [0] * 35 + [1] * 5 + [0] * 35 + [0] * 5
    g = equalised_odds_gap(table(a, p, y), "P", "A", "Y")
    assert g.skipped == ["Y=1"]
    assert g.gap == 0.0
    assert equalised_odds_gap(table(a, p, y), "P", "A", "Y", min_count=0).gap == 1.0


def test_laplace_smoothing():
    d = table([0, 0, 1, 1], [1, 1, 0, 0])
    g = demographic_parity_gap(d, "P", "A", alpha=1.0)
    # (2 + 1) / (2 + 2) against (0 + 1) / (2 + 2)
    assert g.gap == pytest.approx(0.5)


def test_non_finite_rejected():
    with pytest.raises(MetricError):
        demographic_parity_gap(table([0, 1], [np.nan, 1]), "P", "A")


# ----------------------------------------------------------- individual fairness


def test_individual_fairness_matches_double_loop():
    rs = np.random.default_rng(2)
    n = 120
    x = rs.normal(size=(n, 2)) * [1.0, 5.0]
    p = rs.random(n)
    d = Dataset.from_columns(["X1", "X2", "P"], {"X1": x[:, 0], "X2": x[:, 1], "P": p})
    cfg = IndividualFairnessConfig(("X1", "X2"), delta=0.3, epsilon=0.2)
    got = individual_fairness_report(d, "P", cfg)
    sd = x.std(axis=0)
    want = []
    for i in range(n):
        for j in range(i + 1, n):
            dist = np.sqrt((((x[i] - x[j]) / sd) ** 2).sum())
            div = abs(p[i] - p[j])
            if dist <= 0.3 and div > 0.2:
                want.append((i, j))
    assert sorted((v.i, v.j) for v in got) == want
    assert all(got[k].divergence >= got[k + 1].divergence for k in range(len(got) - 1))


def test_individual_fairness_row_limit():
    d = Dataset.from_columns(["X", "P"], {"X": np.zeros(20), "P": np.zeros(20)})
    with pytest.raises(MetricError, match="limit"):
        individual_fairness_report(d, "P", IndividualFairnessConfig(("X",), max_rows=10))


# ------------------------------------------------------------------- TV distance


def test_tv_distance_discrete():
    assert tv_distance(np.array([0, 0, 1, 1]), np.array([0, 1, 1, 1])) == pytest.approx(0.25)
    assert tv_distance(np.array([1.0, 2.0]), np.array([3.0, 4.0])) == 1.0
    assert tv_distance(np.array([0.1 + 0.2]), np.array([0.3])) == 0.0  # round-off is snapped


def test_tv_distance_continuous_bins():
    rs = np.random.default_rng(0)
    x = rs.normal(size=20_000)
    assert tv_distance(x, x + 1e-3) < 0.02
    assert tv_distance(x, x + 10) == 1.0


def test_paired_tv_standard_error():
    rs = np.random.default_rng(1)
    x = rs.integers(0, 2, 10_000)
    y = np.where(rs.random(10_000) < 0.1, 1 - x, x)
    tv, se = paired_tv(x, y)
    assert tv == pytest.approx(abs(x.mean() - y.mean()))
    # oracle: one category pair, SE of the mean paired indicator difference, counted twice and halved
    d = (x == 1).astype(float) - (y == 1).astype(float)
    assert se == pytest.approx(d.std(ddof=1) / np.sqrt(len(d)), rel=1e-12)


# ---------------------------------------------------------------- model audits


def test_coin_flip_counterfactual_gap_is_one():
    m = scenario("coin-flip-counterexample").model
    pts = [{"A": a, "Y": y} for a in (0, 1) for y in (0, 1)]
    r = counterfactual_fairness_gap(m, "Y", pts, 100, 0)
    assert r.max_gap == 1.0 and r.failed == 0 and len(r.points) == 4
    assert interventional_gap(m, "Y", 0, 1, 50_000, 0).gap < 0.02


def test_noise_predictor_is_fair_and_x_is_not():
    m = scenario("chain-axy").model
    pts = [{"A": a, "X": x} for a in (0, 1) for x in (-1.0, 0.5, 2.0)]
    assert counterfactual_fairness_gap(m, noise_predictor("U_X", "Y", "A"), pts, 300, 0).max_gap == 0.0
    assert counterfactual_fairness_gap(m, "X", pts, 300, 0).max_gap == 1.0


def test_evidence_point_checks():
    m = scenario("coin-flip-counterexample").model
    r = counterfactual_fairness_gap(m, "Y", [{"A": 1, "Y": 1}], 50, 0, levels=[0, 1])
    assert r.failed == 0
    with pytest.raises(MetricError, match="same variables"):
        counterfactual_fairness_gap(m, "Y", [{"A": 1, "Y": 1}, {"A": 0}], 50, 0)
    with pytest.raises(MetricError, match="protected"):
        counterfactual_fairness_gap(m, "Y", [{"Y": 1}], 50, 0)


def test_path_specific_gap_edges():
    m = scenario("fig2-path-specific").model
    pts = [{"A": a, "X1": 0.2, "X2": 0.4} for a in (0, 1)]
    assert path_specific_cf_gap(m, "X2", EdgeSet(["A->X1"]), pts, 200, 0).max_gap == 0.0
    assert path_specific_cf_gap(m, "X2", EdgeSet(["A->X2"]), pts, 200, 0).max_gap == 1.0
    assert path_specific_cf_gap(m, "X1", EdgeSet(), pts, 200, 0).max_gap == 0.0
    with pytest.raises(ValueError):
        path_specific_cf_gap(m, "X1", EdgeSet(["X1->X2"]), pts, 200, 0)


def test_audits_are_seed_deterministic():
    m = scenario("fig2-path-specific").model
    pts = [{"A": 1, "X1": 0.2, "X2": 0.4}]
    a = path_specific_cf_gap(m, "Y", EdgeSet(["A->X1"]), pts, 300, 5, levels=[0, 1])
    b = path_specific_cf_gap(m, "Y", EdgeSet(["A->X1"]), pts, 300, 5, levels=[0, 1])
    assert a.to_dict() == b.to_dict()


def test_evidence_grid():
    d = sample(scenario("berkeley").model, 2000, 0)
    grid = evidence_grid(d, ["A", "D"])
    assert len(grid) == 12
    assert evidence_grid(d, ["A", "D"], cap=5, seed=1) == evidence_grid(d, ["A", "D"], cap=5, seed=1)
    assert len(evidence_grid(d, ["A", "D"], cap=5)) == 5
