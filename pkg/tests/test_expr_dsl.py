import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fairscm.dsl import ParseError, format_model, parse_model, parse_models
from fairscm.expr import (Binary, EvaluationError, ExprSyntaxError, If, Num, Unary, Var, evaluate,
                          format_expr, parse_expression, references)
from fairscm.model import ModelError
from fairscm.scenarios import names, scenario

# ------------------------------------------------------------------ expressions


def ev(text, **env):
    n = 1
    return float(evaluate(parse_expression(text), {k: np.array([float(v)]) for k, v in env.items()}, n)[0])


@pytest.mark.parametrize("text,value", [
    ("1 + 2 * 3", 7), ("(1 + 2) * 3", 9), ("10 - 4 - 3", 3), ("8 / 4 / 2", 1),
    ("-2 * 3", -6), ("--2", 2), ("1 < 2", 1), ("2 <= 1", 0), ("1 == 1 and 0", 0),
    ("0 or 3 > 2", 1), ("not 0", 1), ("if 1 then 5 else 6", 5), ("if 0 then 5 else if 1 then 7 else 8", 7),
    ("1e-3 * 1000", 1),
])
def test_arithmetic_and_precedence(text, value):
    assert ev(text) == value


def test_variables_and_references():
    e = parse_expression("if A == 1 then 0.5 * X + U else Z")
    assert references(e) == frozenset({"A", "X", "U", "Z"})
    assert ev("0.5 * X + U", X=2, U=1) == 2.0


def test_comparisons_do_not_chain():
    with pytest.raises(ExprSyntaxError, match="do not chain"):
        parse_expression("1 < 2 < 3")


@pytest.mark.parametrize("text", ["1 +", "(1 + 2", "if 1 then 2", "1 $ 2", "* 3"])
def test_syntax_errors_carry_positions(text):
    with pytest.raises(ExprSyntaxError) as info:
        parse_expression(text)
    assert "column" in str(info.value)


def test_division_by_zero_only_on_taken_branch():
    x = np.array([0.0, 2.0])
    out = evaluate(parse_expression("if X == 0 then 0 else 1 / X"), {"X": x}, 2)
    assert out.tolist() == [0.0, 0.5]
    with pytest.raises(EvaluationError):
        evaluate(parse_expression("1 / X"), {"X": x}, 2)


def test_vectorised_matches_scalar_loop():
    e = parse_expression("if A > 0 and B < 1 then A * B - 2 else -A")
    rs = np.random.default_rng(0)
    a, b = rs.normal(size=50), rs.normal(size=50)
    vec = evaluate(e, {"A": a, "B": b}, 50)
    loop = [(ai * bi - 2) if (ai > 0 and bi < 1) else -ai for ai, bi in zip(a, b)]
    np.testing.assert_array_equal(vec, loop)


names_st = st.sampled_from(["A", "B", "X1", "U_y"])
leaf = st.one_of(st.integers(-5, 5).map(lambda v: Num(float(v))),
                 st.floats(0.01, 100, allow_nan=False).map(lambda v: Num(round(v, 3))),
                 names_st.map(Var))


def _extend(children):
    ops = st.sampled_from(["+", "-", "*", "/", "==", "!=", "<", "<=", ">", ">=", "and", "or"])
    return st.one_of(
        st.builds(Binary, ops, children, children),
        st.builds(Unary, st.sampled_from(["-", "not"]), children),
        st.builds(If, children, children, children),
    )


exprs = st.recursive(leaf, _extend, max_leaves=12)


def _canon(e):
    # the parser folds a minus sign into a numeric literal
    if isinstance(e, Unary):
        inner = _canon(e.operand)
        if e.op == "-" and isinstance(inner, Num):
            return Num(-inner.value)
        return Unary(e.op, inner)
    if isinstance(e, Binary):
        return Binary(e.op, _canon(e.left), _canon(e.right))
    if isinstance(e, If):
        return If(_canon(e.cond), _canon(e.then), _canon(e.orelse))
    return e


@settings(max_examples=300, deadline=None)
@given(exprs)
def test_format_parse_round_trip(e):
    e = _canon(e)
    assert parse_expression(format_expr(e)) == e


# ------------------------------------------------------------------------ models

SMALL = """\
# a comment
model small
background U_A ~ bernoulli(0.3)
background U_Y ~ normal(0, 2)
discrete A in {no=0, yes=1}
var A = U_A
var Y = if A == yes then 1 + U_Y else U_Y   # trailing comment
protected A
outcome Y
"""


def test_parse_small_model():
    m = parse_model(SMALL)
    assert m.name == "small"
    assert m.observed == ["A", "Y"] and m.background == ["U_A", "U_Y"]
    assert m.protected == "A" and m.outcome == "Y" and m.prediction is None
    assert m.decl("A").code("yes") == 1
    assert m.noise["U_Y"].params == (0.0, 2.0)
    assert set(m.edges) == {("U_A", "A"), ("A", "Y"), ("U_Y", "Y")}


@pytest.mark.parametrize("name", names())
def test_registry_round_trip(name):
    for m in scenario(name).models:
        text = format_model(m)
        again = parse_model(text)
        assert again == m
        assert format_model(again) == text


def test_multiple_models():
    ms = parse_models(SMALL + "\n" + SMALL.replace("model small", "model other"))
    assert [m.name for m in ms] == ["small", "other"]
    with pytest.raises(ParseError, match="more than one model"):
        parse_model(SMALL + SMALL)


@pytest.mark.parametrize("text,needle", [
    ("model m\nbackground U ~ gamma(1)\n", "unknown noise family"),
    ("model m\nbackground U ~ normal(0)\n", ""),
    ("model m\nvar X = \n", ""),
    ("model m\nvar X = Y\n", "undeclared"),
    ("model m\nbackground U ~ normal(0, 1)\nvar A = Y + U\nvar Y = A\n", "cycle"),
    ("model m\nbackground U ~ bernoulli(1.5)\nvar X = U\n", ""),
    ("model m\nbackground U ~ normal(0, 1)\nvar X = U\nvar X = U\n", ""),
    ("model m\nbackground U ~ normal(0, 1)\nvar X = U\nprotected U\n", ""),
    ("model m\nbackground U ~ normal(0, 1)\nfrobnicate X\n", ""),
])
def test_model_errors(text, needle):
    with pytest.raises(ModelError) as info:
        parse_model(text)
    assert needle in str(info.value)


def test_cycle_error_location():
    text = "model m\nbackground U ~ normal(0, 1)\nvar A = Y + U\nvar Y = A\n"
    with pytest.raises(ParseError) as info:
        parse_model(text)
    assert "cycle detected" in str(info.value)
    assert info.value.line is not None


def test_expression_error_reports_line_and_column():
    with pytest.raises(ParseError) as info:
        parse_model("model m\nbackground U ~ normal(0, 1)\nvar X = U +\n")
    assert info.value.line == 3
