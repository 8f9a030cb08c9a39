"""Parsing, printing, binding and evaluation of coefficient expressions."""
import math

import numpy as np
import pytest
from hypothesis import given, settings as hyp_settings, strategies as st

from core.exceptions import BindingError, ExprDomainError, ExprSyntaxError, UnknownSymbolError
from models.expression import FUNCTIONS, BinOp, Call, Lit, Neg, Pow, StateVar, TimeVar
from services.expr import bind, depends_on_time, evaluate, parse, state_indices, to_source


def test_unary_minus_binds_to_literal():
    assert parse("-1") == Neg(Lit(1.0))


def test_product_binds_tighter_than_sum():
    tree = parse("sin(t)*x1 + 2")
    assert tree == BinOp("+", BinOp("*", Call("sin", TimeVar()), StateVar(1)), Lit(2.0))


def test_left_associative_subtraction():
    assert parse("x1 - x2 - 3") == BinOp("-", BinOp("-", StateVar(1), StateVar(2)), Lit(3.0))


def test_power_of_state_variable():
    assert parse("x2^3") == Pow(StateVar(2), 3.0)


def test_syntax_error_reports_offset():
    with pytest.raises(ExprSyntaxError) as info:
        parse("exp(")
    assert info.value.offset == 4


def test_empty_source_is_syntax_error():
    with pytest.raises(ExprSyntaxError):
        parse("   ")


@pytest.mark.parametrize("source", ["foo(t)", "y + 1", "x1 * bar"])
def test_unknown_symbols(source):
    with pytest.raises(UnknownSymbolError):
        parse(source)


@pytest.mark.parametrize("source, offset", [("1e999", 0), ("t + 2e400", 4), ("x1^1e999", 3)])
def test_out_of_range_number_is_syntax_error(source, offset):
    with pytest.raises(ExprSyntaxError) as info:
        parse(source)
    assert info.value.offset == offset


def test_evaluate_product():
    assert evaluate(parse("t*x1"), 2.0, [3.0]) == 6.0


def test_sign_of_zero():
    assert evaluate(parse("sign(t)"), 0.0) == 0.0


def test_division_by_zero_is_domain_error():
    with pytest.raises(ExprDomainError):
        evaluate(parse("1/(t-1)"), 1.0)


@pytest.mark.parametrize("source, t", [("log(t)", -1.0), ("sqrt(t)", -4.0), ("t^0.5", -2.0)])
def test_domain_errors(source, t):
    with pytest.raises(ExprDomainError):
        evaluate(parse(source), t)


def test_evaluate_broadcasts_over_time_grid():
    ts = np.linspace(0.0, 1.0, 5)
    np.testing.assert_allclose(evaluate(parse("exp(-t)"), ts), np.exp(-ts))


def test_bind_rejects_out_of_range_index():
    e = parse("x1 + x3")
    assert state_indices(e) == {1, 3}
    with pytest.raises(BindingError):
        bind(e, 2)
    assert bind(e, 3) is e


def test_time_dependence():
    assert depends_on_time(parse("1 + 0.1*t*sin(t)"))
    assert not depends_on_time(parse("-1"))


# -- round trip ------------------------------------------------------------------

literals = st.floats(min_value=0.0, max_value=1e6, allow_nan=False, allow_infinity=False).map(Lit)
leaves = st.one_of(literals, st.just(TimeVar()), st.integers(min_value=1, max_value=9).map(StateVar))


def _extend(children):
    return st.one_of(
        children.map(Neg),
        st.tuples(st.sampled_from("+-*/"), children, children).map(lambda a: BinOp(*a)),
        st.tuples(children, st.floats(min_value=0.0, max_value=8.0, allow_nan=False)).map(lambda a: Pow(*a)),
        st.tuples(st.sampled_from(FUNCTIONS), children).map(lambda a: Call(*a)),
    )


expressions = st.recursive(leaves, _extend, max_leaves=12)


@given(expressions)
@hyp_settings(max_examples=300, deadline=None)
def test_printed_source_parses_back(e):
    assert parse(to_source(e)) == e


@given(st.floats(min_value=-5, max_value=5), st.floats(min_value=-5, max_value=5))
def test_evaluation_matches_numpy(t, x1):
    value = evaluate(parse("sin(t)*x1 + exp(-abs(t))"), t, [x1])
    assert math.isclose(value, math.sin(t) * x1 + math.exp(-abs(t)), rel_tol=1e-12, abs_tol=1e-12)
