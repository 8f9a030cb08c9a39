"""
Coefficient expressions: parsing, printing, binding and vectorized evaluation.

Grammar::

    expr   := term (("+"|"-") term)*
    term   := factor (("*"|"/") factor)*
    factor := "-"? atom ("^" number)?
    atom   := number | "t" | "x" digits | ident "(" expr ")" | "(" expr ")"
"""
import logging
import math
from functools import lru_cache
from typing import Callable, Iterable, Set, Union

import numpy as np
import pyparsing as pp

from core.exceptions import BindingError, ExprDomainError, ExprSyntaxError, UnknownSymbolError
from models.expression import (
    FUNCTIONS, BinOp, Call, Expr, Lit, Neg, Pow, StateVar, TimeVar
)

logger = logging.getLogger(__name__)

pp.ParserElement.enable_packrat()

ArrayLike = Union[float, np.ndarray]
Compiled = Callable[[ArrayLike, np.ndarray], ArrayLike]


def _build_grammar() -> pp.ParserElement:
    number = pp.Regex(r"(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?")
    lpar, rpar = pp.Suppress("("), pp.Suppress(")")
    ident = pp.Regex(r"[A-Za-z_][A-Za-z_0-9]*")

    def finite(s, loc, toks):
        value = float(toks[0])
        if not math.isfinite(value):
            raise ExprSyntaxError(f"number '{toks[0]}' is out of range", loc, s)
        return value

    literal = number.copy().set_parse_action(lambda s, loc, toks: Lit(finite(s, loc, toks)))
    time_var = pp.Keyword("t").set_parse_action(lambda: TimeVar())
    state_var = pp.Regex(r"x\d+(?![A-Za-z_0-9])").set_parse_action(
        lambda toks: StateVar(int(toks[0][1:]))
    )

    expr = pp.Forward()

    def build_call(s, loc, toks):
        name, arg = toks[0], toks[1]
        if name not in FUNCTIONS:
            raise UnknownSymbolError("function", name, loc, s)
        return Call(name, arg)

    def reject_identifier(s, loc, toks):
        raise UnknownSymbolError("identifier", toks[0], loc, s)

    call = (ident + lpar + expr + rpar).set_parse_action(build_call)
    bare = (ident + ~pp.FollowedBy("(")).set_parse_action(reject_identifier)
    atom = literal | state_var | time_var | call | (lpar + expr + rpar) | bare

    exponent = number.copy().set_parse_action(finite)

    def build_factor(toks):
        items = list(toks)
        negate = isinstance(items[0], str) and items[0] == "-"
        if negate:
            items = items[1:]
        node = items[0]
        if len(items) == 2:
            node = Pow(node, items[1])
        return Neg(node) if negate else node

    factor = (pp.Optional(pp.Literal("-")) + atom + pp.Optional(pp.Suppress("^") + exponent))
    factor.set_parse_action(build_factor)

    def fold_left(toks):
        items = list(toks)
        node = items[0]
        for op, rhs in zip(items[1::2], items[2::2]):
            node = BinOp(op, node, rhs)
        return node

    term = (factor + pp.ZeroOrMore(pp.one_of("* /") + factor)).set_parse_action(fold_left)
    expr <<= (term + pp.ZeroOrMore(pp.one_of("+ -") + term)).set_parse_action(fold_left)
    return expr


_GRAMMAR = _build_grammar()


@lru_cache(maxsize=1024)
def parse(source: str) -> Expr:
    """Parse an expression; raises ExprSyntaxError with the byte offset on failure."""
    if not source or not source.strip():
        raise ExprSyntaxError("empty expression", 0, source or "")
    try:
        return _GRAMMAR.parse_string(source, parse_all=True)[0]
    except pp.ParseBaseException as e:
        raise ExprSyntaxError("syntax error", e.loc, source) from None


def _wrap(e: Expr) -> str:
    return f"({to_source(e)})"


def to_source(e: Expr) -> str:
    """Pretty-print with the minimal parentheses the grammar needs."""
    if isinstance(e, Lit):
        return repr(float(e.value))
    if isinstance(e, TimeVar):
        return "t"
    if isinstance(e, StateVar):
        return f"x{e.index}"
    if isinstance(e, Call):
        return f"{e.func}({to_source(e.arg)})"
    if isinstance(e, Neg):
        inner = e.operand
        return "-" + (_wrap(inner) if isinstance(inner, (BinOp, Neg)) else to_source(inner))
    if isinstance(e, Pow):
        base = e.base
        text = to_source(base) if isinstance(base, (Lit, TimeVar, StateVar, Call)) else _wrap(base)
        return f"{text}^{repr(float(e.exponent))}"
    if isinstance(e, BinOp):
        left = to_source(e.left)
        if e.op in "*/" and isinstance(e.left, BinOp) and e.left.op in "+-":
            left = _wrap(e.left)
        right = to_source(e.right)
        if isinstance(e.right, BinOp) and (e.op in "*/" or e.right.op in "+-"):
            right = _wrap(e.right)
        return f"{left} {e.op} {right}"
    raise TypeError(f"not an expression node: {e!r}")


def state_indices(e: Expr) -> Set[int]:
    if isinstance(e, StateVar):
        return {e.index}
    if isinstance(e, (Lit, TimeVar)):
        return set()
    if isinstance(e, (Neg,)):
        return state_indices(e.operand)
    if isinstance(e, Pow):
        return state_indices(e.base)
    if isinstance(e, Call):
        return state_indices(e.arg)
    return state_indices(e.left) | state_indices(e.right)


def depends_on_time(e: Expr) -> bool:
    if isinstance(e, TimeVar):
        return True
    if isinstance(e, (Lit, StateVar)):
        return False
    if isinstance(e, Neg):
        return depends_on_time(e.operand)
    if isinstance(e, Pow):
        return depends_on_time(e.base)
    if isinstance(e, Call):
        return depends_on_time(e.arg)
    return depends_on_time(e.left) or depends_on_time(e.right)


def is_zero(e: Expr) -> bool:
    return isinstance(e, Lit) and e.value == 0.0


def bind(e: Expr, n: int) -> Expr:
    """Check that every state variable index lies in 1..n."""
    bad = sorted(k for k in state_indices(e) if not 1 <= k <= n)
    if bad:
        raise BindingError(
            f"state variable x{bad[0]} out of range for dimension {n}",
            details={"indices": bad, "n": n, "source": to_source(e)}
        )
    return e


def _domain(cond, message: str):
    if np.any(cond):
        raise ExprDomainError(message)


def _sign(v):
    return np.sign(v)


def _checked_log(v):
    _domain(np.asarray(v) <= 0, "log of non-positive argument")
    return np.log(v)


def _checked_sqrt(v):
    _domain(np.asarray(v) < 0, "sqrt of negative argument")
    return np.sqrt(v)


_UNARY = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": _checked_log,
    "sqrt": _checked_sqrt,
    "abs": np.abs,
    "tanh": np.tanh,
    "sign": _sign,
}


def compile_expr(e: Expr) -> Compiled:
    """Turn an AST into a closure f(t, x) with x of shape (n, ...) broadcasting against t."""
    if isinstance(e, Lit):
        value = float(e.value)
        return lambda t, x: value
    if isinstance(e, TimeVar):
        return lambda t, x: t
    if isinstance(e, StateVar):
        k = e.index - 1
        return lambda t, x: x[k]
    if isinstance(e, Neg):
        inner = compile_expr(e.operand)
        return lambda t, x: -inner(t, x)
    if isinstance(e, Pow):
        base = compile_expr(e.base)
        p = float(e.exponent)

        def power(t, x):
            b = base(t, x)
            with np.errstate(all="ignore"):
                r = np.power(b, p)
            _domain(np.isnan(r) & ~np.isnan(b), "fractional power of negative base")
            _domain(np.isinf(r) & np.isfinite(b), "power of zero with negative exponent")
            return r
        return power
    if isinstance(e, Call):
        fn = _UNARY[e.func]
        arg = compile_expr(e.arg)
        return lambda t, x: fn(arg(t, x))
    if isinstance(e, BinOp):
        left, right = compile_expr(e.left), compile_expr(e.right)
        if e.op == "+":
            return lambda t, x: left(t, x) + right(t, x)
        if e.op == "-":
            return lambda t, x: left(t, x) - right(t, x)
        if e.op == "*":
            return lambda t, x: left(t, x) * right(t, x)

        def divide(t, x):
            den = right(t, x)
            _domain(np.asarray(den) == 0, "division by zero")
            return left(t, x) / den
        return divide
    raise TypeError(f"not an expression node: {e!r}")


def evaluate(e: Expr, t: ArrayLike, x: Iterable = ()) -> ArrayLike:
    """Evaluate at time t and state x; scalars in, float out."""
    xs = np.asarray(x, dtype=float)
    with np.errstate(all="ignore"):
        value = compile_expr(e)(t, xs)
    value = np.asarray(value, dtype=float)
    _domain(np.isnan(value), "evaluation produced NaN")
    if value.ndim == 0:
        return float(value)
    return value


def compile_checked(e: Expr) -> Compiled:
    """Compiled closure that refuses NaN results and broadcasts constants."""
    inner = compile_expr(e)

    def run(t, x):
        with np.errstate(all="ignore"):
            value = inner(t, x)
        value = np.asarray(value, dtype=float)
        _domain(np.isnan(value), f"evaluation of '{to_source(e)}' produced NaN")
        return value
    return run
