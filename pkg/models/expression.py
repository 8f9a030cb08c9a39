"""Abstract syntax tree of coefficient expressions."""
from dataclasses import dataclass
from typing import Union

FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt", "abs", "tanh", "sign")


@dataclass(frozen=True)
class Lit:
    value: float


@dataclass(frozen=True)
class TimeVar:
    pass


@dataclass(frozen=True)
class StateVar:
    index: int  # 1-based


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * /
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: float


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Union[Lit, TimeVar, StateVar, Neg, BinOp, Pow, Call]


def Add(left: Expr, right: Expr) -> BinOp:
    return BinOp("+", left, right)


def Sub(left: Expr, right: Expr) -> BinOp:
    return BinOp("-", left, right)


def Mul(left: Expr, right: Expr) -> BinOp:
    return BinOp("*", left, right)


def Div(left: Expr, right: Expr) -> BinOp:
    return BinOp("/", left, right)
