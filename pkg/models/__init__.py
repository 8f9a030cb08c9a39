from models.expression import BinOp, Call, Expr, Lit, Neg, Pow, StateVar, TimeVar
from models.growth import GrowthRate
from models.linear import LinearSystem
from models.perturbation import Perturbation
