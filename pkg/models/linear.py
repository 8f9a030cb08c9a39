"""Linear nonautonomous system x' = A(t)x with an anchor projection at t = 0."""
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np

from models.expression import Expr

MatrixFn = Callable[[float], np.ndarray]


@dataclass(frozen=True)
class LinearSystem:
    n: int
    matrix_fn: MatrixFn = field(compare=False)
    pi0: np.ndarray = field(compare=False)
    label: str = "linear"
    constant: Optional[np.ndarray] = field(default=None, compare=False)
    entries: Optional[Tuple[Tuple[Expr, ...], ...]] = field(default=None, compare=False)

    @property
    def is_constant(self) -> bool:
        return self.constant is not None

    def matrix(self, t: float) -> np.ndarray:
        if self.constant is not None:
            return self.constant
        return self.matrix_fn(t)

    @property
    def stable_rank(self) -> int:
        return int(round(np.trace(self.pi0)))

    @property
    def unstable_rank(self) -> int:
        return self.n - self.stable_rank
