"""Perturbation f(t, x) of the linear system."""
from dataclasses import dataclass, field
from typing import Callable, Tuple

import numpy as np

from models.expression import Expr, Lit


@dataclass(frozen=True)
class Perturbation:
    n: int
    components: Tuple[Expr, ...]
    delta_f: float
    theta: float
    label: str = "f"
    compiled: Tuple[Callable, ...] = field(default=(), compare=False, repr=False)

    @property
    def is_zero(self) -> bool:
        return all(isinstance(c, Lit) and c.value == 0.0 for c in self.components)

    def __call__(self, t, x) -> np.ndarray:
        """f(t, x) for x of shape (n,) or (n, m); t scalar or broadcastable to (m,)."""
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        if self.is_zero:
            return out
        for k, fn in enumerate(self.compiled):
            out[k] = fn(t, x)
        return out
