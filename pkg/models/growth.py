"""Growth rate value object."""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

ScalarFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class GrowthRate:
    """A strictly increasing positive μ with μ(0)=1 and its derivative.

    ``log_mu`` is optional; when given it is used for every power of μ so
    that exponents stay finite where μ itself would overflow.
    """
    mu: ScalarFn
    dmu: ScalarFn
    kind: str
    label: str
    log_mu: Optional[ScalarFn] = field(default=None, compare=False)

    def value(self, t):
        return self.mu(np.asarray(t, dtype=float))

    def deriv(self, t):
        return self.dmu(np.asarray(t, dtype=float))

    def log_value(self, t):
        t = np.asarray(t, dtype=float)
        if self.log_mu is not None:
            return self.log_mu(t)
        return np.log(self.mu(t))

    def log_rate(self, t):
        """μ'(t)/μ(t)."""
        t = np.asarray(t, dtype=float)
        return self.dmu(t) / self.mu(t)

    def ratio_power(self, t, s, exponent):
        """(μ(t)/μ(s))^exponent."""
        return np.exp(exponent * (self.log_value(t) - self.log_value(s)))

    def nonuniform_factor(self, s, exponent):
        """μ(s)^(sign(s)·exponent), which equals exp(exponent·|log μ(s)|)."""
        return np.exp(exponent * np.abs(self.log_value(s)))
