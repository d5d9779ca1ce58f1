"""Monte Carlo estimate container with normal confidence intervals."""

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.stats import norm

from errors import NonFiniteResult

Number = Union[float, complex]


def normal_quantile(ci_level: float) -> float:
    """Two-sided standard normal quantile z with P(|Z| <= z) = ci_level."""
    if not (0.0 < ci_level < 1.0):
        raise ValueError(f"ci_level must be in (0, 1), got {ci_level}")
    return float(norm.ppf(0.5 + 0.5 * ci_level))


@dataclass(frozen=True)
class MCEstimate:
    """mean +/- z(ci_level) * std_error."""
    mean: Number
    std_error: float
    n: int
    ci_level: float
    ci_half_width: float

    @classmethod
    def build(cls, mean: Number, std_error: float, n: int, ci_level: float = 0.95) -> "MCEstimate":
        std_error = float(std_error)
        return cls(
            mean=mean,
            std_error=std_error,
            n=int(n),
            ci_level=float(ci_level),
            ci_half_width=normal_quantile(ci_level) * std_error,
        )

    @classmethod
    def from_samples(cls, values, ci_level: float = 0.95) -> "MCEstimate":
        """Sample mean with std_error = sample std / sqrt(n).

        Complex samples use the std of the complex deviation, which bounds
        the error of each component.
        """
        values = np.asarray(values)
        n = values.shape[0]
        if n < 1:
            raise ValueError("need at least one sample")
        if not np.all(np.isfinite(values)):
            raise NonFiniteResult("Monte Carlo samples contain NaN or infinity")
        if np.iscomplexobj(values):
            mean: Number = complex(values.mean())
            var = (values.real.var(ddof=1) + values.imag.var(ddof=1)) if n > 1 else 0.0
        else:
            mean = float(values.mean())
            var = values.var(ddof=1) if n > 1 else 0.0
        return cls.build(mean, math.sqrt(var / n), n, ci_level)

    def with_level(self, ci_level: float) -> "MCEstimate":
        return MCEstimate.build(self.mean, self.std_error, self.n, ci_level)

    @property
    def lower(self) -> float:
        return float(np.real(self.mean)) - self.ci_half_width

    @property
    def upper(self) -> float:
        return float(np.real(self.mean)) + self.ci_half_width

    def covers(self, value: Number, slack: float = 0.0) -> bool:
        return abs(self.mean - value) <= self.ci_half_width + slack
