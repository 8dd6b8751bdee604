"""Small containers for Monte-Carlo estimates."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class EstimateSE:
    """A point estimate with its standard error and sample count."""

    value: float
    se: float
    n: int

    def as_dict(self) -> dict:
        return {"value": self.value, "se": self.se, "n": self.n}


def binomial_estimate(hits: int, n: int) -> EstimateSE:
    p = hits / n
    return EstimateSE(value=p, se=math.sqrt(max(p * (1.0 - p), 0.0) / n), n=n)


def mean_estimate(values) -> EstimateSE:
    import numpy as np

    arr = np.asarray(values, dtype=float)
    n = arr.size
    se = float(arr.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return EstimateSE(value=float(arr.mean()), se=se, n=n)
