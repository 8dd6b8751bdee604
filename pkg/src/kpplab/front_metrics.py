"""Front position, level crossings, speeds, and logarithmic corrections."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy import stats

if TYPE_CHECKING:  # pragma: no cover
    from .spde_sim import FieldState, RunRecord

__all__ = [
    "FrontTrace",
    "SpeedEstimate",
    "EstimationError",
    "rightmost_support",
    "level_crossing",
    "estimate_speed",
    "bramson_fit",
    "default_burn_in",
]


class EstimationError(ValueError):
    """Not enough usable points (or too ill-conditioned) to fit."""


@dataclass(frozen=True)
class FrontTrace:
    """Absolute front positions over time; nan marks undefined m* entries."""

    times: np.ndarray
    r: np.ndarray
    m_star: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trace times must be strictly increasing")

    @classmethod
    def from_record(cls, record: "RunRecord") -> "FrontTrace":
        return cls(times=record.times, r=record.r, m_star=record.m_star)

    def csv_rows(self):
        for t, r, ms in zip(self.times, self.r, self.m_star):
            yield (float(t), float(r), float(ms))


@dataclass(frozen=True)
class SpeedEstimate:
    v_hat: float
    ci_half_width: float  # 95%
    t_window: tuple
    method: str = "ols-slope"

    def as_dict(self) -> dict:
        return {"v_hat": self.v_hat, "ci_half_width": self.ci_half_width,
                "t_window": list(self.t_window), "method": self.method}


def rightmost_support(state: "FieldState", tol: float = 0.0) -> float:
    """sup{x : u > tol} in absolute coordinates; -inf if u <= tol everywhere."""
    if tol < 0:
        raise ValueError("tol must be >= 0")
    nz = np.nonzero(state.u > tol)[0]
    if nz.size == 0:
        return float("-inf")
    return float(state.positions()[nz[-1]])


def level_crossing(state: "FieldState", level: float) -> float:
    """Largest x where the interpolated field crosses `level` from above.

    Front-most crossing: rear crossings induced by noise are ignored.
    Returns nan when the field never crosses.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0,1)")
    u = state.u
    above = np.nonzero(u > level)[0]
    if above.size == 0 or above[-1] + 1 >= u.shape[0]:
        return float("nan")
    i = int(above[-1])
    frac = (u[i] - level) / (u[i] - u[i + 1])
    return float(state.positions()[i] + frac / state.grid.n)


def default_burn_in(horizon: float) -> float:
    """10% of the horizon or t=20, whichever is larger."""
    return max(0.1 * horizon, 20.0)


def _window(trace: FrontTrace, burn_in: float, use: str):
    ys = trace.r if use == "r" else trace.m_star
    mask = (trace.times >= burn_in) & np.isfinite(ys)
    return trace.times[mask], np.asarray(ys)[mask]


def estimate_speed(trace: FrontTrace, burn_in: float, use: str = "m_star") -> SpeedEstimate:
    """OLS slope of position against time after burn-in, with a 95% CI.

    The CI comes from the single-trace slope standard error; replica-level
    confidence intervals are aggregated by the sweep driver instead.
    """
    if use not in ("r", "m_star"):
        raise ValueError("use must be 'r' or 'm_star'")
    t, y = _window(trace, burn_in, use)
    if t.size < 10:
        raise EstimationError(f"need >= 10 points after burn-in, have {t.size}")
    tbar = t.mean()
    sxx = float(np.sum((t - tbar) ** 2))
    slope = float(np.sum((t - tbar) * (y - y.mean())) / sxx)
    resid = y - y.mean() - slope * (t - tbar)
    dof = t.size - 2
    sigma2 = float(resid @ resid) / dof if dof > 0 else 0.0
    se = math.sqrt(sigma2 / sxx)
    ci = float(stats.t.ppf(0.975, dof)) * se if dof > 0 else 0.0
    return SpeedEstimate(v_hat=slope, ci_half_width=ci,
                         t_window=(float(t[0]), float(t[-1])))


def bramson_fit(trace: FrontTrace, burn_in: float) -> tuple[float, float, float]:
    """Least squares of m*(t) on (t, log t, 1): (speed, log coefficient, rms).

    The classical pulled-front expansion carries a logarithmic term whose
    sign conventions differ across sources; the signed coefficient is
    returned and callers assert on its magnitude.
    """
    t, y = _window(trace, burn_in, "m_star")
    if t.size < 30:
        raise EstimationError(f"need >= 30 points after burn-in, have {t.size}")
    if t[0] <= 0 or t[-1] / t[0] < 4.0:
        raise EstimationError("time window must span a factor >= 4")
    A = np.column_stack([t, np.log(t), np.ones_like(t)])
    coef, _, rank, _ = np.linalg.lstsq(A, y, rcond=None)
    if rank < 3:
        raise EstimationError("ill-conditioned design")
    resid = y - A @ coef
    rms = float(np.sqrt(np.mean(resid ** 2)))
    return float(coef[0]), float(coef[1]), rms
