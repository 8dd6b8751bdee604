"""Branching-coalescing random walks dual to the Wright-Fisher KPP model.

Particles on the 1/n lattice jump +-1 site with probability n^2 dt each way
(generator d^2/dx^2), split in place with probability dt, and co-located
pairs coalesce with probability c_coal * eps^2 * n * dt per step.  The
lattice normalization of intersection local time is not canonical, hence
the calibration constant c_coal; calibrate_coalescence pins it by matching
the duality identity at one reference configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import _kernels as K
from .estimates import EstimateSE, binomial_estimate, mean_estimate
from .model_core import ModelSpec, NoiseSpec, Nonlinearity, make_model
from .rng import derive_seed

__all__ = [
    "DualState",
    "DualRunStats",
    "DualityResult",
    "dual_step",
    "run_dual",
    "duality_check",
    "calibrate_coalescence",
    "DEFAULT_CAP",
]

DEFAULT_CAP = 1_000_000


@dataclass(frozen=True)
class DualState:
    """Walker multiset at one time; positions are integer site indices."""

    positions: np.ndarray  # int64 sites, x = site / n
    t: float
    eps2: float
    n: int

    def x(self) -> np.ndarray:
        return self.positions / self.n

    @property
    def count(self) -> int:
        return int(self.positions.size)


@dataclass(frozen=True)
class DualRunStats:
    times: np.ndarray
    counts: np.ndarray
    R: np.ndarray  # rightmost particle, -inf when empty
    L: np.ndarray  # leftmost particle, +inf when empty
    seed: int
    capped: bool

    def csv_rows(self, replica_id: int):
        for t, nn, r, ll in zip(self.times, self.counts, self.R, self.L):
            yield (float(t), int(nn), float(r), float(ll), replica_id)


def _check_dt(dt: float, n: int):
    lim = min(1.0 / (8 * n * n), 0.1)
    if not 0 < dt <= lim + 1e-15:
        raise ValueError(f"dual step needs 0 < dt <= min(1/(8n^2), 0.1) = {lim}")


def dual_step(state: DualState, dt: float, seed: int, step_index: int = 0,
              c_coal: float = 1.0, cap: int = DEFAULT_CAP) -> DualState:
    """One move/branch/coalesce step; the empty state is absorbing."""
    _check_dt(dt, state.n)
    if state.count == 0:
        return replace(state, t=state.t + dt)
    rec = np.empty(0, dtype=np.int64)
    pos, cnt, capped = K.dual_replica(state.positions.astype(np.int64), state.n, dt, 1,
                                      state.eps2, c_coal, np.uint64(seed + step_index),
                                      cap, 0, rec, rec, rec)
    if capped:
        raise RuntimeError(f"population cap {cap} exceeded")
    return DualState(positions=pos[:cnt], t=state.t + dt, eps2=state.eps2, n=state.n)


def run_dual(initial_x: Sequence[float], eps2: float, n: int, horizon: float,
             replicas: int, seed: int, c_coal: float = 1.0, cap: int = DEFAULT_CAP,
             record_dt: float = 0.5, dt: float | None = None) -> list[DualRunStats]:
    """Ensemble of dual trajectories with per-replica N/R/L traces.

    For eps2=0 the expected Yule population exp(horizon)*N0 must stay below
    the cap; with coalescence the cap merely flags runaway replicas.
    """
    if dt is None:
        dt = min(1.0 / (8 * n * n), 0.1)
    _check_dt(dt, n)
    if eps2 == 0.0 and math.exp(horizon) * len(initial_x) > cap:
        raise ValueError("expected Yule population exceeds the cap; shorten the run")
    nsteps = int(round(horizon / dt))
    rec_every = max(1, int(round(record_dt / dt)))
    nslots = (nsteps - 1) // rec_every + 1 if nsteps > 0 else 0
    pos0 = np.asarray(np.round(np.asarray(initial_x, dtype=float) * n), dtype=np.int64)
    out = []
    for rep in range(replicas):
        rep_seed = derive_seed(seed, rep)
        rec_N = np.zeros(nslots, dtype=np.int64)
        rec_R = np.zeros(nslots, dtype=np.int64)
        rec_L = np.zeros(nslots, dtype=np.int64)
        fin, cnt, capped = K.dual_replica(pos0, n, dt, nsteps, eps2, c_coal,
                                          np.uint64(rep_seed), cap, rec_every,
                                          rec_N, rec_R, rec_L)
        times = np.arange(nslots) * rec_every * dt
        times = np.append(times, nsteps * dt)
        counts = np.append(rec_N, cnt)
        empty_R = float("-inf")
        empty_L = float("inf")
        Rs = np.where(rec_N > 0, rec_R / n, empty_R)
        Ls = np.where(rec_N > 0, rec_L / n, empty_L)
        Rs = np.append(Rs, fin.max() / n if cnt else empty_R)
        Ls = np.append(Ls, fin.min() / n if cnt else empty_L)
        out.append(DualRunStats(times=times, counts=counts, R=Rs, L=Ls,
                                seed=rep_seed, capped=bool(capped)))
    return out


@dataclass(frozen=True)
class DualityResult:
    lhs: EstimateSE       # E[1 - u(t, x_eval)] from the SPDE
    rhs: EstimateSE       # P(all dual particles > 0 at t)
    c_coal: float
    x_eval: float
    t: float
    eps: float

    @property
    def gap(self) -> float:
        return self.lhs.value - self.rhs.value

    @property
    def combined_se(self) -> float:
        return math.hypot(self.lhs.se, self.rhs.se)

    def as_dict(self) -> dict:
        return {"lhs": self.lhs.as_dict(), "rhs": self.rhs.as_dict(),
                "c_coal": self.c_coal, "x_eval": self.x_eval, "t": self.t,
                "eps": self.eps, "gap": self.gap, "combined_se": self.combined_se}


def _wf_fisher(eps: float) -> ModelSpec:
    return make_model(Nonlinearity.fisher(), NoiseSpec.wright_fisher(eps))


def _lhs_estimate(x_eval: float, t: float, replicas: int, n: int, seed: int,
                  eps: float) -> EstimateSE:
    dt = 1.0 / (8 * n * n)
    nsteps = int(round(t / dt))
    half_w = max(8.0, abs(x_eval) + 2.0 * t + 8.0)
    m = int(round(2 * half_w * n))
    mid = m // 2
    xs = (np.arange(m) - mid) / n
    u0 = np.where(xs <= 0.0, 1.0, 0.0)
    eval_site = mid + int(round(x_eval * n))
    nq = 1.0 / (n * eps * eps * dt)
    seeds = np.array([derive_seed(seed, 1, r) for r in range(replicas)],
                     dtype=np.uint64)
    vals = K.mc_terminal_value(u0, n, dt, nsteps, K.F_FISHER, 0.0, 0.0,
                               np.empty(0), np.empty(0), K.N_WF,
                               np.empty(0), np.empty(0), K.S_QUANTIZED,
                               eps, nq, True, 1.0, eval_site, seeds)
    return mean_estimate(1.0 - vals)


def _rhs_estimate(x_eval: float, t: float, replicas: int, n: int, seed: int,
                  eps: float, c_coal: float, cap: int) -> EstimateSE:
    dt = 1.0 / (8 * n * n)
    nsteps = int(round(t / dt))
    hits, capped = K.mc_dual_all_positive(int(round(x_eval * n)), n, dt, nsteps,
                                          eps * eps, c_coal,
                                          np.uint64(derive_seed(seed, 2)),
                                          cap, replicas)
    if capped:
        raise RuntimeError("dual population cap exceeded during duality check")
    return binomial_estimate(hits, replicas)


def duality_check(x_eval: float, t: float, replicas_pde: int, replicas_dual: int,
                  n: int, seed: int, eps: float = 0.5, c_coal: float = 1.0,
                  cap: int = DEFAULT_CAP) -> DualityResult:
    """Monte-Carlo both sides of the product duality for fisher + Wright-Fisher.

    lhs: E[1 - u(t, x_eval)] with u0 = 1(x <= 0); rhs: probability that every
    dual walker started at x_eval sits strictly right of 0 at time t.  Both
    sides share the lattice convention that x=0 is occupied initially.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0.0:
        v = 1.0 if x_eval > 0 else 0.0
        est = EstimateSE(value=v, se=0.0, n=1)
        return DualityResult(lhs=est, rhs=est, c_coal=c_coal,
                             x_eval=x_eval, t=t, eps=eps)
    lhs = _lhs_estimate(x_eval, t, replicas_pde, n, seed, eps)
    rhs = _rhs_estimate(x_eval, t, replicas_dual, n, seed, eps, c_coal, cap)
    return DualityResult(lhs=lhs, rhs=rhs, c_coal=c_coal,
                         x_eval=x_eval, t=t, eps=eps)


def calibrate_coalescence(seed: int, x_eval: float = 1.0, t: float = 1.0,
                          eps: float = 0.5, n: int = 16,
                          replicas_pde: int = 600, replicas_dual: int = 20000,
                          bracket: tuple = (0.25, 4.0), iters: int = 7) -> float:
    """Fix c_coal by matching the duality identity at the reference config.

    rhs is increasing in c_coal (stronger coalescence thins the dual cloud),
    so bisection on rhs - lhs; if the bracket does not straddle the match the
    closer endpoint is returned.
    """
    lhs = _lhs_estimate(x_eval, t, replicas_pde, n, seed, eps).value

    def g(c):
        return _rhs_estimate(x_eval, t, replicas_dual, n, seed, eps, c,
                             DEFAULT_CAP).value - lhs

    g_lo = g(bracket[0])
    g_hi = g(bracket[1])
    if g_lo > 0 or g_hi < 0:
        return bracket[0] if abs(g_lo) <= abs(g_hi) else bracket[1]
    lo, hi = bracket
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if g(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
