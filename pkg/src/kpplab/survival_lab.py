"""Critical-mass, confinement, and oriented-percolation experiments.

The total mass of the noise-dominated field is a Feller diffusion
dM = vartheta sqrt(M) dB (quadratic variation vartheta^2 M dt), whose
extinction probability exp(-2 M0 / (vartheta^2 t)) is the ground-truth
oracle for the spatial extinction runs.  The percolation sweep uses i.i.d.
bonds: independence satisfies the 2-dependent hypotheses of the contour
bound, which is what the Monte Carlo is checked against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels as K
from .estimates import EstimateSE, binomial_estimate
from .rng import derive_seed

__all__ = [
    "ExtinctionExperiment",
    "PercolationConfig",
    "PercolationResult",
    "extinction_probability_mc",
    "feller_total_mass_oracle",
    "sample_feller_mass",
    "confinement_probability_mc",
    "contour_bound",
    "percolation_speed_mc",
]


@dataclass(frozen=True)
class ExtinctionExperiment:
    """Configuration for the survival equation dw = [w_xx + b w] dt + vartheta sqrt(w) dW."""

    vartheta0: float
    b: float
    M0: float
    t: float
    replicas: int
    n: int
    initial_width: float = 1.0       # box profile of this width, centered at 0
    window_half_width: float = 12.0
    dt: Optional[float] = None
    injection_atoms: tuple = ()      # (time, x, mass) triples

    def __post_init__(self):
        if self.vartheta0 <= 0:
            raise ValueError("vartheta0 must be > 0")
        if self.M0 < 0:
            raise ValueError("M0 must be >= 0")


def _box_profile(e: ExtinctionExperiment) -> np.ndarray:
    m = int(round(2 * e.window_half_width * e.n))
    xs = (np.arange(m) - m // 2) / e.n
    u0 = np.zeros(m)
    if e.M0 > 0:
        half = 0.5 * e.initial_width
        sel = (xs >= -half) & (xs < half)
        u0[sel] = e.M0 / e.initial_width
    return u0


def _linear_f_table(b: float):
    # f(u) = b u as a 2-point table; the kernel extends it by the end slope
    return (np.array([0.0, 1.0]), np.array([0.0, b]))


def _run_survival(e: ExtinctionExperiment, seed: int, exit_x: Optional[float]):
    dt = 1.0 / (8 * e.n * e.n) if e.dt is None else e.dt
    nsteps = int(round(e.t / dt))
    u0 = _box_profile(e)
    m = u0.shape[0]
    tab_u, tab_f = _linear_f_table(e.b)
    nq = 1.0 / (e.n * e.vartheta0 ** 2 * dt)
    atoms = sorted(e.injection_atoms)
    inj_steps = np.array([min(int(math.ceil(ta / dt)) - 1, nsteps - 1) if ta > 0 else 0
                          for ta, _, _ in atoms], dtype=np.int64)
    inj_sites = np.array([m // 2 + int(round(xa * e.n)) for _, xa, _ in atoms],
                         dtype=np.int64)
    inj_mass = np.array([qa for _, _, qa in atoms], dtype=float)
    if atoms and (inj_sites.min() < 0 or inj_sites.max() >= m):
        raise ValueError("injection atom outside the window")
    if exit_x is None:
        exit_lo, exit_hi = -1, m
    else:
        exit_lo = m // 2 - int(math.ceil(exit_x * e.n))
        exit_hi = m // 2 + int(math.ceil(exit_x * e.n))
    seeds = np.array([derive_seed(seed, r) for r in range(e.replicas)], dtype=np.uint64)
    return K.mc_survival(u0, e.n, dt, nsteps, K.F_TABLE, 0.0, 0.0, tab_u, tab_f,
                         K.N_SQRTU, np.empty(0), np.empty(0), K.S_QUANTIZED,
                         e.vartheta0, nq, True,
                         inj_steps, inj_sites, inj_mass, exit_lo, exit_hi, seeds)


def extinction_probability_mc(e: ExtinctionExperiment, seed: int = 0) -> EstimateSE:
    """Fraction of replicas whose field is identically zero at the horizon.

    A terminal total mass below 1e-14 counts as extinct, absorbing the
    denormal residue the quantized sampler cannot produce but table-noise
    runs might.
    """
    extinct, _, _ = _run_survival(e, seed, None)
    return binomial_estimate(int(extinct.sum()), e.replicas)


def confinement_probability_mc(e: ExtinctionExperiment, r: float, seed: int = 0) -> EstimateSE:
    """P(support never exits (-r, r) during [0, t]) for injected mass, w0 = 0."""
    if r <= 0:
        raise ValueError("confinement radius must be positive")
    if any(abs(xa) >= r / 2 for _, xa, _ in e.injection_atoms):
        raise ValueError("injection atoms must sit inside (-r/2, r/2)")
    if e.window_half_width < r + 1.0 / e.n:
        raise ValueError("window too small for the confinement radius")
    if e.M0 != 0:
        raise ValueError("confinement experiment starts from w0 = 0")
    _, exited, _ = _run_survival(e, seed, r)
    return binomial_estimate(int(e.replicas - exited.sum()), e.replicas)


# ---------------------------------------------------------------------------
# Feller total-mass oracle


def sample_feller_mass(vartheta0: float, M0: float, t: float, paths: int,
                       seed: int = 0) -> np.ndarray:
    """Exact samples of M_t for dM = vartheta sqrt(M) dB started at M0.

    The transition is compound Poisson-Gamma: N ~ Poisson(2 M0/(vartheta^2 t)),
    M_t | N ~ Gamma(N, vartheta^2 t / 2), with M_t = 0 iff N = 0.
    """
    rng = np.random.default_rng(derive_seed(seed, 101))
    theta = 0.5 * vartheta0 ** 2 * t
    lam = M0 / theta
    counts = rng.poisson(lam, size=paths)
    out = np.zeros(paths)
    alive = counts > 0
    out[alive] = rng.gamma(shape=counts[alive], scale=theta)
    return out


def feller_total_mass_oracle(vartheta0: float, M0: float, t: float,
                             paths: int = 10_000, seed: int = 0,
                             scheme: str = "exact") -> EstimateSE:
    """Monte-Carlo extinction probability of the Feller total-mass diffusion.

    scheme 'exact' samples the transition law directly; 'euler' runs the
    absorbed Euler chain, which carries an O(sqrt(dt)) barrier bias and is
    kept for bias comparisons only.
    """
    if paths < 10_000:
        raise ValueError("need at least 1e4 paths")
    if scheme == "exact":
        ms = sample_feller_mass(vartheta0, M0, t, paths, seed)
        return binomial_estimate(int(np.count_nonzero(ms == 0.0)), paths)
    if scheme != "euler":
        raise ValueError(f"unknown scheme {scheme!r}")
    rng = np.random.default_rng(derive_seed(seed, 102))
    nsteps = 4000
    dt = t / nsteps
    m = np.full(paths, float(M0))
    for _ in range(nsteps):
        alive = m > 0.0
        if not alive.any():
            break
        g = rng.standard_normal(int(alive.sum()))
        m[alive] = m[alive] + vartheta0 * np.sqrt(m[alive] * dt) * g
        np.clip(m, 0.0, None, out=m)
    return binomial_estimate(int(np.count_nonzero(m == 0.0)), paths)


# ---------------------------------------------------------------------------
# oriented percolation


@dataclass(frozen=True)
class PercolationConfig:
    """Directed bonds (m,n)->(m+1,n+-1) on the even sublattice, open w.p. p."""

    p: float
    m_max: int
    replicas: int
    delta: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must be in [0,1]")
        if not 0.0 < self.delta <= 1.0:
            raise ValueError("delta must be in (0,1]")


@dataclass(frozen=True)
class PercolationResult:
    generations: np.ndarray
    N_m: np.ndarray           # (replicas, m_max+1), -inf where unreachable
    terminal_ratio: EstimateSE

    def csv_rows(self):
        for rep in range(self.N_m.shape[0]):
            for m, nm in zip(self.generations, self.N_m[rep]):
                yield (int(m), float(nm), rep)


def contour_bound(p: float, m: int, delta: float) -> float:
    """Closed-form contour bound on P(N_m < m(1-delta)).

    Sum_{n >= m delta} 4^{2n+m} (1-p)^{n/2} = 4^m rho^{ceil(m delta)}/(1-rho)
    with rho = 16 sqrt(1-p); +inf when rho >= 1 (divergent series).
    """
    if not 0.0 < p <= 1.0:
        raise ValueError("p must be in (0,1]")
    rho = 16.0 * math.sqrt(1.0 - p)
    if rho >= 1.0:
        return float("inf")
    n0 = math.ceil(m * delta)
    return 4.0 ** m * rho ** n0 / (1.0 - rho)


def percolation_speed_mc(cfg: PercolationConfig, seed: int = 0) -> PercolationResult:
    """Reachability from the seeded row {(0, n): n <= 0 even} through open bonds.

    N_m is the highest reachable height at generation m (-inf when nothing is
    reachable); the terminal estimate is the ensemble mean of N_m/m at
    m = m_max.  Seeds extend down to -2 m_max, which is far enough that the
    truncation cannot affect the maximum.
    """
    m_max = cfg.m_max
    width_lo = -2 * m_max - 2
    width_hi = m_max + 1
    n_sites = width_hi - width_lo + 1
    gens = np.arange(m_max + 1)
    all_nm = np.full((cfg.replicas, m_max + 1), -np.inf)
    heights = np.arange(width_lo, width_hi + 1)
    for rep in range(cfg.replicas):
        rng = np.random.default_rng(derive_seed(seed, rep))
        reach = (heights <= 0) & (heights % 2 == 0)
        all_nm[rep, 0] = heights[reach].max() if reach.any() else -np.inf
        for m in range(1, m_max + 1):
            up = rng.random(n_sites) < cfg.p      # bond (m-1,n) -> (m, n+1)
            down = rng.random(n_sites) < cfg.p    # bond (m-1,n) -> (m, n-1)
            nxt = np.zeros_like(reach)
            nxt[1:] |= reach[:-1] & up[:-1]
            nxt[:-1] |= reach[1:] & down[1:]
            reach = nxt
            if reach.any():
                all_nm[rep, m] = heights[reach].max()
        ratios = all_nm[:, m_max] / m_max
    finite = np.isfinite(all_nm[:, m_max])
    if finite.any():
        ratios = all_nm[finite, m_max] / m_max
        mean = float(ratios.mean())
        se = float(ratios.std(ddof=1) / math.sqrt(ratios.size)) if ratios.size > 1 else 0.0
        term = EstimateSE(value=mean, se=se, n=int(finite.sum()))
    else:
        term = EstimateSE(value=float("-inf"), se=0.0, n=0)
    return PercolationResult(generations=gens, N_m=all_nm, terminal_ratio=term)
