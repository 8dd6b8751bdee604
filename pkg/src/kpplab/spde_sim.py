"""Explicit time stepping of the lattice SPDE on a moving window.

The update per site is the lattice system
    du = [n^2 (u_{i+1} - 2 u_i + u_{i-1}) + f(u_i)] dt + noise(u_i),
where the noise increment has mean zero and variance n eps^2 sigma^2(u) dt.
The default noise scheme draws the post-step value from the moment-matched
law on the 1/N particle grid (N = 1/(n eps^2 dt)); the plain Gaussian
increment with clamping is available as scheme 'gaussian-clamp' for bias
studies, but it over-feeds the small-u tail and is not used by default.

Dirichlet killing at x >= v t (one-sided) or |x| >= L + v t (two-sided)
zeroes every site at or beyond the boundary site after each step, with the
boundary position rounded down to the lattice.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels as K
from .model_core import ModelSpec, Nonlinearity, NoiseSpec

__all__ = [
    "WholeLineWindow",
    "DirichletRight",
    "DirichletTwoSided",
    "LatticeGrid",
    "FieldState",
    "StepParams",
    "InjectionSpec",
    "RunRecord",
    "ConfigurationError",
    "WindowOverrunError",
    "IntegrationBlowupError",
    "init_front_data",
    "step",
    "run",
    "solve_deterministic",
    "snapshot_csv_rows",
    "record_metadata",
]


class ConfigurationError(ValueError):
    """Raised for inconsistent grid / profile / parameter combinations."""


class WindowOverrunError(RuntimeError):
    """The front reached the window edge before a shift was possible."""


class IntegrationBlowupError(RuntimeError):
    """Non-finite field value; carries the offending site and time."""

    def __init__(self, site_x: float, t: float):
        super().__init__(f"non-finite field value at x={site_x:.6g}, t={t:.6g}")
        self.site_x = site_x
        self.t = t


# ---------------------------------------------------------------------------
# grid and state


@dataclass(frozen=True)
class WholeLineWindow:
    """Moving window on the whole line; left ghost pinned at theta_left."""

    theta_left: float = 1.0


@dataclass(frozen=True)
class DirichletRight:
    v: float


@dataclass(frozen=True)
class DirichletTwoSided:
    v: float
    L: float


Boundary = WholeLineWindow | DirichletRight | DirichletTwoSided


@dataclass(frozen=True)
class LatticeGrid:
    """n sites per unit length on [x_left, x_left + window_width) + shift."""

    n: int
    x_left: float
    window_width: float
    shift: float = 0.0
    boundary: Boundary = field(default_factory=WholeLineWindow)

    def __post_init__(self):
        if self.n < 4:
            raise ConfigurationError("need at least 4 sites per unit length")
        sites = self.window_width * self.n
        if abs(sites - round(sites)) > 1e-9 or round(sites) <= 0:
            raise ConfigurationError("window_width * n must be a positive integer")
        sh = self.shift * self.n
        if abs(sh - round(sh)) > 1e-9 or self.shift < 0:
            raise ConfigurationError("shift must be a nonnegative multiple of 1/n")

    @property
    def n_sites(self) -> int:
        return int(round(self.window_width * self.n))

    @property
    def shift_sites(self) -> int:
        return int(round(self.shift * self.n))

    def positions(self) -> np.ndarray:
        base = self.x_left + self.shift
        return base + np.arange(self.n_sites) / self.n


@dataclass(frozen=True)
class FieldState:
    u: np.ndarray
    t: float
    grid: LatticeGrid

    def positions(self) -> np.ndarray:
        return self.grid.positions()

    def total_mass(self) -> float:
        return float(self.u.sum() / self.grid.n)


@dataclass(frozen=True)
class InjectionSpec:
    """Mass source: a constant rate at a deposit site and/or point atoms.

    With deposit_x=None the rate enters one site left of the killing
    boundary (position v t minus 1/n); atoms are (time, x, mass) triples.
    """

    rate: float = 0.0
    deposit_x: Optional[float] = None
    atoms: tuple = ()


@dataclass(frozen=True)
class StepParams:
    """Time step, seed, and noise handling.

    dt=None selects the default 1/(8 n^2); values above the 1/(4 n^2)
    stability guard are rejected.  noise_scheme 'quantized' is the
    moment-exact sampler; 'gaussian-clamp' is the plain Euler-Maruyama
    increment with negative clamping.
    """

    dt: Optional[float] = None
    seed: int = 0
    clamp_negatives: bool = True
    injection: Optional[InjectionSpec] = None
    noise_scheme: str = "quantized"

    def resolve_dt(self, n: int) -> float:
        dt = 1.0 / (8 * n * n) if self.dt is None else self.dt
        if dt <= 0 or dt > 1.0 / (4 * n * n) + 1e-15:
            raise ConfigurationError(f"dt={dt} violates the 1/(4 n^2) stability guard")
        return dt


@dataclass(frozen=True)
class RunRecord:
    """Trajectory summary: front diagnostics, optional snapshots, echo."""

    seed: int
    params: dict
    times: np.ndarray        # diagnostic cadence
    r: np.ndarray            # rightmost support (tol=0), absolute coords
    m_star: np.ndarray       # level-1/2 crossing, nan where undefined
    snapshot_times: tuple
    snapshots: tuple         # FieldState at those times
    final_state: FieldState
    flags: tuple = ()

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.params, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# initial data


def init_front_data(grid: LatticeGrid, profile) -> FieldState:
    """Sample an initial profile onto the lattice.

    profile is a tagged tuple: ('step', x0), ('theta-step', theta, x0),
    ('wave-profile', WaveProfile), or ('bump', xs, values).  Step data put
    u=1 strictly left of x0; bumps interpolate and must fit in the window.
    """
    xs = grid.positions()
    kind = profile[0]
    if kind == "step":
        x0 = float(profile[1])
        _check_inside(grid, x0)
        u = np.where(xs < x0, 1.0, 0.0)
    elif kind == "theta-step":
        theta, x0 = float(profile[1]), float(profile[2])
        if theta <= 0:
            raise ConfigurationError("theta-step needs theta > 0")
        _check_inside(grid, x0)
        u = np.where(xs < x0, theta, 0.0)
    elif kind == "wave-profile":
        wave = profile[1]
        u = np.clip(wave.evaluate(xs), 0.0, None)
    elif kind == "bump":
        bx = np.asarray(profile[1], dtype=float)
        bv = np.asarray(profile[2], dtype=float)
        if bx[0] < xs[0] - 1e-9 or bx[-1] > xs[-1] + 1e-9:
            raise ConfigurationError("bump support exceeds the window")
        u = np.interp(xs, bx, bv, left=0.0, right=0.0)
        u = np.clip(u, 0.0, None)
    else:
        raise ConfigurationError(f"unknown initial profile {kind!r}")
    return FieldState(u=u, t=0.0, grid=grid)


def _check_inside(grid: LatticeGrid, x0: float):
    xs = grid.positions()
    if not (xs[0] <= x0 <= xs[-1]):
        raise ConfigurationError(f"profile anchor {x0} outside window [{xs[0]}, {xs[-1]}]")


# ---------------------------------------------------------------------------
# stepping


_F_CODES = {"fisher": K.F_FISHER, "barred": K.F_BARRED, "sharp": K.F_SHARP,
            "underline": K.F_UNDERLINE, "cutoff": K.F_CUTOFF, "table": K.F_TABLE}
_N_CODES = {"wright-fisher": K.N_WF, "sqrt-u": K.N_SQRTU, "table": K.N_TABLE}
_EMPTY = np.empty(0)


def _f_args(f: Nonlinearity):
    code = _F_CODES[f.kind]
    if f.kind in ("sharp", "underline"):
        p1, p2 = f.a, f.alpha
    elif f.kind == "cutoff":
        p1, p2 = f.theta_cut, 0.0
    else:
        p1 = p2 = 0.0
    tu = np.asarray(f.table_u, dtype=float) if f.kind == "table" else _EMPTY
    tf = np.asarray(f.table_f, dtype=float) if f.kind == "table" else _EMPTY
    return code, p1, p2, tu, tf


def _noise_args(noise: NoiseSpec, scheme: str):
    if noise.epsilon == 0.0:
        return K.N_NONE, _EMPTY, _EMPTY, K.S_QUANTIZED
    code = _N_CODES[noise.kind]
    su = np.asarray(noise.table_u, dtype=float) if noise.kind == "table" else _EMPTY
    ss = np.asarray(noise.table_s2, dtype=float) if noise.kind == "table" else _EMPTY
    if scheme == "quantized":
        sch = K.S_QUANTIZED
    elif scheme == "gaussian-clamp":
        sch = K.S_GAUSS_CLAMP
    else:
        raise ConfigurationError(f"unknown noise scheme {scheme!r}")
    if code == K.N_TABLE:
        sch = K.S_GAUSS_CLAMP  # no exact law for table intensities
    return code, su, ss, sch


def _kill_bounds(grid: LatticeGrid, t_next: float) -> tuple[int, int]:
    m = grid.n_sites
    b = grid.boundary
    base_site = round((grid.x_left + grid.shift) * grid.n)
    if isinstance(b, DirichletRight):
        bsite = math.floor(b.v * t_next * grid.n)
        return -1, max(bsite - base_site, 0)
    if isinstance(b, DirichletTwoSided):
        bsite = math.floor((b.L + b.v * t_next) * grid.n)
        return (-bsite) - base_site, bsite - base_site
    return -1, m


def _ghosts(grid: LatticeGrid) -> tuple[float, float]:
    b = grid.boundary
    if isinstance(b, WholeLineWindow):
        return b.theta_left, 0.0
    return 0.0, 0.0


def step(state: FieldState, model: ModelSpec, p: StepParams,
         step_index: int = 0) -> FieldState:
    """Advance one time step; returns a new FieldState.

    step_index feeds the per-(seed, step, site) noise keying, so callers
    iterating manually must pass consecutive indices to reproduce run().
    """
    grid = state.grid
    dt = p.resolve_dt(grid.n)
    out = np.empty_like(state.u)
    _step_into(state.u, out, state, model, p, dt, step_index)
    if not np.all(np.isfinite(out)):
        bad = int(np.nonzero(~np.isfinite(out))[0][0])
        raise IntegrationBlowupError(grid.positions()[bad], state.t + dt)
    return FieldState(u=out, t=state.t + dt, grid=grid)


def _step_into(u: np.ndarray, out: np.ndarray, state: FieldState, model: ModelSpec,
               p: StepParams, dt: float, step_index: int):
    grid = state.grid
    fc, fp1, fp2, ftu, ftf = _f_args(model.f)
    nc, stu, sts, sch = _noise_args(model.noise, p.noise_scheme)
    eps = model.noise.epsilon
    nq = 1.0 / (grid.n * eps * eps * dt) if eps > 0 else 1.0
    lg, rg = _ghosts(grid)
    t_next = state.t + dt
    klo, khi = _kill_bounds(grid, t_next)
    base_site = round((grid.x_left + grid.shift) * grid.n)
    K.step_field(u, out, grid.n, dt, fc, fp1, fp2, ftu, ftf,
                 nc, stu, sts, sch, eps, nq, p.clamp_negatives,
                 lg, rg, klo, min(khi, grid.n_sites),
                 p.seed, step_index, base_site)
    inj = p.injection
    if inj is not None:
        if inj.rate != 0.0:
            out[_deposit_index(grid, t_next, inj)] += inj.rate * dt * grid.n
        for (ta, xa, qa) in inj.atoms:
            if state.t < ta <= t_next:
                idx = int(round((xa - grid.x_left - grid.shift) * grid.n))
                if not 0 <= idx < grid.n_sites:
                    raise ConfigurationError(f"injection atom at x={xa} outside window")
                out[idx] += qa * grid.n


def _deposit_index(grid: LatticeGrid, t_next: float, inj: InjectionSpec) -> int:
    if inj.deposit_x is not None:
        idx = int(round((inj.deposit_x - grid.x_left - grid.shift) * grid.n))
    else:
        b = grid.boundary
        if not isinstance(b, DirichletRight):
            raise ConfigurationError("rate injection without deposit_x needs a "
                                     "dirichlet-right boundary")
        bsite = math.floor(b.v * t_next * grid.n)
        idx = bsite - round((grid.x_left + grid.shift) * grid.n) - 1
    if not 0 <= idx < grid.n_sites:
        raise ConfigurationError("injection deposit site outside window")
    return idx


# ---------------------------------------------------------------------------
# full runs


def run(state: FieldState, model: ModelSpec, p: StepParams, horizon: float,
        observers: Sequence[Callable] = (), record_dt: float = 0.5,
        snapshot_dt: Optional[float] = None, shift_margin: float = 10.0,
        shift_support_tol: Optional[float] = None) -> RunRecord:
    """Iterate step() to the horizon, shifting the window as the front moves.

    Only whole-line windows shift: when the rightmost site with
    u > shift_support_tol comes within shift_margin of the right edge, the
    window translates right by width/4 (zeros padded on the right, theta_left
    refilled on the left).  The default support tolerance is 1e-30 for noisy
    runs and 1e-12 for deterministic ones; the exact-positivity support is
    not usable as a trigger because the explicit scheme spreads positivity
    one site per step regardless of the noise.  Observers receive (t, state)
    at the record cadence.  Front diagnostics (r with tol=0, the level-1/2
    crossing) are recorded at the same cadence.
    """
    if horizon <= 0:
        raise ConfigurationError("horizon must be positive")
    grid = state.grid
    dt = p.resolve_dt(grid.n)
    nsteps = int(round(horizon / dt))
    if shift_support_tol is None:
        shift_support_tol = 1e-30 if model.noise.epsilon > 0 else 1e-12
    rec_every = max(1, int(round(record_dt / dt)))
    snap_every = None if snapshot_dt is None else max(1, int(round(snapshot_dt / dt)))
    whole_line = isinstance(grid.boundary, WholeLineWindow)
    stride = int(round(grid.window_width / 4.0 * grid.n))
    margin_sites = int(round(shift_margin * grid.n))
    m = grid.n_sites

    u = state.u.copy()
    buf = np.empty_like(u)
    t0 = state.t
    cur = FieldState(u=u, t=t0, grid=grid)
    times, rs, mstars = [], [], []
    snap_ts, snaps = [], []
    flags = []

    from .front_metrics import level_crossing, rightmost_support

    for k in range(nsteps + 1):
        t = t0 + k * dt
        cur = FieldState(u=u, t=t, grid=cur.grid)
        if k % rec_every == 0 or k == nsteps:
            times.append(t)
            rs.append(rightmost_support(cur, 0.0))
            mstars.append(level_crossing(cur, 0.5))
            for obs in observers:
                obs(t, cur)
        if snap_every is not None and (k % snap_every == 0 or k == nsteps):
            snap_ts.append(t)
            snaps.append(FieldState(u=u.copy(), t=t, grid=cur.grid))
        if k == nsteps:
            break
        _step_into(u, buf, cur, model, p, dt, k)
        u, buf = buf, u
        if not np.all(np.isfinite(u)):
            bad = int(np.nonzero(~np.isfinite(u))[0][0])
            raise IntegrationBlowupError(cur.grid.positions()[bad], t + dt)
        if whole_line:
            nz = np.nonzero(u > shift_support_tol)[0]
            if nz.size and nz[-1] >= m - 1:
                raise WindowOverrunError(
                    f"support reached the window edge at t={t + dt:.6g}")
            if nz.size and nz[-1] >= m - margin_sites:
                u[:m - stride] = u[stride:]
                u[m - stride:] = 0.0
                u[0] = grid.boundary.theta_left
                g = cur.grid
                cur = FieldState(u=u, t=t, grid=dataclasses.replace(
                    g, shift=g.shift + stride / g.n))

    final = FieldState(u=u, t=t0 + nsteps * dt, grid=cur.grid)
    params = {
        "dt": dt, "seed": p.seed, "scheme": p.noise_scheme,
        "clamp": p.clamp_negatives, "horizon": horizon,
        "n": grid.n, "window_width": grid.window_width,
        "x_left": grid.x_left, "boundary": repr(grid.boundary),
        "f": model.f.kind, "noise": model.noise.kind, "eps": model.noise.epsilon,
    }
    return RunRecord(seed=p.seed, params=params,
                     times=np.array(times), r=np.array(rs), m_star=np.array(mstars),
                     snapshot_times=tuple(snap_ts), snapshots=tuple(snaps),
                     final_state=final, flags=tuple(flags))


def solve_deterministic(state: FieldState, model: ModelSpec, p: StepParams,
                        horizon: float, **kwargs) -> RunRecord:
    """run() with the noise amplitude forced to zero."""
    quiet = dataclasses.replace(model, noise=dataclasses.replace(model.noise, epsilon=0.0))
    return run(state, quiet, p, horizon, **kwargs)


# ---------------------------------------------------------------------------
# export


def snapshot_csv_rows(record: RunRecord):
    """Yield (t, site_index, x_absolute, u) rows for every stored snapshot."""
    for st in record.snapshots:
        xs = st.positions()
        for i, (x, v) in enumerate(zip(xs, st.u)):
            yield (st.t, i, float(x), float(v))


def record_metadata(record: RunRecord) -> dict:
    return {
        "seed": record.seed,
        "params": record.params,
        "config_hash": record.config_hash,
        "final_time": record.final_state.t,
        "flags": list(record.flags),
    }
