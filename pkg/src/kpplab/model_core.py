"""Reaction terms, noise intensities, structural constants, and heat kernels.

Everything here is a pure function of immutable inputs.  The diffusion
convention throughout the package pairs the generator d^2/dx^2 with the
kernel (4 pi t)^{-1/2} exp(-x^2/4t), i.e. Brownian paths with variance 2t.
External data using the (1/2) d^2/dx^2 convention must be rescaled first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "Nonlinearity",
    "NoiseSpec",
    "ModelSpec",
    "KernelQuery",
    "ValidationReport",
    "eval_f",
    "eval_sigma2",
    "alpha_of",
    "make_model",
    "validate_model",
    "heat_kernel",
    "killed_kernel",
]


# ---------------------------------------------------------------------------
# nonlinearities


@dataclass(frozen=True)
class Nonlinearity:
    """A reaction term f(u).

    kind is one of 'fisher', 'barred', 'sharp', 'underline', 'cutoff',
    'table'.  The tent-shaped sharp/underline variants carry (a, alpha);
    cutoff carries the cutoff level; tables are piecewise-linear interpolants
    extended beyond their grid by the end slopes.
    """

    kind: str
    a: float = 0.0
    alpha: float = 0.0
    theta_cut: float = 0.0
    table_u: tuple = ()
    table_f: tuple = ()

    @classmethod
    def fisher(cls) -> "Nonlinearity":
        return cls("fisher")

    @classmethod
    def barred(cls) -> "Nonlinearity":
        return cls("barred")

    @classmethod
    def sharp(cls, a: float, alpha: float) -> "Nonlinearity":
        if not (0.0 < alpha <= 1.0):
            raise ValueError(f"sharp needs alpha in (0,1], got {alpha}")
        return cls("sharp", a=a, alpha=alpha)

    @classmethod
    def underline(cls, a: float, alpha: float) -> "Nonlinearity":
        if not (0.0 < alpha <= 1.0):
            raise ValueError(f"underline needs alpha in (0,1], got {alpha}")
        return cls("underline", a=a, alpha=alpha)

    @classmethod
    def cutoff(cls, theta_cut: float) -> "Nonlinearity":
        if not (0.0 < theta_cut < 1.0):
            raise ValueError(f"cutoff level must be in (0,1), got {theta_cut}")
        return cls("cutoff", theta_cut=theta_cut)

    @classmethod
    def from_table(cls, u_grid, f_values) -> "Nonlinearity":
        u_grid = tuple(float(u) for u in u_grid)
        f_values = tuple(float(v) for v in f_values)
        if len(u_grid) < 2 or len(u_grid) != len(f_values):
            raise ValueError("table needs >= 2 matching (u, f) points")
        if any(b <= a for a, b in zip(u_grid, u_grid[1:])):
            raise ValueError("table grid must be strictly increasing")
        return cls("table", table_u=u_grid, table_f=f_values)

    def __call__(self, u):
        return eval_f(self, u)


def eval_f(spec: Nonlinearity, u):
    """Evaluate the reaction term; exact 0 at u=0 for all closed-form kinds.

    Raises ValueError on negative input (scalar or any array entry).
    """
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr < 0.0):
        raise ValueError("reaction term evaluated at negative u")
    kind = spec.kind
    if kind == "fisher":
        out = u_arr * (1.0 - u_arr)
    elif kind == "barred":
        out = np.where(u_arr <= 1.0, u_arr, 2.0 - u_arr)
    elif kind == "sharp":
        out = np.where(u_arr <= spec.alpha / 2.0, spec.a * u_arr,
                       spec.a * (spec.alpha / 2.0 - u_arr))
    elif kind == "underline":
        s = 1.0 - spec.a
        out = np.where(u_arr <= spec.alpha / 2.0, s * u_arr,
                       s * (spec.alpha / 2.0 - u_arr))
    elif kind == "cutoff":
        out = np.where(u_arr >= spec.theta_cut, u_arr * (1.0 - u_arr), 0.0)
    elif kind == "table":
        xp = np.asarray(spec.table_u)
        fp = np.asarray(spec.table_f)
        out = np.interp(u_arr, xp, fp)
        # extend by the end slopes outside the grid
        lo_slope = (fp[1] - fp[0]) / (xp[1] - xp[0])
        hi_slope = (fp[-1] - fp[-2]) / (xp[-1] - xp[-2])
        out = np.where(u_arr < xp[0], fp[0] + lo_slope * (u_arr - xp[0]), out)
        out = np.where(u_arr > xp[-1], fp[-1] + hi_slope * (u_arr - xp[-1]), out)
    else:
        raise ValueError(f"unknown nonlinearity kind {kind!r}")
    if np.isscalar(u) or u_arr.ndim == 0:
        return float(out)
    return out


# ---------------------------------------------------------------------------
# noise intensities


@dataclass(frozen=True)
class NoiseSpec:
    """Noise intensity sigma^2(u) with amplitude epsilon.

    a_star / u_star record the lower-modulus constants the intensity is
    declared to satisfy; validate_model measures them from the function.
    """

    kind: str  # 'wright-fisher' | 'sqrt-u' | 'table'
    epsilon: float
    a_star: float = 0.0
    u_star: float = 0.0
    table_u: tuple = ()
    table_s2: tuple = ()

    @classmethod
    def wright_fisher(cls, epsilon: float, a_star: float = 0.5, u_star: float = 0.25) -> "NoiseSpec":
        return cls("wright-fisher", epsilon, a_star, u_star)

    @classmethod
    def sqrt_u(cls, epsilon: float, a_star: float = 1.0, u_star: float = 0.99) -> "NoiseSpec":
        return cls("sqrt-u", epsilon, a_star, u_star)

    @classmethod
    def from_table(cls, epsilon: float, u_grid, s2_values) -> "NoiseSpec":
        u_grid = tuple(float(u) for u in u_grid)
        s2_values = tuple(float(v) for v in s2_values)
        if len(u_grid) < 2 or len(u_grid) != len(s2_values):
            raise ValueError("table needs >= 2 matching (u, sigma^2) points")
        return cls("table", epsilon, table_u=u_grid, table_s2=s2_values)

    def __post_init__(self):
        if self.epsilon < 0.0:
            raise ValueError("noise amplitude must be >= 0")


def eval_sigma2(spec: NoiseSpec, u):
    """Evaluate sigma^2(u); nonnegative, 0 at u=0.  Negative u is an error."""
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr < 0.0):
        raise ValueError("noise intensity evaluated at negative u")
    if spec.kind == "wright-fisher":
        out = np.where(u_arr <= 1.0, u_arr * (1.0 - u_arr), 0.0)
    elif spec.kind == "sqrt-u":
        out = u_arr.copy() if u_arr.ndim else u_arr
    elif spec.kind == "table":
        out = np.clip(np.interp(u_arr, spec.table_u, spec.table_s2), 0.0, None)
    else:
        raise ValueError(f"unknown noise kind {spec.kind!r}")
    if np.isscalar(u) or u_arr.ndim == 0:
        return float(out)
    return np.asarray(out, dtype=float)


# ---------------------------------------------------------------------------
# structural constants


def alpha_of(f: Nonlinearity, a: float, grid_n: int = 4096) -> float:
    """Largest alpha with (1-a) u <= f(u) for all u in (0, alpha].

    Exact identity alpha(a) = a for the fisher term; a grid scan with a
    bisection refinement otherwise.
    """
    if a <= 0.0:
        raise ValueError("alpha(a) defined for a > 0")
    if f.kind == "fisher":
        return min(a, 1.0)
    target = 1.0 - a
    us = np.linspace(0.0, 1.5, grid_n + 1)[1:]
    ok = eval_f(f, us) >= target * us - 1e-15
    if not ok[0]:
        return 0.0
    bad = np.nonzero(~ok)[0]
    if bad.size == 0:
        return float(us[-1])
    lo = us[bad[0] - 1] if bad[0] > 0 else 0.0
    hi = us[bad[0]]
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if eval_f(f, mid) >= target * mid:
            lo = mid
        else:
            hi = mid
    return float(lo)


@dataclass(frozen=True)
class ModelSpec:
    """Reaction + noise pair with measured structural constants."""

    f: Nonlinearity
    noise: NoiseSpec
    lipschitz_f: float
    alpha_fn: Callable[[float], float] = field(repr=False, compare=False)


def make_model(f: Nonlinearity, noise: NoiseSpec, grid_n: int = 600) -> ModelSpec:
    """Assemble a ModelSpec, measuring the Lipschitz constant on [0, 3]."""
    us = np.linspace(0.0, 3.0, grid_n + 1)
    fs = eval_f(f, us)
    lips = float(np.max(np.abs(np.diff(fs) / np.diff(us))))
    return ModelSpec(f=f, noise=noise, lipschitz_f=lips,
                     alpha_fn=lambda a: alpha_of(f, a))


# ---------------------------------------------------------------------------
# model validation


@dataclass(frozen=True)
class ValidationReport:
    entries: tuple  # (name, passed, detail) triples
    lipschitz_f: float
    a_star: float
    u_star: float

    @property
    def all_passed(self) -> bool:
        return all(p for _, p, _ in self.entries)

    def entry(self, name: str):
        for n, p, d in self.entries:
            if n == name:
                return p, d
        raise KeyError(name)


def validate_model(spec: ModelSpec, grid_n: int = 300) -> ValidationReport:
    """Grid-check the KPP and noise conditions on [0, 3].

    Failures are report entries, never exceptions.  The (a*, u*) pair is the
    product-optimal point of the measured modulus curve: for each u* the
    admissible a* is the smallest adjacent difference quotient of sigma^2 on
    [0, u*], and the reported pair maximizes a* * u*.
    """
    if grid_n < 100:
        raise ValueError("grid_n must be >= 100")
    us = np.linspace(0.0, 3.0, grid_n + 1)
    h = us[1] - us[0]
    fs = eval_f(spec.f, us)
    s2 = eval_sigma2(spec.noise, us)
    entries = []

    f0 = eval_f(spec.f, 0.0)
    entries.append(("f(0)=0", f0 == 0.0, f"f(0)={f0!r}"))
    f1 = eval_f(spec.f, 1.0)
    entries.append(("f(1)=0", abs(f1) <= 1e-12, f"f(1)={f1!r}"))

    fprime0 = eval_f(spec.f, h) / h
    inner = (us > 0.0) & (us < 1.0)
    pos = bool(np.all(fs[inner] > 0.0))
    dom = bool(np.all(fs[inner] <= fprime0 * us[inner] + 1e-12))
    entries.append(("0<f(u)<=u*f'(0) on (0,1)", pos and dom,
                    f"f'(0)~{fprime0:.6g}, min f={fs[inner].min():.3g}"))

    above = us >= 1.0
    growth = bool(np.all(fs[above] <= 2.0 - us[above] + 1e-12))
    entries.append(("f(u)<=2-u for u>=1", growth,
                    f"max excess={np.max(fs[above] - (2.0 - us[above])):.3g}"))

    s2_dom = bool(np.all(s2 <= us + 1e-12))
    entries.append(("sigma^2(u)<=u", s2_dom,
                    f"max excess={np.max(s2 - us):.3g}"))

    # modulus scan: running minimum of adjacent quotients equals the minimum
    # pairwise secant slope, so adjacent cells suffice
    quot = np.diff(s2) / h
    run_min = np.minimum.accumulate(quot)
    u_tops = us[1:]
    in_unit = (u_tops > 0.0) & (u_tops < 1.0)
    a_star = u_star = 0.0
    best = 0.0
    for u_top, am in zip(u_tops[in_unit], run_min[in_unit]):
        if am > 0.0 and am * u_top > best:
            best = am * u_top
            a_star, u_star = float(am), float(u_top)
    entries.append(("sigma^2 lower modulus (a*,u*)", a_star > 0.0,
                    f"a*={a_star:.4g} at u*={u_star:.4g}"))

    lips = float(np.max(np.abs(np.diff(fs) / h)))
    return ValidationReport(entries=tuple(entries), lipschitz_f=lips,
                            a_star=a_star, u_star=u_star)


# ---------------------------------------------------------------------------
# heat kernels


def heat_kernel(t: float, x) -> float | np.ndarray:
    """Free kernel (4 pi t)^{-1/2} exp(-x^2 / 4t) for the generator d^2/dx^2."""
    if t <= 0.0:
        raise ValueError(f"heat kernel needs t > 0, got {t}")
    x_arr = np.asarray(x, dtype=float)
    out = (4.0 * math.pi * t) ** -0.5 * np.exp(-x_arr * x_arr / (4.0 * t))
    if np.isscalar(x) or x_arr.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class KernelQuery:
    """Space-time query for the killed kernels; boundary speed v, half-width L."""

    s: float
    t: float
    x: float
    y: float
    v: float = 0.0
    L: float = 0.0

    def __post_init__(self):
        if not self.t > self.s:
            raise ValueError(f"kernel query needs t > s, got s={self.s}, t={self.t}")
        if self.v < 0.0 or self.L < 0.0:
            raise ValueError("boundary speed and half-width must be >= 0")


def _killed_one_sided(q: KernelQuery) -> float:
    tau = q.t - q.s
    X = q.x - q.v * q.t
    Y = q.y - q.v * q.s
    if X >= 0.0 or Y >= 0.0:
        return 0.0
    pref = math.exp(-0.5 * q.v * (X - Y) - 0.25 * q.v * q.v * tau)
    return pref * (heat_kernel(tau, X - Y) - heat_kernel(tau, X + Y))


def _killed_two_sided(q: KernelQuery, rel_tol: float = 1e-12, max_images: int = 256) -> float:
    """Image series for absorption at |z| >= L + v u.

    Working in standard-Brownian time S = 2 tau the boundaries are the lines
    +-(L + (v/2) S); reflecting a point source across such a line yields a
    static image weighted by the Girsanov factor exp(-v(L -+ y)), so the
    alternating dihedral chain of reflections evaluates the kernel exactly.
    Terms are added until they fall below rel_tol of the free kernel.
    """
    tau = q.t - q.s
    a, b = q.L, 0.5 * q.v
    ys, xs = q.y, q.x
    if abs(ys) >= a or abs(xs) >= a + q.v * tau:
        return 0.0
    free = heat_kernel(tau, xs - ys)
    total = free
    # two alternating reflection chains, weights accumulated per reflection:
    # upper line: y -> 2a - y, weight *= exp(-2 b (a - y))  [std-BM units]
    # lower line: y -> -2a - y, weight *= exp(-2 b (a + y))
    for first_upper in (True, False):
        y_img = ys
        logw = 0.0
        sign = 1.0
        upper = first_upper
        for _ in range(max_images):
            if upper:
                logw += -2.0 * b * (a - y_img)
                y_img = 2.0 * a - y_img
            else:
                logw += -2.0 * b * (a + y_img)
                y_img = -2.0 * a - y_img
            sign = -sign
            term = sign * math.exp(logw) * heat_kernel(tau, xs - y_img)
            total += term
            if abs(term) <= rel_tol * max(free, 1e-300):
                break
            upper = not upper
    return max(total, 0.0)


def killed_kernel(q: KernelQuery, mode: str = "one-sided-vt") -> float:
    """Transition sub-density of the killed Brownian motion (generator d^2/dx^2).

    'one-sided-vt' kills at z >= v u; 'two-sided-vtL' kills at |z| >= L + v u.
    The time-homogeneous reduction relative to time s is applied internally;
    for the two-sided mode the query's y must lie inside |y| < L + v s.
    """
    if mode == "one-sided-vt":
        return _killed_one_sided(q)
    if mode == "two-sided-vtL":
        # shift to the time-s frame: boundary half-width there is L + v s
        q2 = KernelQuery(s=0.0, t=q.t - q.s, x=q.x, y=q.y, v=q.v, L=q.L + q.v * q.s)
        return _killed_two_sided(q2)
    raise ValueError(f"unknown killed-kernel mode {mode!r}")
