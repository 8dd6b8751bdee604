"""Phase-plane shooting for comparison-front speeds.

The traveling-wave problem x'' = v x' - f(x), x(0)=0, x'(0)=nu is solved
backwards from the saddle: the separatrix is traced from a small
displacement along the stable eigendirection until it crosses x=0, where the
slope nu(v) is read off.  Inverting nu(v) by bisection gives the front speed
for a prescribed boundary slope; the same trajectory matched against the
pure-decay condition y = v x at the cutoff level gives the cutoff-KPP speed.
Forward shooting is avoided because the origin is a spiral source for v<2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .model_core import Nonlinearity, eval_f

__all__ = [
    "ShootResult",
    "WaveProfile",
    "ShootingError",
    "InversionError",
    "ProfileError",
    "x_lin",
    "varpi_lambda",
    "sharp_stable_slope",
    "saddle_of",
    "shoot_separatrix",
    "kappa_of_nu",
    "cutoff_wave_speed",
    "build_front_profile",
    "kappabd_interval",
]


class ShootingError(RuntimeError):
    pass


class InversionError(RuntimeError):
    """Requested boundary slope is outside the attainable range."""


class ProfileError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# closed forms


def x_lin(t: float, nu: float, delta: float) -> tuple[float, float]:
    """Linearized front amplitude and derivative at backward time t.

    x_lin(t) = nu dh^{-1/2} exp((1 - delta/2) t) sin(dh^{1/2} t) with
    dh = delta - delta^2/4; requires 0 < delta < 2.
    """
    if not 0.0 < delta < 2.0:
        raise ValueError(f"delta must be in (0,2), got {delta}")
    dh = delta - 0.25 * delta * delta
    s = math.sqrt(dh)
    grow = math.exp((1.0 - 0.5 * delta) * t)
    x = nu / s * grow * math.sin(s * t)
    xp = nu / s * grow * ((1.0 - 0.5 * delta) * math.sin(s * t) + s * math.cos(s * t))
    return x, xp


def varpi_lambda(delta: float) -> tuple[float, float]:
    """Stable/unstable slopes at the barred saddle: 1 - delta/2 -+ sqrt(2 - dh)."""
    dh = delta - 0.25 * delta * delta
    root = math.sqrt(2.0 - dh)
    return 1.0 - 0.5 * delta - root, 1.0 - 0.5 * delta + root


def sharp_stable_slope(a: float) -> float:
    """Stable-line slope 1 - sqrt(2 - a) used by the tent lower bound."""
    if a >= 2.0:
        raise ValueError("needs a < 2")
    return 1.0 - math.sqrt(2.0 - a)


def saddle_of(f: Nonlinearity) -> tuple[float, float]:
    """(x*, f'(x*)) of the saddle the separatrix lands on."""
    if f.kind == "fisher":
        return 1.0, -1.0
    if f.kind == "barred":
        return 2.0, -1.0
    if f.kind in ("sharp", "underline"):
        return f.alpha, -(f.a if f.kind == "sharp" else 1.0 - f.a)
    if f.kind == "cutoff":
        return 1.0, -1.0
    raise ValueError(f"no canonical saddle for nonlinearity kind {f.kind!r}")


def _scalar_f(f: Nonlinearity) -> Callable[[float], float]:
    """Fast scalar evaluation, analytically extended below u=0 for the tracer."""
    if f.kind == "fisher":
        return lambda x: x * (1.0 - x)
    if f.kind == "barred":
        return lambda x: x if x <= 1.0 else 2.0 - x
    if f.kind == "sharp":
        a, half = f.a, 0.5 * f.alpha
        return lambda x: a * x if x <= half else a * (half - x)
    if f.kind == "underline":
        s, half = 1.0 - f.a, 0.5 * f.alpha
        return lambda x: s * x if x <= half else s * (half - x)
    if f.kind == "cutoff":
        th = f.theta_cut
        return lambda x: x * (1.0 - x) if x >= th else 0.0
    xp = np.asarray(f.table_u)
    fp = np.asarray(f.table_f)
    return lambda x: float(eval_f(f, max(x, 0.0))) if x >= 0.0 else \
        float(fp[0] + (fp[1] - fp[0]) / (xp[1] - xp[0]) * (x - xp[0]))


# ---------------------------------------------------------------------------
# adaptive Dormand-Prince 4(5) for the planar system, backward in time

_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E1, _E3, _E4, _E5, _E6, _E7 = (_B1 - 5179 / 57600, _B3 - 7571 / 16695, _B4 - 393 / 640,
                                _B5 + 92097 / 339200, _B6 - 187 / 2100, -1 / 40)


@dataclass(frozen=True)
class ShootResult:
    v: float
    nu_out: Optional[float]
    converged: bool
    steps: int


def _trace_backward(fval: Callable[[float], float], v: float, x0: float, y0: float,
                    x_target: float, box: tuple, rtol: float, tau_max: float,
                    max_steps: int = 500_000):
    """Integrate x'=-y, y'=-(v y - f(x)) from (x0, y0) until x crosses x_target.

    Returns (crossed, y_at_crossing, steps).  The crossing step is re-run
    with 64 fixed RK4 substeps and linearly interpolated, which keeps the
    slope readout deterministic at ~1e-8 relative accuracy.
    """
    x, y = x0, y0
    tau = 0.0
    h = 1e-4
    steps = 0
    k1x, k1y = -y, -(v * y - fval(x))
    while steps < max_steps:
        if tau > tau_max:
            return False, None, steps
        if abs(x) < 1e-280 and abs(y) < 1e-280:
            return False, None, steps
        if not (box[0] <= x <= box[1] and box[2] <= y <= box[3]):
            return False, None, steps
        x2 = x + h * _A21 * k1x; y2 = y + h * _A21 * k1y
        k2x, k2y = -y2, -(v * y2 - fval(x2))
        x3 = x + h * (_A31 * k1x + _A32 * k2x); y3 = y + h * (_A31 * k1y + _A32 * k2y)
        k3x, k3y = -y3, -(v * y3 - fval(x3))
        x4 = x + h * (_A41 * k1x + _A42 * k2x + _A43 * k3x)
        y4 = y + h * (_A41 * k1y + _A42 * k2y + _A43 * k3y)
        k4x, k4y = -y4, -(v * y4 - fval(x4))
        x5 = x + h * (_A51 * k1x + _A52 * k2x + _A53 * k3x + _A54 * k4x)
        y5 = y + h * (_A51 * k1y + _A52 * k2y + _A53 * k3y + _A54 * k4y)
        k5x, k5y = -y5, -(v * y5 - fval(x5))
        x6 = x + h * (_A61 * k1x + _A62 * k2x + _A63 * k3x + _A64 * k4x + _A65 * k5x)
        y6 = y + h * (_A61 * k1y + _A62 * k2y + _A63 * k3y + _A64 * k4y + _A65 * k5y)
        k6x, k6y = -y6, -(v * y6 - fval(x6))
        xn = x + h * (_B1 * k1x + _B3 * k3x + _B4 * k4x + _B5 * k5x + _B6 * k6x)
        yn = y + h * (_B1 * k1y + _B3 * k3y + _B4 * k4y + _B5 * k5y + _B6 * k6y)
        k7x, k7y = -yn, -(v * yn - fval(xn))
        ex = h * (_E1 * k1x + _E3 * k3x + _E4 * k4x + _E5 * k5x + _E6 * k6x + _E7 * k7x)
        ey = h * (_E1 * k1y + _E3 * k3y + _E4 * k4y + _E5 * k5y + _E6 * k6y + _E7 * k7y)
        sx = rtol * max(abs(x), abs(xn)) + 1e-300
        sy = rtol * max(abs(y), abs(yn)) + 1e-300
        err = math.sqrt(0.5 * ((ex / sx) ** 2 + (ey / sy) ** 2))
        if err <= 1.0:
            steps += 1
            if xn <= x_target < x:
                cx, cy = x, y
                hs = h / 64
                for _ in range(64):
                    a1x, a1y = -cy, -(v * cy - fval(cx))
                    bx, by = cx + 0.5 * hs * a1x, cy + 0.5 * hs * a1y
                    a2x, a2y = -by, -(v * by - fval(bx))
                    bx, by = cx + 0.5 * hs * a2x, cy + 0.5 * hs * a2y
                    a3x, a3y = -by, -(v * by - fval(bx))
                    bx, by = cx + hs * a3x, cy + hs * a3y
                    a4x, a4y = -by, -(v * by - fval(bx))
                    nx = cx + hs / 6 * (a1x + 2 * a2x + 2 * a3x + a4x)
                    ny = cy + hs / 6 * (a1y + 2 * a2y + 2 * a3y + a4y)
                    if nx <= x_target < cx:
                        w = (cx - x_target) / (cx - nx)
                        return True, cy + w * (ny - cy), steps
                    cx, cy = nx, ny
                w = (x - x_target) / (x - xn)
                return True, y + w * (yn - y), steps
            tau += h
            x, y = xn, yn
            k1x, k1y = k7x, k7y
            h *= min(5.0, max(0.2, 0.9 * err ** -0.2)) if err > 0 else 5.0
        else:
            h *= max(0.2, 0.9 * err ** -0.2)
    return False, None, steps


def shoot_separatrix(f: Nonlinearity, v: float, saddle: Optional[tuple] = None,
                     h0: float = 1e-8, rtol: float = 1e-10, tau_max: float = 400.0,
                     x_target: float = 0.0, stabilize_h: bool = True) -> ShootResult:
    """Trace the separatrix backward from the saddle; read y at the x_target crossing.

    saddle is (x*, f'(x*)); inferred from the nonlinearity when omitted.  The
    start point sits h0 along the stable eigendirection inside x < x*; with
    stabilize_h the displacement is halved until the slope readout moves by
    less than 1e-9 relative.  Non-convergence (v >= 2, or box exit) yields
    converged=False.
    """
    if saddle is None:
        x_star, fp = saddle_of(f)
    else:
        x_star, fp = saddle
    if fp >= 0:
        raise ValueError("saddle needs f'(x*) < 0")
    mu_stable = 0.5 * (v - math.sqrt(v * v - 4.0 * fp))
    box = (-0.5, x_star + 1.0, -5.0, 5.0)
    fval = _scalar_f(f)

    def one(h: float):
        return _trace_backward(fval, v, x_star - h, -h * mu_stable,
                               x_target, box, rtol, tau_max)

    crossed, nu_out, steps = one(h0)
    if crossed and stabilize_h:
        for _ in range(3):
            crossed2, nu2, steps2 = one(h0 / 2)
            steps += steps2
            if not crossed2 or nu_out == 0.0:
                break
            if abs(nu2 - nu_out) <= 1e-9 * abs(nu_out):
                nu_out = nu2
                break
            h0 /= 2
            nu_out = nu2
    if not crossed or nu_out is None or nu_out <= 0.0:
        return ShootResult(v=v, nu_out=None, converged=False, steps=steps)
    return ShootResult(v=v, nu_out=float(nu_out), converged=True, steps=steps)


# ---------------------------------------------------------------------------
# speed solvers


def kappa_of_nu(f: Nonlinearity, nu: float, tol: float = 1e-6,
                v_lo: float = 1.5, v_hi: float = 2.0 - 1e-9,
                nu_cap: float = 1e-2, max_iter: int = 200) -> float:
    """Invert the boundary slope: the speed v with nu(v) = nu, |err| <= tol*nu.

    Bisection on (v_lo, v_hi); the upper endpoint is never evaluated (its
    slope is astronomically small), the lower endpoint once for bracketing.
    """
    if not 0.0 < nu < nu_cap:
        raise InversionError(f"nu must be in (0, {nu_cap}), got {nu}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    first = shoot_separatrix(f, v_lo)
    if not first.converged or first.nu_out < nu:
        raise InversionError(f"nu(v_lo={v_lo}) does not bracket nu={nu}")
    lo, hi = v_lo, v_hi
    nu_lo = first.nu_out
    best_v, best_nu = v_lo, nu_lo
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        res = shoot_separatrix(f, mid, stabilize_h=False)
        if not res.converged:
            hi = mid
            continue
        if abs(res.nu_out - nu) < abs(best_nu - nu):
            best_v, best_nu = mid, res.nu_out
        if res.nu_out > nu:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13:
            break
    if abs(best_nu - nu) > tol * nu:
        raise InversionError(
            f"bisection stalled: |nu(v)-nu| = {abs(best_nu - nu):.3e} > {tol * nu:.3e}")
    return best_v


def cutoff_wave_speed(theta_cut: float, tol: float = 1e-6,
                      v_lo: float = 1e-3, max_iter: int = 200) -> float:
    """Front speed of the cutoff KPP equation u_t = u_xx + u(1-u) 1(u >= theta).

    Below the cutoff the profile decays purely exponentially, F' = -v F, so
    the separatrix from the saddle (1,0) must cross x = theta_cut with slope
    v * theta_cut; bisection on v.
    """
    if not 0.0 < theta_cut < math.exp(-2.0):
        raise ValueError(f"theta_cut must be in (0, e^-2), got {theta_cut}")
    f = Nonlinearity.fisher()

    def gap(v: float) -> Optional[float]:
        res = shoot_separatrix(f, v, x_target=theta_cut, stabilize_h=False)
        if not res.converged:
            return None
        return res.nu_out - v * theta_cut

    lo, hi = v_lo, 2.0 - 1e-12
    g_lo = gap(lo)
    if g_lo is None or g_lo <= 0:
        raise InversionError("lower bracket failed for the cutoff matching")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        g = gap(mid)
        if g is None or g < 0:
            hi = mid
        else:
            lo = mid
        if hi - lo < max(1e-13, 0.25 * tol * theta_cut):
            break
    return 0.5 * (lo + hi)


def kappabd_interval(nu: float, alpha_fn: Optional[Callable[[float], float]] = None
                     ) -> tuple[float, float]:
    """The two-sided speed bound for the slope-nu comparison front.

    [2 - pi^2/(|log nu| - 3 log|log nu| - log alpha(|log nu|^-3) - 2)^2,
     2 - pi^2/(|log nu| + 3)^2], with alpha(a)=a when alpha_fn is omitted
    (then the lower denominator collapses to |log nu| - 2).
    """
    ln = abs(math.log(nu))
    if alpha_fn is None:
        denom_lo = ln - 2.0
    else:
        denom_lo = ln - 3.0 * math.log(ln) - math.log(alpha_fn(ln ** -3)) - 2.0
    if denom_lo <= 0:
        raise ValueError("nu too large for the printed lower bound")
    lo = 2.0 - math.pi ** 2 / denom_lo ** 2
    hi = 2.0 - math.pi ** 2 / (ln + 3.0) ** 2
    return lo, hi


# ---------------------------------------------------------------------------
# comparison front profile


@dataclass(frozen=True)
class WaveProfile:
    """Three-piece comparison front for the barred reaction term.

    0 for x >= 0; the linearized spiral x_lin(-x) on [-Theta, 0); and for
    x < -Theta the saddle tail
        kappa lam e^{lam (Theta+x)} + 2 - (1 + kappa lam) e^{-varpi (Theta+x)},
    which is value-continuous at -Theta by construction, tends to 2 on the
    far left, and whose single constant kappa is fixed by slope continuity.
    """

    v: float
    delta: float
    delta_hat: float
    nu: float
    theta: float
    varpi: float
    lam: float
    kappa_match: float
    samples: tuple  # ((x, F(x)), ...) on [x_min, 0]

    def evaluate(self, x):
        xs = np.asarray(x, dtype=float)
        out = np.zeros_like(xs)
        mid = (xs < 0.0) & (xs >= -self.theta)
        if np.any(mid):
            dh = self.delta_hat
            s = math.sqrt(dh)
            t = -xs[mid]
            out[mid] = (self.nu / s * np.exp((1.0 - 0.5 * self.delta) * t)
                        * np.sin(s * t))
        tail = xs < -self.theta
        if np.any(tail):
            z = self.theta + xs[tail]
            out[tail] = (self.kappa_match * self.lam * np.exp(self.lam * z)
                         + 2.0 - (1.0 + self.kappa_match * self.lam)
                         * np.exp(-self.varpi * z))
        if np.isscalar(x):
            return float(out)
        return out

    def csv_rows(self):
        for x, fx in self.samples:
            yield (float(x), float(fx))


def _theta_crossing(nu: float, delta: float) -> float:
    """Smallest t > 0 with x_lin(t) = 1."""
    dh = delta - 0.25 * delta * delta
    s = math.sqrt(dh)
    t_peak = (math.pi - math.atan2(s, 1.0 - 0.5 * delta)) / s
    if x_lin(t_peak, nu, delta)[0] < 1.0:
        raise ProfileError("linearized amplitude never reaches 1 at this speed")
    lo, hi = 1e-12, t_peak
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if x_lin(mid, nu, delta)[0] < 1.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


def build_front_profile(f: Nonlinearity, nu: float, v: float,
                        sample_n: int = 16, x_min: Optional[float] = None) -> WaveProfile:
    """Assemble the comparison front with F(0)=0, F'(0)=-nu at speed v < 2.

    Only the barred reaction term is supported (the tail lives at the barred
    saddle).  The matching constant vanishes exactly at the barred connection
    speed kappa(nu) and grows linearly with the speed offset.
    """
    if f.kind != "barred":
        raise ProfileError("comparison profile is defined for the barred term")
    if not (0.0 < 2.0 - v < 2.0):
        raise ProfileError(f"needs 0 < v < 2, got v={v}")
    if nu <= 0:
        raise ProfileError("needs nu > 0")
    delta = 2.0 - v
    dh = delta - 0.25 * delta * delta
    varpi, lam = varpi_lambda(delta)
    theta = _theta_crossing(nu, delta)
    _, xp_theta = x_lin(theta, nu, delta)
    kappa = -(xp_theta + varpi) / (lam * (lam + varpi))
    profile = WaveProfile(v=v, delta=delta, delta_hat=dh, nu=nu, theta=theta,
                          varpi=varpi, lam=lam, kappa_match=float(kappa), samples=())
    # consistency: value continuity is structural; check the slope matching
    h = 1e-6
    left = (profile.evaluate(-theta - h) - profile.evaluate(-theta - 3 * h)) / (2 * h)
    right = (profile.evaluate(-theta + 3 * h) - profile.evaluate(-theta + h)) / (2 * h)
    if abs(profile.evaluate(-theta) - 1.0) > 1e-8 or abs(left - right) > 1e-4 * max(1.0, abs(left)):
        raise ProfileError("continuity matching failed")
    if x_min is None:
        x_min = -(theta + 40.0)
    xs = np.arange(math.floor(x_min * sample_n), 1) / sample_n
    vals = profile.evaluate(xs)
    return WaveProfile(v=v, delta=delta, delta_hat=dh, nu=nu, theta=theta,
                       varpi=varpi, lam=lam, kappa_match=float(kappa),
                       samples=tuple(zip(map(float, xs), map(float, vals))))
