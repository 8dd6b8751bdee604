"""Jitted inner loops for the lattice SPDE and the dual particle system.

The noise sub-step is moment-exact sampling on the 1/N particle grid,
N = 1/(n eps^2 dt): Wright-Fisher intensities resample from Binomial(N, u)/N
and sqrt-u intensities from Poisson(N u)/N, switching to the matching
Gaussian when the count scale exceeds LAM_SWITCH.  Mean and variance agree
with the Euler-Maruyama increment exactly; unlike Gaussian-plus-clamping the
sampler is nonnegative with the correct absorption atom at 0, which is what
keeps small-u statistics (front slowdown, extinction) faithful.  The printed
Gaussian-clamp update is retained as an optional scheme for bias studies.

All randomness is keyed by (seed, step, absolute site) through splitmix64.
"""

import math

import numpy as np
from numba import njit

U64 = np.uint64
_M1 = U64(0xBF58476D1CE4E5B9)
_M2 = U64(0x94D049BB133111EB)
_GOLD = U64(0x9E3779B97F4A7C15)

# nonlinearity codes
F_FISHER, F_BARRED, F_SHARP, F_UNDERLINE, F_CUTOFF, F_TABLE = 0, 1, 2, 3, 4, 5
# noise codes
N_NONE, N_WF, N_SQRTU, N_TABLE = 0, 1, 2, 3
# noise schemes
S_QUANTIZED, S_GAUSS_CLAMP = 0, 1

LAM_SWITCH = 25.0


@njit(cache=True, inline="always")
def _mix(z):
    z = (z ^ (z >> U64(30))) * _M1
    z = (z ^ (z >> U64(27))) * _M2
    return z ^ (z >> U64(31))


@njit(cache=True, inline="always")
def _u01_pair(seed, step, site):
    base = _mix(U64(seed) ^ _mix(U64(step) * _GOLD))
    h1 = _mix(U64(site) * _M1 ^ base)
    h2 = _mix(h1 ^ _GOLD)
    u1 = (np.float64(h1 >> U64(11)) + 1.0) * (2.0 ** -53)
    u2 = np.float64(h2 >> U64(11)) * (2.0 ** -53)
    return u1, u2


@njit(cache=True, inline="always")
def _gauss(u1, u2):
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


@njit(cache=True, inline="always")
def _poisson_inv(u, lam):
    term = math.exp(-lam)
    cum = term
    k = 0.0
    while u > cum and k < 2000.0:
        k += 1.0
        term *= lam / k
        cum += term
    return k


@njit(cache=True, inline="always")
def _binom_inv(u, ntr, p):
    # inverse CDF of Binomial(ntr, p); only used with ntr*p <= ~LAM_SWITCH
    q = 1.0 - p
    term = math.exp(ntr * math.log(q))
    cum = term
    k = 0.0
    ratio = p / q
    while u > cum and k < ntr:
        term *= (ntr - k) / (k + 1.0) * ratio
        k += 1.0
        cum += term
    return k


@njit(cache=True, inline="always")
def _eval_f(kind, p1, p2, tab_u, tab_f, u):
    if kind == F_FISHER:
        return u * (1.0 - u)
    if kind == F_BARRED:
        return u if u <= 1.0 else 2.0 - u
    if kind == F_SHARP:
        # p1=a, p2=alpha
        return p1 * u if u <= 0.5 * p2 else p1 * (0.5 * p2 - u)
    if kind == F_UNDERLINE:
        s = 1.0 - p1
        return s * u if u <= 0.5 * p2 else s * (0.5 * p2 - u)
    if kind == F_CUTOFF:
        return u * (1.0 - u) if u >= p1 else 0.0
    # table: linear interpolation, end-slope extension
    m = tab_u.shape[0]
    if u <= tab_u[0]:
        sl = (tab_f[1] - tab_f[0]) / (tab_u[1] - tab_u[0])
        return tab_f[0] + sl * (u - tab_u[0])
    if u >= tab_u[m - 1]:
        sl = (tab_f[m - 1] - tab_f[m - 2]) / (tab_u[m - 1] - tab_u[m - 2])
        return tab_f[m - 1] + sl * (u - tab_u[m - 1])
    lo, hi = 0, m - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if tab_u[mid] <= u:
            lo = mid
        else:
            hi = mid
    w = (u - tab_u[lo]) / (tab_u[lo + 1] - tab_u[lo])
    return tab_f[lo] + w * (tab_f[lo + 1] - tab_f[lo])


@njit(cache=True, inline="always")
def _eval_sigma2(kind, tab_u, tab_s2, u):
    if kind == N_WF:
        return u * (1.0 - u) if u <= 1.0 else 0.0
    if kind == N_SQRTU:
        return u
    if kind == N_TABLE:
        m = tab_u.shape[0]
        if u <= tab_u[0]:
            return max(tab_s2[0], 0.0)
        if u >= tab_u[m - 1]:
            return max(tab_s2[m - 1], 0.0)
        lo, hi = 0, m - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if tab_u[mid] <= u:
                lo = mid
            else:
                hi = mid
        w = (u - tab_u[lo]) / (tab_u[lo + 1] - tab_u[lo])
        return max(tab_s2[lo] + w * (tab_s2[lo + 1] - tab_s2[lo]), 0.0)
    return 0.0


@njit(cache=True, inline="always")
def _wf_sample(ut, nq, u1, u2):
    # resample around ut on the 1/nq grid; mass above 1 carries noiselessly
    p = ut
    if p < 0.0:
        p = 0.0
    excess = 0.0
    if p > 1.0:
        excess = p - 1.0
        p = 1.0
    lam_lo = nq * p
    lam_hi = nq * (1.0 - p)
    if lam_lo <= LAM_SWITCH:
        v = _binom_inv(u1, nq, p) / nq
    elif lam_hi <= LAM_SWITCH:
        v = 1.0 - _binom_inv(u1, nq, 1.0 - p) / nq
    else:
        v = p + math.sqrt(p * (1.0 - p) / nq) * _gauss(u1, u2)
        if v < 0.0:
            v = 0.0
        elif v > 1.0:
            v = 1.0
    return v + excess


@njit(cache=True, inline="always")
def _sqrtu_sample(ut, nq, u1, u2):
    p = ut
    if p < 0.0:
        p = 0.0
    lam = nq * p
    if lam <= LAM_SWITCH:
        return _poisson_inv(u1, lam) / nq
    v = p + math.sqrt(p / nq) * _gauss(u1, u2)
    return v if v > 0.0 else 0.0


@njit(cache=True)
def step_field(u, out, n, dt, f_kind, f_p1, f_p2, f_tab_u, f_tab_f,
               noise_kind, s_tab_u, s_tab_s2, scheme, eps, nq, clamp,
               left_ghost, right_ghost, kill_left_upto, kill_right_from,
               seed, step_index, site_offset):
    """One explicit step: drift update then noise sub-step, then killing.

    nq is the quantization count 1/(n eps^2 dt); kill_left_upto /
    kill_right_from are in-array index bounds (use -1 and m to disable).
    Sites receive randomness keyed by site_offset + i, so window shifts keep
    the same physical noise.  Result is written to out.
    """
    m = u.shape[0]
    c1 = dt * n * n
    noisy = noise_kind != N_NONE and eps > 0.0
    for i in range(m):
        ul = u[i - 1] if i > 0 else left_ghost
        ur = u[i + 1] if i < m - 1 else right_ghost
        ui = u[i]
        ut = ui + c1 * (ul - 2.0 * ui + ur) + dt * _eval_f(f_kind, f_p1, f_p2, f_tab_u, f_tab_f, ui)
        if noisy:
            u1, u2 = _u01_pair(seed, step_index, site_offset + i)
            if scheme == S_QUANTIZED and noise_kind == N_WF:
                ut = _wf_sample(ut, nq, u1, u2)
            elif scheme == S_QUANTIZED and noise_kind == N_SQRTU:
                ut = _sqrtu_sample(ut, nq, u1, u2)
            else:
                s2 = _eval_sigma2(noise_kind, s_tab_u, s_tab_s2, ui)
                if s2 < 0.0:
                    s2 = 0.0
                ut = ut + math.sqrt(n * dt * s2) * eps * _gauss(u1, u2)
                if clamp and ut < 0.0:
                    ut = 0.0
        elif clamp and ut < 0.0:
            ut = 0.0
        out[i] = ut
    if kill_left_upto >= 0:
        stop = kill_left_upto + 1
        if stop > m:
            stop = m
        for i in range(stop):
            out[i] = 0.0
    if kill_right_from < m:
        start = kill_right_from
        if start < 0:
            start = 0
        for i in range(start, m):
            out[i] = 0.0


@njit(cache=True)
def mc_survival(u0, n, dt, nsteps, f_kind, f_p1, f_p2, f_tab_u, f_tab_f,
                noise_kind, s_tab_u, s_tab_s2, scheme, eps, nq, clamp,
                inj_steps, inj_sites, inj_mass, exit_lo, exit_hi, seeds):
    """Fixed-window replica ensemble for the survival experiments.

    Injection atoms (step index, site, mass) are applied after the step they
    belong to; a site atom of mass q raises u by q*n.  Returns per-replica
    (extinct, exited, final_mass) where extinct means total mass < 1e-14 at
    the horizon and exited means support touched [0, exit_lo] or
    [exit_hi, m) at any time (disable with exit_lo=-1, exit_hi=m).
    """
    reps = seeds.shape[0]
    m = u0.shape[0]
    extinct = np.zeros(reps, dtype=np.bool_)
    exited = np.zeros(reps, dtype=np.bool_)
    masses = np.zeros(reps)
    n_inj = inj_steps.shape[0]
    for r in range(reps):
        u = u0.copy()
        buf = np.empty(m)
        seed = seeds[r]
        inj_next = 0
        dead = False
        for k in range(nsteps):
            step_field(u, buf, n, dt, f_kind, f_p1, f_p2, f_tab_u, f_tab_f,
                       noise_kind, s_tab_u, s_tab_s2, scheme, eps, nq, clamp,
                       0.0, 0.0, -1, m, seed, k, 0)
            tmp = u
            u = buf
            buf = tmp
            while inj_next < n_inj and inj_steps[inj_next] == k:
                u[inj_sites[inj_next]] += inj_mass[inj_next] * n
                inj_next += 1
            if exit_lo >= 0 or exit_hi < m:
                for i in range(exit_lo + 1):
                    if u[i] > 0.0:
                        exited[r] = True
                        break
                if not exited[r]:
                    for i in range(exit_hi, m):
                        if u[i] > 0.0:
                            exited[r] = True
                            break
            s = 0.0
            for i in range(m):
                s += u[i]
            if s == 0.0 and inj_next >= n_inj:
                dead = True
                break
        if dead:
            masses[r] = 0.0
            extinct[r] = True
        else:
            s = 0.0
            for i in range(m):
                s += u[i]
            masses[r] = s / n
            extinct[r] = masses[r] < 1e-14
    return extinct, exited, masses


@njit(cache=True)
def mc_terminal_value(u0, n, dt, nsteps, f_kind, f_p1, f_p2, f_tab_u, f_tab_f,
                      noise_kind, s_tab_u, s_tab_s2, scheme, eps, nq, clamp,
                      left_ghost, eval_site, seeds):
    """Per-replica terminal field value u(t, eval_site) on a fixed window."""
    reps = seeds.shape[0]
    m = u0.shape[0]
    vals = np.empty(reps)
    for r in range(reps):
        u = u0.copy()
        buf = np.empty(m)
        seed = seeds[r]
        for k in range(nsteps):
            step_field(u, buf, n, dt, f_kind, f_p1, f_p2, f_tab_u, f_tab_f,
                       noise_kind, s_tab_u, s_tab_s2, scheme, eps, nq, clamp,
                       left_ghost, 0.0, -1, m, seed, k, 0)
            tmp = u
            u = buf
            buf = tmp
        vals[r] = u[eval_site]
    return vals


# ---------------------------------------------------------------------------
# dual branching-coalescing walk


@njit(cache=True, inline="always")
def _u01(seed, step, ctr):
    u1, _ = _u01_pair(seed, step, ctr)
    return u1


@njit(cache=True)
def dual_replica(pos0, n, dt, nsteps, eps2, c_coal, seed, cap,
                 rec_every, rec_N, rec_R, rec_L):
    """One dual trajectory.  Event order per step: move, branch, coalesce.

    Particles jump +-1 site w.p. n^2 dt each way, branch in place w.p. dt,
    and each co-located unordered pair coalesces w.p. c_coal * eps2 * n * dt.
    Recording slot k//rec_every receives (count, max site, min site); empty
    states record count 0 and sentinel positions.  Returns (final positions,
    count, capped flag).
    """
    p_jump = n * n * dt
    p_branch = dt
    p_coal = c_coal * eps2 * n * dt
    if p_coal > 1.0:
        p_coal = 1.0
    pos = np.empty(cap, dtype=np.int64)
    cnt = pos0.shape[0]
    for j in range(cnt):
        pos[j] = pos0[j]
    capped = False
    n_rec = rec_N.shape[0]
    for k in range(nsteps):
        if rec_every > 0 and k % rec_every == 0 and k // rec_every < n_rec:
            slot = k // rec_every
            rec_N[slot] = cnt
            if cnt > 0:
                mx = pos[0]
                mn = pos[0]
                for j in range(1, cnt):
                    if pos[j] > mx:
                        mx = pos[j]
                    if pos[j] < mn:
                        mn = pos[j]
                rec_R[slot] = mx
                rec_L[slot] = mn
            else:
                rec_R[slot] = np.int64(-(2 ** 60))
                rec_L[slot] = np.int64(2 ** 60)
        if cnt == 0:
            continue
        ctr = 0
        # move
        for j in range(cnt):
            u = _u01(seed, k, ctr)
            ctr += 1
            if u < p_jump:
                pos[j] += 1
            elif u < 2.0 * p_jump:
                pos[j] -= 1
        # branch
        born = 0
        for j in range(cnt):
            u = _u01(seed, k, ctr)
            ctr += 1
            if u < p_branch and cnt + born < cap:
                pos[cnt + born] = pos[j]
                born += 1
        cnt += born
        if cnt >= cap:
            capped = True
        # coalesce: count pairs per occupied site
        if cnt > 1 and p_coal > 0.0:
            sub = np.sort(pos[:cnt])
            w = 0
            i0 = 0
            while i0 < cnt:
                i1 = i0
                while i1 + 1 < cnt and sub[i1 + 1] == sub[i0]:
                    i1 += 1
                group = i1 - i0 + 1
                keep = group
                if group > 1:
                    pairs = group * (group - 1) // 2
                    removed = 0
                    for _p in range(pairs):
                        u = _u01(seed, k, ctr)
                        ctr += 1
                        if u < p_coal:
                            removed += 1
                    if removed > group - 1:
                        removed = group - 1
                    keep = group - removed
                for _j in range(keep):
                    sub[w] = sub[i0]
                    w += 1
                i0 = i1 + 1
            for j in range(w):
                pos[j] = sub[j]
            cnt = w
    return pos[:cnt].copy(), cnt, capped


@njit(cache=True)
def mc_dual_all_positive(x0_site, n, dt, nsteps, eps2, c_coal, seed_base, cap, reps):
    """P(all dual particles sit at sites > 0 at the horizon), one start site."""
    hits = 0
    capped = 0
    rec_N = np.empty(0, dtype=np.int64)
    rec_R = np.empty(0, dtype=np.int64)
    rec_L = np.empty(0, dtype=np.int64)
    start = np.empty(1, dtype=np.int64)
    start[0] = x0_site
    for r in range(reps):
        seed = U64(seed_base) + U64(r) * _GOLD
        fin, cnt, was_capped = dual_replica(start, n, dt, nsteps, eps2, c_coal,
                                            seed, cap, 0, rec_N, rec_R, rec_L)
        if was_capped:
            capped += 1
        ok = True
        for j in range(cnt):
            if fin[j] <= 0:
                ok = False
                break
        if ok:
            hits += 1
    return hits, capped
