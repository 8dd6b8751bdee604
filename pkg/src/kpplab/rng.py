"""Counter-based random numbers keyed by (seed, step, site).

Every stochastic kernel in the package draws its randomness through the
hashes below, so a lattice site receives the same noise regardless of where
it currently sits in the moving simulation window.  Replicas differ only in
their derived seed.  The mixer is the splitmix64 finalizer, which passes
standard avalanche tests and is cheap enough to evaluate per site per step.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_GOLD = 0x9E3779B97F4A7C15

_U64 = np.uint64
_M1_U = _U64(_M1)
_M2_U = _U64(_M2)
_GOLD_U = _U64(_GOLD)


def mix64(z: int) -> int:
    """splitmix64 finalizer on a Python int, reduced mod 2^64."""
    z &= _MASK
    z ^= z >> 30
    z = (z * _M1) & _MASK
    z ^= z >> 27
    z = (z * _M2) & _MASK
    return z ^ (z >> 31)


def derive_seed(master: int, *indices: int) -> int:
    """Stable per-task seed from a master seed and task indices."""
    h = mix64(master)
    for ix in indices:
        h = mix64(h ^ mix64((ix + 1) * _GOLD))
    return h


def step_key(seed: int, step: int) -> int:
    """Per-step base key; combined with site indices by the array hashes."""
    return mix64(seed ^ mix64(step * _GOLD))


def site_uniforms(seed: int, step: int, sites: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two independent uniforms per (seed, step, site): u1 in (0,1], u2 in [0,1)."""
    base = _U64(step_key(seed, step))
    h1 = sites.astype(_U64) * _M1_U ^ base
    h1 = (h1 ^ (h1 >> _U64(30))) * _M1_U
    h1 = (h1 ^ (h1 >> _U64(27))) * _M2_U
    h1 ^= h1 >> _U64(31)
    h2 = h1 ^ _GOLD_U
    h2 = (h2 ^ (h2 >> _U64(30))) * _M1_U
    h2 = (h2 ^ (h2 >> _U64(27))) * _M2_U
    h2 ^= h2 >> _U64(31)
    u1 = ((h1 >> _U64(11)).astype(np.float64) + 1.0) * 2.0 ** -53
    u2 = (h2 >> _U64(11)).astype(np.float64) * 2.0 ** -53
    return u1, u2


def site_normals(seed: int, step: int, sites: np.ndarray) -> np.ndarray:
    """Standard normals per (seed, step, site) via Box-Muller on the hash pair."""
    u1, u2 = site_uniforms(seed, step, sites)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
