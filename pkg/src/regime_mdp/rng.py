"""Counter-based random numbers (Philox4x32-10), vectorized with numpy.

Every draw is a pure function of ``(seed, path, step, channel, m)`` so a path
can be regenerated in isolation, in any order, on any worker.  The compiled
kernel implements the same mapping bit for bit.
"""
from __future__ import annotations

import numpy as np

CH_GAUSS = 0
CH_JUMP = 1

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint32(0x9E3779B9)
_W1 = np.uint32(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)
_SHIFT11 = np.uint64(11)
_TWO_M53 = 2.0 ** -53


def philox4x32(c0, c1, c2, c3, k0, k1):
    """Ten-round Philox bijection; all arguments are uint32 arrays (broadcast)."""
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint32) for c in (c0, c1, c2, c3))
    c0, c1, c2, c3 = np.broadcast_arrays(c0, c1, c2, c3)
    k0 = np.uint32(k0)
    k1 = np.uint32(k1)
    with np.errstate(over="ignore"):
        for r in range(10):
            if r:
                k0 = np.uint32((int(k0) + int(_W0)) & 0xFFFFFFFF)
                k1 = np.uint32((int(k1) + int(_W1)) & 0xFFFFFFFF)
            p0 = c0.astype(np.uint64) * _M0
            p1 = c2.astype(np.uint64) * _M1
            hi0 = (p0 >> _SHIFT32).astype(np.uint32)
            lo0 = (p0 & _MASK32).astype(np.uint32)
            hi1 = (p1 >> _SHIFT32).astype(np.uint32)
            lo1 = (p1 & _MASK32).astype(np.uint32)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


def split_seed(seed: int) -> tuple[int, int]:
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    return seed & 0xFFFFFFFF, seed >> 32


def _open_uniform(hi, lo):
    bits = (hi.astype(np.uint64) << _SHIFT32) | lo.astype(np.uint64)
    return ((bits >> _SHIFT11).astype(np.float64) + 0.5) * _TWO_M53


def uniform_pair(seed, m, step, path, channel):
    """Two uniforms in the open interval (0, 1) per counter."""
    k0, k1 = split_seed(seed)
    r0, r1, r2, r3 = philox4x32(m, step, path, channel, k0, k1)
    return _open_uniform(r0, r1), _open_uniform(r2, r3)


def normal_pair(seed, m, step, path):
    """Two independent standard normals per counter (Box-Muller)."""
    u1, u2 = uniform_pair(seed, m, step, path, CH_GAUSS)
    r = np.sqrt(-2.0 * np.log(u1))
    ang = 2.0 * np.pi * u2
    return r * np.cos(ang), r * np.sin(ang)


def normals(seed, step, paths, d):
    """Standard normal matrix of shape ``(len(paths), d)`` for one Euler step."""
    paths = np.asarray(paths, dtype=np.uint32)
    out = np.empty((paths.size, d))
    for m in range((d + 1) // 2):
        z0, z1 = normal_pair(seed, np.uint32(m), np.uint32(step), paths)
        out[:, 2 * m] = z0
        if 2 * m + 1 < d:
            out[:, 2 * m + 1] = z1
    return out
