"""Counter-based random numbers (Philox4x32-10) keyed by integer tuples.

Every deviate is a pure function of ``(seed, counter)``; nothing is
carried between calls, so results do not depend on how work is split
across workers or in which order nodes are visited.
"""
import numpy as np

PHILOX_M0 = np.uint64(0xD2511F53)
PHILOX_M1 = np.uint64(0xCD9E8D57)
PHILOX_W0 = np.uint64(0x9E3779B9)
PHILOX_W1 = np.uint64(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)

# high byte of the fourth counter word separates independent streams
TAG_NOISE = 0
TAG_INIT = 1
TAG_SPIKES = 2
TAG_LIF = 3

TWO_PI = 6.283185307179586
_INV_2_53 = 1.0 / 9007199254740992.0


def split_seed(seed):
    """Return the two 32-bit key words of a 64-bit seed."""
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    return seed & 0xFFFFFFFF, seed >> 32


def philox4x32(c0, c1, c2, c3, k0, k1, rounds=10):
    """Vectorised Philox4x32 block function.

    Counter words broadcast against each other; returns four uint64 arrays
    holding 32-bit outputs.
    """
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) & _MASK32 for c in (c0, c1, c2, c3))
    c0, c1, c2, c3 = np.broadcast_arrays(c0, c1, c2, c3)
    k0 = np.uint64(k0)
    k1 = np.uint64(k1)
    for _ in range(rounds):
        p0 = PHILOX_M0 * c0
        p1 = PHILOX_M1 * c2
        hi0, lo0 = p0 >> _SHIFT32, p0 & _MASK32
        hi1, lo1 = p1 >> _SHIFT32, p1 & _MASK32
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        k0 = (k0 + PHILOX_W0) & _MASK32
        k1 = (k1 + PHILOX_W1) & _MASK32
    return c0, c1, c2, c3


def _to_unit(lo, hi):
    # 53-bit mantissa in [0, 1)
    return ((lo | (hi << _SHIFT32)) >> np.uint64(11)).astype(np.float64) * _INV_2_53


def uniform_pair(seed, c0, c1, c2, c3):
    """Two independent U[0,1) arrays for each counter."""
    k0, k1 = split_seed(seed)
    x0, x1, x2, x3 = philox4x32(c0, c1, c2, c3, k0, k1)
    return _to_unit(x0, x1), _to_unit(x2, x3)


def counter_words(a, step, b, tag):
    """Standard counter layout ``(a, step_lo, step_hi, b | tag << 24)``."""
    step = np.asarray(step, dtype=np.uint64)
    return (np.asarray(a, dtype=np.uint64), step & _MASK32, step >> _SHIFT32,
            np.asarray(b, dtype=np.uint64) | np.uint64(tag << 24))


def gaussian(seed, node, step, var, tag=TAG_NOISE):
    """Standard normal deviates keyed by (seed, node, step, var) via Box-Muller."""
    u1, u2 = uniform_pair(seed, *counter_words(node, step, var, tag))
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(TWO_PI * u2)


def uniform(seed, a, step, b, tag):
    """U[0,1) deviates keyed by (seed, a, step, b) in stream ``tag``."""
    return uniform_pair(seed, *counter_words(a, step, b, tag))[0]
