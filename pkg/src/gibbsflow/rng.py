"""Deterministic random streams built on the splitmix64 mixer.

Every random decision in the library is drawn from a `Stream` keyed by a
tuple of 64-bit values (seed, chunk id, iteration, ...).  Streams advance a
counter through the splitmix64 finalizer, so a stream's output depends only
on its key, never on which thread consumed it or in what order streams were
created.  The same routines are compiled with numba and used unchanged
inside the sampling kernels.
"""

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U53_INV = 1.0 / 9007199254740992.0  # 2**-53


@njit(cache=True, inline="always")
def _finalize(x):
    # splitmix64 output function (Steele, Lea & Flood's SplittableRandom)
    z = x
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def mix64(parts):
    """Fold an array of uint64 key parts into one well-mixed 64-bit key."""
    h = _GOLDEN
    for p in parts:
        h = _finalize(h + _GOLDEN + np.uint64(p))
    return h


@njit(cache=True, inline="always")
def stream_uniform(key, counter):
    """The `counter`-th float64 in [0, 1) of the stream named by `key`."""
    bits = _finalize(key + _GOLDEN * (counter + np.uint64(1)))
    return np.float64(bits >> np.uint64(11)) * _U53_INV


def stream_key(*parts):
    """Build a stream key from integer parts (seed, chunk id, iteration...).

    Always returns np.uint64: passing a plain Python int into the jitted
    stream functions would dispatch as int64 and silently promote the
    wrapping arithmetic to float64.
    """
    arr = np.array([np.uint64(p & 0xFFFFFFFFFFFFFFFF) for p in parts], dtype=np.uint64)
    return np.uint64(mix64(arr))


class Stream:
    """Stateful view over a counter-based uniform stream.

    Two streams with the same key parts produce the same sequence on any
    machine; consuming a stream never perturbs any other stream.
    """

    def __init__(self, *parts):
        self.key = stream_key(*parts)
        self.counter = 0

    def uniform(self):
        """Next float64 in [0, 1)."""
        u = stream_uniform(self.key, np.uint64(self.counter))
        self.counter += 1
        return u

    def uniforms(self, n):
        """Next `n` uniforms as a float64 array (same values as n calls)."""
        out = _uniform_block(self.key, np.uint64(self.counter), n)
        self.counter += n
        return out

    def integer(self, n):
        """Uniform integer in [0, n)."""
        return min(int(self.uniform() * n), n - 1)


@njit(cache=True)
def _uniform_block(key, counter, n):
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        out[i] = stream_uniform(key, counter + np.uint64(i))
    return out
