"""F-ary partial-sum search tree for O(log_F n) multinomial sampling.

Drawing from a discrete distribution with weights w reduces to: compute the
running prefix sums P[i] = w[0] + ... + w[i], draw u uniform in [0, P[-1]),
and return the minimal index k with P[k] > u.  The tree turns that search
into a top-down descent: level 0 holds the full prefix array, and each
higher level keeps every F-th boundary (the prefix at the last leaf of each
subtree).  A descent therefore compares u against the *same* accumulated
values a linear scan would, which makes the two bit-for-bit identical for
every u — including in 32-bit mode, where rounding would otherwise let a
subtract-and-descend scheme drift off the scan result.

Weights of zero occupy no interval, so zero-weight leaves can never be
returned.  All comparisons happen in the tree's own precision; `sample`
casts u down before descending.
"""

import numpy as np

from .errors import EmptyDistributionError


class PrefixTree:
    """Immutable search tree over the prefix sums of non-negative weights.

    Attributes
    ----------
    fanout : branching factor F (>= 2)
    levels : list of arrays; levels[0] is the leaf prefix array, each
        higher level keeps the last boundary of every group of F entries,
        up to the single-entry root.
    total : sum of all weights (the root boundary).
    height : number of levels above the leaves, ceil(log_F n).
    """

    def __init__(self, levels, fanout):
        self.levels = levels
        self.fanout = fanout
        self.total = float(levels[0][-1])
        self.dtype = levels[0].dtype

    @property
    def height(self):
        return len(self.levels) - 1

    @property
    def num_leaves(self):
        return len(self.levels[0])

    def leaf_weights(self):
        """Recover the individual leaf weights (prefix differences)."""
        return np.diff(self.levels[0], prepend=self.dtype.type(0))

    def level_sums(self, level):
        """Per-node weight totals at `level`, for consistency checks."""
        return np.diff(self.levels[level], prepend=self.dtype.type(0))

    def prefix_before(self, index):
        """Prefix sum of all leaves strictly left of `index` (0 for index 0)."""
        if index == 0:
            return self.dtype.type(0)
        return self.levels[0][index - 1]

    def sample(self, u):
        """Return the minimal index k with prefix(k) > u.

        u must lie in [0, total).  Equals a linear scan of the leaf prefix
        array exactly, since the descent compares the same boundaries.
        """
        idx, _, _ = self._descend(u)
        return idx

    def sample_with_stats(self, u):
        """Like `sample`, also returning (levels visited, widest scan)."""
        return self._descend(u)

    def _descend(self, u):
        total = self.levels[-1][0]
        if total <= 0:
            raise EmptyDistributionError("cannot sample: total weight is zero")
        u = self.dtype.type(u)
        if u < 0 or u >= total:
            raise ValueError(f"u={u!r} outside [0, {total!r})")
        fanout = self.fanout
        idx = 0
        visited = 0
        widest = 0
        for level in range(self.height - 1, -1, -1):
            bounds = self.levels[level]
            lo = idx * fanout
            hi = min(lo + fanout, len(bounds))
            idx = hi - 1  # last child always bounds u from above
            for j in range(lo, hi):
                if bounds[j] > u:
                    idx = j
                    break
            visited += 1
            widest = max(widest, hi - lo)
        return idx, visited, widest

    def sample_many(self, us):
        """Vectorized draw for an array of u values.

        Binary search on the leaf prefix array; returns the same indices as
        calling `sample` on each u (both locate the minimal prefix > u).
        """
        us = np.asarray(us, dtype=self.dtype)
        total = self.levels[-1][0]
        if total <= 0:
            raise EmptyDistributionError("cannot sample: total weight is zero")
        if np.any(us < 0) or np.any(us >= total):
            raise ValueError("u values outside [0, total)")
        return np.searchsorted(self.levels[0], us, side="right")


def build(weights, fanout=32, dtype=np.float32):
    """Build a PrefixTree over `weights` with the given fanout.

    The prefix sums accumulate left to right in `dtype`; pass float64 for
    the high-precision oracle mode used in tests.
    """
    if fanout < 2:
        raise ValueError(f"fanout must be >= 2, got {fanout}")
    weights = np.asarray(weights)
    if weights.ndim != 1 or weights.size == 0:
        raise EmptyDistributionError("weights must be a non-empty 1-d array")
    if not np.all(weights >= 0):
        raise ValueError("weights must be non-negative")
    levels = [np.cumsum(weights.astype(dtype, copy=False), dtype=dtype)]
    while len(levels[-1]) > 1:
        prev = levels[-1]
        tails = np.minimum(
            np.arange(fanout - 1, len(prev) + fanout - 1, fanout), len(prev) - 1
        )
        levels.append(prev[tails])
    return PrefixTree(levels, fanout)


def sample_total_and_draw(tree, stream):
    """Draw u uniform over [0, total) from `stream` and sample the tree.

    Returns (index, u); u is reported so a draw can be replayed exactly.
    """
    if tree.total <= 0:
        raise EmptyDistributionError("cannot sample: total weight is zero")
    u = stream.uniform() * tree.total
    u = tree.dtype.type(u)
    top = tree.levels[-1][0]
    if u >= top:  # guard the measure-zero rounding of u * total up to total
        u = np.nextafter(top, tree.dtype.type(0))
    return tree.sample(u), float(u)
