"""Per-block tree kernels.

Every kernel grows ``count`` trees from one generator with the same sequence
of draws, so a block of trees is identical whichever statistics are taken
from it.  Overflowed trees are reported with total progeny -1.
"""
import math

import numba as nb
import numpy as np

from ..treesim import _grow, _grow_size, _structure


@nb.njit(cache=True)
def sizes_block(rng, cdf, tail_scale, inv_alpha, cap, count):
    out = np.empty(count, np.int64)
    for i in range(count):
        out[i] = _grow_size(rng, cdf, tail_scale, inv_alpha, cap)
    return out


@nb.njit(cache=True)
def levels_block(rng, cdf, tail_scale, inv_alpha, cap, count, kmax, n0, pvals):
    """Per tree: total progeny, vertex count per depth and damped subtree sums.

    ``Z[i, k]`` counts vertices at depth ``k <= kmax``; ``Z[i, kmax + 1]`` counts
    the deeper ones.  ``A[i, j, k]`` sums ``sub(w) exp(-pvals[j] sub(w) / n0)``
    over vertices ``w`` at depth ``k``.
    """
    total = np.empty(count, np.int64)
    Z = np.zeros((count, kmax + 2), np.int64)
    A = np.zeros((count, pvals.shape[0], kmax + 1))
    offspring = np.empty(cap, np.int64)
    parent = np.empty(cap, np.int64)
    depth = np.empty(cap, np.int64)
    sub = np.empty(cap, np.int64)
    stack = np.empty(cap, np.int64)
    remaining = np.empty(cap, np.int64)
    for i in range(count):
        n = _grow(rng, cdf, tail_scale, inv_alpha, cap, offspring)
        total[i] = n
        if n < 0:
            continue
        _structure(offspring, n, parent, depth, sub, stack, remaining)
        for v in range(n):
            d = depth[v]
            if d > kmax:
                Z[i, kmax + 1] += 1
                continue
            Z[i, d] += 1
            s = sub[v]
            for j in range(pvals.shape[0]):
                A[i, j, d] += s * math.exp(-pvals[j] * s / n0)
    return total, Z, A


@nb.njit(cache=True)
def ngg_block(rng, cdf, tail_scale, inv_alpha, cap, count, n0, delta_count, scale, offset, rate, kind):
    """Per tree: sum over split vertices ``a`` whose second largest child
    subtree has at least ``delta_count`` vertices of

        (sub(a) - 1) / n0 * exp(-rate (depth(a) + offset) / scale) * G(a)

    with ``G = 1`` (kind 0) or ``1 - exp(-(mass of all children but the largest))``
    (kind 1).  ``(sub(a) - 1) / n0`` is the mass of vertices strictly below ``a``,
    i.e. the total mass times the chance that a uniform tag crosses ``a``.
    """
    total = np.empty(count, np.int64)
    val = np.zeros(count)
    offspring = np.empty(cap, np.int64)
    parent = np.empty(cap, np.int64)
    depth = np.empty(cap, np.int64)
    sub = np.empty(cap, np.int64)
    stack = np.empty(cap, np.int64)
    remaining = np.empty(cap, np.int64)
    big1 = np.empty(cap, np.int64)
    big2 = np.empty(cap, np.int64)
    for i in range(count):
        n = _grow(rng, cdf, tail_scale, inv_alpha, cap, offspring)
        total[i] = n
        # two disjoint child subtrees of size >= delta_count are needed
        if n < 2 * delta_count + 1:
            continue
        _structure(offspring, n, parent, depth, sub, stack, remaining)
        for v in range(n):
            big1[v] = 0
            big2[v] = 0
        for v in range(1, n):
            p = parent[v]
            s = sub[v]
            if s > big1[p]:
                big2[p] = big1[p]
                big1[p] = s
            elif s > big2[p]:
                big2[p] = s
        acc = 0.0
        for a in range(n):
            if big2[a] < delta_count:
                continue
            g = 1.0
            if kind == 1:
                g = -math.expm1(-(sub[a] - 1 - big1[a]) / n0)
            acc += (sub[a] - 1) / n0 * math.exp(-rate * (depth[a] + offset) / scale) * g
        val[i] = acc
    return total, val
