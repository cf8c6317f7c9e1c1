"""Critical stable Galton-Watson trees.

The offspring law has generating function ``f(s) = s + (1 - s)**alpha / alpha``,
the canonical critical law attracted to the alpha-stable branching mechanism.
Trees are grown depth first along their Lukasiewicz path: vertex ``i`` in
preorder draws its number of children, and the walk of partial sums of
``children - 1`` first hits -1 at the total progeny.

The hot loops are numba kernels that take a ``numpy.random.Generator`` so the
random stream is the same one numpy would produce.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .errors import DomainError, SamplingError, StructuralError, TreeOverflow

DEFAULT_TAIL_CUT = 2**16
ROOT = -1


@dataclass(frozen=True)
class OffspringLaw:
    """Offspring probabilities p_0..p_K plus a shifted-Pareto tail for k > K.

    Beyond the table, ``k = K + 1 + floor(Y + U)`` where ``Y`` is Lomax with
    index ``alpha`` and scale ``tail_scale`` and ``U`` is uniform; the
    randomized rounding keeps ``E[k]`` equal to ``K + 1 + E[Y]`` exactly, and
    ``tail_scale`` is solved so the law has mean one.
    """

    alpha: float
    probs: np.ndarray
    cdf: np.ndarray
    tail_mass: float
    tail_scale: float

    @property
    def tail_cut(self) -> int:
        return len(self.probs) - 1

    def mean(self) -> float:
        k = np.arange(len(self.probs))
        tail_mean = self.tail_cut + 1 + self.tail_scale / (self.alpha - 1.0)
        return float(math.fsum(k * self.probs) + self.tail_mass * tail_mean)


def offspring_table(alpha: float, tail_cut: int = DEFAULT_TAIL_CUT) -> OffspringLaw:
    if not (1.0 < alpha < 2.0):
        raise DomainError(f"alpha must lie in the open interval (1, 2), got {alpha}")
    if tail_cut < 2:
        raise DomainError(f"tail_cut must be >= 2, got {tail_cut}")
    # (-1)^k binom(alpha, k) by its ratio recursion
    coef = np.empty(tail_cut + 1)
    coef[0] = 1.0
    for k in range(tail_cut):
        coef[k + 1] = coef[k] * (k - alpha) / (k + 1)
    probs = coef / alpha
    probs[1] = 0.0
    k = np.arange(tail_cut + 1)
    tail_mass = 1.0 - math.fsum(probs)
    tail_first_moment = 1.0 - math.fsum(k * probs)
    tail_scale = (alpha - 1.0) * (tail_first_moment / tail_mass - tail_cut - 1)
    cdf = np.cumsum(probs)
    return OffspringLaw(alpha, probs, cdf, tail_mass, tail_scale)


@nb.njit(cache=True)
def _draw_offspring(rng, cdf, tail_scale, inv_alpha):
    u = rng.random()
    if u < cdf[0]:
        return 0
    if u < cdf[2]:
        return 2
    kmax = cdf.shape[0] - 1
    if u < cdf[kmax]:
        return np.searchsorted(cdf, u, side="right")
    y = tail_scale * ((1.0 - rng.random()) ** (-inv_alpha) - 1.0)
    return kmax + 1 + int(math.floor(y + rng.random()))


@nb.njit(cache=True)
def _grow(rng, cdf, tail_scale, inv_alpha, cap, offspring):
    """Fill ``offspring`` in preorder; return total progeny or -1 past ``cap``."""
    pending = 1
    n = 0
    while pending > 0:
        k = _draw_offspring(rng, cdf, tail_scale, inv_alpha)
        offspring[n] = k
        n += 1
        pending += k - 1
        if n + pending > cap:
            return -1
    return n


@nb.njit(cache=True)
def _grow_size(rng, cdf, tail_scale, inv_alpha, cap):
    """Total progeny only (no storage); -1 past ``cap``."""
    pending = 1
    n = 0
    while pending > 0:
        k = _draw_offspring(rng, cdf, tail_scale, inv_alpha)
        n += 1
        pending += k - 1
        if n + pending > cap:
            return -1
    return n


@nb.njit(cache=True)
def _grow_conditioned(rng, cdf, tail_scale, inv_alpha, lo, hi, max_attempts, offspring):
    for attempt in range(1, max_attempts + 1):
        n = _grow(rng, cdf, tail_scale, inv_alpha, hi, offspring)
        if n >= lo:
            return n, attempt
    return -1, max_attempts


@nb.njit(cache=True)
def _structure(offspring, n, parent, depth, sub, stack, remaining):
    """Parent, depth and subtree size of a preorder tree given child counts."""
    top = -1
    for v in range(n):
        if top < 0:
            parent[v] = -1
            depth[v] = 0
        else:
            p = stack[top]
            parent[v] = p
            depth[v] = depth[p] + 1
            remaining[top] -= 1
            if remaining[top] == 0:
                top -= 1
        if offspring[v] > 0:
            top += 1
            stack[top] = v
            remaining[top] = offspring[v]
    for v in range(n):
        sub[v] = 1
    for v in range(n - 1, 0, -1):
        sub[parent[v]] += sub[v]


@nb.njit(cache=True)
def _check_preorder(parent, depth, stack):
    """Depths from a parent array; -1 on success or the first bad vertex."""
    n = parent.shape[0]
    if n == 0 or parent[0] != -1:
        return 0
    depth[0] = 0
    stack[0] = 0
    top = 0
    for v in range(1, n):
        p = parent[v]
        if p < 0 or p >= v:
            return v
        while top >= 0 and stack[top] != p:
            top -= 1
        if top < 0:
            return v
        depth[v] = depth[p] + 1
        top += 1
        stack[top] = v
    return -1


@nb.njit(cache=True)
def _subtree_sizes(parent):
    # parents precede children, so one reverse sweep accumulates sizes
    n = parent.shape[0]
    sub = np.ones(n, np.int64)
    for v in range(n - 1, 0, -1):
        sub[parent[v]] += sub[v]
    return sub


@dataclass(frozen=True)
class PlaneTree:
    """Rooted plane tree stored as a preorder parent array (root has -1)."""

    parent: np.ndarray

    @property
    def total_progeny(self) -> int:
        return int(self.parent.shape[0])

    @classmethod
    def from_offspring(cls, offspring) -> PlaneTree:
        offspring = np.asarray(offspring, dtype=np.int64)
        n = offspring.shape[0]
        if n == 0 or offspring.sum() != n - 1:
            raise StructuralError("child counts do not describe a single tree")
        parent = np.empty(n, np.int64)
        work = [np.empty(n, np.int64) for _ in range(4)]
        _structure(offspring, n, parent, work[0], work[1], work[2], work[3])
        return cls(parent)

    def to_bytes(self) -> bytes:
        """Little-endian u32 length followed by u32 parents (root as 0xFFFFFFFF)."""
        body = self.parent.astype("<i8").astype("<u4")
        return struct.pack("<I", self.total_progeny) + body.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> PlaneTree:
        (n,) = struct.unpack_from("<I", data, 0)
        if len(data) != 4 + 4 * n:
            raise StructuralError(f"dump length {len(data)} does not match n={n}")
        raw = np.frombuffer(data, dtype="<u4", offset=4, count=n).astype(np.int64)
        raw[raw == 0xFFFFFFFF] = ROOT
        return cls(raw)


@dataclass(frozen=True)
class TreeStats:
    depth: np.ndarray
    subtree_size: np.ndarray
    child_ptr: np.ndarray
    child_idx: np.ndarray
    depth_histogram: np.ndarray
    parent: np.ndarray = field(repr=False)
    # vertices grouped by depth: depth_order[depth_ptr[d]:depth_ptr[d + 1]]
    depth_order: np.ndarray = field(repr=False, default=None)
    depth_ptr: np.ndarray = field(repr=False, default=None)

    @property
    def total_progeny(self) -> int:
        return int(self.depth.shape[0])

    @property
    def height(self) -> int:
        return len(self.depth_histogram) - 1

    def children(self, v: int) -> np.ndarray:
        return self.child_idx[self.child_ptr[v]:self.child_ptr[v + 1]]

    def vertices_at_depth(self, d: int) -> np.ndarray:
        if d < 0 or d > self.height:
            return self.depth_order[:0]
        return self.depth_order[self.depth_ptr[d]:self.depth_ptr[d + 1]]


def analyze(tree: PlaneTree) -> TreeStats:
    parent = np.asarray(tree.parent, dtype=np.int64)
    n = parent.shape[0]
    depth = np.empty(n, np.int64)
    bad = _check_preorder(parent, depth, np.empty(max(n, 1), np.int64))
    if bad >= 0:
        raise StructuralError(f"parent array is not a preorder tree (vertex {bad})")
    sub = _subtree_sizes(parent)
    counts = np.bincount(parent[1:], minlength=n)
    child_ptr = np.zeros(n + 1, np.int64)
    np.cumsum(counts, out=child_ptr[1:])
    # stable sort keeps siblings in plane (preorder) order
    child_idx = np.argsort(parent[1:], kind="stable") + 1
    hist = np.bincount(depth)
    depth_ptr = np.zeros(len(hist) + 1, np.int64)
    np.cumsum(hist, out=depth_ptr[1:])
    return TreeStats(
        depth=depth,
        subtree_size=sub,
        child_ptr=child_ptr,
        child_idx=child_idx,
        depth_histogram=hist,
        parent=parent,
        depth_order=np.argsort(depth, kind="stable"),
        depth_ptr=depth_ptr,
    )


def _law_args(law: OffspringLaw):
    return law.cdf, law.tail_scale, 1.0 / law.alpha


def sample_tree(law: OffspringLaw, rng: np.random.Generator, cap: int) -> PlaneTree:
    """One unconditioned critical GW tree; raises TreeOverflow past ``cap`` vertices."""
    if cap < 1:
        raise DomainError(f"cap must be >= 1, got {cap}")
    offspring = np.empty(cap, np.int64)
    n = _grow(rng, *_law_args(law), cap, offspring)
    if n < 0:
        raise TreeOverflow(cap)
    return PlaneTree.from_offspring(offspring[:n])


def sample_total_progeny(law: OffspringLaw, rng: np.random.Generator, cap: int, count: int) -> np.ndarray:
    """Total progeny of ``count`` independent trees; -1 marks overflow."""
    return _sizes(rng, *_law_args(law), cap, count)


@nb.njit(cache=True)
def _sizes(rng, cdf, tail_scale, inv_alpha, cap, count):
    out = np.empty(count, np.int64)
    for i in range(count):
        out[i] = _grow_size(rng, cdf, tail_scale, inv_alpha, cap)
    return out


def size_window(m: int, window: float) -> tuple[int, int]:
    if m < 2:
        raise DomainError(f"conditioning size m must be >= 2, got {m}")
    if not (0.0 < window <= 0.1):
        raise DomainError(f"window must lie in (0, 0.1], got {window}")
    return m, max(m, int(math.floor(m * (1.0 + window))))


def sample_tree_conditioned(
    law: OffspringLaw,
    m: int,
    window: float,
    rng: np.random.Generator,
    max_attempts: int = 10**7,
) -> PlaneTree:
    """Rejection-sample a tree with total progeny in [m, m(1 + window)]."""
    lo, hi = size_window(m, window)
    offspring = np.empty(hi, np.int64)
    n, attempts = _grow_conditioned(rng, *_law_args(law), lo, hi, max_attempts, offspring)
    if n < 0:
        raise SamplingError(
            f"no tree of size in [{lo}, {hi}] after {attempts} attempts",
            acceptance_rate=0.0,
        )
    return PlaneTree.from_offspring(offspring[:n])
