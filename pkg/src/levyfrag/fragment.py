"""Fragmentation at height read off a discrete tree.

The components of ``{depth > d}`` are exactly the subtrees rooted at depth
``d + 1``, so every statistic here reduces to subtree sizes grouped by depth.
Continuum levels and masses are mapped to depths and vertex counts through a
:class:`LevelMap`.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .treesim import TreeStats

MAX_RANKED = 2**12


@dataclass(frozen=True)
class LevelMap:
    """Continuum level t <-> tree depth, continuum mass <-> vertex count."""

    alpha: float
    n0: int
    c_H: float = 1.0

    def __post_init__(self):
        if self.n0 < 1:
            raise DomainError(f"n0 must be >= 1, got {self.n0}")
        if not self.c_H > 0:
            raise DomainError(f"c_H must be > 0, got {self.c_H}")

    @property
    def scale(self) -> float:
        """Depth units per unit of level."""
        return self.c_H * self.n0 ** ((self.alpha - 1.0) / self.alpha)

    def real_depth(self, t: float) -> float:
        if t < 0:
            raise DomainError(f"level must be >= 0, got {t}")
        return t * self.scale

    def depth_of(self, t: float) -> int:
        return int(math.floor(self.real_depth(t)))

    def level_of(self, depth: float) -> float:
        return depth / self.scale

    def mass_of(self, count):
        return np.asarray(count) / self.n0


def linear_depth_weights(x: float) -> tuple[int, float]:
    """Split a real depth ``x >= 0`` as ``(d, w)`` with ``x = d + w``, ``0 <= w < 1``.

    A per-depth quantity F is read at ``x`` as ``(1 - w) F[d] + w F[d + 1]``.
    """
    if x < 0:
        raise DomainError(f"real depth must be >= 0, got {x}")
    d = int(math.floor(x))
    return d, x - d


def fragments_at_level(stats: TreeStats, d: int) -> np.ndarray:
    """Vertex counts of the components of ``{depth > d}``, largest first."""
    if d < 0:
        raise DomainError(f"depth must be >= 0, got {d}")
    sizes = stats.subtree_size[stats.vertices_at_depth(d + 1)]
    return np.sort(sizes)[::-1]


@dataclass(frozen=True)
class FragmentationCurve:
    """Ranked fragment masses per level.

    Each sequence keeps at most ``MAX_RANKED`` entries; the mass of the rest is
    held in ``remainder``.
    """

    levels: np.ndarray
    masses: tuple
    remainder: np.ndarray

    def total_mass(self) -> np.ndarray:
        return np.array([m.sum() for m in self.masses]) + self.remainder

    def largest(self) -> np.ndarray:
        return np.array([m[0] if len(m) else 0.0 for m in self.masses])

    def write_csv(self, fh):
        """Rows ``t, rank, mass``; rank 0 carries a nonzero truncation remainder."""
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["t", "rank", "mass"])
        for t, seq, rest in zip(self.levels, self.masses, self.remainder):
            for rank, mass in enumerate(seq, start=1):
                out.writerow([repr(float(t)), rank, repr(float(mass))])
            if rest > 0:
                out.writerow([repr(float(t)), 0, repr(float(rest))])


def fragmentation_curve(stats: TreeStats, level_map: LevelMap, t_grid) -> FragmentationCurve:
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size and np.any(np.diff(t_grid) <= 0):
        raise DomainError("t_grid must be strictly increasing")
    masses, remainder = [], []
    for t in t_grid:
        counts = fragments_at_level(stats, level_map.depth_of(t))
        masses.append(counts[:MAX_RANKED] / level_map.n0)
        remainder.append(counts[MAX_RANKED:].sum() / level_map.n0)
    return FragmentationCurve(t_grid, tuple(masses), np.array(remainder, dtype=float))


@dataclass(frozen=True)
class TaggedEvent:
    depth: int
    level: float
    pre_count: int
    piece_counts: np.ndarray
    n0: int

    @property
    def pre_mass(self) -> float:
        return self.pre_count / self.n0

    @property
    def pieces(self) -> np.ndarray:
        return self.piece_counts / self.n0

    @property
    def dust(self) -> float:
        return 1.0 / self.n0


@dataclass(frozen=True)
class TaggedPath:
    tagged_vertex: int
    events: tuple

    def check_conservation(self) -> bool:
        """Pieces plus the crossed vertex account for the pre-event fragment."""
        return all(int(e.piece_counts.sum()) + 1 == e.pre_count for e in self.events)


def ancestors(stats: TreeStats, v: int) -> np.ndarray:
    """Strict ancestors of ``v``, root first."""
    chain = []
    p = stats.parent[v]
    while p >= 0:
        chain.append(p)
        p = stats.parent[p]
    return np.array(chain[::-1], dtype=np.int64)


def tagged_path(stats: TreeStats, level_map: LevelMap, tagged: int) -> TaggedPath:
    """One event per strict ancestor of ``tagged``: the fragment it sat in splits."""
    if not 0 <= tagged < stats.total_progeny:
        raise DomainError(f"tagged vertex {tagged} out of range")
    events = []
    for a in ancestors(stats, tagged):
        kids = stats.children(a)
        pieces = np.sort(stats.subtree_size[kids])[::-1]
        d = int(stats.depth[a])
        events.append(
            TaggedEvent(
                depth=d,
                level=level_map.level_of(d),
                pre_count=int(stats.subtree_size[a]),
                piece_counts=pieces,
                n0=level_map.n0,
            )
        )
    return TaggedPath(int(tagged), tuple(events))


@dataclass(frozen=True)
class SmallFragStats:
    t: float
    eps_grid: np.ndarray
    N_eps: np.ndarray
    M_eps: np.ndarray


def small_fragment_stats(stats: TreeStats, level_map: LevelMap, t: float, eps_grid) -> SmallFragStats:
    """Counts of fragments with mass >= eps and total mass of those <= eps."""
    eps_grid = np.asarray(eps_grid, dtype=float)
    if np.any(eps_grid <= 0) or np.any(np.diff(eps_grid) <= 0):
        raise DomainError("eps_grid must be positive and strictly increasing")
    masses = np.sort(fragments_at_level(stats, level_map.depth_of(t))) / level_map.n0
    below = np.searchsorted(masses, eps_grid, side="left")
    at_most = np.searchsorted(masses, eps_grid, side="right")
    cum = np.concatenate([[0.0], np.cumsum(masses)])
    return SmallFragStats(
        t=float(t),
        eps_grid=eps_grid,
        N_eps=len(masses) - below,
        M_eps=cum[at_most],
    )


@dataclass(frozen=True)
class LocalTimeProfile:
    t_grid: np.ndarray
    values: np.ndarray
    window: int
    c_L: float
    mode: str


def default_window(level_map: LevelMap) -> int:
    """Five percent of a unit level, at least one depth."""
    return max(1, int(math.floor(0.05 * level_map.scale)))


def local_time_scale(level_map: LevelMap, c_L: float) -> float:
    """Local time carried by one vertex per unit depth window."""
    return c_L * level_map.c_H * level_map.n0 ** (-1.0 / level_map.alpha)


def interpolated_counts(hist: np.ndarray, y: float) -> float:
    """Depth histogram read at real depth ``y`` (clamped to 0 below the root)."""
    d, w = linear_depth_weights(max(y, 0.0))
    lo = hist[d] if d < len(hist) else 0
    hi = hist[d + 1] if d + 1 < len(hist) else 0
    return (1.0 - w) * lo + w * hi


def local_time_profile(
    stats: TreeStats,
    level_map: LevelMap,
    t_grid,
    window: int | None = None,
    c_L: float = 1.0,
    mode: str = "window",
) -> LocalTimeProfile:
    """Local time at each level from vertex counts per depth.

    ``mode="window"`` counts vertices with ``depth_of(t) < depth <= depth_of(t) + window``
    and divides by ``window``; these are the roots (and their first descendants)
    of the fragments at ``t``.  ``mode="interpolated"`` reads the histogram at the
    real depths ``t * scale - 1/2 + j``, ``j < window``: depth ``k`` occupies the
    level interval ``[k, k + 1) / scale`` so its count is centred at ``k + 1/2``.
    """
    if window is None:
        window = default_window(level_map)
    if window < 1:
        raise DomainError(f"window must be >= 1, got {window}")
    t_grid = np.asarray(t_grid, dtype=float)
    hist = stats.depth_histogram
    cum = np.concatenate([[0], np.cumsum(hist)])
    unit = local_time_scale(level_map, c_L)
    values = np.empty(len(t_grid))
    for i, t in enumerate(t_grid):
        if mode == "window":
            d = level_map.depth_of(t)
            lo, hi = min(d + 1, len(hist)), min(d + window + 1, len(hist))
            count = cum[hi] - cum[lo]
        elif mode == "interpolated":
            x = level_map.real_depth(t) - 0.5
            count = sum(interpolated_counts(hist, x + j) for j in range(window))
        else:
            raise DomainError(f"unknown local time mode {mode!r}")
        values[i] = unit * count / window
    return LocalTimeProfile(t_grid, values, int(window), float(c_L), mode)
