"""Block-parallel Monte Carlo over unconditioned trees.

Trees are grown in fixed-size blocks; block ``b`` always uses the stream
``(seed, "trees", b)``, so tree ``i`` is the same tree whatever the number of
workers, the total tree count, or the statistics taken from it.  Each block
reduces its trees to a matrix of per-tree values, and the blocks' running
moments are merged in block order, which makes every estimate bit-identical
across worker counts.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..errors import DomainError
from ..mechanism import BranchingMechanism, eval_phi
from ..rng import stream
from ..treesim import offspring_table
from . import kernels

TREE_STREAM = "trees"


@dataclass
class Moments:
    """Count, sum and cross-product sum of per-tree value vectors."""

    n: int
    total: np.ndarray
    cross: np.ndarray

    @classmethod
    def empty(cls, dim: int) -> Moments:
        return cls(0, np.zeros(dim), np.zeros((dim, dim)))

    @classmethod
    def of(cls, values: np.ndarray) -> Moments:
        values = np.atleast_2d(np.asarray(values, dtype=float))
        return cls(values.shape[0], values.sum(axis=0), values.T @ values)

    def merge(self, other: Moments) -> Moments:
        return Moments(self.n + other.n, self.total + other.total, self.cross + other.cross)

    @property
    def mean(self) -> np.ndarray:
        return self.total / self.n

    @property
    def cov(self) -> np.ndarray:
        """Sample covariance of one tree's values."""
        m = self.mean
        return (self.cross - self.n * np.outer(m, m)) / (self.n - 1)

    def linear(self, weights) -> tuple[float, float]:
        """Mean and standard error of ``values @ weights``."""
        w = np.asarray(weights, dtype=float)
        var = float(w @ self.cov @ w)
        return float(self.mean @ w), math.sqrt(max(var, 0.0) / self.n)

    def ratio(self, num, den) -> tuple[float, float]:
        """Ratio of two linear means with a delta-method standard error."""
        a = np.asarray(num, dtype=float)
        b = np.asarray(den, dtype=float)
        ma, mb = float(self.mean @ a), float(self.mean @ b)
        r = ma / mb
        grad = (a - r * b) / mb
        var = float(grad @ self.cov @ grad)
        return r, math.sqrt(max(var, 0.0) / self.n)


@dataclass(frozen=True)
class TreeSource:
    """Everything a worker needs to regrow block ``b``."""

    alpha: float
    n0: int
    cap: int
    seed: int
    block_size: int

    def law_args(self):
        law = _law(self.alpha)
        return law.cdf, law.tail_scale, 1.0 / self.alpha

    def rng(self, block: int):
        return stream(self.seed, TREE_STREAM, block)


_LAWS = {}


def _law(alpha):
    if alpha not in _LAWS:
        _LAWS[alpha] = offspring_table(alpha)
    return _LAWS[alpha]


def block_counts(n_trees: int, block_size: int) -> list:
    full, rest = divmod(n_trees, block_size)
    return [block_size] * full + ([rest] if rest else [])


def _run_one(args):
    job, source, block, count = args
    return Moments.of(job(source, block, count))


def run_blocks(job, source: TreeSource, n_trees: int, workers: int = 1) -> Moments:
    """Apply ``job(source, block, count) -> (count, dim) array`` to every block."""
    tasks = [(job, source, b, c) for b, c in enumerate(block_counts(n_trees, source.block_size))]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_one, tasks))
    else:
        parts = [_run_one(t) for t in tasks]
    acc = parts[0]
    for part in parts[1:]:
        acc = acc.merge(part)
    return acc


def sigma_of(total: np.ndarray, n0: int) -> np.ndarray:
    """Mass T / n0, with overflowed trees (T = -1) mapped to +inf."""
    return np.where(total < 0, np.inf, total / n0)


def damped(sigma: np.ndarray, lam: float) -> np.ndarray:
    return np.exp(-lam * sigma)


def laplace_defect(sigma: np.ndarray, lam: float) -> np.ndarray:
    return -np.expm1(-lam * sigma)


@dataclass(frozen=True)
class NEstimate:
    value: float
    stderr: float
    n_trees: int
    overflow: int = 0


def _functional_job(source, block, count, f):
    args = source.law_args()
    total = kernels.sizes_block(source.rng(block), *args, source.cap, count)
    sigma = sigma_of(total, source.n0)
    return np.column_stack([f(sigma), (total < 0).astype(float)])


def estimate_N_functional(config, calib, f, lam_min: float) -> NEstimate:
    """``c_N`` times the mean over trees of ``f(sigma)``.

    ``f`` maps an array of masses (``inf`` for overflowed trees) to values and
    must be bounded by ``C exp(-lam_min sigma)`` up to its limit at infinity;
    trees past the cap contribute that limit, with error at most ``C e^-30``.
    """
    if not lam_min > 0:
        raise DomainError(f"lam_min must be > 0, got {lam_min}")
    cap = max(config.cap(), math.ceil(30.0 * config.n0 / lam_min))
    source = TreeSource(config.alpha, config.n0, cap, config.seed, config["block_size"])
    mom = run_blocks(_Bound(_functional_job, f), source, config.trees_for("excursion"), config["workers"])
    mean, se = mom.linear([1.0, 0.0])
    return NEstimate(calib.c_N * mean, calib.c_N * se, mom.n, int(round(mom.total[1])))


class _Bound:
    """Picklable partial application of a block job to extra arguments."""

    def __init__(self, fn, *extra):
        self.fn = fn
        self.extra = extra

    def __call__(self, source, block, count):
        return self.fn(source, block, count, *self.extra)


def bind(fn, *extra):
    return _Bound(fn, *extra)


def phi_of(alpha: float, lam: float) -> float:
    return eval_phi(BranchingMechanism.stable(alpha), lam)
