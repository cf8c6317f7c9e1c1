"""Laplace functional of the local time at a fixed level.

``w(t) = N[exp(-lam sigma) (1 - exp(-gamma L^t))]`` solves
``w' = lam - psi(phi(lam) + w)`` with ``w(0) = gamma``.  Since
``psi(phi(lam)) = lam``, zero is a fixed point and ``w`` decreases to it.
The shifted function ``v = w + phi(lam)`` solves ``v' = lam - psi(v)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError
from .mechanism import BranchingMechanism, eval_phi, eval_psi, eval_psi_prime


@dataclass(frozen=True)
class OdeSolution:
    t_grid: np.ndarray
    w_values: np.ndarray
    mech: BranchingMechanism
    lam: float
    gamma: float
    step: float

    @property
    def v_values(self) -> np.ndarray:
        return self.w_values + eval_phi(self.mech, self.lam)

    def at(self, t: float) -> float:
        """Linear interpolation on the RK4 grid."""
        return float(np.interp(t, self.t_grid, self.w_values))

    def write_csv(self, fh):
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["t", "w"])
        for t, w in zip(self.t_grid, self.w_values):
            out.writerow([repr(float(t)), repr(float(w))])


def _time_grid(t_max, step):
    if not step > 0:
        raise ConfigError(f"step must be > 0, got {step}")
    if not t_max > 0:
        raise ConfigError(f"t_max must be > 0, got {t_max}")
    n = int(math.floor(t_max / step + 1e-9))
    grid = step * np.arange(n + 1)
    if t_max - grid[-1] > 1e-9 * t_max:
        grid = np.append(grid, t_max)
    return grid


def _rk4(rhs, y0, grid, clamp):
    y = np.empty((len(grid),) + np.shape(y0))
    y[0] = y0
    for i in range(len(grid) - 1):
        h = grid[i + 1] - grid[i]
        cur = y[i]
        k1 = rhs(cur)
        k2 = rhs(cur + 0.5 * h * k1)
        k3 = rhs(cur + 0.5 * h * k2)
        k4 = rhs(cur + h * k3)
        y[i + 1] = clamp(cur + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
    return y


def solve_w(mech: BranchingMechanism, lam: float, gamma: float, t_max: float, step: float) -> OdeSolution:
    """Classical RK4 from w(0) = gamma, clamped at the fixed point 0."""
    if lam < 0 or gamma < 0:
        raise DomainError(f"lam and gamma must be >= 0, got lam={lam}, gamma={gamma}")
    grid = _time_grid(t_max, step)
    base = eval_phi(mech, lam)

    def rhs(w):
        return lam - eval_psi(mech, base + max(float(w), 0.0))

    w = _rk4(rhs, float(gamma), grid, lambda x: max(x, 0.0))
    return OdeSolution(grid, w, mech, float(lam), float(gamma), float(step))


def closed_form_w_lambda0(alpha: float, gamma: float, t: float) -> float:
    """Stable case with lam = 0: w' = -w**alpha integrates in closed form."""
    if not gamma > 0:
        raise DomainError(f"gamma must be > 0, got {gamma}")
    if t < 0:
        raise DomainError(f"t must be >= 0, got {t}")
    return (gamma ** (1.0 - alpha) + (alpha - 1.0) * t) ** (-1.0 / (alpha - 1.0))


def local_time_mean(mech: BranchingMechanism, lam: float, t: float, step: float = 1e-3, gamma: float = 0.0) -> float:
    """d w / d gamma along the solution started at ``gamma``.

    At ``gamma = 0`` this is ``N[exp(-lam sigma) L^t]``.  The sensitivity
    ``m = dw/dgamma`` solves ``m' = -psi'(v) m``, ``m(0) = 1``, integrated
    jointly with ``w``.
    """
    if t == 0:
        return 1.0
    grid = _time_grid(t, step)
    base = eval_phi(mech, lam)

    def rhs(y):
        v = base + max(float(y[0]), 0.0)
        return np.array([lam - eval_psi(mech, v), -eval_psi_prime(mech, v) * y[1]])

    def clamp(y):
        y[0] = max(y[0], 0.0)
        return y

    y = _rk4(rhs, np.array([float(gamma), 1.0]), grid, clamp)
    return float(y[-1, 1])
