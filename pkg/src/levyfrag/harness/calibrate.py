"""Discrete-to-continuum constants.

* ``c_N``: one tree stands for ``c_N`` units of excursion measure.  Fixed by
  ``N[1 - exp(-lam0 sigma)] = phi(lam0)``.
* ``c_H``: ``t * c_H * n0**((alpha-1)/alpha)`` is the depth of level ``t``.
  Fixed by the exponential decay rate ``psi'(phi(lam0))`` in ``t`` of the
  damped mass above level ``t``.
* ``c_L``: scale of the vertex-count local time.  Fixed by matching the
  damped local-time mean at ``t_ref`` to the linearized ODE solution.

For the canonical offspring law the anticipated values are
``c_N ~ (n0/alpha)**(1/alpha)``, ``c_H ~ alpha**(1/alpha)`` and ``c_L ~ 1``;
they are reported next to the fitted ones, never used.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import CalibrationError
from ..fragment import LevelMap, default_window, linear_depth_weights, local_time_scale
from ..mechanism import BranchingMechanism, eval_phi, eval_psi_prime
from ..odelaw import local_time_mean
from . import kernels
from .estimate import Moments, TreeSource, bind, damped, laplace_defect, run_blocks, sigma_of


@dataclass(frozen=True)
class CalibrationSet:
    c_N: float
    c_H: float
    c_L: float
    alpha: float
    n0: int
    lambda0: float
    seed: int
    trees: int
    stderr: dict = field(default_factory=dict)
    anticipated: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def level_map(self) -> LevelMap:
        return LevelMap(self.alpha, self.n0, self.c_H)

    def with_c_H(self, c_H: float) -> CalibrationSet:
        d = asdict(self)
        d["c_H"] = c_H
        return CalibrationSet(**d)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> CalibrationSet:
        return cls(**json.loads(text))

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> CalibrationSet:
        with open(path) as fh:
            return cls.from_json(fh.read())


def anticipated_constants(alpha: float, n0: int) -> dict:
    return {"c_N": (n0 / alpha) ** (1.0 / alpha), "c_H": alpha ** (1.0 / alpha), "c_L": 1.0}


def level_depth_limit(config) -> int:
    """Deepest depth any level-based statistic reads (generous in c_H)."""
    t_max = max(max(config["ngh.t"]), max(config["local_time.t"]), max(config["ode_mc.t"]),
                config["calibrate.t_ref"])
    unit = config.n0 ** ((config.alpha - 1.0) / config.alpha)
    window = max(1, config["local_time.window"])
    return max(fit_depth(config), int(math.ceil(2.0 * t_max * unit))) + window + 2


def fit_depth(config) -> int:
    unit = config.n0 ** ((config.alpha - 1.0) / config.alpha)
    return max(4, int(math.ceil(config["calibrate.fit_depth_fraction"] * unit)))


def _levels_job(source, block, count, kmax, lam0):
    """Columns: [1 - e^{-lam0 sigma}, e^{-lam0 sigma} mass at depth >= d (d <= kmax),
    e^{-lam0 sigma} Z_k (k <= kmax)]."""
    total, Z, _ = kernels.levels_block(
        source.rng(block), *source.law_args(), source.cap, count, kmax,
        float(source.n0), np.zeros(0),
    )
    sigma = sigma_of(total, source.n0)
    w = damped(sigma, lam0)
    above = np.cumsum(Z[:, ::-1], axis=1)[:, ::-1][:, : kmax + 1] / source.n0
    return np.column_stack([laplace_defect(sigma, lam0), w[:, None] * above, w[:, None] * Z[:, : kmax + 1]])


def levels_layout(kmax: int) -> dict:
    return {"g": 0, "above": slice(1, kmax + 2), "Z": slice(kmax + 2, 2 * kmax + 3), "dim": 2 * kmax + 3}


def depth_weights(dim_slice: slice, dim: int, x: float) -> np.ndarray:
    """Weight vector reading a per-depth column block at real depth ``x``."""
    d, w = linear_depth_weights(x)
    start, stop = dim_slice.start, dim_slice.stop
    if start + d + (1 if w > 0 else 0) >= stop:
        raise CalibrationError(f"depth {x:.3f} beyond the recorded range")
    out = np.zeros(dim)
    out[start + d] += 1.0 - w
    if w > 0:
        out[start + d + 1] += w
    return out


def local_time_weights(layout: dict, level_map: LevelMap, t: float, window: int) -> np.ndarray:
    """Weights giving the (c_L = 1) interpolated local time at ``t``."""
    x = level_map.real_depth(t) - 0.5
    w = sum(depth_weights(layout["Z"], layout["dim"], max(x + j, 0.0)) for j in range(window))
    return w * local_time_scale(level_map, 1.0) / window


def fit_constants(mom: Moments, layout: dict, alpha: float, n0: int, lam0: float,
                  n_fit: int, t_ref: float, window: int | None = None) -> dict:
    """Constants and standard errors from the level moments."""
    mech = BranchingMechanism.stable(alpha)
    phi0 = eval_phi(mech, lam0)
    decay = eval_psi_prime(mech, phi0)
    dim = layout["dim"]
    g = np.zeros(dim)
    g[layout["g"]] = 1.0

    mean_g, se_g = mom.linear(g)
    c_N = phi0 / mean_g
    se_cN = c_N * se_g / mean_g

    depths = np.arange(n_fit + 1)
    idx = layout["above"].start + depths
    means = mom.mean[idx]
    if np.any(means <= 0):
        raise CalibrationError("empty depth levels in the height fit")
    y = np.log(means)
    X = np.column_stack([np.ones_like(depths, dtype=float), depths])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    slope = coef[1]
    resid = y - X @ coef
    # delta method: slope = c . log(means)
    c = np.linalg.pinv(X)[1]
    grad = np.zeros(dim)
    grad[idx] = c / means
    se_slope = math.sqrt(max(float(grad @ mom.cov @ grad), 0.0) / mom.n)
    unit = n0 ** ((alpha - 1.0) / alpha)
    if not slope < 0:
        raise CalibrationError("mass above level does not decay with depth", {"slope": float(slope)})
    c_H = decay / (-slope * unit)
    se_cH = c_H * se_slope / -slope

    level_map = LevelMap(alpha, n0, c_H)
    if window is None:
        window = default_window(level_map)
    lt = local_time_weights(layout, level_map, t_ref, window)
    ratio, se_ratio = mom.ratio(lt, g)
    target = local_time_mean(mech, lam0, t_ref)
    # c_N * mean(lt) = phi0 * ratio must equal target / c_L
    c_L = target / (phi0 * ratio)
    se_cL = c_L * se_ratio / ratio
    return {
        "c_N": float(c_N), "c_H": float(c_H), "c_L": float(c_L),
        "stderr": {"c_N": float(se_cN), "c_H": float(se_cH), "c_L": float(se_cL)},
        "diagnostics": {
            "fit_depths": int(n_fit),
            "fit_slope": float(slope),
            "fit_rms": float(np.sqrt(np.mean(resid**2))),
            "fit_residuals": [float(r) for r in resid],
            "t_ref": float(t_ref),
            "local_time_target": float(target),
            "window": int(window),
        },
    }


def level_moments(config, lam: float, n_trees: int, kmax: int) -> Moments:
    source = TreeSource(config.alpha, config.n0, config.cap(), config.seed, config["block_size"])
    return run_blocks(bind(_levels_job, kmax, lam), source, n_trees, config["workers"])


def calibrate(config) -> CalibrationSet:
    n_trees = config.trees_for("calibrate")
    kmax = level_depth_limit(config)
    mom = level_moments(config, config.lambda0, n_trees, kmax)
    window = config["local_time.window"] or None
    fit = fit_constants(
        mom, levels_layout(kmax), config.alpha, config.n0, config.lambda0,
        fit_depth(config), config["calibrate.t_ref"], window,
    )
    diag = dict(fit["diagnostics"])
    diag["kmax"] = kmax
    diag["cap"] = config.cap()
    rel = {k: fit["stderr"][k] / fit[k] for k in ("c_N", "c_H", "c_L")}
    diag["rel_stderr"] = rel
    calib = CalibrationSet(
        c_N=fit["c_N"], c_H=fit["c_H"], c_L=fit["c_L"],
        alpha=config.alpha, n0=config.n0, lambda0=config.lambda0,
        seed=config.seed, trees=n_trees, stderr=fit["stderr"],
        anticipated=anticipated_constants(config.alpha, config.n0), diagnostics=diag,
    )
    bad = {k: v for k, v in rel.items() if v > config["calibrate.max_rel_stderr"]}
    if bad or diag["fit_rms"] > config["calibrate.max_fit_rms"]:
        raise CalibrationError(
            f"calibration diagnostics out of range (rel stderr {bad}, fit rms {diag['fit_rms']:.3g})",
            diagnostics=diag,
        )
    return calib
