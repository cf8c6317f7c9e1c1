"""Subordinator-side evaluators for the dislocation identities.

The excursion length under the excursion measure is distributed as the Levy
measure ``pi_*`` of the subordinator with Laplace exponent ``phi``; for the
stable mechanism ``phi(l) = l**(1/alpha)``.  Running that subordinator for a
time ``v`` drawn from ``pi`` and reading off its jumps gives the law of a
dislocation: total mass ``S_v`` split into the jumps.  This module samples
those jumps and integrates functionals of them against ``pi(dv)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np
from scipy import integrate

from .errors import ConfigError, DomainError
from .mechanism import (
    BranchingMechanism,
    eval_phi,
    eval_phi_prime,
    eval_psi_prime,
    stable_constants,
    stable_pi_star_tail,
    stable_varphi,
)

G_KINDS = ("second_mass_indicator", "sum_excluding_largest")


@dataclass(frozen=True)
class SubordinatorJumps:
    v: float
    r_min: float
    jumps: np.ndarray
    S_v_trunc: float


def sample_subordinator_jumps(alpha: float, v: float, r_min: float, rng: np.random.Generator) -> SubordinatorJumps:
    """Jumps larger than ``r_min`` of the 1/alpha-stable subordinator on [0, v]."""
    if not (v > 0 and r_min > 0):
        raise DomainError(f"v and r_min must be > 0, got v={v}, r_min={r_min}")
    k = rng.poisson(v * stable_pi_star_tail(alpha, r_min))
    jumps = r_min * (1.0 - rng.random(k)) ** (-alpha)
    return SubordinatorJumps(float(v), float(r_min), jumps, float(math.fsum(jumps)))


def truncated_laplace(alpha: float, v: float, lam: float, r_min: float) -> float:
    """E[exp(-lam * S)] when S keeps only the jumps above ``r_min``."""
    g = stable_constants(alpha).gamma_value

    def integrand(r):
        return -math.expm1(-lam * r) * r ** (-1.0 - 1.0 / alpha) / (alpha * g)

    below = integrate.quad(integrand, 0.0, r_min, limit=200)[0]
    return math.exp(-v * (lam ** (1.0 / alpha) - below))


@dataclass(frozen=True)
class FunctionalSpec:
    """Level weight ``g(t) = exp(-rate t)`` and mass functional ``G``.

    ``second_mass_indicator``: G = 1{x_2 >= delta}.
    ``sum_excluding_largest``: G = 1{x_2 >= delta} (1 - exp(-(x_2 + x_3 + ...))).
    """

    lam: float
    rate: float = 1.0
    G: str = "second_mass_indicator"
    delta: float = 0.5
    p: float = 0.0

    def __post_init__(self):
        if self.G not in G_KINDS:
            raise DomainError(f"unknown mass functional {self.G!r}")
        if not (self.lam > 0 and self.delta > 0 and self.rate >= 0):
            raise DomainError("need lam > 0, delta > 0 and rate >= 0")

    @property
    def kind_code(self) -> int:
        return G_KINDS.index(self.G)


def ngh_rhs(mech: BranchingMechanism, lam: float, p: float, t: float) -> float:
    """exp(-t psi'(phi(lam))) * phi'(lam + p)."""
    if not lam > 0:
        raise DomainError(f"lam must be > 0, got {lam}")
    if p < 0 or t < 0:
        raise DomainError(f"p and t must be >= 0, got p={p}, t={t}")
    decay = eval_psi_prime(mech, eval_phi(mech, lam))
    return math.exp(-t * decay) * eval_phi_prime(mech, lam + p)


def time_integral(mech: BranchingMechanism, lam: float, rate: float) -> float:
    """Integral over t >= 0 of exp(-rate t) exp(-t psi'(phi(lam)))."""
    return 1.0 / (rate + eval_psi_prime(mech, eval_phi(mech, lam)))


@dataclass(frozen=True)
class ImportanceConfig:
    """Importance sampling of the pi-time ``v``.

    ``v`` is drawn with density proportional to ``v**-proposal_exponent`` on
    ``(v_min, v_max)``.  With ``condition=True`` the number of jumps above
    ``delta`` is drawn conditionally on being at least two (the only case
    where G can be nonzero) and the sample is weighted by that probability.
    With ``compensate=True`` the jumps below ``r_min`` are replaced by their
    mean total mass.
    """

    samples: int = 200_000
    v_min: float = 1e-9
    v_max: float = 10.0
    proposal_exponent: float | None = None  # default alpha - 1
    r_min: float | None = None              # default 1e-4 * delta
    condition: bool = True
    compensate: bool = True
    rel_stderr_cap: float = 0.05

    def exponent(self, alpha: float) -> float:
        return alpha - 1.0 if self.proposal_exponent is None else self.proposal_exponent

    def cutoff(self, delta: float) -> float:
        return 1e-4 * delta if self.r_min is None else self.r_min


@dataclass(frozen=True)
class NggEstimate:
    value: float
    stderr: float
    mu_value: float
    mu_stderr: float
    time_factor: float
    bias_low_v: float
    bias_high_v: float
    bias_small_jumps: float
    samples: int
    warning: str = ""

    @property
    def bias_bound(self) -> float:
        return self.time_factor * (self.bias_low_v + self.bias_high_v + self.bias_small_jumps)


def _proposal(beta: float, v_min: float, v_max: float):
    """Inverse CDF and normalizing constant of v**-beta on (v_min, v_max)."""
    if not (0 < v_min < v_max and math.isfinite(v_max)):
        raise ConfigError(f"need 0 < v_min < v_max < inf, got ({v_min}, {v_max})")
    if abs(beta - 1.0) < 1e-12:
        lo, hi = math.log(v_min), math.log(v_max)
        return (lambda u: np.exp(lo + u * (hi - lo))), hi - lo
    e = 1.0 - beta
    lo, hi = v_min**e, v_max**e
    return (lambda u: (lo + u * (hi - lo)) ** (1.0 / e)), (hi - lo) / e


@nb.njit(cache=True)
def _poisson_at_least_two(rng, m):
    """Poisson(m) conditioned on >= 2, by inversion; also returns P(K >= 2)."""
    if m < 1e-3:
        tail = m * m * (0.5 - m / 3.0 + m * m / 8.0)
    else:
        tail = -math.expm1(-m) - m * math.exp(-m)
    target = rng.random() * tail
    k = 2
    pk = math.exp(-m) * m * m / 2.0
    cum = pk
    while cum < target and pk > 0.0:
        k += 1
        pk *= m / k
        cum += pk
    return k, tail


@nb.njit(cache=True)
def _mu_kernel(rng, vs, alpha, lam, delta, r_min, gamma_value, kind, condition, compensate, out):
    inv_a = 1.0 / alpha
    tail_delta = delta ** (-inv_a) / gamma_value
    tail_rmin = r_min ** (-inv_a) / gamma_value
    comp = r_min ** (1.0 - inv_a) / ((alpha - 1.0) * gamma_value)
    a_lo = r_min ** (-inv_a)
    a_hi = delta ** (-inv_a)
    for i in range(vs.shape[0]):
        v = vs[i]
        total = 0.0
        first = 0.0
        second = 0.0
        weight = 1.0
        if condition:
            k, weight = _poisson_at_least_two(rng, v * tail_delta)
            for _ in range(k):
                x = delta * (1.0 - rng.random()) ** (-alpha)
                total += x
                if x > first:
                    second = first
                    first = x
                elif x > second:
                    second = x
            # jumps in (r_min, delta) by inversion of the truncated tail
            ks = rng.poisson(v * (tail_rmin - tail_delta))
            for _ in range(ks):
                x = (a_lo - rng.random() * (a_lo - a_hi)) ** (-alpha)
                total += x
                if x > first:
                    second = first
                    first = x
                elif x > second:
                    second = x
        else:
            k = rng.poisson(v * tail_rmin)
            for _ in range(k):
                x = r_min * (1.0 - rng.random()) ** (-alpha)
                total += x
                if x > first:
                    second = first
                    first = x
                elif x > second:
                    second = x
        if second < delta:
            out[i] = 0.0
            continue
        if compensate:
            total += v * comp
        g = 1.0 if kind == 0 else -math.expm1(-(total - first))
        out[i] = weight * total * math.exp(-lam * total) * g


def _small_jump_bias(alpha, spec, cfg, r_min, c_alpha):
    """Bound on the error from jumps below r_min, integrated over (v_min, v_max)."""
    g = stable_constants(alpha).gamma_value
    tail_delta = stable_pi_star_tail(alpha, spec.delta)
    lam = spec.lam
    if cfg.compensate:
        # second-order Taylor bound: sup|h''| Var(X) / 2
        var_rate = r_min ** (2.0 - 1.0 / alpha) / ((2.0 - 1.0 / alpha) * alpha * g)
        c2 = 2.0 * lam if spec.kind_code == 0 else 2.0 * lam + 2.0 + 1.0 / (lam * math.e)
        per_v = 0.5 * c2 * var_rate
    else:
        c1 = 1.0 if spec.kind_code == 0 else 1.0 + 1.0 / (lam * math.e)
        per_v = c1 * stable_varphi(alpha, r_min)

    def integrand(v):
        m = v * tail_delta
        return c_alpha * v ** (-1.0 - alpha) * per_v * v * min(1.0, 0.5 * m * m)

    return integrate.quad(integrand, cfg.v_min, cfg.v_max, limit=200, points=[1.0])[0]


def _high_v_bias(alpha, lam, v_max, c_alpha):
    phi, dphi = lam ** (1.0 / alpha), lam ** (1.0 / alpha - 1.0) / alpha

    def integrand(v):
        return c_alpha * v ** (-alpha) * dphi * math.exp(-v * phi)

    return integrate.quad(integrand, v_max, np.inf, limit=200)[0]


def _low_v_bias(alpha, lam, delta, v_min, c_alpha):
    tail = stable_pi_star_tail(alpha, delta)
    return c_alpha * tail**2 / (2.0 * lam * math.e) * v_min ** (2.0 - alpha) / (2.0 - alpha)


def ngg_rhs_mc(alpha: float, spec: FunctionalSpec, cfg: ImportanceConfig, rng: np.random.Generator) -> NggEstimate:
    """Monte Carlo value of the pi(dv)-integrated dislocation functional.

    Returns ``time_integral * mu_value`` where ``mu_value`` estimates
    ``int pi(dv) E[S_v exp(-lam S_v) G(jumps)]``.
    """
    mech = BranchingMechanism.stable(alpha)
    consts = stable_constants(alpha)
    r_min = cfg.cutoff(spec.delta)
    if not 0 < r_min < spec.delta:
        raise ConfigError(f"r_min must lie in (0, delta), got {r_min}")
    if cfg.samples < 2:
        raise ConfigError("need at least two samples")
    beta = cfg.exponent(alpha)
    inv_cdf, norm = _proposal(beta, cfg.v_min, cfg.v_max)
    vs = inv_cdf(rng.random(cfg.samples))
    weights = consts.pi_density_const * vs ** (-1.0 - alpha) * vs**beta * norm
    vals = np.empty(cfg.samples)
    _mu_kernel(
        rng, vs, alpha, spec.lam, spec.delta, r_min, consts.gamma_value,
        spec.kind_code, cfg.condition, cfg.compensate, vals,
    )
    contrib = weights * vals
    mu = float(contrib.mean())
    mu_se = float(contrib.std(ddof=1) / math.sqrt(cfg.samples))
    tf = time_integral(mech, spec.lam, spec.rate)
    warning = ""
    if mu > 0 and mu_se / mu > cfg.rel_stderr_cap:
        warning = f"relative stderr {mu_se / mu:.3g} above cap {cfg.rel_stderr_cap}"
    return NggEstimate(
        value=tf * mu,
        stderr=tf * mu_se,
        mu_value=mu,
        mu_stderr=mu_se,
        time_factor=tf,
        bias_low_v=_low_v_bias(alpha, spec.lam, spec.delta, cfg.v_min, consts.pi_density_const),
        bias_high_v=_high_v_bias(alpha, spec.lam, cfg.v_max, consts.pi_density_const),
        bias_small_jumps=_small_jump_bias(alpha, spec, cfg, r_min, consts.pi_density_const),
        samples=cfg.samples,
        warning=warning,
    )


def ngg_rhs_quadrature(alpha: float, spec: FunctionalSpec) -> float:
    """Deterministic value for ``second_mass_indicator`` by nested quadrature.

    Splits the subordinator at ``delta``: the small-jump part has Laplace
    exponent ``Phi_s`` and the big jumps form a compound Poisson sum, so
    ``E[S exp(-lam S) 1{K_big >= 2}]`` has a closed form in ``v``.
    """
    if spec.G != "second_mass_indicator":
        raise DomainError("quadrature value only available for second_mass_indicator")
    consts = stable_constants(alpha)
    lam, delta = spec.lam, spec.delta

    def dens(r):
        return r ** (-1.0 - 1.0 / alpha) / (alpha * consts.gamma_value)

    phi_s = integrate.quad(lambda r: -math.expm1(-lam * r) * dens(r), 0, delta, limit=200)[0]
    dphi_s = integrate.quad(lambda r: r * math.exp(-lam * r) * dens(r), 0, delta, limit=200)[0]
    mb = stable_pi_star_tail(alpha, delta)
    lap = integrate.quad(lambda r: math.exp(-lam * r) * dens(r), delta, np.inf)[0] / mb
    dlap = integrate.quad(lambda r: r * math.exp(-lam * r) * dens(r), delta, np.inf)[0] / mb

    def h(v):
        m = v * mb
        small = math.exp(-v * phi_s)
        if m * lap < 1.0:
            big0 = math.exp(-m) * (math.expm1(m * lap) - m * lap)
            big1 = math.exp(-m) * dlap * m * math.expm1(m * lap)
        else:
            # same quantities without overflowing exp(m * lap) for large v
            keep = math.exp(-m * (1.0 - lap))
            big0 = keep - math.exp(-m) * (1.0 + m * lap)
            big1 = dlap * m * (keep - math.exp(-m))
        return v * dphi_s * small * big0 + small * big1

    mu = integrate.quad(
        lambda v: consts.pi_density_const * v ** (-1.0 - alpha) * h(v),
        0, np.inf, limit=400, points=None,
    )[0]
    return time_integral(BranchingMechanism.stable(alpha), lam, spec.rate) * mu
