"""Branching mechanism psi, its inverse phi, and stable-case closed forms.

Three parametric families are supported:

* ``stable``          psi(l) = l**alpha
* ``drifted_stable``  psi(l) = alpha0*l + l**alpha
* ``atom_test``       psi(l) = alpha0*l + sum_j w_j (exp(-l*ell_j) - 1 + l*ell_j)

The atom family has a finite Levy measure, so the underlying Levy process
has bounded variation.  It exists to exercise the psi/phi plumbing and is
rejected by every simulation entry point (see :attr:`BranchingMechanism.valid`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError, NumericError

_KINDS = ("stable", "drifted_stable", "atom_test")


@dataclass(frozen=True)
class BranchingMechanism:
    kind: str
    alpha: float | None = None
    alpha0: float = 0.0
    atoms: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise DomainError(f"unknown mechanism kind {self.kind!r}")
        if self.kind in ("stable", "drifted_stable"):
            if self.alpha is None or not (1.0 < self.alpha < 2.0):
                raise DomainError(f"alpha must lie in the open interval (1, 2), got {self.alpha}")
        if self.alpha0 < 0 or not math.isfinite(self.alpha0):
            raise DomainError(f"alpha0 must be finite and >= 0, got {self.alpha0}")
        for ell, weight in self.atoms:
            if not (ell > 0 and weight > 0):
                raise DomainError(f"atoms need ell > 0 and weight > 0, got ({ell}, {weight})")

    @classmethod
    def stable(cls, alpha: float) -> BranchingMechanism:
        return cls("stable", alpha=float(alpha))

    @classmethod
    def drifted_stable(cls, alpha0: float, alpha: float) -> BranchingMechanism:
        return cls("drifted_stable", alpha=float(alpha), alpha0=float(alpha0))

    @classmethod
    def atom_test(cls, alpha0: float, atoms) -> BranchingMechanism:
        atoms = tuple((float(ell), float(w)) for ell, w in atoms)
        return cls("atom_test", alpha0=float(alpha0), atoms=atoms)

    @property
    def valid(self) -> bool:
        """True iff the Levy process has infinite variation."""
        return self.kind != "atom_test"

    def require_valid(self):
        if not self.valid:
            raise DomainError(
                "atom_test mechanisms have finite Levy measure and cannot drive a simulation"
            )


@dataclass(frozen=True)
class StableConstants:
    alpha: float
    gamma_value: float       # Gamma(1 - 1/alpha)
    pi_density_const: float  # c_alpha with pi(dl) = c_alpha l^{-1-alpha} dl


def stable_constants(alpha: float) -> StableConstants:
    _check_alpha(alpha)
    return StableConstants(
        alpha=alpha,
        gamma_value=math.gamma(1.0 - 1.0 / alpha),
        pi_density_const=alpha * (alpha - 1.0) / math.gamma(2.0 - alpha),
    )


def _check_alpha(alpha):
    if not (1.0 < alpha < 2.0):
        raise DomainError(f"alpha must lie in the open interval (1, 2), got {alpha}")


def _check_lam(lam):
    if not math.isfinite(lam) or lam < 0:
        raise DomainError(f"argument must be finite and >= 0, got {lam}")


def eval_psi(mech: BranchingMechanism, lam: float) -> float:
    _check_lam(lam)
    if mech.kind == "stable":
        return lam**mech.alpha
    if mech.kind == "drifted_stable":
        return mech.alpha0 * lam + lam**mech.alpha
    total = mech.alpha0 * lam
    for ell, weight in mech.atoms:
        x = lam * ell
        # expm1 keeps e^{-x} - 1 + x accurate for small x
        total += weight * (math.expm1(-x) + x)
    return total


def eval_psi_prime(mech: BranchingMechanism, lam: float) -> float:
    _check_lam(lam)
    if mech.kind == "stable":
        return mech.alpha * lam ** (mech.alpha - 1.0)
    if mech.kind == "drifted_stable":
        return mech.alpha0 + mech.alpha * lam ** (mech.alpha - 1.0)
    total = mech.alpha0
    for ell, weight in mech.atoms:
        total += weight * ell * -math.expm1(-lam * ell)
    return total


def eval_phi(mech: BranchingMechanism, x: float, rtol: float = 1e-12, max_iter: int = 200) -> float:
    """Inverse of psi on [0, inf).

    Closed form for the stable family.  Otherwise the root of psi(l) = x is
    bracketed, narrowed by bisection to 1e-3 relative width and polished by
    Newton steps kept inside the bracket.
    """
    _check_lam(x)
    if x == 0.0:
        return 0.0
    if mech.kind == "stable":
        return x ** (1.0 / mech.alpha)

    lo, hi = 0.0, 1.0
    for _ in range(max_iter):
        if eval_psi(mech, hi) >= x:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise NumericError(f"could not bracket phi({x}); psi may be bounded")

    while hi - lo > 1e-3 * hi:
        mid = 0.5 * (lo + hi)
        if eval_psi(mech, mid) < x:
            lo = mid
        else:
            hi = mid

    lam = 0.5 * (lo + hi)
    for _ in range(max_iter):
        slope = eval_psi_prime(mech, lam)
        step = (eval_psi(mech, lam) - x) / slope if slope > 0 else 0.0
        new = lam - step
        if lo <= new <= hi:
            converged = abs(new - lam) <= rtol * max(new, 1e-300)
        else:
            # Newton left the bracket: bisect, and only stop once the bracket is tight
            new = 0.5 * (lo + hi)
            converged = hi - lo <= rtol * hi
        value = eval_psi(mech, new)
        if value == x:
            return new
        if value < x:
            lo = new
        else:
            hi = new
        if converged:
            return new
        lam = new
    raise NumericError(f"phi({x}) did not converge in {max_iter} iterations")


def eval_phi_prime(mech: BranchingMechanism, lam: float) -> float:
    """phi'(lam) = 1 / psi'(phi(lam)).

    Raises DomainError at lam = 0 when psi'(0) = 0 (pure stable case), where
    phi' blows up.
    """
    _check_lam(lam)
    if mech.kind == "stable":
        if lam == 0.0:
            raise DomainError("phi'(0) is infinite for a stable mechanism")
        a = mech.alpha
        return lam ** (1.0 / a - 1.0) / a
    slope = eval_psi_prime(mech, eval_phi(mech, lam))
    if slope <= 0:
        raise DomainError(f"phi' is infinite at {lam}")
    return 1.0 / slope


def stable_pi_star_density(alpha: float, r: float) -> float:
    """Density of pi_*, the Levy measure of phi(l) = l**(1/alpha)."""
    _check_alpha(alpha)
    if r <= 0:
        raise DomainError(f"r must be > 0, got {r}")
    return r ** (-1.0 - 1.0 / alpha) / (alpha * math.gamma(1.0 - 1.0 / alpha))


def stable_pi_star_tail(alpha: float, eps: float) -> float:
    """pi_*((eps, inf)) for the stable mechanism."""
    _check_alpha(alpha)
    if eps <= 0:
        raise DomainError(f"eps must be > 0, got {eps}")
    return eps ** (-1.0 / alpha) / math.gamma(1.0 - 1.0 / alpha)


def stable_varphi(alpha: float, eps: float) -> float:
    """Integral of r pi_*(dr) over (0, eps)."""
    _check_alpha(alpha)
    if eps <= 0:
        raise DomainError(f"eps must be > 0, got {eps}")
    return eps ** (1.0 - 1.0 / alpha) / ((alpha - 1.0) * math.gamma(1.0 - 1.0 / alpha))


def stable_pi_density(alpha: float, ell: float) -> float:
    """Density of pi for psi(l) = l**alpha: c_alpha ell^{-1-alpha}."""
    _check_alpha(alpha)
    if ell <= 0:
        raise DomainError(f"ell must be > 0, got {ell}")
    return stable_constants(alpha).pi_density_const * ell ** (-1.0 - alpha)
