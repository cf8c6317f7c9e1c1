import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from levyfrag.errors import DomainError
from levyfrag.mechanism import (
    BranchingMechanism,
    eval_phi,
    eval_phi_prime,
    eval_psi,
    eval_psi_prime,
    stable_constants,
    stable_pi_density,
    stable_pi_star_density,
    stable_pi_star_tail,
    stable_varphi,
)

STABLE = BranchingMechanism.stable(1.5)
DRIFTED = BranchingMechanism.drifted_stable(1.0, 1.5)
ATOMS = BranchingMechanism.atom_test(0.5, [(1.0, 1.0), (0.1, 3.0)])
MECHS = [STABLE, DRIFTED, ATOMS]

# Gamma(1/3) to 12 digits, independent of math.gamma
GAMMA_THIRD = 2.678938534707747


def test_psi_values():
    assert eval_psi(STABLE, 4.0) == pytest.approx(8.0, rel=1e-14)
    for m in MECHS:
        assert eval_psi(m, 0.0) == 0.0
    single = BranchingMechanism.atom_test(0.0, [(1.0, 1.0)])
    assert eval_psi(single, 1.0) == pytest.approx(math.exp(-1.0), rel=1e-14)


def test_psi_prime_values():
    assert eval_psi_prime(STABLE, eval_phi(STABLE, 0.5)) == pytest.approx(1.5 * 0.5 ** (1 / 3), rel=1e-12)
    assert eval_psi_prime(STABLE, 0.0) == 0.0
    drift = BranchingMechanism.atom_test(2.0, [])
    for lam in (0.0, 0.3, 7.0):
        assert eval_psi_prime(drift, lam) == 2.0


def test_phi_values():
    assert eval_phi(STABLE, 8.0) == pytest.approx(4.0, rel=1e-12)
    for m in MECHS:
        assert eval_phi(m, 0.0) == 0.0
    assert eval_phi(DRIFTED, 2.0) == pytest.approx(1.0, rel=1e-12)


def test_phi_prime_values():
    assert eval_phi_prime(STABLE, 1.5) == pytest.approx((2 / 3) * 1.5 ** (-1 / 3), rel=1e-12)
    assert eval_phi_prime(STABLE, 1.0) == pytest.approx(2 / 3, rel=1e-12)


@pytest.mark.parametrize("mech", MECHS)
@pytest.mark.parametrize("lam", [0.1, 1.0, 10.0])
def test_chain_rule(mech, lam):
    assert eval_psi_prime(mech, eval_phi(mech, lam)) * eval_phi_prime(mech, lam) == pytest.approx(1.0, rel=1e-10)


@pytest.mark.parametrize("mech", MECHS)
def test_inverse_on_log_grid(mech):
    for x in np.logspace(-3, 3, 61):
        assert abs(eval_psi(mech, eval_phi(mech, x)) - x) <= 1e-10 * max(x, 1.0)


def test_lambda_over_psi():
    lams = 10.0 ** np.arange(1, 9)
    r = [lam / eval_psi(STABLE, lam) for lam in lams]
    assert np.all(np.diff(r) < 0)
    assert r[5] <= 1e-3 * (1 + 1e-12)
    # finite variation: the ratio decreases to a positive limit
    ra = [lam / eval_psi(ATOMS, lam) for lam in lams]
    assert np.all(np.diff(ra) < 0)
    assert ra[-1] > 0.1


def test_validity():
    assert STABLE.valid and DRIFTED.valid
    assert not ATOMS.valid
    with pytest.raises(DomainError):
        ATOMS.require_valid()


def test_domain_errors():
    with pytest.raises(DomainError):
        BranchingMechanism.stable(2.0)
    with pytest.raises(DomainError):
        eval_psi(STABLE, -1.0)


def test_pi_star_tail():
    assert stable_pi_star_tail(1.5, 1.0) == pytest.approx(1 / GAMMA_THIRD, rel=1e-12)
    assert stable_pi_star_tail(1.5, 2 ** -1.5) == pytest.approx(2 * stable_pi_star_tail(1.5, 1.0), rel=1e-12)
    vals = [stable_pi_star_tail(1.5, 10.0**-k) for k in range(0, 12)]
    assert np.all(np.diff(vals) > 0) and vals[-1] > 1e3


def test_pi_star_tail_matches_density():
    tail, _ = integrate.quad(lambda r: stable_pi_star_density(1.5, r), 1.0, np.inf)
    assert tail == pytest.approx(stable_pi_star_tail(1.5, 1.0), rel=1e-8)


def test_varphi():
    assert stable_varphi(1.5, 1.0) == pytest.approx(1 / (0.5 * GAMMA_THIRD), rel=1e-12)
    assert stable_varphi(1.5, 1e-3) / 1e-3 > stable_varphi(1.5, 1e-1) / 1e-1
    c = 1.0 / (1.5 * GAMMA_THIRD)
    quad, _ = integrate.quad(lambda r: r * c * r ** (-1 - 1 / 1.5), 0.0, 1.0)
    assert quad == pytest.approx(stable_varphi(1.5, 1.0), rel=1e-8)


def test_pi_density():
    assert stable_pi_density(1.5, 1.0) == pytest.approx(0.75 / math.sqrt(math.pi), rel=1e-12)
    assert stable_pi_density(1.5, 2.0) / stable_pi_density(1.5, 1.0) == pytest.approx(2**-2.5, rel=1e-12)
    # the Levy measure reproduces psi(1) = 1; quadrature in log scale on
    # (1e-8, 1e4) plus the two power-law end pieces in closed form
    c = stable_pi_density(1.5, 1.0)

    def f(u):
        ell = math.exp(u)
        # e^-ell - 1 + ell without cancellation for small ell
        core = ell * ell * (0.5 - ell / 6 + ell * ell / 24) if ell < 1e-3 else math.exp(-ell) - 1 + ell
        return core * c * ell**-1.5

    body, _ = integrate.quad(f, math.log(1e-8), math.log(1e4), limit=400, epsabs=1e-12)
    lo, hi = 1e-8, 1e4
    small = c * (lo**0.5 / (2 * 0.5))  # integrand ~ ell^2/2 near 0
    large = c * (2 * hi**-0.5 - hi**-1.5 / 1.5)  # e^-ell negligible
    assert body + small + large == pytest.approx(1.0, abs=1e-5)


def test_stable_constants():
    c = stable_constants(1.5)
    assert c.gamma_value == pytest.approx(GAMMA_THIRD, rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(alpha=st.floats(1.05, 1.95), x=st.floats(1e-6, 1e6))
def test_phi_inverts_psi(alpha, x):
    m = BranchingMechanism.stable(alpha)
    assert abs(eval_psi(m, eval_phi(m, x)) - x) <= 1e-10 * max(x, 1.0)


@settings(max_examples=60, deadline=None)
@given(a0=st.floats(0.0, 3.0), alpha=st.floats(1.05, 1.95), lam=st.floats(1e-4, 1e4))
def test_psi_convex_increasing(a0, alpha, lam):
    m = BranchingMechanism.drifted_stable(a0, alpha)
    h = 1e-3 * lam
    assert eval_psi(m, lam + h) > eval_psi(m, lam)
    assert eval_psi_prime(m, lam + h) >= eval_psi_prime(m, lam)
