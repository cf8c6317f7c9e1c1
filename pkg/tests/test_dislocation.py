import math

import numpy as np
import pytest

from levyfrag.dislocation import (
    FunctionalSpec,
    ImportanceConfig,
    ngg_rhs_mc,
    ngg_rhs_quadrature,
    ngh_rhs,
    sample_subordinator_jumps,
    time_integral,
    truncated_laplace,
)
from levyfrag.errors import ConfigError, DomainError
from levyfrag.mechanism import BranchingMechanism, eval_phi_prime, stable_varphi
from levyfrag.rng import stream

STABLE = BranchingMechanism.stable(1.5)


def test_no_jumps_for_vanishing_time():
    rng = stream(1, "jumps")
    counts = [len(sample_subordinator_jumps(1.5, 1e-12, 1.0, rng).jumps) for _ in range(1000)]
    assert max(counts) == 0


def test_jump_sizes_are_pareto():
    rng = stream(2, "jumps")
    jumps = np.concatenate([sample_subordinator_jumps(1.5, 50.0, 0.1, rng).jumps for _ in range(200)])
    p = 2 ** (-1 / 1.5)
    assert abs(np.mean(jumps > 0.2) - p) <= 4 * math.sqrt(p * (1 - p) / len(jumps))
    assert jumps.min() >= 0.1


def test_laplace_identity():
    rng = stream(3, "laplace")
    n, r_min = 100_000, 1e-6
    vals = np.array([math.exp(-sample_subordinator_jumps(1.5, 1.0, r_min, rng).S_v_trunc) for _ in range(n)])
    mean, se = vals.mean(), vals.std(ddof=1) / math.sqrt(n)
    # exact for the truncated process
    assert abs(mean - truncated_laplace(1.5, 1.0, 1.0, r_min)) <= 3 * se
    # and e^{-phi(1)} for the full one, up to the truncation bias
    bias = stable_varphi(1.5, r_min)
    assert abs(mean - math.exp(-1.0)) <= 3 * se + bias


def test_jump_errors():
    with pytest.raises(DomainError):
        sample_subordinator_jumps(1.5, 0.0, 1.0, stream(0, "x"))


def test_ngh_rhs():
    assert ngh_rhs(STABLE, 0.7, 0.0, 0.0) == pytest.approx(eval_phi_prime(STABLE, 0.7), rel=1e-14)
    expected = math.exp(-0.2 * 1.5 * 0.5 ** (1 / 3)) * (2 / 3) * 1.5 ** (-1 / 3)
    assert ngh_rhs(STABLE, 0.5, 1.0, 0.2) == pytest.approx(expected, rel=1e-12)
    assert ngh_rhs(STABLE, 0.5, 1.0, 0.2) == pytest.approx(0.4590, abs=5e-5)
    grid = [[ngh_rhs(STABLE, 0.5, p, t) for t in (0, 0.1, 0.2, 0.4)] for p in (0, 0.5, 1, 2)]
    assert np.all(np.diff(grid, axis=0) < 0) and np.all(np.diff(grid, axis=1) < 0)
    with pytest.raises(DomainError):
        ngh_rhs(STABLE, 0.0, 1.0, 0.2)
    with pytest.raises(DomainError):
        ngh_rhs(STABLE, 0.5, -1.0, 0.2)


def test_time_integral():
    assert time_integral(STABLE, 1.0, 1.0) == pytest.approx(1 / 2.5, rel=1e-12)


def test_spec_validation():
    with pytest.raises(DomainError):
        FunctionalSpec(lam=1.0, G="other")
    with pytest.raises(DomainError):
        FunctionalSpec(lam=0.0)
    spec = FunctionalSpec(lam=1.0)
    with pytest.raises(ConfigError):
        ngg_rhs_mc(1.5, spec, ImportanceConfig(r_min=0.6), stream(0, "x"))
    with pytest.raises(ConfigError):
        ngg_rhs_mc(1.5, spec, ImportanceConfig(v_min=1.0, v_max=0.5), stream(0, "x"))
    with pytest.raises(DomainError):
        ngg_rhs_quadrature(1.5, FunctionalSpec(lam=1.0, G="sum_excluding_largest"))


def test_quadrature_value():
    assert ngg_rhs_quadrature(1.5, FunctionalSpec(lam=1.0)) == pytest.approx(0.0068617, rel=1e-4)


def test_mc_matches_quadrature():
    spec = FunctionalSpec(lam=1.0)
    est = ngg_rhs_mc(1.5, spec, ImportanceConfig(samples=50_000), stream(4, "ngg"))
    quad = ngg_rhs_quadrature(1.5, spec)
    assert abs(est.value - quad) <= 3 * est.stderr + est.bias_bound
    assert est.bias_bound < 0.1 * est.stderr
    assert est.warning == ""


def test_unconditioned_sampler_agrees():
    spec = FunctionalSpec(lam=1.0)
    cfg = ImportanceConfig(samples=50_000, condition=False, compensate=False, r_min=0.05)
    est = ngg_rhs_mc(1.5, spec, cfg, stream(5, "ngg"))
    quad = ngg_rhs_quadrature(1.5, spec)
    assert abs(est.value - quad) <= 3 * est.stderr + est.bias_bound


def test_monotone_in_delta():
    # with a fixed cutoff and no conditioning the draws do not depend on delta
    cfg = ImportanceConfig(samples=5000, condition=False, r_min=0.05)
    vals = [ngg_rhs_mc(1.5, FunctionalSpec(lam=1.0, delta=d), cfg, stream(6, "mono")).value
            for d in (0.8, 0.4, 0.2, 0.1)]
    assert np.all(np.diff(vals) >= 0)
    quads = [ngg_rhs_quadrature(1.5, FunctionalSpec(lam=1.0, delta=d)) for d in (0.8, 0.4, 0.2, 0.1)]
    assert np.all(np.diff(quads) > 0)


def test_sum_excluding_largest_below_indicator():
    cfg = ImportanceConfig(samples=5000)
    ind = ngg_rhs_mc(1.5, FunctionalSpec(lam=1.0), cfg, stream(7, "g"))
    rest = ngg_rhs_mc(1.5, FunctionalSpec(lam=1.0, G="sum_excluding_largest"), cfg, stream(7, "g"))
    assert 0 < rest.value < ind.value


def test_bias_bounds_shrink():
    spec = FunctionalSpec(lam=1.0)
    narrow = ngg_rhs_mc(1.5, spec, ImportanceConfig(samples=100, v_min=1e-6, v_max=5.0), stream(8, "b"))
    wide = ngg_rhs_mc(1.5, spec, ImportanceConfig(samples=100, v_min=1e-9, v_max=20.0), stream(8, "b"))
    assert wide.bias_low_v < narrow.bias_low_v
    assert wide.bias_high_v < narrow.bias_high_v
