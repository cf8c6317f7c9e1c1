import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levyfrag.errors import ConfigError
from levyfrag.mechanism import BranchingMechanism
from levyfrag.odelaw import closed_form_w_lambda0, local_time_mean, solve_w

STABLE = BranchingMechanism.stable(1.5)


def test_closed_form_values():
    assert closed_form_w_lambda0(1.5, 1.0, 0.0) == 1.0
    assert closed_form_w_lambda0(1.5, 0.7, 0.0) == pytest.approx(0.7, rel=1e-14)
    assert closed_form_w_lambda0(1.5, 1.0, 1.0) == pytest.approx(4 / 9, rel=1e-14)
    assert closed_form_w_lambda0(1.5, 1.0, 1e8) < 1e-15


def test_gamma_zero_is_fixed_point():
    sol = solve_w(STABLE, 0.7, 0.0, 2.0, 0.01)
    assert np.all(sol.w_values == 0.0)


def test_solve_matches_closed_form():
    for gamma in (0.5, 1.0, 2.0):
        sol = solve_w(STABLE, 0.0, gamma, 5.0, 1e-3)
        exact = np.array([closed_form_w_lambda0(1.5, gamma, t) for t in sol.t_grid])
        assert np.max(np.abs(sol.w_values - exact)) <= 1e-6
    assert solve_w(STABLE, 0.0, 1.0, 1.0, 1e-3).at(1.0) == pytest.approx(4 / 9, abs=1e-10)


def test_rk4_order():
    errs = []
    for h in (0.2, 0.1, 0.05):
        sol = solve_w(STABLE, 0.0, 1.0, 5.0, h)
        exact = np.array([closed_form_w_lambda0(1.5, 1.0, t) for t in sol.t_grid])
        errs.append(np.max(np.abs(sol.w_values - exact)))
    for a, b in zip(errs, errs[1:]):
        assert 3.5 <= math.log2(a / b) <= 4.5


def test_bad_step():
    with pytest.raises(ConfigError):
        solve_w(STABLE, 0.0, 1.0, 1.0, 0.0)


def test_csv():
    buf = io.StringIO()
    solve_w(STABLE, 0.0, 1.0, 0.01, 0.005).write_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "t,w" and len(lines) == 4
    t, w = map(float, lines[1].split(","))
    assert (t, w) == (0.0, 1.0)


def test_local_time_mean_stable():
    # damped local time mean at lambda decays like exp(-t psi'(phi(lambda)))
    assert local_time_mean(STABLE, 1.0, 0.3) == pytest.approx(math.exp(-0.3 * 1.5), rel=1e-8)


@settings(max_examples=25, deadline=None)
@given(lam=st.floats(0.0, 3.0), gamma=st.floats(0.05, 5.0))
def test_w_decreases(lam, gamma):
    sol = solve_w(STABLE, lam, gamma, 2.0, 0.01)
    assert sol.w_values[-1] < sol.w_values[0]
    assert np.all(sol.w_values >= 0)
