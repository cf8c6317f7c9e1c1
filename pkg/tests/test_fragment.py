import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import SMALL, STAR, path_offspring, random_offspring
from levyfrag.errors import DomainError
from levyfrag.fragment import (
    MAX_RANKED,
    LevelMap,
    ancestors,
    default_window,
    fragmentation_curve,
    fragments_at_level,
    linear_depth_weights,
    local_time_profile,
    local_time_scale,
    small_fragment_stats,
    tagged_path,
)
from levyfrag.harness.suites import brute_force_components
from levyfrag.treesim import PlaneTree, analyze

N0 = 16
# scale = 1 so depth d sits at level d
UNIT = LevelMap(alpha=1.5, n0=N0, c_H=N0 ** (-1 / 3))


def stats_of(off):
    return analyze(PlaneTree.from_offspring(off))


def test_level_map():
    lm = LevelMap(1.5, 4096, 2.0)
    assert lm.scale == pytest.approx(2.0 * 16.0)
    assert lm.depth_of(0.1) == 3
    assert lm.level_of(32) == pytest.approx(1.0)
    assert UNIT.scale == pytest.approx(1.0)
    with pytest.raises(DomainError):
        lm.real_depth(-0.1)
    with pytest.raises(DomainError):
        LevelMap(1.5, 0)


def test_linear_depth_weights():
    assert linear_depth_weights(2.25) == (2, 0.25)
    assert linear_depth_weights(3.0) == (3, 0.0)
    with pytest.raises(DomainError):
        linear_depth_weights(-1e-9)


def test_fragments_examples():
    assert list(fragments_at_level(stats_of(path_offspring(4)), 1)) == [2]
    assert list(fragments_at_level(stats_of(STAR), 0)) == [1, 1, 1]
    assert list(fragments_at_level(stats_of(SMALL), 0)) == [2, 1]
    assert len(fragments_at_level(stats_of(SMALL), 5)) == 0
    with pytest.raises(DomainError):
        fragments_at_level(stats_of(SMALL), -1)


def test_curve():
    st_ = stats_of(SMALL)
    curve = fragmentation_curve(st_, UNIT, [0.0, 1.0, 2.0])
    assert list(curve.masses[0] * N0) == [2, 1]
    assert list(curve.masses[1] * N0) == [1]
    assert len(curve.masses[2]) == 0
    assert list(curve.largest() * N0) == [2, 1, 0]
    above = [np.sum(st_.depth > d) / N0 for d in range(3)]
    assert np.allclose(curve.total_mass(), above)
    with pytest.raises(DomainError):
        fragmentation_curve(st_, UNIT, [1.0, 0.5])


def test_curve_truncation_and_csv():
    st_ = stats_of(np.array([MAX_RANKED + 5] + [0] * (MAX_RANKED + 5)))
    curve = fragmentation_curve(st_, LevelMap(1.5, 1, 1.0), [0.0])
    assert len(curve.masses[0]) == MAX_RANKED
    assert curve.remainder[0] == 5.0
    buf = io.StringIO()
    fragmentation_curve(stats_of(SMALL), UNIT, [0.0]).write_csv(buf)
    assert buf.getvalue().splitlines() == ["t,rank,mass", "0.0,1,0.125", "0.0,2,0.0625"]
    buf = io.StringIO()
    curve.write_csv(buf)
    assert buf.getvalue().splitlines()[-1] == "0.0,0,5.0"


def test_tagged_path_examples():
    path = tagged_path(stats_of(path_offspring(5)), UNIT, 4)
    assert [len(e.pieces) for e in path.events] == [1, 1, 1, 1]
    pre = [e.pre_mass for e in path.events]
    assert np.allclose(np.diff(pre), -1 / N0)

    star = tagged_path(stats_of(STAR), UNIT, 2)
    assert len(star.events) == 1
    assert list(star.events[0].pieces) == [1 / N0] * 3
    assert star.events[0].dust == 1 / N0

    small = tagged_path(stats_of(SMALL), UNIT, 2)  # c
    assert [e.depth for e in small.events] == [0, 1]
    assert list(small.events[0].pieces) == [2 / N0, 1 / N0]
    assert list(small.events[1].pieces) == [1 / N0]
    assert small.events[1].level == pytest.approx(1.0)
    assert small.check_conservation()
    assert tagged_path(stats_of(SMALL), UNIT, 0).events == ()
    with pytest.raises(DomainError):
        tagged_path(stats_of(SMALL), UNIT, 4)


def test_small_fragment_examples():
    st_ = stats_of(STAR)
    s = small_fragment_stats(st_, UNIT, 0.0, [0.5 / N0])
    assert s.N_eps[0] == 3 and s.M_eps[0] == 0.0
    s = small_fragment_stats(st_, UNIT, 0.0, [1 / N0, 2 / N0])
    # a fragment of mass exactly eps is counted in N and in M
    assert list(s.N_eps) == [3, 0]
    assert s.M_eps[1] == pytest.approx(3 / N0)
    with pytest.raises(DomainError):
        small_fragment_stats(st_, UNIT, 0.0, [0.2, 0.1])


def test_local_time():
    flat = stats_of(path_offspring(12))
    one = local_time_profile(flat, UNIT, [3.0], window=1)
    two = local_time_profile(flat, UNIT, [3.0], window=2)
    assert one.values[0] == pytest.approx(two.values[0])
    assert one.values[0] == pytest.approx(local_time_scale(UNIT, 1.0))
    interp = local_time_profile(flat, UNIT, [3.0], window=2, mode="interpolated")
    assert interp.values[0] == pytest.approx(one.values[0])
    single = stats_of(np.array([0]))
    assert local_time_profile(single, UNIT, [0.0, 2.0]).values.tolist() == [0.0, 0.0]
    assert default_window(UNIT) == 1
    assert default_window(LevelMap(1.5, 4096, 1.25)) == 1
    assert default_window(LevelMap(1.5, 2**24, 1.0)) == 12
    with pytest.raises(DomainError):
        local_time_profile(flat, UNIT, [1.0], window=0)
    with pytest.raises(DomainError):
        local_time_profile(flat, UNIT, [1.0], mode="other")


@settings(max_examples=150, deadline=None)
@given(random_offspring(max_size=80), st.data())
def test_fragment_identities(off, data):
    st_ = stats_of(off)
    for d in range(st_.height + 1):
        frags = fragments_at_level(st_, d)
        assert list(frags) == brute_force_components(st_.parent, st_.depth, d)
        assert frags.sum() == np.sum(st_.depth > d)
    v = data.draw(st.integers(0, st_.total_progeny - 1))
    path = tagged_path(st_, UNIT, v)
    assert path.check_conservation()
    assert [e.depth for e in path.events] == list(range(st_.depth[v]))
    # preorder: a is a strict ancestor of v iff a < v < a + subtree_size(a)
    expected = [a for a in range(v) if v < a + st_.subtree_size[a]]
    assert list(ancestors(st_, v)) == expected
    for e in path.events:
        assert e.pieces.sum() + e.dust == pytest.approx(e.pre_mass)


@settings(max_examples=100, deadline=None)
@given(random_offspring(max_size=80), st.floats(0.01, 1.0), st.floats(0.0, 5.0))
def test_small_fragment_partition(off, eps, t):
    st_ = stats_of(off)
    masses = fragments_at_level(st_, UNIT.depth_of(t)) / N0
    s = small_fragment_stats(st_, UNIT, t, [eps])
    assert s.N_eps[0] + np.sum(masses < eps) == len(masses)
    assert s.M_eps[0] == pytest.approx(masses[masses <= eps].sum())
