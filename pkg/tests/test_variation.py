import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from roughwalk.tensor_path import LINEAR, SAMPLES, JumpPath, SampledPath, ito_lift_sampled, strato_lift_linear
from roughwalk.variation import (
    control_check, dyadic_skeleton, lepingle_ratio, partition_sum, pvar_area, pvar_area_bruteforce,
    pvar_bruteforce, pvar_control, pvar_dyadic, pvar_grid_dp, rough_norm,
)

finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)
paths = st.tuples(st.integers(1, 9), st.integers(1, 3)).flatmap(
    lambda s: arrays(np.float64, s, elements=finite)
)


def exhaustive_pvar_power(x, p):
    """Independent oracle: enumerate every subset of interior points."""
    n = len(x)
    best = 0.0
    for r in range(n - 1):
        for mid in itertools.combinations(range(1, n - 1), r):
            part = (0,) + mid + (n - 1,)
            s = sum(np.linalg.norm(x[b] - x[a]) ** p for a, b in zip(part[:-1], part[1:]))
            best = max(best, s)
    return best


@given(paths, st.sampled_from([1.0, 1.5, 2.0, 2.5, 3.0]))
def test_dp_matches_exhaustive_enumeration(x, p):
    dp = pvar_grid_dp(x, p)
    oracle = exhaustive_pvar_power(x, p)
    assert dp.value**p == pytest.approx(oracle, rel=1e-12, abs=1e-12)
    assert partition_sum(x, dp.optimal_partition, p) == pytest.approx(oracle, rel=1e-12, abs=1e-12)


@given(paths, st.sampled_from([1.0, 2.0, 3.0]))
def test_pruning_does_not_change_the_value(x, p):
    assert pvar_grid_dp(x, p, prune=True).value == pytest.approx(pvar_grid_dp(x, p, prune=False).value, rel=1e-13, abs=1e-13)


def test_zigzag_quadratic_variation_is_sqrt_two():
    x = np.array([[0.0], [1.0], [0.0]])
    assert pvar_bruteforce(x, 2).value == pytest.approx(math.sqrt(2), abs=1e-15)
    assert pvar_grid_dp(x, 2).value == pytest.approx(math.sqrt(2), abs=1e-15)


def test_one_variation_of_monotone_path_is_total_increment():
    x = np.cumsum(np.abs(np.random.default_rng(0).standard_normal(50)))[:, None]
    assert pvar_grid_dp(x, 1).value == pytest.approx(x[-1, 0] - x[0, 0], rel=1e-12)


def test_p_below_one_is_rejected():
    with pytest.raises(ValueError):
        pvar_grid_dp(np.zeros((3, 1)), 0.5)
    with pytest.raises(ValueError):
        pvar_bruteforce(np.zeros((25, 1)), 2)


@given(paths)
def test_pvar_is_non_increasing_in_p(x):
    vals = [pvar_grid_dp(x, p).value for p in (1.0, 1.5, 2.0, 3.0, 4.0)]
    assert all(b <= a * (1 + 1e-12) + 1e-12 for a, b in zip(vals, vals[1:]))


@given(st.integers(0, 10_000), st.sampled_from([1.0, 1.5, 2.0]))
def test_area_dp_matches_brute_force(seed, q):
    g = np.random.default_rng(seed)
    x = np.cumsum(g.standard_normal((10, 2)), axis=0)
    lift = strato_lift_linear(SampledPath(np.arange(10.0), x, LINEAR))
    assert pvar_area(lift, q).value == pytest.approx(pvar_area_bruteforce(lift, q).value, rel=1e-12)


@given(paths.filter(lambda x: len(x) >= 3), st.sampled_from([1.0, 2.0, 2.5]))
def test_pvar_control_is_superadditive(x, p):
    ev = control_check(pvar_control(x, p), len(x))
    scale = max(1.0, exhaustive_pvar_power(x, p))
    assert ev.max_defect <= 1e-10 * scale


@pytest.mark.parametrize("level", [0, 2, 4])
def test_dyadic_skeleton_stays_close_and_bounds_from_below(level):
    g = np.random.default_rng(level)
    x = np.cumsum(g.standard_normal((200, 2)) * 0.1, axis=0)
    for kind in (LINEAR, SAMPLES):
        path = SampledPath(np.linspace(0, 1, 200), x, kind)
        sk = dyadic_skeleton(path, level)
        delta = 2.0**-level
        for t, v in zip(path.times, path.values):
            assert np.linalg.norm(sk.value_at(t) - v) <= delta * (1 + 1e-12)
        assert pvar_dyadic(path, 2.5, level).value <= pvar_grid_dp(x, 2.5).value * (1 + 1e-12)


def test_rough_norm_of_straight_line():
    x = np.linspace(0, 1, 11)[:, None] * np.array([[3.0, 4.0]])
    lift = ito_lift_sampled(SampledPath(np.arange(11.0), x, SAMPLES))
    straight = strato_lift_linear(SampledPath(np.arange(11.0), x, LINEAR))
    # a straight line has p-variation |x_T - x_0| = 5; its trapezoid area is outer/2
    assert rough_norm(straight, 2.5) == pytest.approx(5.0 + math.sqrt(12.5), rel=1e-12)
    assert rough_norm(lift, 2.5) > 5.0
    with pytest.raises(ValueError):
        rough_norm(lift, 1.5)


def test_lepingle_ratio_of_single_jump_is_one():
    m = JumpPath([0.0, 0.0], [0.3], [[1.0, -2.0]], 1.0)
    assert lepingle_ratio(m, 2.5) == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ValueError):
        lepingle_ratio(m, 2.0)
