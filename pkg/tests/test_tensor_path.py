import io

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from conftest import naive_area
from roughwalk.tensor_path import (
    ITO, LINEAR, SAMPLES, STRATONOVICH, JumpPath, Level2Lift, SampledPath, antisym, chen_defect,
    chen_reconstruct, diffusive_rescale, interpolate, interpolation_gap, ito_lift_jump,
    ito_lift_sampled, read_path_csv, restrict_lift, strato_lift_linear, sym, windowed_left_sum,
    write_path_csv,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def values_strategy(max_len=15, max_dim=3):
    return st.tuples(st.integers(2, max_len), st.integers(1, max_dim)).flatmap(
        lambda s: arrays(np.float64, s, elements=finite)
    )


def sampled(values, kind):
    return SampledPath(np.arange(len(values), dtype=float), values, kind)


def random_jump_path(g, k, d, horizon=1.0):
    times = np.sort(g.uniform(0, horizon, k))
    return JumpPath(g.standard_normal(d), times, g.standard_normal((k, d)), horizon)


@given(values_strategy(), st.sampled_from([0.0, 0.5]))
def test_chen_defect_vanishes_on_all_triples(x, theta):
    path = sampled(x, LINEAR if theta else SAMPLES)
    lift = strato_lift_linear(path) if theta else ito_lift_sampled(path)
    n = len(x)
    scale = max(1.0, np.abs(x).max() ** 2)
    for i in range(n):
        for j in range(i, n):
            for k in range(j, n):
                assert np.abs(chen_defect(lift, i, j, k)).max() <= 1e-12 * scale * n


@given(values_strategy(), st.sampled_from([0.0, 0.5]), st.data())
def test_reconstruction_matches_direct_window_sum(x, theta, data):
    path = sampled(x, LINEAR if theta else SAMPLES)
    lift = strato_lift_linear(path) if theta else ito_lift_sampled(path)
    i = data.draw(st.integers(0, len(x) - 1))
    j = data.draw(st.integers(i, len(x) - 1))
    expected = naive_area(x, i, j, theta)
    scale = max(1.0, np.abs(x).max() ** 2) * len(x)
    np.testing.assert_allclose(lift.increment(i, j), expected, atol=1e-12 * scale)
    np.testing.assert_allclose(windowed_left_sum(x, i, j, theta), expected, atol=1e-12 * scale)


@given(values_strategy())
def test_trapezoid_area_symmetric_part_is_half_outer_increment(x):
    lift = strato_lift_linear(sampled(x, LINEAR))
    inc = x[-1] - x[0]
    scale = max(1.0, np.abs(x).max() ** 2) * len(x)
    np.testing.assert_allclose(sym(lift.total()), 0.5 * np.outer(inc, inc), atol=1e-12 * scale)


def test_unit_square_loop_has_levy_area_one():
    x = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]], dtype=float)
    a = strato_lift_linear(sampled(x, LINEAR)).total()
    np.testing.assert_allclose(antisym(a), [[0, 1.0], [-1.0, 0]], atol=1e-15)


def test_interpolation_gap_equals_half_sum_of_squared_jumps(rng):
    for _ in range(20):
        path = random_jump_path(rng, int(rng.integers(1, 30)), int(rng.integers(1, 4)))
        ito = ito_lift_jump(path)
        strato = strato_lift_linear(interpolate(path))
        k = path.n_jumps + 1
        gap = np.array([g for _, g in interpolation_gap(path)])
        np.testing.assert_allclose(strato.area_running[:k] - ito.area_running, gap, atol=1e-12)
        inc = path.jump_increments
        np.testing.assert_allclose(gap[-1], 0.5 * inc.T @ inc, atol=1e-12)


def test_jump_path_rejects_ties_and_out_of_range_times():
    with pytest.raises(ValueError):
        JumpPath([0.0], [0.5, 0.5], [[1.0], [1.0]], 1.0)
    with pytest.raises(ValueError):
        JumpPath([0.0], [1.5], [[1.0]], 1.0)
    with pytest.raises(ValueError):
        JumpPath([0.0], [0.0], [[1.0]], 1.0)


def test_jump_path_is_cadlag():
    p = JumpPath([0.0], [0.5], [[2.0]], 1.0)
    assert p.value_at(0.5)[0] == 2.0
    assert p.left_limit(0.5)[0] == 0.0
    assert p.quadratic_variation() == 4.0


def test_lift_kinds_are_checked():
    x = np.zeros((3, 1))
    with pytest.raises(ValueError):
        strato_lift_linear(sampled(x, SAMPLES))
    with pytest.raises(ValueError):
        ito_lift_sampled(sampled(x, LINEAR))
    assert strato_lift_linear(sampled(x, LINEAR)).lift_kind == STRATONOVICH
    assert ito_lift_sampled(sampled(x, SAMPLES)).lift_kind == ITO


def test_chen_reconstruct_requires_grid_times(rng):
    lift = strato_lift_linear(sampled(rng.standard_normal((5, 2)), LINEAR))
    np.testing.assert_array_equal(chen_reconstruct(lift, 1.0, 3.0), lift.increment(1, 3))
    with pytest.raises(ValueError):
        chen_reconstruct(lift, 0.5, 3.0)
    with pytest.raises(ValueError):
        chen_reconstruct(lift, 3.0, 1.0)


def test_restricted_lift_keeps_increments_exactly(rng):
    x = rng.standard_normal((40, 2))
    lift = strato_lift_linear(sampled(x, LINEAR))
    idx = np.array([0, 3, 7, 20, 39])
    sub = restrict_lift(lift, idx)
    for a in range(len(idx)):
        for b in range(a, len(idx)):
            np.testing.assert_allclose(sub.increment(a, b), lift.increment(idx[a], idx[b]), atol=1e-13)


def test_diffusive_rescale_scales_space_and_time(rng):
    path = random_jump_path(rng, 50, 2, horizon=100.0)
    r = diffusive_rescale(path, 100.0)
    assert r.horizon == 1.0
    np.testing.assert_allclose(r.jump_times, path.jump_times / 100)
    np.testing.assert_allclose(r.jump_increments, path.jump_increments / 10)
    with pytest.raises(ValueError):
        diffusive_rescale(path, 200.0, target_horizon=1.0)


@pytest.mark.parametrize("kind", ["jump", "sampled"])
def test_csv_round_trip_is_bit_exact(rng, kind):
    if kind == "jump":
        path = random_jump_path(rng, 12, 2)
        lift = ito_lift_jump(path)
    else:
        path = SampledPath(np.sort(rng.uniform(0, 1, 9)) + np.arange(9), rng.standard_normal((9, 2)), LINEAR)
        lift = strato_lift_linear(path)
    buf = io.StringIO()
    write_path_csv(buf, path, lift)
    back, back_lift = read_path_csv(io.StringIO(buf.getvalue()))
    assert type(back) is type(path)
    np.testing.assert_array_equal(back.event_times(), path.event_times())
    np.testing.assert_array_equal(back_lift.area_running, lift.area_running)


def test_level2_lift_shape_is_checked():
    path = sampled(np.zeros((3, 2)), LINEAR)
    with pytest.raises(ValueError):
        Level2Lift(path, np.zeros((2, 2, 2)), STRATONOVICH)
