import numpy as np
from hypothesis import given, strategies as st

from roughwalk import rng


@given(st.integers(0, 2**63 - 1), st.lists(st.integers(0, 10**6), min_size=1, max_size=20))
def test_keys_do_not_depend_on_batching(seed, idx):
    together = rng.replica_keys(seed, idx)
    apart = np.concatenate([rng.replica_keys(seed, [i]) for i in idx])
    np.testing.assert_array_equal(together, apart)


def test_uniforms_lie_in_unit_interval_and_look_uniform():
    u = rng.uniforms(np.uint64(7), np.arange(200_000))
    assert u.min() >= 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 5 * (1 / np.sqrt(12 * u.size))
    hist = np.histogram(u, bins=10, range=(0, 1))[0]
    expected = u.size / 10
    assert ((hist - expected) ** 2 / expected).sum() < 40  # chi2(9) far tail


def test_streams_differ():
    a = rng.uniforms(np.uint64(1), rng.STREAM_ENV, np.arange(100))
    b = rng.uniforms(np.uint64(1), rng.STREAM_WALK, np.arange(100))
    assert not np.any(a == b)


def test_replica_generator_is_deterministic():
    k = rng.replica_keys(3, [5])[0]
    np.testing.assert_array_equal(rng.replica_generator(k).standard_normal(5), rng.replica_generator(k).standard_normal(5))
