import json
import math

import numpy as np
import pytest

from roughwalk import mc
from roughwalk.models.conductance import ConductanceLaw
from roughwalk.tensor_path import JumpPath

U12 = {"kind": "uniform", "a": 1.0, "b": 2.0}


def cond_cfg(n=20.0, law=U12, dim=2, block=7, **params):
    return mc.ModelConfig("conductance", n, params={"law": law, "dim": dim, **params}, block_size=block)


def assert_stats_equal(a, b):
    for f in ("x", "ito", "strato", "gap", "defect"):
        np.testing.assert_array_equal(getattr(a, f), getattr(b, f))


@pytest.mark.parametrize("cfg", [
    mc.ModelConfig("ou", 5.0, step=0.05, block_size=6),
    cond_cfg(),
    cond_cfg(quenched=True),
    mc.ModelConfig("periodic", 2.0, step=0.01, params={"coefficients": {"kind": "cellular", "kappa": 0.5}}, block_size=6),
])
def test_results_do_not_depend_on_workers_or_blocks(cfg):
    one = mc.run_replicas(cfg, 20, seed=11, workers=1)
    two = mc.run_replicas(cfg, 20, seed=11, workers=2)
    rebatched = mc.run_replicas(mc.ModelConfig.from_dict({**cfg.to_dict(), "block_size": 20}), 20, seed=11, workers=1)
    assert_stats_equal(one, two)
    assert_stats_equal(one, rebatched)
    other = mc.run_replicas(cfg, 20, seed=12, workers=1)
    assert not np.array_equal(one.x, other.x)


def test_reports_are_bit_identical_across_worker_counts():
    cfg = cond_cfg()
    r1 = mc.estimate(cfg, 30, 3, workers=1)[1]
    r2 = mc.estimate(cfg, 30, 3, workers=3)[1]
    for k in r1:
        assert json.dumps(r1[k].to_json(timing=False)) == json.dumps(r2[k].to_json(timing=False))


def test_stderr_is_sample_std_over_root_m():
    g = np.random.default_rng(0)
    samples = g.standard_normal((50, 2, 2))
    rep = mc.summarize("s", samples, cond_cfg(), seed=1)
    np.testing.assert_allclose(rep.stderr, samples.std(axis=0, ddof=1) / math.sqrt(50))
    np.testing.assert_allclose(rep.mean, samples.mean(axis=0))
    assert rep.within(rep.mean)
    assert not rep.within(rep.mean + 10 * rep.stderr + 1e-9)
    with pytest.raises(ValueError):
        mc.summarize("s", samples[:1], cond_cfg(), seed=1)


def test_report_json_round_trip_and_long_rows():
    stats, reps = mc.estimate(cond_cfg(), 10, 2, workers=1)
    rep = reps["covariance"]
    back = mc.EstimatorReport.from_json(json.loads(json.dumps(rep.to_json())))
    np.testing.assert_array_equal(back.mean, rep.mean)
    rows = rep.long_rows()
    assert len(rows) == 4
    assert rows[0][:3] == ("covariance", 1, 1) and rows[0][5:] == (20.0, 10, 2)


def test_gamma_hat_is_strato_minus_half_outer():
    stats, reps = mc.estimate(cond_cfg(), 40, 5, workers=1)
    outer = np.einsum("mi,mj->mij", stats.x, stats.x)
    np.testing.assert_allclose(reps["gamma_hat"].mean, (stats.strato - 0.5 * outer).mean(axis=0), atol=1e-14)
    # the interpolated lift's symmetric part is half the outer increment, replica by replica
    np.testing.assert_allclose(0.5 * (stats.strato + np.swapaxes(stats.strato, 1, 2)), 0.5 * outer, atol=1e-12)


def test_gap_identity_holds_end_to_end():
    stats = mc.run_replicas(cond_cfg(n=50.0), 40, 1, workers=1)
    np.testing.assert_allclose(stats.strato - stats.ito, stats.gap, atol=1e-13)
    assert stats.defect.max() <= 1e-12


def test_homogeneous_walk_covariance_is_two_kappa():
    cfg = cond_cfg(n=50.0, law={"kind": "constant", "a": 1.5}, dim=1, block=500)
    rep = mc.estimate_covariance(cfg, 2000, 8, workers=1)
    assert rep.within([[3.0]], k=3.0)


def test_one_dimensional_two_point_walk_uses_harmonic_mean():
    law = {"kind": "two_point", "a": 1.0, "b": 2.0, "q": 0.5}
    cfg = cond_cfg(n=200.0, law=law, dim=1, block=500)
    stats, reps = mc.estimate(cfg, 3000, 21, workers=1)
    assert reps["covariance"].within([[8.0 / 3.0]], k=3.0)
    assert reps["gap"].within([[1.5]], k=3.0)


def test_estimators_validate_inputs():
    with pytest.raises(ValueError):
        mc.estimate_level2_mean(mc.ModelConfig("ou", 1.0), "gap", 4, 0)
    with pytest.raises(ValueError):
        mc.estimate_level2_mean(cond_cfg(), "rough", 4, 0)
    with pytest.raises(ValueError):
        mc.run_replicas(cond_cfg(), 1, 0)
    with pytest.raises(ValueError):
        mc.ModelConfig("ou", 1.0, step=0.3)
    with pytest.raises(ValueError):
        mc.ModelConfig.from_dict({"model": "ou", "scale_n": 1.0, "colour": "red"})
    with pytest.raises(ValueError):
        mc.ModelConfig("brownian", 1.0)


def test_sweep_requires_increasing_scales():
    with pytest.raises(ValueError):
        mc.convergence_sweep(cond_cfg(), [10, 5, 20], 4, 0)
    with pytest.raises(ValueError):
        mc.convergence_sweep(cond_cfg(), [10, 20], 4, 0)


def test_sweep_rows_and_slope():
    sweep = mc.convergence_sweep(cond_cfg(block=50), [5, 10, 20], 20, 0, statistic="gap",
                                 target=1.5 * np.eye(2), workers=1)
    assert len(sweep.long_rows()) == 12
    assert np.isfinite(sweep.slope)
    assert mc.loglog_slope([1, 2, 4, 8], [3, 6, 12, 24]) == pytest.approx(1.0)
    assert mc.loglog_slope([1, 2, 4], [5, 5, 5]) == pytest.approx(0.0, abs=1e-12)


def test_tightness_probe_table():
    table = mc.pvar_tightness_probe(mc.ModelConfig("ou", 1.0, block_size=10), 2.5, [5, 10, 20], 12, 0, workers=1)
    assert set(table.quantiles) == {5, 10, 20}
    for q50, q90, q99 in table.quantiles.values():
        assert 0 < q50 <= q90 <= q99
    assert len(table.long_rows()) == 9
    with pytest.raises(ValueError):
        mc.pvar_tightness_probe(mc.ModelConfig("ou", 1.0), 1.5, [5, 10, 20], 4, 0)


def test_lepingle_single_jump_ratio_is_one():
    paths = [JumpPath([0.0], [0.5], [[s]], 1.0) for s in (1.0, -2.0, 0.5)]
    assert mc.lepingle_diagnostic(paths, 2.5).ratio == pytest.approx(1.0, abs=1e-15)


def test_lepingle_ratio_is_non_increasing_in_p():
    paths = mc.symmetric_walk_paths(200, seed=4, horizon=100.0)
    r25 = mc.lepingle_diagnostic(paths, 2.5).ratio
    r4 = mc.lepingle_diagnostic(paths, 4.0).ratio
    assert r4 <= r25
    assert mc.lepingle_diagnostic(paths, 2.5).in_band()
    with pytest.raises(ValueError):
        mc.lepingle_diagnostic(paths, 2.0)


def test_conductance_martingale_has_mean_zero_and_jump_variation():
    law = ConductanceLaw.uniform(1.0, 2.0)
    ms = mc.conductance_martingales(law, 2, 10.0, 400, seed=2)
    ends = np.array([m.vertex_values()[-1] for m in ms])
    assert np.all(np.abs(ends.mean(axis=0)) <= 4 * ends.std(axis=0, ddof=1) / math.sqrt(len(ms)))
    # quadratic variation of the compensated walk is the number of unit jumps
    assert all(m.quadratic_variation() == len(m.jumps) for m in ms)
