"""Monte-Carlo harness: replicas, estimators with standard errors, sweeps in ``n``.

Every replica ``r`` draws all of its randomness from a key derived from
``(seed, r)``, and replicas are simulated in blocks of a fixed size that does
not depend on the number of workers.  Reports are therefore bit-identical for
any worker count.

All estimators are averages of per-replica statistics (derived ones such as
``gamma_hat`` are formed per replica before averaging), so the standard error
is the sample standard deviation over ``sqrt(M)``.  This is the delta-method
error for the linear combinations involved, with the correlation between the
component statistics included automatically.
"""

import csv
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.signal import lfilter

from . import rng
from .models.conductance import (
    CompensatorRecorder,
    ConductanceLaw,
    LiftAccumulator,
    PathRecorder,
    run_conductance_batch,
)
from .models.ou import ou_path_from_noise, _step_count
from .models.periodic import PeriodicCoefficients, SampledLiftAccumulator, run_periodic_batch
from .models.periodic import PathRecorder as DiffusionPathRecorder
from .tensor_path import (
    JumpPath,
    SampledPath,
    LINEAR,
    antisym,
    diffusive_rescale,
    ito_lift_jump,
    restrict_lift,
    strato_lift_linear,
)
from .variation import lepingle_ratio, rough_norm, skeleton_indices

OU = "ou"
CONDUCTANCE = "conductance"
PERIODIC = "periodic"
MODELS = (OU, CONDUCTANCE, PERIODIC)


# ---------------------------------------------------------------------------
# model configuration


@dataclass(frozen=True)
class ModelConfig:
    """What to simulate.

    ``params`` holds the model data: for ``conductance`` a law dict and
    ``dim`` (and optionally ``quenched``); for ``periodic`` a coefficient dict;
    nothing for ``ou``.  ``step`` is the microscopic time step of the OU chain
    and of the Euler scheme.
    """

    model: str
    scale_n: float
    horizon: float = 1.0
    step: float = None
    params: dict = field(default_factory=dict)
    block_size: int = None

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}, got {self.model!r}")
        if not self.scale_n > 0:
            raise ValueError("scale_n must be positive")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.model in (OU, PERIODIC):
            step = self.step if self.step is not None else (0.01 if self.model == OU else 2e-3)
            if not step > 0:
                raise ValueError("step must be positive")
            object.__setattr__(self, "step", float(step))
            _step_count(self.scale_n * self.horizon, step)
        if self.block_size is None:
            object.__setattr__(self, "block_size", 100 if self.model == OU else 500)
        if self.block_size < 1:
            raise ValueError("block_size must be positive")
        if self.model == CONDUCTANCE:
            self.law()
            if int(self.params.get("dim", 2)) < 1:
                raise ValueError("dim must be >= 1")
        if self.model == PERIODIC:
            self.coefficients()

    @property
    def dim(self):
        if self.model == OU:
            return 2
        if self.model == CONDUCTANCE:
            return int(self.params.get("dim", 2))
        return self.coefficients().dim

    def law(self):
        return ConductanceLaw.from_dict(self.params.get("law", {"kind": "constant", "a": 1.0}))

    def coefficients(self):
        return PeriodicCoefficients.from_dict(self.params.get("coefficients", {"kind": "identity", "d": 2}))

    def with_scale(self, n):
        return ModelConfig(self.model, float(n), self.horizon, self.step, dict(self.params), self.block_size)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {"model", "scale_n", "horizon", "step", "params", "block_size"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown model config field(s): {sorted(extra)}")
        return cls(**d)


# ---------------------------------------------------------------------------
# per-replica statistics


@dataclass
class ReplicaStats:
    """Per-replica end-point statistics of the rescaled lifted path at ``horizon``.

    ``x``: X^n increment over [0, T], (M, d).  ``ito``, ``strato``: level-2
    values, (M, d, d).  ``gap`` = strato - ito, accumulated separately.
    ``defect``: worst relative violation of the gap identity (jump models).
    """

    x: np.ndarray
    ito: np.ndarray
    strato: np.ndarray
    gap: np.ndarray
    defect: np.ndarray

    @property
    def replicas(self):
        return self.x.shape[0]

    @classmethod
    def concat(cls, parts):
        return cls(*(np.concatenate([getattr(p, f) for p in parts]) for f in ("x", "ito", "strato", "gap", "defect")))


def _ou_block(cfg, keys):
    n, h = cfg.scale_n, cfg.step
    steps = _step_count(n * cfg.horizon, h)
    m = len(keys)
    x0 = np.empty((m, 2))
    noise = np.empty((m, steps, 2))
    for r, k in enumerate(keys):
        g = rng.replica_generator(k)
        x0[r] = g.standard_normal(2)
        noise[r] = g.standard_normal((steps, 2))
    c = np.exp(-(1.0 + 1.0j) * h)
    sd = np.sqrt(1.0 - np.exp(-2.0 * h))
    z0 = x0[:, 0] + 1.0j * x0[:, 1]
    z = lfilter([1.0], [1.0, -c], sd * (noise[:, :, 0] + 1.0j * noise[:, :, 1]), axis=1, zi=(c * z0)[:, None])[0]
    del noise
    z = np.concatenate([z0[:, None], z], axis=1)
    # trapezoid increments of the additive functional, rescaled
    dz = 0.5 * h * (z[:, 1:] + z[:, :-1]) / math.sqrt(n)
    inc = np.stack([dz.real, dz.imag], axis=-1)
    level = np.cumsum(inc, axis=1) - inc  # Z_k - Z_0 at the left point
    ito = np.einsum("mki,mkj->mij", level, inc)
    gap = 0.5 * np.einsum("mki,mkj->mij", inc, inc)
    x = inc.sum(axis=1)
    return ReplicaStats(x, ito, ito + gap, gap, np.zeros(m))


def conductance_keys(cfg, keys, seed):
    keys = np.asarray(keys, dtype=np.uint64)
    if cfg.params.get("quenched", False):
        env = rng.hash_words(np.uint64(seed), rng.STREAM_ENV)
        return np.broadcast_to(env, keys.shape).copy(), keys
    return keys, keys


def _conductance_block(cfg, keys, seed):
    acc = LiftAccumulator(cfg.scale_n)
    env_keys, walk_keys = conductance_keys(cfg, keys, seed)
    run_conductance_batch(cfg.law(), cfg.dim, cfg.scale_n * cfg.horizon, env_keys, walk_keys, [acc])
    return ReplicaStats(acc.x, acc.ito, acc.strato, acc.gap, acc.max_defect)


def _periodic_block(cfg, keys):
    acc = SampledLiftAccumulator(cfg.scale_n)
    steps = _step_count(cfg.scale_n * cfg.horizon, cfg.step)
    run_periodic_batch(cfg.coefficients(), steps, cfg.step, keys, [acc])
    defect = np.abs(acc.strato - acc.ito - acc.gap).max(axis=(1, 2))
    return ReplicaStats(acc.x, acc.ito, acc.strato, acc.gap, defect)


def simulate_block(cfg, seed, start, stop):
    """Statistics for replicas ``start .. stop-1``."""
    keys = rng.replica_keys(seed, np.arange(start, stop))
    if cfg.model == OU:
        return _ou_block(cfg, keys)
    if cfg.model == CONDUCTANCE:
        return _conductance_block(cfg, keys, seed)
    return _periodic_block(cfg, keys)


def _block_task(args):
    cfg_dict, seed, start, stop = args
    return simulate_block(ModelConfig.from_dict(cfg_dict), seed, start, stop)


def default_workers():
    env = os.environ.get("ROUGHWALK_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_replicas(cfg, replicas, seed, workers=None):
    """Simulate ``replicas`` replicas; blocks are merged in replica-index order."""
    if replicas < 2:
        raise ValueError("need at least 2 replicas")
    workers = default_workers() if workers is None else int(workers)
    bounds = [(s, min(s + cfg.block_size, replicas)) for s in range(0, replicas, cfg.block_size)]
    if workers <= 1 or len(bounds) == 1:
        parts = [simulate_block(cfg, seed, a, b) for a, b in bounds]
    else:
        tasks = [(cfg.to_dict(), seed, a, b) for a, b in bounds]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_block_task, tasks))
    return ReplicaStats.concat(parts)


# ---------------------------------------------------------------------------
# reports


@dataclass
class EstimatorReport:
    statistic: str
    mean: np.ndarray
    stderr: np.ndarray
    replicas: int
    scale_n: float
    seed: int
    wall_time: float = 0.0

    def to_json(self, timing=True):
        """JSON form; ``timing=False`` drops the wall time so reruns compare bit-for-bit."""
        out = {
            "statistic": self.statistic,
            "mean": np.asarray(self.mean).tolist(),
            "stderr": np.asarray(self.stderr).tolist(),
            "replicas": self.replicas,
            "scale_n": self.scale_n,
            "seed": self.seed,
        }
        if timing:
            out["wall_time"] = self.wall_time
        return out

    @classmethod
    def from_json(cls, d):
        return cls(d["statistic"], np.array(d["mean"]), np.array(d["stderr"]), int(d["replicas"]),
                   float(d["scale_n"]), int(d["seed"]), float(d.get("wall_time", 0.0)))

    def long_rows(self):
        """Rows ``(statistic, i, j, mean, stderr, n, M, seed)`` with 1-based indices."""
        mean = np.atleast_2d(self.mean)
        err = np.atleast_2d(self.stderr)
        rows = []
        for i in range(mean.shape[0]):
            for j in range(mean.shape[1]):
                rows.append((self.statistic, i + 1, j + 1, float(mean[i, j]), float(err[i, j]),
                             self.scale_n, self.replicas, self.seed))
        return rows

    def deviation(self, target):
        return np.abs(np.asarray(self.mean) - np.asarray(target))

    def within(self, target, k=3.0, allowance=0.0):
        """Entrywise ``|mean - target| <= k stderr + allowance``."""
        return bool(np.all(self.deviation(target) <= k * np.asarray(self.stderr) + allowance))


LONG_HEADER = ("statistic", "i", "j", "mean", "stderr", "n", "M", "seed")


def write_long_csv(path, reports):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LONG_HEADER)
        for rep in reports:
            for row in rep.long_rows():
                w.writerow(row)


def summarize(name, samples, cfg, seed, wall_time=0.0):
    """Mean and ``std / sqrt(M)`` of per-replica samples (axis 0)."""
    samples = np.asarray(samples, dtype=np.float64)
    m = samples.shape[0]
    if m < 2:
        raise ValueError("need at least 2 replicas")
    mean = samples.mean(axis=0)
    err = samples.std(axis=0, ddof=1) / math.sqrt(m)
    return EstimatorReport(name, mean, err, m, float(cfg.scale_n), int(seed), wall_time)


def outer_samples(stats):
    return stats.x[:, :, None] * stats.x[:, None, :]


def gamma_samples(stats):
    """Per replica ``strato - x (x) x / 2``."""
    return stats.strato - 0.5 * outer_samples(stats)


LIFTS = ("ito", "strato", "gap")


def level2_samples(stats, lift_kind):
    if lift_kind not in LIFTS:
        raise ValueError(f"lift kind must be one of {LIFTS}")
    return getattr(stats, lift_kind)


def reports_from_stats(cfg, stats, seed, wall_time=0.0):
    """Every estimator of interest from one set of replicas."""
    out = {
        "covariance": summarize("covariance", outer_samples(stats), cfg, seed, wall_time),
        "level2_ito": summarize("level2_ito", stats.ito, cfg, seed, wall_time),
        "level2_strato": summarize("level2_strato", stats.strato, cfg, seed, wall_time),
        "gap": summarize("gap", stats.gap, cfg, seed, wall_time),
        "gamma_hat": summarize("gamma_hat", gamma_samples(stats), cfg, seed, wall_time),
        "gamma_hat_antisym": summarize("gamma_hat_antisym", antisym(gamma_samples(stats)), cfg, seed, wall_time),
        "level2_ito_antisym": summarize("level2_ito_antisym", antisym(stats.ito), cfg, seed, wall_time),
    }
    if cfg.model == CONDUCTANCE:
        # Itô mean minus its predicted limit cov/2 - E[eta] I, formed per replica
        shift = cfg.law().mean() * np.eye(cfg.dim)
        out["ito_correction_residual"] = summarize(
            "ito_correction_residual", stats.ito - 0.5 * outer_samples(stats) + shift, cfg, seed, wall_time
        )
    return out


def estimate(cfg, replicas, seed, workers=None):
    """Run once and return ``(stats, reports)``."""
    t0 = time.perf_counter()
    stats = run_replicas(cfg, replicas, seed, workers)
    return stats, reports_from_stats(cfg, stats, seed, time.perf_counter() - t0)


def estimate_covariance(cfg, replicas, seed, workers=None):
    return estimate(cfg, replicas, seed, workers)[1]["covariance"]


def estimate_level2_mean(cfg, lift_kind, replicas, seed, workers=None):
    if lift_kind not in LIFTS:
        raise ValueError(f"lift kind must be one of {LIFTS}")
    if cfg.model == OU and lift_kind == "gap":
        raise ValueError("the OU additive functional has no interpolation gap")
    t0 = time.perf_counter()
    stats = run_replicas(cfg, replicas, seed, workers)
    return summarize(f"level2_{lift_kind}", level2_samples(stats, lift_kind), cfg, seed, time.perf_counter() - t0)


def gamma_hat(cfg, replicas, seed, workers=None):
    """Mean of the continuous (trapezoid) lift minus half the empirical covariance."""
    return estimate(cfg, replicas, seed, workers)[1]["gamma_hat"]


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class ConvergenceSweep:
    statistic: str
    scales: list
    reports: list
    target: np.ndarray
    slope: float

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.scales[:-1], self.scales[1:])):
            raise ValueError("scale_n values must be strictly increasing")

    def deviations(self):
        return [float(np.max(r.deviation(self.target))) for r in self.reports]

    def to_json(self, timing=True):
        return {
            "statistic": self.statistic,
            "scales": list(self.scales),
            "target": np.asarray(self.target).tolist(),
            "deviations": self.deviations(),
            "slope": self.slope,
            "reports": [r.to_json(timing) for r in self.reports],
        }

    def long_rows(self):
        """Rows ``(n, statistic, i, j, mean, stderr)``."""
        rows = []
        for n, rep in zip(self.scales, self.reports):
            for row in rep.long_rows():
                rows.append((n, row[0], row[1], row[2], row[3], row[4]))
        return rows


def loglog_slope(xs, ys):
    xs, ys = np.asarray(xs, dtype=np.float64), np.asarray(ys, dtype=np.float64)
    ok = ys > 0
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(xs[ok]), np.log(ys[ok]), 1)[0])


def convergence_sweep(cfg, scales, replicas, seed, statistic="gamma_hat", target=None, workers=None):
    """Estimate ``statistic`` at each ``n`` and fit log deviation against log n."""
    scales = [float(s) for s in scales]
    if len(scales) < 3:
        raise ValueError("a sweep needs at least 3 values of n")
    reports = []
    for n in scales:
        _, reps = estimate(cfg.with_scale(n), replicas, seed, workers)
        if statistic not in reps:
            raise ValueError(f"unknown statistic {statistic!r}")
        reports.append(reps[statistic])
    if target is None:
        target = np.zeros_like(reports[-1].mean)
    target = np.asarray(target, dtype=np.float64)
    devs = [float(np.max(r.deviation(target))) for r in reports]
    return ConvergenceSweep(statistic, scales, reports, target, loglog_slope(scales, devs))


# ---------------------------------------------------------------------------
# path-level diagnostics


def replica_lifts(cfg, seed, start, stop):
    """Full rescaled lifts on ``[0, horizon]`` for replicas ``start .. stop-1``.

    OU and periodic: trapezoid lift of the piecewise-linear path.  Conductance:
    left-point lift of the jump path.
    """
    keys = rng.replica_keys(seed, np.arange(start, stop))
    n = cfg.scale_n
    out = []
    if cfg.model == OU:
        steps = _step_count(n * cfg.horizon, cfg.step)
        for k in keys:
            g = rng.replica_generator(k)
            x0 = g.standard_normal(2)
            x = ou_path_from_noise(x0, g.standard_normal((steps, 2)), cfg.step)
            inc = 0.5 * cfg.step * (x[1:] + x[:-1]) / math.sqrt(n)
            z = np.vstack([np.zeros((1, 2)), np.cumsum(inc, axis=0)])
            path = SampledPath(np.arange(steps + 1) * cfg.step / n, z, LINEAR)
            out.append(strato_lift_linear(path))
    elif cfg.model == CONDUCTANCE:
        rec = PathRecorder()
        env_keys, walk_keys = conductance_keys(cfg, keys, seed)
        run_conductance_batch(cfg.law(), cfg.dim, n * cfg.horizon, env_keys, walk_keys, [rec])
        for p in rec.paths(cfg.dim, n * cfg.horizon):
            out.append(ito_lift_jump(diffusive_rescale(p, n)))
    else:
        rec = DiffusionPathRecorder()
        steps = _step_count(n * cfg.horizon, cfg.step)
        run_periodic_batch(cfg.coefficients(), steps, cfg.step, keys, [rec])
        for p in rec.paths(cfg.step):
            shifted = SampledPath(p.times / n, (p.values - p.values[0]) / math.sqrt(n), LINEAR)
            out.append(strato_lift_linear(shifted))
    return out


def _rough_norms_task(args):
    cfg_dict, seed, start, stop, p, level = args
    cfg = ModelConfig.from_dict(cfg_dict)
    norms = []
    for lift in replica_lifts(cfg, seed, start, stop):
        idx = skeleton_indices(lift.base, level)
        norms.append(rough_norm(restrict_lift(lift, idx), p))
    return norms


@dataclass
class TightnessTable:
    p: float
    level: int
    scales: list
    quantiles: dict  # n -> (q50, q90, q99)
    slope: float

    def to_json(self):
        return {
            "p": self.p,
            "level": self.level,
            "scales": list(self.scales),
            "quantiles": {str(k): list(v) for k, v in self.quantiles.items()},
            "slope_q90": self.slope,
        }

    def long_rows(self):
        """Rows ``(n, quantile, value)`` for quantile fans."""
        rows = []
        for n in self.scales:
            for q, v in zip((50, 90, 99), self.quantiles[n]):
                rows.append((n, q, v))
        return rows


def pvar_tightness_probe(cfg, p, scales, replicas, seed, level=5, workers=None):
    """Quantiles of the rough-path norm over ``n``; slope of the 90% quantile.

    Each lift is observed at the stopping-time skeleton of mesh ``2**-level``
    (Chen keeps the area exact there), which keeps the area dynamic program
    cheap while treating every ``n`` identically.  The slope is the least
    squares fit of ``log q90`` against ``log n``.
    """
    if p < 2:
        raise ValueError("p must be >= 2")
    workers = default_workers() if workers is None else int(workers)
    quant = {}
    for n in scales:
        c = cfg.with_scale(n)
        bs = max(1, min(c.block_size, 50))
        tasks = [(c.to_dict(), seed, a, min(a + bs, replicas), p, level) for a in range(0, replicas, bs)]
        if workers <= 1 or len(tasks) == 1:
            chunks = [_rough_norms_task(t) for t in tasks]
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                chunks = list(pool.map(_rough_norms_task, tasks))
        norms = np.concatenate([np.asarray(ch) for ch in chunks])
        quant[n] = tuple(float(v) for v in np.quantile(norms, [0.5, 0.9, 0.99]))
    q90 = [quant[n][1] for n in scales]
    slope = loglog_slope(scales, q90)
    return TightnessTable(float(p), int(level), list(scales), quant, slope)


@dataclass
class LepingleReport:
    model: str
    p: float
    ratio: float
    mean_pvar_sq: float
    mean_qv: float
    replicas: int

    def to_json(self):
        return asdict(self)

    def in_band(self, lo=0.01, hi=100.0):
        return lo <= self.ratio <= hi


def symmetric_walk_paths(replicas, seed, horizon=100.0, rate=1.0):
    """Continuous-time symmetric +-1 walks on Z (martingales) with exponential clocks."""
    out = []
    for k in rng.replica_keys(seed, np.arange(replicas)):
        g = rng.replica_generator(k)
        count = g.poisson(rate * horizon)
        times = np.sort(g.uniform(0.0, horizon, count))
        incs = g.choice([-1.0, 1.0], size=count)[:, None]
        out.append(JumpPath(np.zeros(1), times, incs, horizon))
    return out


def conductance_martingales(law, dim, horizon, replicas, seed):
    keys = rng.replica_keys(seed, np.arange(replicas))
    rec_w, rec_c = PathRecorder(), CompensatorRecorder()
    run_conductance_batch(law, dim, horizon, keys, keys, [rec_w, rec_c])
    walks = rec_w.paths(dim, horizon)
    return rec_c.martingales(walks)


def lepingle_diagnostic(martingales, p, model="custom"):
    """``E[||M||_p^2] / E[[M]_T]`` over a sample of martingale paths."""
    if not p > 2:
        raise ValueError("need p > 2")
    pv, qv = [], []
    for m in martingales:
        q = m.quadratic_variation()
        if q == 0:
            pv.append(0.0)
            qv.append(0.0)
            continue
        r = lepingle_ratio(m, p)
        pv.append(r * q)
        qv.append(q)
    mean_pv, mean_qv = float(np.mean(pv)), float(np.mean(qv))
    if mean_qv == 0:
        raise ValueError("all martingales are constant")
    return LepingleReport(model, float(p), mean_pv / mean_qv, mean_pv, mean_qv, len(pv))
