"""Differential equations driven by the simulated paths, and their corrected limits.

A driven equation ``dY = sigma(Y_-) dX`` is solved by the left-point Euler
scheme on the driver's own events, which is exact for step drivers.  The
limit equation is the Itô SDE

    dY = sigma(Y) dB + sum_{j,k,l} d_k sigma_{.j}(Y) sigma_{kl}(Y) G_{jl} dt

with ``B`` Brownian with the predicted covariance and ``G`` the Itô-level
mean area of the driver's lift per unit time.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .homog import RoughLimitPrediction
from .mc import conductance_keys
from .models.conductance import JumpObserver, LiftAccumulator, run_conductance_batch
from .tensor_path import JumpPath, SampledPath, SAMPLES

ITO_DRIVER = "ito"
STRATO_DRIVER = "stratonovich"


# ---------------------------------------------------------------------------
# vector fields


class VectorField:
    """``sigma: R^e -> R^{e x d}`` with analytic derivative.

    ``sigma(y)`` maps (M, e) to (M, e, d); ``jacobian(y)`` returns
    ``D[m, i, j, k] = d sigma_ij / d y_k``.
    """

    out_dim: int
    in_dim: int

    def sigma(self, y):
        raise NotImplementedError

    def jacobian(self, y):
        raise NotImplementedError

    def __call__(self, y):
        return self.sigma(y)


@dataclass(frozen=True)
class ConstantField(VectorField):
    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", np.atleast_2d(np.asarray(self.matrix, dtype=np.float64)))

    @property
    def out_dim(self):
        return self.matrix.shape[0]

    @property
    def in_dim(self):
        return self.matrix.shape[1]

    def sigma(self, y):
        y = np.atleast_2d(y)
        return np.broadcast_to(self.matrix, (y.shape[0],) + self.matrix.shape).copy()

    def jacobian(self, y):
        y = np.atleast_2d(y)
        e, d = self.matrix.shape
        return np.zeros((y.shape[0], e, d, e))


@dataclass(frozen=True)
class LinearField(VectorField):
    """``sigma(y)_{.j} = C_j y``; ``mats`` has shape (d, e, e).

    :meth:`scalar` builds the one-dimensional case ``sigma(y) = y c^T``.
    """

    mats: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mats, dtype=np.float64)
        if m.ndim != 3 or m.shape[1] != m.shape[2]:
            raise ValueError("mats must have shape (d, e, e)")
        object.__setattr__(self, "mats", m)

    @classmethod
    def scalar(cls, c):
        c = np.asarray(c, dtype=np.float64).reshape(-1)
        return cls(c[:, None, None])

    @property
    def out_dim(self):
        return self.mats.shape[1]

    @property
    def in_dim(self):
        return self.mats.shape[0]

    def sigma(self, y):
        y = np.atleast_2d(np.asarray(y, dtype=np.float64))
        return np.einsum("jik,mk->mij", self.mats, y)

    def jacobian(self, y):
        y = np.atleast_2d(y)
        d = np.transpose(self.mats, (1, 0, 2))  # [i, j, k]
        return np.broadcast_to(d, (y.shape[0],) + d.shape).copy()


@dataclass(frozen=True)
class TrigField(VectorField):
    """Bounded smooth field ``sigma_ij(y) = A_ij sin(W_ij . y + phi_ij)``.

    ``amplitude`` (e, d), ``weights`` (e, d, e), ``phase`` (e, d).
    """

    amplitude: np.ndarray
    weights: np.ndarray
    phase: np.ndarray

    def __post_init__(self):
        for name in ("amplitude", "weights", "phase"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        e, d = self.amplitude.shape
        if self.weights.shape != (e, d, e) or self.phase.shape != (e, d):
            raise ValueError("inconsistent shapes for amplitude, weights, phase")

    @classmethod
    def example(cls, e=1, d=2, seed=0):
        g = np.random.default_rng(seed)
        return cls(
            0.5 + 0.5 * g.random((e, d)),
            g.standard_normal((e, d, e)),
            g.uniform(0, 2 * np.pi, (e, d)),
        )

    @property
    def out_dim(self):
        return self.amplitude.shape[0]

    @property
    def in_dim(self):
        return self.amplitude.shape[1]

    def _arg(self, y):
        y = np.atleast_2d(np.asarray(y, dtype=np.float64))
        return np.einsum("ijk,mk->mij", self.weights, y) + self.phase

    def sigma(self, y):
        return self.amplitude * np.sin(self._arg(y))

    def jacobian(self, y):
        return (self.amplitude * np.cos(self._arg(y)))[..., None] * self.weights


def field_from_dict(spec):
    kind = spec.get("kind")
    if kind == "constant":
        return ConstantField(np.array(spec["matrix"]))
    if kind == "linear_scalar":
        return LinearField.scalar(spec["c"])
    if kind == "linear":
        return LinearField(np.array(spec["mats"]))
    if kind == "trig":
        if "amplitude" in spec:
            return TrigField(np.array(spec["amplitude"]), np.array(spec["weights"]), np.array(spec["phase"]))
        return TrigField.example(int(spec.get("e", 1)), int(spec.get("d", 2)), int(spec.get("seed", 0)))
    raise ValueError(f"unknown vector field kind {kind!r}")


def correction_drift(field, y, gamma):
    """``sum_{j,k,l} d_k sigma_ij(y) sigma_kl(y) gamma_jl`` for each row of ``y``."""
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    return np.einsum("mijk,mkl,jl->mi", field.jacobian(y), field.sigma(y), np.asarray(gamma))


def ito_matrix(prediction, driver_lift):
    """Mean Itô area per unit time of the limit for the given driver lift."""
    if driver_lift == ITO_DRIVER:
        g = prediction.ito_correction
    elif driver_lift == STRATO_DRIVER:
        g = 0.5 * prediction.covariance + prediction.gamma_strato
    else:
        raise ValueError(f"driver lift must be {ITO_DRIVER!r} or {STRATO_DRIVER!r}")
    if g is None or not np.all(np.isfinite(g)):
        raise ValueError("prediction does not carry the required correction")
    return g



# ---------------------------------------------------------------------------
# driven equations


def euler_driven(driver, field, y0):
    """Left-point Euler ``Y_{k+1} = Y_k + sigma(Y_k) dX_k`` along the driver's events."""
    y = np.atleast_1d(np.asarray(y0, dtype=np.float64))
    if isinstance(driver, JumpPath):
        times = driver.event_times()
        incs = driver.jump_increments
    elif isinstance(driver, SampledPath):
        times = driver.times
        incs = np.diff(driver.values, axis=0)
    else:
        raise TypeError("driver must be a JumpPath or SampledPath")
    out = np.empty((len(incs) + 1, y.shape[0]))
    out[0] = y
    for k, dx in enumerate(incs):
        y = y + field.sigma(y[None])[0] @ dx
        out[k + 1] = y
    return SampledPath(times, out, SAMPLES)


class DrivenEulerObserver(JumpObserver):
    """Solves ``dY = sigma(Y_-) dX^n`` across replicas as the walks jump."""

    def __init__(self, field, y0, n):
        self.field = field
        self.y0 = np.atleast_1d(np.asarray(y0, dtype=np.float64))
        self.scale = 1.0 / math.sqrt(float(n))

    def start(self, m, d):
        self.y = np.tile(self.y0, (m, 1))

    def jump(self, rows, x_before, delta, t):
        y = self.y[rows]
        self.y[rows] = y + np.einsum("mij,mj->mi", self.field.sigma(y), delta * self.scale)


def conductance_driven_samples(cfg, field, y0, replicas, seed, block=500):
    """``(Y^n_T, X^n_T)`` for the conductance driver, replica-keyed like the MC harness."""
    ys, xs = [], []
    for a in range(0, replicas, block):
        keys = rng.replica_keys(seed, np.arange(a, min(a + block, replicas)))
        env_keys, walk_keys = conductance_keys(cfg, keys, seed)
        ob = DrivenEulerObserver(field, y0, cfg.scale_n)
        acc = LiftAccumulator(cfg.scale_n)
        run_conductance_batch(cfg.law(), cfg.dim, cfg.scale_n * cfg.horizon, env_keys, walk_keys, [ob, acc])
        ys.append(ob.y)
        xs.append(acc.x)
    return np.concatenate(ys), np.concatenate(xs)


# ---------------------------------------------------------------------------
# limit equations


def _limit_batch(field, covariance, gamma, y0, h, horizon, gens):
    steps = int(round(horizon / h))
    if steps < 1 or abs(steps * h - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError(f"horizon {horizon} is not a whole number of steps of size {h}")
    cov = np.asarray(covariance, dtype=np.float64)
    w, v = np.linalg.eigh(0.5 * (cov + cov.T))
    if w.min() < -1e-12:
        raise ValueError("covariance is not positive semi-definite")
    root = v * np.sqrt(np.clip(w, 0.0, None))  # root @ root.T = cov
    d = cov.shape[0]
    m = len(gens)
    y = np.tile(np.atleast_1d(np.asarray(y0, dtype=np.float64)), (m, 1))
    path = np.empty((steps + 1, m, y.shape[1]))
    path[0] = y
    noise = np.stack([g.standard_normal((steps, d)) for g in gens], axis=1)
    sqh = math.sqrt(h)
    zero_gamma = not np.any(gamma)
    for k in range(steps):
        db = (noise[k] @ root.T) * sqh
        step = np.einsum("mij,mj->mi", field.sigma(y), db)
        if not zero_gamma:
            step += correction_drift(field, y, gamma) * h
        y = y + step
        path[k + 1] = y
    return path


def euler_corrected_limit(field, prediction, y0, h, seed, driver_lift=ITO_DRIVER, horizon=1.0, corrected=True):
    """Euler-Maruyama path of the limit SDE; ``corrected=False`` drops the drift."""
    if not isinstance(prediction, RoughLimitPrediction):
        raise TypeError("prediction must be a RoughLimitPrediction")
    gamma = ito_matrix(prediction, driver_lift) if corrected else np.zeros_like(prediction.covariance)
    gen = rng.replica_generator(rng.replica_keys(seed, [0])[0])
    path = _limit_batch(field, prediction.covariance, gamma, y0, h, horizon, [gen])[:, 0]
    return SampledPath(np.arange(path.shape[0]) * h, path, SAMPLES)


def limit_samples(field, prediction, y0, h, replicas, seed, driver_lift=ITO_DRIVER, horizon=1.0,
                  corrected=True, block=2000):
    """``Y_T`` for ``replicas`` independent solutions of the limit SDE."""
    gamma = ito_matrix(prediction, driver_lift) if corrected else np.zeros_like(prediction.covariance)
    out = []
    for a in range(0, replicas, block):
        gens = [rng.replica_generator(k) for k in rng.replica_keys(seed, np.arange(a, min(a + block, replicas)))]
        out.append(_limit_batch(field, prediction.covariance, gamma, y0, h, horizon, gens)[-1])
    return np.concatenate(out)


# ---------------------------------------------------------------------------
# comparison of laws


@dataclass
class LawComparison:
    mean_gap: np.ndarray
    mean_stderr: np.ndarray
    var_gap: np.ndarray
    var_stderr: np.ndarray
    sizes: tuple

    def z_scores(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            zm = np.abs(self.mean_gap) / self.mean_stderr
            zv = np.abs(self.var_gap) / self.var_stderr
        return np.concatenate([zm, zv])

    def within(self, k=3.0):
        """Every mean and variance gap within ``k`` combined standard errors."""
        return bool(np.all(np.abs(self.mean_gap) <= k * self.mean_stderr)
                    and np.all(np.abs(self.var_gap) <= k * self.var_stderr))

    def beyond(self, k=3.0):
        """Some mean or variance gap beyond ``k`` combined standard errors."""
        return not self.within(k)

    def to_json(self):
        return {
            "mean_gap": self.mean_gap.tolist(),
            "mean_stderr": self.mean_stderr.tolist(),
            "var_gap": self.var_gap.tolist(),
            "var_stderr": self.var_stderr.tolist(),
            "sizes": list(self.sizes),
            "max_z": float(np.nanmax(self.z_scores())),
        }


def _moments(s):
    s = np.asarray(s, dtype=np.float64)
    if s.ndim == 1:
        s = s[:, None]
    m = s.shape[0]
    if m < 2:
        raise ValueError("need at least 2 samples")
    mean = s.mean(axis=0)
    var = s.var(axis=0, ddof=1)
    c = s - mean
    m4 = np.mean(c**4, axis=0)
    var_se = np.sqrt(np.maximum(m4 - var**2, 0.0) / m)
    return m, mean, var, np.sqrt(var / m), var_se


MIN_SAMPLES = 1000


def compare_laws(a, b, min_samples=MIN_SAMPLES):
    """Per-coordinate mean and variance gaps with combined standard errors."""
    ma, mean_a, var_a, se_a, vse_a = _moments(a)
    mb, mean_b, var_b, se_b, vse_b = _moments(b)
    if min(ma, mb) < min_samples:
        raise ValueError(f"need at least {min_samples} samples per law, got {ma} and {mb}")
    return LawComparison(
        mean_a - mean_b,
        np.sqrt(se_a**2 + se_b**2),
        var_a - var_b,
        np.sqrt(vse_a**2 + vse_b**2),
        (ma, mb),
    )
