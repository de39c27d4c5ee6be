"""Two-dimensional Ornstein-Uhlenbeck process with a rotational drift.

    dX = -(I + A) X dt + sqrt(2) dW,    A = [[0, -1], [1, 0]]

Because ``A^2 = -I`` the transition over a step ``h`` is explicit:
``exp(-(I + A) h) = e^{-h} R(-h)`` with ``R`` the rotation matrix, and the
step noise is ``N(0, (1 - e^{-2h}) I)``.  Writing ``z = x1 + i x2`` the
recursion is ``z_{k+1} = e^{-(1+i) h} z_k + xi_k``, a first-order complex
linear filter.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.signal import lfilter

from ..tensor_path import SampledPath, LINEAR

ROTATION_GENERATOR = np.array([[0.0, -1.0], [1.0, 0.0]])


def rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class OuParams:
    dim: int = 2

    def __post_init__(self):
        if self.dim != 2:
            raise ValueError("the rotational OU example is two-dimensional")

    @property
    def antisym(self):
        return ROTATION_GENERATOR

    @property
    def drift_matrix(self):
        return np.eye(2) + ROTATION_GENERATOR

    def transition(self, h):
        """``(exp(-(I+A)h), step covariance)``."""
        return np.exp(-h) * rotation(-h), (1.0 - np.exp(-2.0 * h)) * np.eye(2)


def _step_count(span, h):
    steps = int(round(span / h))
    if steps < 1 or abs(steps * h - span) > 1e-9 * max(1.0, span):
        raise ValueError(f"horizon {span} is not a whole number of steps of size {h}")
    return steps


def ou_path_from_noise(x0, noise, h):
    """Exact chain from a start point and standard normal noise of shape (steps, 2)."""
    c = np.exp(-(1.0 + 1.0j) * h)
    sd = np.sqrt(1.0 - np.exp(-2.0 * h))
    xi = sd * (noise[:, 0] + 1.0j * noise[:, 1])
    z0 = x0[0] + 1.0j * x0[1]
    z = lfilter([1.0], [1.0, -c], xi, zi=[c * z0])[0]
    z = np.concatenate([[z0], z])
    return np.column_stack([z.real, z.imag])


def simulate_ou(params, horizon, n, h, seed):
    """Microscopic path on ``[0, n * horizon]`` with step ``h``, started from N(0, I).

    ``seed`` is an int or a numpy Generator.
    """
    if not h > 0:
        raise ValueError("step h must be positive")
    gen = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    span = n * horizon
    steps = _step_count(span, h)
    x0 = gen.standard_normal(2)
    noise = gen.standard_normal((steps, 2))
    x = ou_path_from_noise(x0, noise, h)
    return SampledPath(np.arange(steps + 1) * h, x, LINEAR)


def additive_functional(path, n, observable=None, horizon=None):
    """``Z^n_t = n^{-1/2} int_0^{nt} F(X_r) dr`` on the rescaled grid, by the trapezoid rule.

    ``observable`` maps an (N, d) array to an (N, d') array; the default is
    the identity.  With ``horizon`` given the path must cover ``[0, n*horizon]``.
    """
    n = float(n)
    if horizon is not None:
        if path.horizon < n * horizon * (1 - 1e-12):
            raise ValueError(f"path covers [0, {path.horizon}] but n*T = {n * horizon}")
        keep = path.times <= n * horizon * (1 + 1e-12)
        times, values = path.times[keep], path.values[keep]
    else:
        times, values = path.times, path.values
    f = values if observable is None else np.asarray(observable(values), dtype=np.float64)
    if f.ndim == 1:
        f = f[:, None]
    z = cumulative_trapezoid(f, times, axis=0, initial=0.0) / np.sqrt(n)
    return SampledPath(times / n, z, LINEAR)


def euler_step(x, h, noise):
    """One Euler-Maruyama step, for comparison with the exact transition."""
    return x - h * x @ (np.eye(2) + ROTATION_GENERATOR).T + np.sqrt(2.0 * h) * noise
