"""Diffusions with smooth Z^d-periodic coefficients.

The generator is ``L f = div(a grad f)`` with ``a`` periodic, not necessarily
symmetric, and with uniformly elliptic symmetric part.  The SDE is

    dX = b(X) dt + sqrt(2) sigma(X) dW,   b_j = sum_i d_i a_ij,   sigma = sqrt(a^S)

and ``a`` is given as a finite Fourier series
``a(x) = sum_k c_k exp(2 pi i k.x)`` with ``c_{-k} = conj(c_k)``.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .. import rng
from ..tensor_path import SampledPath, LINEAR


@dataclass(frozen=True)
class PeriodicCoefficients:
    freqs: np.ndarray  # (m, d) integer frequency vectors
    coefs: np.ndarray  # (m, d, d) complex coefficients

    def __post_init__(self):
        freqs = np.asarray(self.freqs, dtype=np.int64)
        coefs = np.asarray(self.coefs, dtype=np.complex128)
        if freqs.ndim != 2 or coefs.shape != (freqs.shape[0], freqs.shape[1], freqs.shape[1]):
            raise ValueError("need freqs (m, d) and coefs (m, d, d)")
        # merge duplicate frequencies
        uniq, inv = np.unique(freqs, axis=0, return_inverse=True)
        merged = np.zeros((uniq.shape[0],) + coefs.shape[1:], dtype=np.complex128)
        np.add.at(merged, inv.reshape(-1), coefs)
        keep = np.abs(merged).max(axis=(1, 2)) > 0
        uniq, merged = uniq[keep], merged[keep]
        lookup = {tuple(k): c for k, c in zip(uniq.tolist(), merged)}
        for k, c in lookup.items():
            partner = lookup.get(tuple(-v for v in k))
            if partner is None or not np.allclose(partner, np.conj(c), atol=1e-14, rtol=0):
                raise ValueError(f"coefficients are not Hermitian-symmetric at frequency {k}")
        freqs, coefs = uniq, merged
        freqs.setflags(write=False)
        coefs.setflags(write=False)
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "coefs", coefs)

    # -- constructors -------------------------------------------------------

    @classmethod
    def constant(cls, matrix):
        m = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
        return cls(np.zeros((1, m.shape[0]), dtype=np.int64), m[None].astype(np.complex128))

    @classmethod
    def identity(cls, d):
        return cls.constant(np.eye(d))

    @classmethod
    def from_real_terms(cls, d, terms):
        """Build from real terms ``(matrix, kind, k)`` meaning ``matrix * cos(2 pi k.x)``
        or ``matrix * sin(2 pi k.x)`` (``kind`` in {"cos", "sin", "const"})."""
        freqs, coefs = [], []
        for matrix, kind, k in terms:
            m = np.asarray(matrix, dtype=np.float64).reshape(d, d)
            k = np.asarray(k, dtype=np.int64).reshape(d)
            if kind == "const":
                freqs.append(np.zeros(d, dtype=np.int64))
                coefs.append(m.astype(np.complex128))
            elif kind == "cos":
                freqs += [k, -k]
                coefs += [0.5 * m, 0.5 * m]
            elif kind == "sin":
                freqs += [k, -k]
                coefs += [-0.5j * m, 0.5j * m]
            else:
                raise ValueError(f"unknown term kind {kind!r}")
        return cls(np.array(freqs), np.array(coefs))

    @classmethod
    def cellular(cls, kappa):
        """``a = I + kappa * s(x) J`` with ``s = sin(2 pi x1) sin(2 pi x2)``, ``J = [[0,-1],[1,0]]``.

        ``sin u sin v = (cos(u - v) - cos(u + v)) / 2``.
        """
        J = np.array([[0.0, -1.0], [1.0, 0.0]])
        return cls.from_real_terms(
            2,
            [
                (np.eye(2), "const", (0, 0)),
                (0.5 * kappa * J, "cos", (1, -1)),
                (-0.5 * kappa * J, "cos", (1, 1)),
            ],
        )

    @classmethod
    def scalar_1d(cls, mean, cos_terms=(), sin_terms=()):
        """Scalar coefficient ``mean + sum c_k cos(2 pi k x) + sum s_k sin(2 pi k x)``."""
        terms = [([[mean]], "const", (0,))]
        terms += [([[c]], "cos", (k,)) for k, c in cos_terms]
        terms += [([[s]], "sin", (k,)) for k, s in sin_terms]
        return cls.from_real_terms(1, terms)

    @classmethod
    def from_dict(cls, spec):
        kind = spec.get("kind", "identity")
        if kind == "identity":
            return cls.identity(int(spec.get("d", 2)))
        if kind == "cellular":
            return cls.cellular(float(spec["kappa"]))
        if kind == "scalar_1d":
            return cls.scalar_1d(
                float(spec["mean"]),
                [tuple(t) for t in spec.get("cos", [])],
                [tuple(t) for t in spec.get("sin", [])],
            )
        if kind == "terms":
            return cls.from_real_terms(int(spec["d"]), [tuple(t) for t in spec["terms"]])
        raise ValueError(f"unknown coefficient kind {kind!r}")

    # -- evaluation ---------------------------------------------------------

    @property
    def dim(self):
        return self.freqs.shape[1]

    @property
    def max_frequency(self):
        return int(np.abs(self.freqs).max()) if self.freqs.size else 0

    def _phases(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return np.exp(2j * np.pi * x @ self.freqs.T)  # (M, m)

    def a(self, x):
        return np.einsum("mk,kij->mij", self._phases(x), self.coefs).real

    def b_coefs(self):
        """Fourier coefficients of ``b_j = sum_i d_i a_ij``: shape (m, d)."""
        return np.einsum("ki,kij->kj", 2j * np.pi * self.freqs, self.coefs)

    def b(self, x):
        return (self._phases(x) @ self.b_coefs()).real

    def sym_coefs(self):
        return 0.5 * (self.coefs + np.swapaxes(self.coefs, 1, 2))

    def antisym_coefs(self):
        return 0.5 * (self.coefs - np.swapaxes(self.coefs, 1, 2))

    def a_sym(self, x):
        a = self.a(x)
        return 0.5 * (a + np.swapaxes(a, 1, 2))

    @property
    def sym_is_constant(self):
        s = self.sym_coefs()
        nonzero = np.abs(s).max(axis=(1, 2)) > 0
        return not np.any(nonzero & np.any(self.freqs != 0, axis=1))

    def mean_sym(self):
        """``int a^S dx`` (the zero mode of the symmetric part)."""
        zero = np.all(self.freqs == 0, axis=1)
        c = self.coefs[zero].sum(axis=0).real if zero.any() else np.zeros((self.dim,) * 2)
        return 0.5 * (c + c.T)

    def sigma(self, x):
        """Symmetric square root of ``a^S(x)``; raises if ``a^S`` is not positive definite."""
        return sqrt_spd(self.a_sym(x))

    def ellipticity(self, points_per_dim=16):
        """``(lambda_min, lambda_max)`` of ``a^S`` sampled on a uniform grid."""
        axes = [np.arange(points_per_dim) / points_per_dim] * self.dim
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, self.dim)
        ev = np.linalg.eigvalsh(self.a_sym(grid))
        return float(ev.min()), float(ev.max())

    def sup_drift(self):
        """Crude bound ``sum_k |b_k|`` on ``sup |b|``."""
        return float(np.abs(self.b_coefs()).sum(axis=0).max()) if self.freqs.size else 0.0


def sqrt_spd(m):
    """Batched symmetric positive-definite square root."""
    m = np.asarray(m, dtype=np.float64)
    if m.shape[-1] == 1:
        if np.any(m <= 0):
            raise ValueError("a^S is not positive definite (ellipticity violated)")
        return np.sqrt(m)
    if m.shape[-1] == 2:
        det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
        tr = m[..., 0, 0] + m[..., 1, 1]
        if np.any(det <= 0) or np.any(tr <= 0):
            raise ValueError("a^S is not positive definite (ellipticity violated)")
        s = np.sqrt(det)
        t = np.sqrt(tr + 2.0 * s)
        eye = np.eye(2)
        return (m + s[..., None, None] * eye) / t[..., None, None]
    w, v = np.linalg.eigh(m)
    if np.any(w <= 0):
        raise ValueError("a^S is not positive definite (ellipticity violated)")
    return (v * np.sqrt(w)[..., None, :]) @ np.swapaxes(v, -1, -2)


class DiffusionObserver:
    def start(self, m, d):
        pass

    def step(self, k, x_old, x_new):
        pass

    def finish(self):
        pass


def run_periodic_batch(coeffs, n_steps, h, keys, observers=(), noise_block=2048):
    """Euler-Maruyama for ``len(keys)`` replicas over ``n_steps`` steps of size ``h``.

    Replica ``r`` draws its start point and noise from its own generator,
    in blocks of ``noise_block`` steps, so the path does not depend on the
    batch it runs in.  Returns final positions.
    """
    if not h > 0:
        raise ValueError("step h must be positive")
    d = coeffs.dim
    bmax = coeffs.sup_drift()
    if bmax * h > 0.1:
        warnings.warn(f"Euler drift per step |b|h ~ {bmax * h:.3g} is not small", stacklevel=2)
    gens = [rng.replica_generator(k) for k in np.asarray(keys, dtype=np.uint64)]
    m = len(gens)
    x = np.stack([g.uniform(-0.5, 0.5, d) for g in gens]) if m else np.zeros((0, d))
    const_sigma = None
    if coeffs.sym_is_constant:
        const_sigma = sqrt_spd(coeffs.mean_sym()[None])[0]
    for ob in observers:
        ob.start(m, d)
    sqrt2h = np.sqrt(2.0 * h)
    bc = coeffs.b_coefs()
    sc = coeffs.sym_coefs()
    k = 0
    while k < n_steps:
        nb = min(noise_block, n_steps - k)
        noise = np.stack([g.standard_normal((nb, d)) for g in gens], axis=1)  # (nb, m, d)
        for j in range(nb):
            ph = np.exp(2j * np.pi * x @ coeffs.freqs.T)
            drift = (ph @ bc).real
            xi = noise[j]
            if const_sigma is not None:
                diff = xi @ const_sigma.T
            else:
                sig = sqrt_spd(np.einsum("mk,kij->mij", ph, sc).real)
                diff = np.einsum("mij,mj->mi", sig, xi)
            x_new = x + drift * h + sqrt2h * diff
            for ob in observers:
                ob.step(k + j, x, x_new)
            x = x_new
        k += nb
    for ob in observers:
        ob.finish()
    return x


class PathRecorder(DiffusionObserver):
    def start(self, m, d):
        self.rows = []
        self.first = None

    def step(self, k, x_old, x_new):
        if self.first is None:
            self.first = x_old.copy()
        self.rows.append(x_new.copy())

    def paths(self, h):
        arr = np.concatenate([self.first[None], np.stack(self.rows)], axis=0)  # (N+1, m, d)
        times = np.arange(arr.shape[0]) * h
        return [SampledPath(times, arr[:, r], LINEAR) for r in range(arr.shape[1])]


def simulate_periodic_diffusion(coeffs, horizon, h, seed):
    """One Euler-Maruyama path on ``[0, horizon]``; ``X_0`` uniform on ``[-1/2, 1/2]^d``."""
    steps = int(round(horizon / h))
    if steps < 1 or abs(steps * h - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError(f"horizon {horizon} is not a whole number of steps of size {h}")
    rec = PathRecorder()
    run_periodic_batch(coeffs, steps, h, rng.replica_keys(seed, [0]), [rec])
    return rec.paths(h)[0]


class SampledLiftAccumulator(DiffusionObserver):
    """Per-replica level-2 sums of the rescaled path ``n^{-1/2} X_{n t}``.

    ``ito`` is the left-point sum of ``(X_k - X_0) (x) dX_k`` and ``gap`` is
    half the sum of ``dX_k (x) dX_k``; the trapezoid lift is their sum.
    """

    def __init__(self, n):
        self.n = float(n)

    def start(self, m, d):
        self.x0 = None
        self._ito = np.zeros((m, d, d))
        self._gap = np.zeros((m, d, d))
        self._last = None

    def step(self, k, x_old, x_new):
        if self.x0 is None:
            self.x0 = x_old.copy()
        inc = x_new - x_old
        self._ito += (x_old - self.x0)[:, :, None] * inc[:, None, :]
        self._gap += 0.5 * inc[:, :, None] * inc[:, None, :]
        self._last = x_new

    @property
    def x(self):
        return (self._last - self.x0) / np.sqrt(self.n)

    @property
    def ito(self):
        return self._ito / self.n

    @property
    def gap(self):
        return self._gap / self.n

    @property
    def strato(self):
        return (self._ito + self._gap) / self.n
