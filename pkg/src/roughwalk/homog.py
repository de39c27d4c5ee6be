"""Predictions for the limiting rough path: covariance, area anomaly, Itô correction.

For the periodic diffusion the corrector solves ``-div(a grad Phi) = b`` on the
torus.  It is computed by a Fourier-Galerkin method on the modes
``|k_i| <= K``.  The coefficients are trigonometric polynomials, so the
residual of a truncated solution is itself a finite Fourier series and its
L2 norm can be computed exactly.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .models.conductance import ConductanceLaw
from .models.ou import ROTATION_GENERATOR
from .models.periodic import PeriodicCoefficients

CLOSED_FORM = "closed-form"
SPECTRAL = "spectral"
EMPIRICAL = "empirical-formula"


class SolverError(RuntimeError):
    """Raised when a corrector solve is singular or does not reach its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class RoughLimitPrediction:
    covariance: np.ndarray
    gamma_strato: np.ndarray
    ito_correction: np.ndarray
    provenance: str
    residual: float = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("covariance", "gamma_strato", "ito_correction"):
            m = np.array(getattr(self, name), dtype=np.float64)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ValueError(f"{name} must be a square matrix")
            object.__setattr__(self, name, m)
        cov = self.covariance
        if not np.allclose(cov, cov.T, atol=1e-10):
            raise ValueError("covariance is not symmetric")
        if np.linalg.eigvalsh(0.5 * (cov + cov.T)).min() < -1e-10:
            raise ValueError("covariance is not positive semi-definite")

    @property
    def dim(self):
        return self.covariance.shape[0]

    def to_json(self):
        out = {
            "covariance": self.covariance.tolist(),
            "gamma_strato": self.gamma_strato.tolist(),
            "ito_correction": self.ito_correction.tolist(),
            "provenance": self.provenance,
        }
        if self.residual is not None:
            out["residual"] = self.residual
        for k, v in self.extras.items():
            out[k] = np.asarray(v).tolist() if isinstance(v, np.ndarray) else v
        return out


# ---------------------------------------------------------------------------
# closed forms


def ou_corrector_matrix():
    """``C`` with ``-L(C x) = x`` for the rotational OU generator: ``C = (I - A) / 2``."""
    return 0.5 * (np.eye(2) - ROTATION_GENERATOR)


def ou_predict():
    """Limit of the additive functional ``n^{-1/2} int_0^{n t} X_s ds`` from the linear corrector.

    With ``Phi = C x`` and ``x ~ N(0, I)`` under the invariant law:
    covariance ``2 E[Phi (-L_S) Phi] = 2 C C^T`` and anomaly
    ``E[Phi (x) L_A Phi] = -C E[x x^T] A^T C^T = C A C^T`` since ``L_A f = -A x . grad f``.
    """
    C = ou_corrector_matrix()
    A = ROTATION_GENERATOR
    cov = 2.0 * C @ C.T
    gamma = C @ A @ C.T
    return RoughLimitPrediction(cov, gamma, 0.5 * cov + gamma, CLOSED_FORM,
                                extras={"corrector_matrix": C})


def conductance_predict(law, covariance, dim=None):
    """Package the Itô-level correction for the conductance walk.

    ``covariance`` is the empirical effective covariance (no closed form is
    available in general).  The interpolated lift carries no anomaly; the Itô
    lift's mean converges to ``cov / 2 - E[eta] I`` and the interpolation gap
    to ``E[eta] I``.
    """
    if not isinstance(law, ConductanceLaw):
        law = ConductanceLaw.from_dict(law)
    cov = np.atleast_2d(np.asarray(covariance, dtype=np.float64))
    d = cov.shape[0] if dim is None else dim
    eye = np.eye(d)
    gap = law.mean() * eye
    return RoughLimitPrediction(
        cov, np.zeros((d, d)), 0.5 * cov - gap, EMPIRICAL, extras={"interpolation_gap": gap}
    )


def conductance_constant_covariance(kappa, dim):
    """Homogeneous walk with all conductances ``kappa``: covariance ``2 kappa I``."""
    return 2.0 * kappa * np.eye(dim)


# ---------------------------------------------------------------------------
# torus fields


def _box_modes(K, d):
    rng1 = np.arange(-K, K + 1)
    return np.array(list(itertools.product(rng1, repeat=d)), dtype=np.int64).reshape(-1, d)


def _mode_index(modes, K):
    """Flat index of each mode in the box ``[-K, K]^d``; -1 outside the box."""
    side = 2 * K + 1
    inside = np.all(np.abs(modes) <= K, axis=1)
    shifted = modes + K
    idx = np.zeros(len(modes), dtype=np.int64)
    for c in range(modes.shape[1]):
        idx = idx * side + shifted[:, c]
    return np.where(inside, idx, -1)


@dataclass(frozen=True)
class TorusField:
    """Real field on the torus from Fourier coefficients on the box ``|k_i| <= K``.

    ``coefs`` has shape ``(n_modes,) + value_shape``; the modes are ordered as
    :func:`_box_modes` and satisfy ``c_{-k} = conj(c_k)``.
    """

    K: int
    dim: int
    coefs: np.ndarray

    @property
    def modes(self):
        return _box_modes(self.K, self.dim)

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        ph = np.exp(2j * np.pi * x @ self.modes.T)
        return np.tensordot(ph, self.coefs, axes=(1, 0)).real

    def gradient_coefs(self):
        """Coefficients of the gradient, value shape ``value_shape + (d,)``."""
        k = 2j * np.pi * self.modes
        extra = self.coefs.ndim - 1
        return self.coefs[..., None] * k.reshape((k.shape[0],) + (1,) * extra + (self.dim,))

    def gradient(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        ph = np.exp(2j * np.pi * x @ self.modes.T)
        return np.tensordot(ph, self.gradient_coefs(), axes=(1, 0)).real

    def on_grid(self, coefs, N):
        """Values of a coefficient array (same modes) on the uniform grid with ``N`` points per axis."""
        if N <= 2 * self.K:
            raise ValueError("grid too coarse for the mode box")
        vshape = coefs.shape[1:]
        full = np.zeros((N,) * self.dim + vshape, dtype=np.complex128)
        full[tuple((self.modes % N).T)] = coefs
        vals = np.fft.ifftn(full, axes=tuple(range(self.dim))) * N**self.dim
        return vals.real

    def mean(self):
        return self.coefs[_mode_index(np.zeros((1, self.dim), dtype=np.int64), self.K)[0]].real


def grid_points(N, d):
    axes = [np.arange(N) / N] * d
    return np.stack(np.meshgrid(*axes, indexing="ij"), -1)


# ---------------------------------------------------------------------------
# Galerkin solve


def _operator(coeffs, K, K_rows):
    """Sparse matrix of ``-div(a grad .)`` from the mode box ``K`` to the box ``K_rows``.

    Entry for output mode ``m`` and input mode ``k`` is ``4 pi^2 m^T a_{m-k} k``.
    """
    d = coeffs.dim
    cols_modes = _box_modes(K, d)
    rows, cols, vals = [], [], []
    col_idx = np.arange(len(cols_modes))
    for f, c in zip(coeffs.freqs, coeffs.coefs):
        m = cols_modes + f
        r = _mode_index(m, K_rows)
        ok = r >= 0
        v = 4.0 * np.pi**2 * np.einsum("ni,ij,nj->n", m[ok], c, cols_modes[ok])
        rows.append(r[ok])
        cols.append(col_idx[ok])
        vals.append(v)
    side = (2 * K_rows + 1) ** d
    return sp.csc_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(side, len(cols_modes)),
    )


def _rhs(coeffs, K_rows):
    """Fourier coefficients of ``b`` on the box ``K_rows``: shape (modes, d)."""
    d = coeffs.dim
    out = np.zeros(((2 * K_rows + 1) ** d, d), dtype=np.complex128)
    idx = _mode_index(coeffs.freqs, K_rows)
    if np.any(idx < 0):
        raise ValueError("cutoff K is below the highest frequency of the coefficients")
    out[idx] = coeffs.b_coefs()
    return out


@dataclass(frozen=True)
class PoissonSolution:
    field: TorusField
    residual: float
    K: int


def _solve_at(coeffs, K):
    d = coeffs.dim
    Ka = coeffs.max_frequency
    modes = _box_modes(K, d)
    nonzero = np.any(modes != 0, axis=1)
    A_ext = _operator(coeffs, K, K + Ka)
    inner = _mode_index(modes, K + Ka)
    A = A_ext[inner][nonzero][:, nonzero]
    b_ext = _rhs(coeffs, K + Ka)
    rhs = b_ext[inner][nonzero]
    try:
        lu = splu(sp.csc_matrix(A))
        sol = lu.solve(rhs)
    except RuntimeError as exc:
        raise SolverError(f"Galerkin system is singular: {exc}") from exc
    if not np.all(np.isfinite(sol)):
        raise SolverError("Galerkin system is singular (non-finite solution)")
    coefs = np.zeros((len(modes), d), dtype=np.complex128)
    coefs[nonzero] = sol
    # enforce exact Hermitian symmetry: mode order is reversed under k -> -k
    coefs = 0.5 * (coefs + np.conj(coefs[::-1]))
    r = A_ext @ coefs - b_ext
    residual = float(np.sqrt(np.sum(np.abs(r) ** 2)))
    return TorusField(K, d, coefs), residual


def torus_poisson_solve(coeffs, K, tol=1e-8, max_K=None):
    """Solve ``-div(a grad Phi^j) = b_j`` with zero-mean ``Phi``; doubles ``K`` until the
    exact L2 residual is at most ``tol``.

    Returns a :class:`PoissonSolution`; raises :class:`SolverError` if the
    system is singular or ``max_K`` (default ``4 K``) is reached.
    """
    if not isinstance(coeffs, PeriodicCoefficients):
        raise TypeError("coeffs must be PeriodicCoefficients")
    K = int(K)
    if K < max(1, coeffs.max_frequency):
        raise ValueError(f"cutoff K={K} is below the highest coefficient frequency {coeffs.max_frequency}")
    lo, _ = coeffs.ellipticity()
    if lo <= 0:
        raise SolverError(f"symmetric part is not uniformly elliptic (min eigenvalue {lo:.3g})")
    max_K = 4 * K if max_K is None else int(max_K)
    while True:
        phi, residual = _solve_at(coeffs, K)
        if residual <= tol:
            return PoissonSolution(phi, residual, K)
        if 2 * K > max_K:
            raise SolverError(f"residual {residual:.3g} above {tol:g} at K={K}", residual)
        K *= 2


def _quadrature_grid(coeffs, phi):
    """Grid fine enough that integrals of (grad Phi) a (grad Phi) are exact averages."""
    N = 2 * phi.K + coeffs.max_frequency + 2
    pts = grid_points(N, phi.dim).reshape(-1, phi.dim)
    grad = phi.on_grid(phi.gradient_coefs(), N).reshape(-1, phi.dim, phi.dim)  # [x, j, k] = d_k Phi^j
    a = coeffs.a(pts)
    return grad, a


def periodic_predict(coeffs, solution):
    """Covariance, Stratonovich anomaly and Itô correction from a certified corrector."""
    if solution is None:
        raise ValueError("a corrector solution is required")
    phi = solution.field if isinstance(solution, PoissonSolution) else solution
    d = coeffs.dim
    grad, a = _quadrature_grid(coeffs, phi)
    a_sym = 0.5 * (a + np.swapaxes(a, 1, 2))
    a_anti = 0.5 * (a - np.swapaxes(a, 1, 2))
    g = grad + np.eye(d)[None]
    cov = 2.0 * np.einsum("xik,xkl,xjl->ij", g, a_sym, g) / len(g)
    cov = 0.5 * (cov + cov.T)
    anti_form = np.einsum("xik,xkl,xjl->ij", grad, a_anti, grad) / len(g)
    gamma = -anti_form
    mean_sym = a_sym.mean(axis=0)
    ito = 0.5 * cov - mean_sym - anti_form
    residual = solution.residual if isinstance(solution, PoissonSolution) else None
    return RoughLimitPrediction(cov, gamma, ito, SPECTRAL, residual=residual,
                                extras={"mean_sym": mean_sym})


def harmonic_mean_1d(coeffs, N=4096):
    """``(int 1/a)^{-1}`` for a scalar periodic coefficient (trapezoid rule, spectrally accurate)."""
    x = np.arange(N)[:, None] / N
    return 1.0 / np.mean(1.0 / coeffs.a(x)[:, 0, 0])


def corrector_derivative_1d(coeffs, x, N=4096):
    """Closed form ``Phi' = -1 + c*/a`` in one dimension."""
    c_star = harmonic_mean_1d(coeffs, N)
    return -1.0 + c_star / coeffs.a(np.asarray(x, dtype=np.float64).reshape(-1, 1))[:, 0, 0]
