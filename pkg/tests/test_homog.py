import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from roughwalk.homog import (
    SolverError, RoughLimitPrediction, TorusField, conductance_constant_covariance, conductance_predict,
    corrector_derivative_1d, harmonic_mean_1d, ou_corrector_matrix, ou_predict, periodic_predict,
    torus_poisson_solve,
)
from roughwalk.models.conductance import ConductanceLaw
from roughwalk.models.ou import ROTATION_GENERATOR
from roughwalk.models.periodic import PeriodicCoefficients

A = ROTATION_GENERATOR


# -- OU -------------------------------------------------------------------------


def test_ou_corrector_inverts_the_drift():
    C = ou_corrector_matrix()
    # L(Cx) = -C (I + A) x for the linear test function, so -L(Cx) = x needs C (I + A) = I
    np.testing.assert_allclose(C @ (np.eye(2) + A), np.eye(2), atol=1e-15)
    np.testing.assert_allclose(C, 0.5 * np.array([[1, 1], [-1, 1]]), atol=1e-15)


def test_ou_prediction_from_corrector():
    pred = ou_predict()
    np.testing.assert_allclose(pred.covariance, np.eye(2), atol=1e-15)
    # the corrector-based anomaly C A C^T; its determinant-type entries are 1/2
    np.testing.assert_allclose(pred.gamma_strato, 0.5 * A, atol=1e-15)
    np.testing.assert_allclose(pred.gamma_strato, -pred.gamma_strato.T, atol=0)
    np.testing.assert_allclose(pred.ito_correction, 0.5 * np.eye(2) + pred.gamma_strato, atol=1e-15)
    assert pred.provenance == "closed-form"


def test_ou_anomaly_matches_stationary_integral():
    # Independent route: E[Z (x) dZ] rate = int_0^inf E[X_0 X_u^T] du antisymmetrised,
    # with E[X_0 X_u^T] = e^{-u} R(-u)^T = e^{-u} R(u).
    u = np.linspace(0, 40, 400_001)
    r = np.exp(-u)[:, None, None] * np.array([[np.cos(u), -np.sin(u)], [np.sin(u), np.cos(u)]]).transpose(2, 0, 1)
    integral = np.trapezoid(r, u, axis=0)
    np.testing.assert_allclose(integral, 0.5 * (np.eye(2) + A), atol=1e-9)
    anti = 0.5 * (integral - integral.T)
    np.testing.assert_allclose(anti, ou_predict().gamma_strato, atol=1e-9)


# -- conductance ------------------------------------------------------------------


@pytest.mark.parametrize("kappa,d", [(1.0, 1), (1.0, 2), (2.5, 3)])
def test_point_mass_law_has_no_correction(kappa, d):
    law = ConductanceLaw.constant(kappa)
    pred = conductance_predict(law, conductance_constant_covariance(kappa, d))
    np.testing.assert_array_equal(pred.ito_correction, np.zeros((d, d)))
    np.testing.assert_array_equal(pred.gamma_strato, np.zeros((d, d)))


def test_one_dimensional_two_point_correction_is_negative_sixth():
    law = ConductanceLaw.two_point(1.0, 2.0, 0.5)
    assert law.harmonic_mean() == pytest.approx(4.0 / 3.0)
    pred = conductance_predict(law, [[2.0 * law.harmonic_mean()]])
    assert pred.ito_correction[0, 0] == pytest.approx(-1.0 / 6.0, abs=1e-15)
    assert pred.extras["interpolation_gap"][0, 0] == pytest.approx(1.5)


def test_uniform_law_gap_prediction():
    pred = conductance_predict(ConductanceLaw.uniform(1.0, 2.0), np.eye(2) * 2.8)
    np.testing.assert_allclose(pred.extras["interpolation_gap"], 1.5 * np.eye(2))
    assert pred.provenance == "empirical-formula"


def test_prediction_rejects_bad_covariance():
    with pytest.raises(ValueError):
        RoughLimitPrediction([[1.0, 0.5], [0.0, 1.0]], np.zeros((2, 2)), np.zeros((2, 2)), "x")
    with pytest.raises(ValueError):
        RoughLimitPrediction([[-1.0]], [[0.0]], [[0.0]], "x")


# -- periodic ---------------------------------------------------------------------


def test_identity_coefficient_has_zero_corrector():
    coeffs = PeriodicCoefficients.identity(2)
    sol = torus_poisson_solve(coeffs, 4)
    assert sol.residual == 0.0
    assert np.all(sol.field.coefs == 0)
    pred = periodic_predict(coeffs, sol)
    np.testing.assert_array_equal(pred.covariance, 2 * np.eye(2))
    np.testing.assert_array_equal(pred.gamma_strato, np.zeros((2, 2)))
    np.testing.assert_array_equal(pred.ito_correction, np.zeros((2, 2)))


@given(st.floats(1.2, 4.0), st.floats(0.05, 0.9), st.integers(1, 3))
def test_one_dimensional_corrector_matches_closed_form(mean, ratio, k):
    c = ratio * mean
    coeffs = PeriodicCoefficients.scalar_1d(mean, cos_terms=[(k, c)])
    harmonic = math.sqrt(mean**2 - c**2)  # (int 1/(m + c cos))^{-1}
    assert harmonic_mean_1d(coeffs) == pytest.approx(harmonic, rel=1e-12)
    sol = torus_poisson_solve(coeffs, 16, tol=1e-8, max_K=512)
    assert sol.residual <= 1e-8
    x = np.linspace(0, 1, 101)[:, None]
    np.testing.assert_allclose(sol.field.gradient(x)[:, 0, 0], -1.0 + harmonic / (mean + c * np.cos(2 * np.pi * k * x[:, 0])), atol=1e-8)
    pred = periodic_predict(coeffs, sol)
    assert pred.covariance[0, 0] == pytest.approx(2 * harmonic, abs=1e-8)


def test_corrector_derivative_helper_matches_solver():
    coeffs = PeriodicCoefficients.scalar_1d(2.0, cos_terms=[(1, 0.5)], sin_terms=[(2, 0.3)])
    sol = torus_poisson_solve(coeffs, 32)
    x = np.linspace(0, 1, 57)
    np.testing.assert_allclose(sol.field.gradient(x[:, None])[:, 0, 0], corrector_derivative_1d(coeffs, x), atol=1e-8)


@given(st.integers(0, 500))
def test_voigt_reiss_bracketing_in_one_dimension(seed):
    g = np.random.default_rng(seed)
    mean = g.uniform(1.5, 3.0)
    cos_terms = [(k, g.uniform(-0.3, 0.3)) for k in (1, 2)]
    coeffs = PeriodicCoefficients.scalar_1d(mean, cos_terms=cos_terms)
    eff = 0.5 * periodic_predict(coeffs, torus_poisson_solve(coeffs, 32)).covariance[0, 0]
    assert harmonic_mean_1d(coeffs) - 1e-10 <= eff <= mean + 1e-10


def test_voigt_reiss_bracketing_symmetric_two_dimensional():
    coeffs = PeriodicCoefficients.from_real_terms(2, [
        (np.eye(2) * 2.0, "const", (0, 0)),
        (np.array([[0.6, 0.2], [0.2, 0.4]]), "cos", (1, 0)),
        (np.array([[0.3, -0.1], [-0.1, 0.5]]), "sin", (1, 1)),
    ])
    pred = periodic_predict(coeffs, torus_poisson_solve(coeffs, 16))
    eff = 0.5 * pred.covariance
    N = 128
    grid = np.stack(np.meshgrid(np.arange(N) / N, np.arange(N) / N, indexing="ij"), -1).reshape(-1, 2)
    a = coeffs.a(grid)
    upper = a.mean(axis=0)
    lower = np.linalg.inv(np.linalg.inv(a).mean(axis=0))
    assert np.linalg.eigvalsh(upper - eff).min() >= -1e-10
    assert np.linalg.eigvalsh(eff - lower).min() >= -1e-10
    np.testing.assert_allclose(pred.gamma_strato, 0, atol=1e-14)


def test_cellular_flow_prediction_is_stable_under_refinement():
    coeffs = PeriodicCoefficients.cellular(0.5)
    s32 = torus_poisson_solve(coeffs, 32)
    s64 = torus_poisson_solve(coeffs, 64)
    assert s32.residual <= 1e-8
    p32, p64 = periodic_predict(coeffs, s32), periodic_predict(coeffs, s64)
    for name in ("covariance", "gamma_strato", "ito_correction"):
        assert np.abs(getattr(p32, name) - getattr(p64, name)).max() <= 1e-6
    np.testing.assert_allclose(p32.gamma_strato, -p32.gamma_strato.T, atol=1e-14)
    # a divergence-free antisymmetric perturbation enhances diffusion
    assert np.linalg.eigvalsh(p32.covariance - 2 * np.eye(2)).min() > 0


def test_generic_non_reversible_coefficient_has_antisymmetric_nonzero_anomaly():
    J = np.array([[0.0, -1.0], [1.0, 0.0]])
    coeffs = PeriodicCoefficients.from_real_terms(2, [
        (np.eye(2), "const", (0, 0)),
        (0.8 * J, "cos", (1, 0)),
        (0.5 * J, "sin", (0, 1)),
        (np.array([[0.5, 0.2], [0.2, 0.3]]), "sin", (1, 1)),
    ])
    pred = periodic_predict(coeffs, torus_poisson_solve(coeffs, 16))
    np.testing.assert_allclose(pred.gamma_strato, -pred.gamma_strato.T, atol=1e-14)
    assert abs(pred.gamma_strato[0, 1]) > 1e-2


def test_solver_errors():
    bad = PeriodicCoefficients.scalar_1d(1.0, cos_terms=[(1, 2.0)])
    with pytest.raises(SolverError):
        torus_poisson_solve(bad, 8)
    with pytest.raises(ValueError):
        torus_poisson_solve(PeriodicCoefficients.scalar_1d(2.0, cos_terms=[(5, 0.5)]), 2)
    hard = PeriodicCoefficients.scalar_1d(1.0, cos_terms=[(1, 0.99)])
    with pytest.raises(SolverError) as info:
        torus_poisson_solve(hard, 2, tol=1e-8, max_K=4)
    assert info.value.residual > 1e-8
    with pytest.raises(ValueError):
        periodic_predict(PeriodicCoefficients.identity(2), None)


def test_torus_field_gradient_of_single_mode():
    # Phi = cos(2 pi x1): coefficients 1/2 at k = +-e1
    from roughwalk.homog import _box_modes

    K, d = 2, 2
    modes = _box_modes(K, d)
    coefs = np.zeros((len(modes), 1), dtype=complex)
    for sgn in (1, -1):
        coefs[np.all(modes == [sgn, 0], axis=1), 0] = 0.5
    f = TorusField(K, d, coefs)
    x = np.random.default_rng(0).uniform(0, 1, (7, 2))
    np.testing.assert_allclose(f(x)[:, 0], np.cos(2 * np.pi * x[:, 0]), atol=1e-14)
    grad = f.gradient(x)
    np.testing.assert_allclose(grad[:, 0, 0], -2 * np.pi * np.sin(2 * np.pi * x[:, 0]), atol=1e-13)
    np.testing.assert_allclose(grad[:, 0, 1], 0, atol=1e-13)
