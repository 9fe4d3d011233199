import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, linalg, special

from cusumcps.errors import DomainError, NotPositiveDefinite, SpectralRadiusNotLessThanOne
from cusumcps.numerics import (
    contraction_norm,
    covariance_factor,
    dare_solve,
    inverse_regularized_lower_gamma,
    power_iteration_seed,
    regularized_lower_gamma,
    riccati_residual,
    symmetric_sqrt,
    top_right_singular_vector,
)


def gamma_by_quadrature(a, x):
    val, _ = integrate.quad(lambda t: t ** (a - 1) * math.exp(-t), 0, x, limit=200, epsabs=1e-14, epsrel=1e-13)
    return val / math.gamma(a)


# --- Riccati ---------------------------------------------------------------


@pytest.mark.parametrize("f,c,q,r", [(0.9, 1.0, 1.0, 0.01), (0.5, 2.0, 0.3, 1.0), (1.2, 1.0, 1.0, 1.0)])
def test_scalar_dare_matches_quadratic_root(f, c, q, r):
    # p = f^2 p + q - f^2 c^2 p^2 / (r + c^2 p)  =>  c^2 p^2 + (r - f^2 r - q c^2) p - q r = 0
    A, B, Cq = c * c, r - f * f * r - q * c * c, -q * r
    p_true = (-B + math.sqrt(B * B - 4 * A * Cq)) / (2 * A)
    P = dare_solve([[f]], [[c]], [[q]], [[r]])
    assert P[0, 0] == pytest.approx(p_true, rel=1e-10)


def test_dare_with_zero_dynamics_returns_process_noise():
    R1 = np.diag([2.0, 3.0])
    P = dare_solve(np.zeros((2, 2)), np.eye(2), R1, np.eye(2))
    np.testing.assert_allclose(P, R1, atol=1e-14)


def test_dare_agrees_with_scipy(reactor):
    P = dare_solve(reactor.F, reactor.C, reactor.R1, reactor.R2)
    ref = linalg.solve_discrete_are(reactor.F.T, reactor.C.T, reactor.R1, reactor.R2)
    np.testing.assert_allclose(P, ref, atol=1e-9)
    assert riccati_residual(reactor.F, reactor.C, reactor.R1, reactor.R2, P) <= 1e-10


def test_dare_rejects_inconsistent_shapes():
    with pytest.raises(DomainError):
        dare_solve(np.eye(2), np.eye(3), np.eye(2), np.eye(3))


def test_symmetric_sqrt_and_factor():
    S = np.array([[4.0, 1.0], [1.0, 3.0]])
    R = symmetric_sqrt(S)
    np.testing.assert_allclose(R @ R, S, atol=1e-13)
    np.testing.assert_allclose(R, R.T)
    with pytest.raises(NotPositiveDefinite):
        symmetric_sqrt(np.diag([1.0, 0.0]))
    B = covariance_factor(np.diag([1.0, 0.0]))
    np.testing.assert_allclose(B @ B.T, np.diag([1.0, 0.0]), atol=1e-15)


# --- incomplete gamma --------------------------------------------------------


@pytest.mark.parametrize("a", [0.5, 1.0, 1.5, 2.5, 10.0])
@pytest.mark.parametrize("x", [0.01, 0.7, 1.5, 3.0, 9.0, 25.0])
def test_gamma_matches_quadrature(a, x):
    assert regularized_lower_gamma(a, x) == pytest.approx(gamma_by_quadrature(a, x), abs=1e-11)


def test_gamma_closed_forms():
    assert regularized_lower_gamma(1.0, 1.0) == pytest.approx(1 - math.exp(-1), abs=1e-15)
    assert regularized_lower_gamma(0.5, 2.0) == pytest.approx(math.erf(math.sqrt(2.0)), abs=1e-14)
    assert regularized_lower_gamma(2.0, 0.0) == 0.0
    assert regularized_lower_gamma(2.0, math.inf) == 1.0


def test_gamma_domain():
    with pytest.raises(DomainError):
        regularized_lower_gamma(0.0, 1.0)
    with pytest.raises(DomainError):
        inverse_regularized_lower_gamma(1.5, 1.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.2, 30.0), st.floats(0.0, 80.0), st.floats(0.0, 80.0))
def test_gamma_is_monotone_and_bounded(a, x1, x2):
    lo, hi = sorted((x1, x2))
    p_lo, p_hi = regularized_lower_gamma(a, lo), regularized_lower_gamma(a, hi)
    assert 0.0 <= p_lo <= p_hi <= 1.0


@settings(max_examples=200, deadline=None)
@given(st.floats(0.2, 30.0), st.floats(0.0, 80.0))
def test_gamma_agrees_with_scipy(a, x):
    assert regularized_lower_gamma(a, x) == pytest.approx(special.gammainc(a, x), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.3, 20.0), st.floats(1e-6, 1 - 1e-6))
def test_gamma_inverse_round_trip(a, p):
    x = inverse_regularized_lower_gamma(a, p)
    assert regularized_lower_gamma(a, x) == pytest.approx(p, abs=1e-11)


# --- contraction norm --------------------------------------------------------


def test_contraction_norm_of_scaled_identity():
    cn = contraction_norm(0.5 * np.eye(3))
    assert cn.star_norm_of_f == pytest.approx(0.5, abs=1e-14)
    assert cn.c == pytest.approx(1.0, abs=1e-12)


def test_reactor_star_norm_is_spectral_radius(reactor):
    cn = contraction_norm(reactor.F)
    rho = max(abs(np.linalg.eigvals(reactor.F)))
    assert cn.method == "eigen"
    assert cn.star_norm_of_f == pytest.approx(rho, abs=1e-12)
    assert cn.star_norm_of_f < 1


def test_defective_matrix_uses_schur_basis():
    F = np.array([[0.9, 10.0], [0.0, 0.9]])
    cn = contraction_norm(F)
    assert cn.method == "schur"
    assert cn.star_norm_of_f < 1


@pytest.mark.parametrize(
    "F",
    [
        np.array([[0.9, 10.0], [0.0, 0.9]]),
        np.array([[0.5, 0.4], [-0.3, 0.7]]),
        np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.1, -0.2, 0.5]]),
    ],
)
def test_power_bound_holds(F):
    cn = contraction_norm(F)
    Fk = np.eye(len(F))
    for k in range(1, 201):
        Fk = Fk @ F
        assert np.linalg.norm(Fk, 2) <= cn.c * cn.star_norm_of_f**k * (1 + 1e-9) + 1e-300
        assert np.linalg.norm(Fk, 2) <= cn.c * cn.norm(Fk) * (1 + 1e-9) + 1e-300


def test_unstable_matrix_is_rejected():
    with pytest.raises(SpectralRadiusNotLessThanOne):
        contraction_norm(np.diag([0.5, 1.0]))


# --- top singular vector -----------------------------------------------------


def test_singular_vector_of_diagonal():
    v = top_right_singular_vector(np.diag([3.0, 1.0]))
    np.testing.assert_allclose(v, [1.0, 0.0], atol=1e-10)


def test_singular_vector_tie_returns_seed():
    np.testing.assert_allclose(top_right_singular_vector(np.eye(3)), power_iteration_seed(3), atol=1e-15)


def test_singular_vector_matches_svd_and_beats_random_probes(reactor, reactor_design):
    A = np.linalg.solve(np.eye(4) - reactor.F, reactor_design.L @ reactor_design.sigma_sqrt)
    v = top_right_singular_vector(A)
    s_top = np.linalg.svd(A, compute_uv=False)[0]
    assert np.linalg.norm(A @ v) == pytest.approx(s_top, rel=1e-10)
    rng = np.random.default_rng(1)
    for _ in range(100):
        u = rng.standard_normal(3)
        u /= np.linalg.norm(u)
        assert np.linalg.norm(A @ u) <= np.linalg.norm(A @ v) + 1e-12
    assert v[np.flatnonzero(np.abs(v) > 1e-12)[0]] > 0


@pytest.mark.parametrize("a,p", [(0.375, 1e-6), (0.2, 1e-12), (1.5, 1e-10), (5.0, 0.999999)])
def test_gamma_inverse_in_the_tails(a, p):
    x = inverse_regularized_lower_gamma(a, p)
    assert x == pytest.approx(special.gammaincinv(a, p), rel=1e-9)
