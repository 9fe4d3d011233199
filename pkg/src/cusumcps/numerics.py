"""Numerical kernels shared by the filter design, tuning and attack code."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DomainError,
    NoConvergence,
    NotPositiveDefinite,
    SingularInnovation,
    SpectralRadiusNotLessThanOne,
)

_EPS = np.finfo(float).eps


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    m = np.atleast_2d(np.asarray(a, dtype=float))
    if m.ndim != 2 or 0 in m.shape:
        raise DomainError(f"{name} must be a non-empty 2-D array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DomainError(f"{name} has non-finite entries")
    return m


# ---------------------------------------------------------------------------
# Riccati equation
# ---------------------------------------------------------------------------


def riccati_step(F: np.ndarray, C: np.ndarray, R1: np.ndarray, R2: np.ndarray, P: np.ndarray) -> np.ndarray:
    """One fixed-point map ``F P F' + R1 - F P C' (R2 + C P C')^-1 C P F'``."""
    S = R2 + C @ P @ C.T
    if np.linalg.cond(S) > 1.0 / (1e3 * _EPS):
        raise SingularInnovation("R2 + C P C' is numerically singular")
    FPC = F @ P @ C.T
    nxt = F @ P @ F.T + R1 - FPC @ np.linalg.solve(S, FPC.T)
    return 0.5 * (nxt + nxt.T)


def riccati_residual(F, C, R1, R2, P) -> float:
    """Infinity norm of the steady-state Riccati equation residual at ``P``."""
    F, C, R1, R2, P = (np.asarray(a, dtype=float) for a in (F, C, R1, R2, P))
    return float(np.linalg.norm(riccati_step(F, C, R1, R2, P) - P, np.inf))


def dare_solve(F, C, R1, R2, tol: float = 1e-12, max_iter: int = 10**6) -> np.ndarray:
    """Steady-state error covariance of the one-step predictor.

    Plain fixed-point iteration started at ``P = R1``. Convergence is declared
    when the Riccati residual (which equals the size of the next update) is at
    most ``tol`` in the infinity norm.
    """
    F = as_matrix(F, "F")
    C = as_matrix(C, "C")
    R1 = as_matrix(R1, "R1")
    R2 = as_matrix(R2, "R2")
    n = F.shape[0]
    if F.shape != (n, n) or C.shape[1] != n or R1.shape != (n, n) or R2.shape != (C.shape[0],) * 2:
        raise DomainError("inconsistent dimensions for F, C, R1, R2")

    P = 0.5 * (R1 + R1.T)
    residual = math.inf
    for _ in range(max_iter):
        nxt = riccati_step(F, C, R1, R2, P)
        residual = float(np.linalg.norm(nxt - P, np.inf))
        if residual <= tol:
            return P
        if not np.all(np.isfinite(nxt)):
            break
        P = nxt
    raise NoConvergence(f"Riccati iteration stopped with residual {residual:.3e} > {tol:.1e}")


# ---------------------------------------------------------------------------
# Small matrix helpers
# ---------------------------------------------------------------------------


def symmetric_sqrt(S, tol: float = 1e-12) -> np.ndarray:
    """Symmetric positive definite square root via ``eigh``."""
    S = as_matrix(S, "S")
    if S.shape[0] != S.shape[1]:
        raise DomainError("symmetric_sqrt needs a square matrix")
    S = 0.5 * (S + S.T)
    w, V = np.linalg.eigh(S)
    if w.min() <= tol * max(1.0, abs(w).max()):
        raise NotPositiveDefinite(f"smallest eigenvalue {w.min():.3e} is not positive")
    M = (V * np.sqrt(w)) @ V.T
    return 0.5 * (M + M.T)


def covariance_factor(R, tol: float = 1e-12) -> np.ndarray:
    """Return ``B`` with ``B @ B.T == R`` for a PSD matrix.

    Cholesky when it succeeds, otherwise an eigen-factor with eigenvalues
    below ``tol`` (relative) zeroed, so rank-deficient covariances work.
    """
    R = as_matrix(R, "covariance")
    R = 0.5 * (R + R.T)
    try:
        return np.linalg.cholesky(R)
    except np.linalg.LinAlgError:
        pass
    w, V = np.linalg.eigh(R)
    scale = max(1.0, abs(w).max())
    if w.min() < -1e-9 * scale:
        raise NotPositiveDefinite(f"covariance has eigenvalue {w.min():.3e} < 0")
    w = np.where(w < tol * scale, 0.0, w)
    return V * np.sqrt(w)


def spectral_radius(F) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(np.asarray(F, dtype=float)))))


# ---------------------------------------------------------------------------
# Incomplete gamma function
# ---------------------------------------------------------------------------

_GAMMA_ITMAX = 100_000
_GAMMA_EPS = 1e-16
_TINY = 1e-300


def _gamma_series(a: float, x: float) -> float:
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_GAMMA_ITMAX):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _GAMMA_EPS:
            break
    else:
        raise NoConvergence(f"gamma series did not converge for a={a}, x={x}")
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_upper_cf(a: float, x: float) -> float:
    # modified Lentz on the Legendre continued fraction for Q(a, x)
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _GAMMA_ITMAX):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _GAMMA_EPS:
            break
    else:
        raise NoConvergence(f"gamma continued fraction did not converge for a={a}, x={x}")
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def regularized_lower_gamma(a: float, x: float) -> float:
    """Regularized lower incomplete gamma function ``P(a, x)``.

    Series expansion below ``x = a + 1``, continued fraction above.
    """
    a = float(a)
    x = float(x)
    if not a > 0 or math.isnan(x) or x < 0:
        raise DomainError(f"regularized_lower_gamma needs a > 0 and x >= 0, got a={a}, x={x}")
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        return min(1.0, _gamma_series(a, x))
    return max(0.0, 1.0 - _gamma_upper_cf(a, x))


def regularized_upper_gamma(a: float, x: float) -> float:
    """Complement ``Q(a, x) = 1 - P(a, x)``, accurate deep in the upper tail."""
    a = float(a)
    x = float(x)
    if not a > 0 or math.isnan(x) or x < 0:
        raise DomainError(f"regularized_upper_gamma needs a > 0 and x >= 0, got a={a}, x={x}")
    if x == 0.0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return max(0.0, 1.0 - _gamma_series(a, x))
    return min(1.0, _gamma_upper_cf(a, x))


def inverse_regularized_lower_gamma(a: float, p: float, tol: float = 1e-13) -> float:
    """Solve ``P(a, x) = p`` for ``x`` by safeguarded Newton inside a bracket."""
    a = float(a)
    p = float(p)
    if not a > 0:
        raise DomainError(f"a must be positive, got {a}")
    if not 0.0 <= p < 1.0:
        raise DomainError(f"p must lie in [0, 1), got {p}")
    if p == 0.0:
        return 0.0

    lo, hi = 0.0, max(1.0, a)
    while regularized_lower_gamma(a, hi) < p:
        lo, hi = hi, 2.0 * hi
        if hi > 1e300:
            raise NoConvergence("could not bracket the gamma quantile")

    log_norm = math.lgamma(a)
    x = 0.5 * (lo + hi)
    for _ in range(500):
        f = regularized_lower_gamma(a, x) - p
        if abs(f) <= tol:
            return x
        if f > 0:
            hi = x
        else:
            lo = x
        dens = math.exp((a - 1.0) * math.log(x) - x - log_norm) if x > 0 else 0.0
        step_ok = False
        if dens > 0:
            cand = x - f / dens
            if lo < cand < hi:
                x = cand
                step_ok = True
        if not step_ok:
            x = 0.5 * (lo + hi)
        if hi - lo <= 4 * _EPS * hi:
            return x
    return x


# ---------------------------------------------------------------------------
# Contraction norm
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ContractionNorm:
    """Similarity-induced norm ``||A||_* = ||T^-1 A T||_2`` with ``||F||_* < 1``.

    ``c = cond(T)`` gives ``||A||_2 <= c ||A||_*`` for every matrix ``A``.
    """

    transform: np.ndarray
    condition_number: float
    star_norm_of_f: float
    method: str

    @property
    def c(self) -> float:
        return self.condition_number

    def norm(self, A) -> float:
        T = self.transform
        return float(np.linalg.norm(np.linalg.solve(T, np.asarray(A) @ T), 2))


def _eigen_transform(F: np.ndarray, max_cond: float):
    w, V = np.linalg.eig(F)
    n = len(w)
    if n > 1:
        gaps = np.abs(w[:, None] - w[None, :])
        np.fill_diagonal(gaps, np.inf)
        if gaps.min() <= 1e-8 * max(1.0, np.abs(w).max()):
            return None
    V = V / np.linalg.norm(V, axis=0)
    if np.all(np.abs(V.imag) == 0):
        V = V.real
    kappa = np.linalg.cond(V)
    if not np.isfinite(kappa) or kappa > max_cond:
        return None
    return V


def _schur_transform(F: np.ndarray, rho: float):
    from scipy.linalg import schur

    U, Q = schur(F.astype(complex), output="complex")
    n = F.shape[0]
    target = 0.5 * (1.0 + rho)
    eps = 1.0
    for _ in range(200):
        D = eps ** np.arange(n)
        scaled = U * D[None, :] / D[:, None]
        if np.linalg.norm(scaled, 2) < target:
            return Q * D[None, :]
        eps *= 0.5
    raise NoConvergence("Schur scaling failed to produce a contraction")


def contraction_norm(F, tol: float = 1e-12, max_cond: float = 1e8) -> ContractionNorm:
    """Build a norm in which ``F`` is a strict contraction.

    Uses the eigenvector matrix when ``F`` has well-separated eigenvalues and
    a well-conditioned eigenbasis; otherwise a diagonally scaled Schur basis.
    """
    F = as_matrix(F, "F")
    rho = spectral_radius(F)
    if rho >= 1.0 - tol:
        raise SpectralRadiusNotLessThanOne(f"spectral radius {rho:.6f} is not below 1")

    T = _eigen_transform(F, max_cond)
    method = "eigen"
    if T is None or np.linalg.norm(np.linalg.solve(T, F @ T), 2) >= 1.0:
        T = _schur_transform(F, rho)
        method = "schur"
    star = float(np.linalg.norm(np.linalg.solve(T, F @ T), 2))
    kappa = float(np.linalg.cond(T))
    return ContractionNorm(transform=T, condition_number=max(1.0, kappa), star_norm_of_f=star, method=method)


# ---------------------------------------------------------------------------
# Singular vectors
# ---------------------------------------------------------------------------


def power_iteration_seed(n: int) -> np.ndarray:
    """Fixed start vector for ``top_right_singular_vector`` (unit norm)."""
    v = np.random.default_rng(20170311).standard_normal(n)
    return _sign_normalize(v / np.linalg.norm(v))


def _sign_normalize(v: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(np.abs(v) > 1e-12)
    if nz.size and v[nz[0]] < 0:
        return -v
    return v


def top_right_singular_vector(A, max_iter: int = 100_000, tol: float = 1e-13) -> np.ndarray:
    """Unit vector maximising ``||A v||``, by power iteration on ``A' A``.

    Ties (repeated top singular value) resolve to whatever the fixed seed
    converges to; for the identity that is the seed itself. The first
    nonzero entry of the result is positive.
    """
    A = as_matrix(A, "A")
    M = A.T @ A
    v = power_iteration_seed(A.shape[1])
    if not np.any(M):
        return v
    for _ in range(max_iter):
        w = M @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return v
        w = _sign_normalize(w / norm)
        if np.linalg.norm(w - v) <= tol:
            return w
        v = w
    raise NoConvergence("power iteration for the top singular vector did not converge")
