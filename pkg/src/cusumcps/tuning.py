"""Detector calibration.

The CUSUM threshold is found from a Markov-chain approximation of the
average run length (Brook and Evans): the statistic range ``[0, tau]`` is
split into ``N`` cells of width ``2 tau / (2N - 1)`` plus an absorbing
"alarm" state, transitions come from the shifted chi-squared law of
``z - b``, and the expected absorption time from the empty state is the
first entry of ``(I - R)^-1 1``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import BracketFailure, DomainError, SingularSystem, ValidationError
from .numerics import inverse_regularized_lower_gamma, regularized_lower_gamma, regularized_upper_gamma

DEFAULT_PARTITIONS = 1000


def bias_lower_bound(m: int) -> float:
    """Smallest bias (exclusive) that keeps ``E[S_k^2]`` bounded: ``m``."""
    if m < 1:
        raise DomainError("number of outputs must be >= 1")
    return float(m)


def drift_boundary(b: float, m: int) -> float:
    """Level above which the conditional second-moment drift of S is negative."""
    if not b > m:
        raise DomainError(f"drift boundary needs b > m, got b={b}, m={m}")
    d = b - m
    return (d * d + 2.0 * m) / (2.0 * d)


def shifted_chi2_cdf(m: int, b: float, x: float) -> float:
    """CDF of ``z - b`` with ``z`` chi-squared on ``m`` degrees of freedom."""
    if m < 1:
        raise DomainError("m must be >= 1")
    if x < -b:
        return 0.0
    return regularized_lower_gamma(m / 2.0, (x + b) / 2.0)


@dataclass(frozen=True)
class ArlApproximation:
    m: int
    b: float
    tau: float
    N: int
    delta_s: float
    transition: np.ndarray
    fundamental: np.ndarray
    mu: np.ndarray

    @property
    def arl(self) -> float:
        return float(self.mu[0])

    @property
    def false_alarm_rate(self) -> float:
        return 1.0 / float(self.mu[0])


def _cdf_and_tail(m: int, b: float, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``F(x)`` and ``1 - F(x)`` of ``z - b``, each accurate where it is small."""
    a = m / 2.0
    cdf = np.empty(points.size)
    tail = np.empty(points.size)
    for i, x in enumerate(points.tolist()):
        if x < -b:
            cdf[i], tail[i] = 0.0, 1.0
            continue
        lower = regularized_lower_gamma(a, (x + b) / 2.0)
        if lower <= 0.5:
            cdf[i], tail[i] = lower, 1.0 - lower
        else:
            upper = regularized_upper_gamma(a, (x + b) / 2.0)
            cdf[i], tail[i] = 1.0 - upper, upper
    return cdf, tail


# beyond this ARL an LU solve of (I - R) mu = 1 loses too many digits
_LU_ARL_LIMIT = 1e10


def _absorption_times(R: np.ndarray, exit_prob: np.ndarray) -> np.ndarray:
    """Expected steps to absorption by state reduction (no subtractions).

    States are censored from the top down; the self-loop complement of each
    state is formed as the sum of its remaining outflows, which keeps the
    result accurate even when exits are far below machine epsilon.
    """
    N = R.shape[0]
    A = R.copy()
    a = exit_prob.astype(float).copy()
    t = np.ones(N)
    out = np.empty(N)
    with np.errstate(over="ignore"):
        for k in range(N - 1, -1, -1):
            out[k] = A[k, :k].sum() + a[k]
            if not out[k] > 0:
                raise SingularSystem(f"state {k} cannot reach the alarm state; I - R is singular")
            if k == 0:
                break
            w = A[:k, k] / out[k]
            A[:k, :k] += np.outer(w, A[k, :k])
            a[:k] += w * a[k]
            t[:k] += w * t[k]
        mu = np.empty(N)
        for k in range(N):
            mu[k] = (t[k] + A[k, :k] @ mu[:k]) / out[k]
    return mu


def build_markov_chain(m: int, b: float, tau: float, N: int = DEFAULT_PARTITIONS) -> ArlApproximation:
    if not b > 0 or not tau > 0:
        raise ValidationError("build_markov_chain needs b > 0 and tau > 0")
    if N < 2:
        raise ValidationError("need at least two partitions")
    ds = 2.0 * tau / (2 * N - 1)

    # T[c + N - 1] = F(c*ds + ds/2) for c = -(N-1) .. N-1, Q = 1 - T
    c = np.arange(-(N - 1), N)
    T, Q = _cdf_and_tail(m, b, c * ds + 0.5 * ds)
    # p[c + N - 1] = T_c - T_{c-1}, differenced on whichever side is small
    p = np.empty_like(T)
    p[1:] = np.where(T[1:] <= 0.5, T[1:] - T[:-1], Q[:-1] - Q[1:])
    p[0] = np.nan

    j = np.arange(N)
    P = np.zeros((N + 1, N + 1))
    P[:N, 0] = T[-j + N - 1]
    nu = np.arange(1, N)
    P[:N, 1:N] = p[nu[None, :] - j[:, None] + N - 1]
    P[:N, N] = Q[(N - 1 - j) + N - 1]
    P[N, N] = 1.0

    R = P[:N, :N]
    mu = None
    if P[:N, N].min() > 0:
        mu = np.linalg.solve(np.eye(N) - R, np.ones(N))
        if not (np.all(np.isfinite(mu)) and mu.min() >= 1.0 and mu.max() < _LU_ARL_LIMIT):
            mu = None
    if mu is None:
        mu = _absorption_times(R, P[:N, N])
    return ArlApproximation(m=m, b=float(b), tau=float(tau), N=N, delta_s=ds, transition=P, fundamental=R.copy(), mu=mu)


def approx_false_alarm_rate(m: int, b: float, tau: float, N: int = DEFAULT_PARTITIONS) -> float:
    return build_markov_chain(m, b, tau, N).false_alarm_rate


@dataclass(frozen=True)
class TuningResult:
    m: int
    b: float
    tau: float
    target_rate: float
    approx_rate: float
    N: int
    iterations: int
    strict_bias: bool

    def to_record(self) -> dict:
        return {
            "m": self.m,
            "b": self.b,
            "tau": self.tau,
            "targetRate": self.target_rate,
            "approxRate": self.approx_rate,
            "N": self.N,
            "iterations": self.iterations,
            "strictBias": self.strict_bias,
        }


def solve_cusum_threshold(
    m: int,
    b: float,
    target_rate: float,
    N: int = DEFAULT_PARTITIONS,
    tol: float = 1e-4,
    tau_lo: float = 1e-3,
    tau_max: float = 1e6,
    width_tol: float = 1e-6,
) -> TuningResult:
    """Bisection on ``tau`` so the approximate false-alarm rate hits the target.

    Raises ``BracketFailure`` when even ``tau_lo`` gives a rate below the
    target (the bias alone already suppresses that many alarms) or when no
    ``tau <= tau_max`` brings the rate under it.
    """
    if not 0.0 < target_rate < 1.0:
        raise ValidationError("target rate must lie in (0, 1)")
    strict = b > bias_lower_bound(m)
    if not strict:
        warnings.warn(f"b={b} <= m={m}: CUSUM statistic is not mean-square bounded", RuntimeWarning, stacklevel=2)

    def rate(t: float) -> float:
        return approx_false_alarm_rate(m, b, t, N)

    lo = tau_lo
    r_lo = rate(lo)
    if r_lo <= target_rate:
        raise BracketFailure(
            f"rate at tau={lo:g} is {r_lo:.4g} <= target {target_rate:g}; target unreachable for b={b}"
        )
    hi = max(1.0, 2.0 * lo)
    r_hi = rate(hi)
    while r_hi >= target_rate:
        lo, r_lo = hi, r_hi
        hi *= 2.0
        if hi > tau_max:
            raise BracketFailure(f"no threshold up to {tau_max:g} reaches rate {target_rate:g}")
        r_hi = rate(hi)

    tau, r = hi, r_hi
    iterations = 0
    while True:
        iterations += 1
        tau = 0.5 * (lo + hi)
        r = rate(tau)
        if abs(r - target_rate) <= tol or hi - lo <= width_tol:
            break
        if r > target_rate:
            lo = tau
        else:
            hi = tau
    return TuningResult(
        m=m, b=float(b), tau=tau, target_rate=target_rate, approx_rate=r, N=N, iterations=iterations, strict_bias=strict
    )


def chi2_threshold(m: int, target_rate: float) -> float:
    """Threshold with ``pr(z > alpha) = target_rate`` for chi-squared(m)."""
    if m < 1 or not 0.0 < target_rate < 1.0:
        raise ValidationError("chi2_threshold needs m >= 1 and 0 < rate < 1")
    return 2.0 * inverse_regularized_lower_gamma(m / 2.0, 1.0 - target_rate)


def chi2_false_alarm_rate(m: int, alpha: float) -> float:
    return 1.0 - regularized_lower_gamma(m / 2.0, alpha / 2.0)

