"""Attacked LTI plant, steady-state Kalman filter and residual generation.

Plant::

    x[k+1] = F x[k] + G u[k] + v[k],     v ~ N(0, R1)
    y[k]   = C x[k] + eta[k],            eta ~ N(0, R2)
    ybar   = y + delta                    (additive sensor attack)

Estimator (one-step predictor with constant gain)::

    r[k]      = ybar[k] - C xhat[k]
    xhat[k+1] = F xhat[k] + G u[k] + L r[k]

Noise is drawn as one block of ``n + m`` standard normals per step, the first
``n`` mapped through the factor of R1 and the rest through the factor of R2.
``residual_stream`` relies on this ordering to reproduce ``step`` in bulk.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np

from .errors import DomainError, SingularSigma, ValidationError
from .numerics import as_matrix, covariance_factor, dare_solve, symmetric_sqrt

Controller = Callable[[np.ndarray], np.ndarray]

MODEL_FIELDS = ("F", "G", "C", "R0", "R1", "R2")


def _check_psd(name: str, R: np.ndarray) -> None:
    if not np.allclose(R, R.T, atol=1e-12, rtol=0):
        raise ValidationError(f"{name} must be symmetric")
    w = np.linalg.eigvalsh(0.5 * (R + R.T))
    if w.min() < -1e-9 * max(1.0, abs(w).max()):
        raise ValidationError(f"{name} must be positive semidefinite")


@dataclass(frozen=True)
class LtiModel:
    F: np.ndarray
    G: np.ndarray
    C: np.ndarray
    R0: np.ndarray
    R1: np.ndarray
    R2: np.ndarray

    def __post_init__(self):
        for name in MODEL_FIELDS:
            arr = as_matrix(getattr(self, name), name)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n, m, l = self.n, self.m, self.l
        shapes = {"F": (n, n), "G": (n, l), "C": (m, n), "R0": (n, n), "R1": (n, n), "R2": (m, m)}
        for name, shape in shapes.items():
            if getattr(self, name).shape != shape:
                raise ValidationError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        for name in ("R0", "R1", "R2"):
            _check_psd(name, getattr(self, name))

    @property
    def n(self) -> int:
        return self.F.shape[0]

    @property
    def m(self) -> int:
        return self.C.shape[0]

    @property
    def l(self) -> int:
        return self.G.shape[1]

    @classmethod
    def from_mapping(cls, data: Mapping) -> "LtiModel":
        missing = [k for k in MODEL_FIELDS if k not in data]
        if missing:
            raise ValidationError(f"model is missing fields: {', '.join(missing)}")
        return cls(**{k: np.asarray(data[k], dtype=float) for k in MODEL_FIELDS})

    def to_mapping(self) -> dict:
        return {k: getattr(self, k).tolist() for k in MODEL_FIELDS}


@dataclass(frozen=True)
class KalmanDesign:
    P: np.ndarray
    L: np.ndarray
    sigma: np.ndarray
    sigma_sqrt: np.ndarray
    sigma_inv: np.ndarray


def error_dynamics(model: LtiModel, design: KalmanDesign) -> np.ndarray:
    """Unattacked estimation-error transition matrix ``F - L C``."""
    return model.F - design.L @ model.C


def design_filter(model: LtiModel, tol: float = 1e-12, max_iter: int = 10**6) -> KalmanDesign:
    P = dare_solve(model.F, model.C, model.R1, model.R2, tol=tol, max_iter=max_iter)
    C = model.C
    sigma = C @ P @ C.T + model.R2
    sigma = 0.5 * (sigma + sigma.T)
    if np.linalg.cond(sigma) > 1e12:
        raise SingularSigma("residual covariance is numerically singular")
    # L = F P C' Sigma^-1, via a symmetric solve
    L = np.linalg.solve(sigma, (model.F @ P @ C.T).T).T
    sigma_inv = np.linalg.solve(sigma, np.eye(model.m))
    sigma_inv = 0.5 * (sigma_inv + sigma_inv.T)
    arrays = dict(P=P, L=L, sigma=sigma, sigma_sqrt=symmetric_sqrt(sigma), sigma_inv=sigma_inv)
    for a in arrays.values():
        a.setflags(write=False)
    return KalmanDesign(**arrays)


@dataclass(frozen=True)
class NoiseFactors:
    v: np.ndarray
    eta: np.ndarray

    @classmethod
    def of(cls, model: LtiModel) -> "NoiseFactors":
        return cls(covariance_factor(model.R1), covariance_factor(model.R2))


@dataclass
class SimState:
    x: np.ndarray
    xhat: np.ndarray
    k: int
    rng: np.random.Generator = field(repr=False)
    seed: int | None = None

    @property
    def e(self) -> np.ndarray:
        return self.x - self.xhat

    def snapshot(self) -> tuple:
        """Hashable summary used to compare two runs for determinism."""
        return (self.k, self.x.tobytes(), self.xhat.tobytes(), self.rng.bit_generator.state["state"]["state"])


@dataclass(frozen=True)
class StepRecord:
    k: int
    y: np.ndarray
    ybar: np.ndarray
    r: np.ndarray
    z: float
    delta: np.ndarray
    v: np.ndarray
    eta: np.ndarray


def make_rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def draw_noise(model: LtiModel, rng: np.random.Generator, factors: NoiseFactors | None = None):
    """Draw ``(v, eta)`` for one step from the shared standard-normal stream."""
    factors = factors or NoiseFactors.of(model)
    w = rng.standard_normal(model.n + model.m)
    return factors.v @ w[: model.n], factors.eta @ w[model.n :]


def initial_state(model: LtiModel, seed, factors: NoiseFactors | None = None) -> SimState:
    """``x ~ N(0, R0)``, ``xhat = 0`` at ``k = 1``."""
    rng = make_rng(seed)
    x0 = covariance_factor(model.R0) @ rng.standard_normal(model.n)
    return SimState(x=x0, xhat=np.zeros(model.n), k=1, rng=rng, seed=seed)


def step(
    model: LtiModel,
    design: KalmanDesign,
    state: SimState,
    u=None,
    delta=None,
    noise=None,
    factors: NoiseFactors | None = None,
) -> tuple[SimState, StepRecord]:
    """Advance one sample.

    ``noise`` may carry pre-drawn ``(v, eta)`` (attack generators need eta
    before the injection is known); otherwise it is drawn here. The returned
    state shares the generator of ``state``.
    """
    if noise is None:
        v, eta = draw_noise(model, state.rng, factors)
    else:
        v, eta = noise
    u = np.zeros(model.l) if u is None else np.asarray(u, dtype=float)
    delta = np.zeros(model.m) if delta is None else np.asarray(delta, dtype=float)
    if u.shape != (model.l,) or delta.shape != (model.m,):
        raise DomainError("u or delta has the wrong dimension")

    y = model.C @ state.x + eta
    ybar = y + delta
    r = ybar - model.C @ state.xhat
    z = float(r @ design.sigma_inv @ r)
    Gu = model.G @ u
    xhat = model.F @ state.xhat + Gu + design.L @ r
    x = model.F @ state.x + Gu + v
    new = replace(state, x=x, xhat=xhat, k=state.k + 1)
    return new, StepRecord(k=state.k, y=y, ybar=ybar, r=r, z=z, delta=delta, v=v, eta=eta)


def warm_up(model: LtiModel, design: KalmanDesign, steps: int = 1000, seed=0, controller: Controller | None = None) -> SimState:
    """Run the unattacked loop from ``x ~ N(0, R0)``, ``xhat = 0``."""
    if steps < 1:
        raise ValidationError("warm-up needs at least one step")
    factors = NoiseFactors.of(model)
    state = initial_state(model, seed, factors)
    for _ in range(steps):
        u = None if controller is None else controller(state.xhat)
        state, _ = step(model, design, state, u=u, factors=factors)
    return state


# ---------------------------------------------------------------------------
# Bulk unattacked residuals
# ---------------------------------------------------------------------------


def _propagate_loop(A: np.ndarray, e0: np.ndarray, w: np.ndarray) -> np.ndarray:
    out = np.empty((w.shape[0], A.shape[0]))
    e = e0
    for k in range(w.shape[0]):
        out[k] = e
        e = A @ e + w[k]
    return out


def _propagate_modal(A: np.ndarray, e0: np.ndarray, w: np.ndarray):
    """Error sequence via per-eigenmode first-order IIR filters, or None."""
    from scipy.signal import lfilter

    lam, V = np.linalg.eig(A)
    if np.linalg.cond(V) > 1e6:
        return None
    n = len(lam)
    if n > 1:
        gaps = np.abs(lam[:, None] - lam[None, :])
        np.fill_diagonal(gaps, np.inf)
        if gaps.min() < 1e-9:
            return None
    Vinv = np.linalg.inv(V)
    u = w @ Vinv.T
    q0 = Vinv @ e0
    q = np.empty((w.shape[0], n), dtype=complex)
    for i in range(n):
        out = lfilter([1.0], [1.0, -lam[i]], u[:, i], zi=[lam[i] * q0[i]])[0]
        q[0, i] = q0[i]
        q[1:, i] = out[:-1]
    return (q @ V.T).real


def residual_stream(
    model: LtiModel,
    design: KalmanDesign,
    state: SimState,
    steps: int,
    chunk: int = 1 << 18,
    exact: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Unattacked residuals ``r`` (steps x m) and distances ``z`` from ``state``.

    Consumes the generator exactly as ``steps`` calls to ``step`` would and
    iterates the error recursion ``e+ = (F - L C) e + v - L eta`` instead of
    the full plant. With ``exact=False`` the recursion is evaluated through
    the eigenmodes of ``F - L C`` (agrees with ``step`` to rounding).

    Only the error is tracked, so on return ``state`` holds ``x = e`` and
    ``xhat = 0``: its ``e``, ``k`` and generator are valid, absolute plant
    coordinates are not.
    """
    factors = NoiseFactors.of(model)
    A = error_dynamics(model, design)
    n, m = model.n, model.m
    r_all = np.empty((steps, m))
    e = state.e.copy()
    done = 0
    while done < steps:
        size = min(chunk, steps - done)
        W = state.rng.standard_normal((size, n + m))
        v = W[:, :n] @ factors.v.T
        eta = W[:, n:] @ factors.eta.T
        w = v - eta @ design.L.T
        E = None if exact else _propagate_modal(A, e, w)
        if E is None:
            E = _propagate_loop(A, e, w)
        r_all[done : done + size] = E @ model.C.T + eta
        e = A @ E[-1] + w[-1]
        done += size
    state.x = e
    state.xhat = np.zeros(n)
    state.k += steps
    z = np.einsum("ki,ij,kj->k", r_all, design.sigma_inv, r_all)
    return r_all, z


def unattacked_distances(model: LtiModel, design: KalmanDesign, steps: int, seed, warm_up_steps: int = 1000) -> np.ndarray:
    """Convenience: warm up, then return ``steps`` unattacked ``z`` values."""
    state = warm_up(model, design, warm_up_steps, seed)
    return residual_stream(model, design, state, steps)[1]
