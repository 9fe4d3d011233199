"""Zero-alarm sensor attacks and the estimation-error envelopes they induce.

The attacker cancels the true innovation ``C e + eta`` and substitutes a
residual ``Sigma^{1/2} d`` of its own choosing, where ``d`` is kept inside
the detector's acceptance region:

* chi-squared: ``|d|^2 = alpha`` every step, so ``z = alpha`` (no alarm);
* CUSUM: ``|d|^2 = tau + b - S[k*-1]`` at the first step, which lands
  ``S`` exactly on ``tau``, then ``|d|^2 = b`` so that ``S`` stays there.

Under such an attack the error obeys ``e+ = F e - L Sigma^{1/2} d + v``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .detectors import Chi2Config, CusumConfig, CusumState, chi2_update, cusum_update
from .errors import DomainError, NumericalError, StateAboveThreshold, ValidationError
from .numerics import ContractionNorm, contraction_norm, spectral_radius, top_right_singular_vector
from .plant import KalmanDesign, LtiModel, NoiseFactors, draw_noise, step, warm_up

DEFAULT_K_STAR = 2000
# relative back-off on |d|^2 so rounding in r' Sigma^-1 r never lands above the threshold
DEFAULT_MARGIN = 1e-12
DIVERGENCE_CAP = 1e12


class DirectionKind(str, enum.Enum):
    UNIFORM = "uniform"
    WORST_CASE = "worst_case"
    CUSTOM = "custom"

    @classmethod
    def _missing_(cls, value):
        aliases = {"worstcase": cls.WORST_CASE, "worst-case": cls.WORST_CASE}
        return aliases.get(str(value).lower())


def parse_direction_kind(value) -> DirectionKind:
    try:
        return DirectionKind(value)
    except ValueError:
        choices = ", ".join(k.value for k in DirectionKind)
        raise ValidationError(f"unknown attack direction {value!r} (choose from {choices})") from None


def uniform_direction(m: int) -> np.ndarray:
    return np.full(m, 1.0 / math.sqrt(m))


def worst_case_gain(model: LtiModel, design: KalmanDesign) -> np.ndarray:
    """``(I - F)^-1 L Sigma^{1/2}``: steady-state map from ``d`` to ``-e``."""
    return np.linalg.solve(np.eye(model.n) - model.F, design.L @ design.sigma_sqrt)


def worst_case_direction(model: LtiModel, design: KalmanDesign) -> np.ndarray:
    return top_right_singular_vector(worst_case_gain(model, design))


@dataclass(frozen=True)
class AttackPlan:
    detector: Chi2Config | CusumConfig
    direction: np.ndarray
    direction_kind: DirectionKind = DirectionKind.CUSTOM
    k_star: int = DEFAULT_K_STAR
    scale: float = 1.0
    margin: float = DEFAULT_MARGIN

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        if d.ndim != 1 or not math.isclose(float(np.linalg.norm(d)), 1.0, rel_tol=0, abs_tol=1e-9):
            raise ValidationError("attack direction must be a unit vector")
        if self.k_star < 1:
            raise ValidationError("attack start must be >= 1")
        if not 0.0 <= self.scale <= 1.0:
            raise ValidationError("scale must lie in [0, 1]")
        d = d.copy()
        d.setflags(write=False)
        object.__setattr__(self, "direction", d)
        object.__setattr__(self, "direction_kind", parse_direction_kind(self.direction_kind))

    @property
    def kind(self) -> str:
        return "chi2" if isinstance(self.detector, Chi2Config) else "cusum"

    @classmethod
    def build(
        cls,
        detector: Chi2Config | CusumConfig,
        direction_kind: str | DirectionKind,
        model: LtiModel,
        design: KalmanDesign,
        k_star: int = DEFAULT_K_STAR,
        custom=None,
        **kw,
    ) -> "AttackPlan":
        kind = parse_direction_kind(direction_kind)
        if kind is DirectionKind.UNIFORM:
            d = uniform_direction(model.m)
        elif kind is DirectionKind.WORST_CASE:
            d = worst_case_direction(model, design)
        else:
            if custom is None:
                raise ValidationError("custom direction requires a vector")
            d = np.asarray(custom, dtype=float)
            d = d / np.linalg.norm(d)
        return cls(detector=detector, direction=d, direction_kind=kind, k_star=k_star, **kw)


def free_vector(plan: AttackPlan, k: int, S_prev: float | None = None) -> np.ndarray:
    """The attacker-chosen residual coordinates ``d`` at sample ``k``.

    Zero before ``k_star``. For CUSUM plans ``S_prev`` is ``S[k-1]`` and is
    only consulted at ``k == k_star``.
    """
    if k < plan.k_star:
        return np.zeros_like(plan.direction)
    shrink = (1.0 - plan.margin) * plan.scale**2
    det = plan.detector
    if isinstance(det, Chi2Config):
        mag2 = det.alpha * shrink
    elif k == plan.k_star:
        if S_prev is None:
            raise ValidationError("CUSUM attack needs S[k*-1]")
        if S_prev > det.tau:
            raise StateAboveThreshold(f"S[k*-1]={S_prev:.4g} exceeds tau={det.tau:.4g}; attack would start on a reset")
        mag2 = (det.tau + det.b - S_prev) * shrink
    else:
        mag2 = det.b * shrink
    return math.sqrt(mag2) * plan.direction


def attack_delta(
    plan: AttackPlan,
    model: LtiModel,
    design: KalmanDesign,
    e: np.ndarray,
    eta: np.ndarray,
    k: int,
    detector_state: CusumState | None = None,
) -> np.ndarray:
    """Sensor injection ``-C e - eta + Sigma^{1/2} d`` (zero before ``k_star``)."""
    if k < plan.k_star:
        return np.zeros(model.m)
    S_prev = detector_state.S if detector_state is not None else None
    d = free_vector(plan, k, S_prev)
    return -model.C @ e - eta + design.sigma_sqrt @ d


# ---------------------------------------------------------------------------
# Envelopes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundEnvelope:
    k: np.ndarray
    gamma: np.ndarray
    asymptote: float
    norm: ContractionNorm

    def at(self, k: int) -> float:
        return float(self.gamma[k - int(self.k[0])])


def _envelope_constants(design: KalmanDesign, F) -> tuple[ContractionNorm, float]:
    norm = contraction_norm(F)
    gain = float(np.linalg.norm(design.L @ design.sigma_sqrt, 2))
    return norm, gain


def chi2_bound_envelope(design: KalmanDesign, F, alpha: float, k_star: int, horizon: int) -> BoundEnvelope:
    norm, gain = _envelope_constants(design, F)
    s, c = norm.star_norm_of_f, norm.c
    k = np.arange(k_star, k_star + horizon + 1)
    lead = math.sqrt(alpha) * c * gain / (1.0 - s)
    gamma = lead * (1.0 - s ** (k - k_star))
    return BoundEnvelope(k=k, gamma=gamma, asymptote=lead, norm=norm)


def cusum_bound_envelope(
    design: KalmanDesign, F, b: float, tau_bar, k_star: int, horizon: int
) -> BoundEnvelope:
    """``tau_bar`` is the realised first-step vector ``d[k*]``."""
    norm, gain = _envelope_constants(design, F)
    s, c = norm.star_norm_of_f, norm.c
    k = np.arange(k_star, k_star + horizon + 1)
    lead = math.sqrt(b) * c * gain / (1.0 - s)
    first = c * float(np.linalg.norm(design.L @ design.sigma_sqrt @ np.asarray(tau_bar, dtype=float)))
    gamma = lead * (1.0 - s ** (k - k_star)) + first * s ** (k - k_star - 1.0)
    return BoundEnvelope(k=k, gamma=gamma, asymptote=lead, norm=norm)


def asymptotic_ratio(alpha: float, b: float) -> float:
    """Steady-state chi-squared to CUSUM envelope ratio, ``sqrt(alpha / b)``."""
    if not alpha > 0 or not b > 0:
        raise DomainError("alpha and b must be positive")
    return math.sqrt(alpha / b)


def steady_state_error(model: LtiModel, design: KalmanDesign, d) -> np.ndarray:
    """Fixed point of ``e+ = F e - L Sigma^{1/2} d`` for constant ``d``."""
    return -worst_case_gain(model, design) @ np.asarray(d, dtype=float)


# ---------------------------------------------------------------------------
# Simulation with superposition bookkeeping
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AttackTrace:
    plan: AttackPlan
    k_star: int
    k: np.ndarray
    delta: np.ndarray
    z: np.ndarray
    S: np.ndarray
    alarm: np.ndarray
    e_full: np.ndarray
    e_noise: np.ndarray
    e_attack: np.ndarray
    first_vector: np.ndarray
    diverged: bool

    @property
    def attack_alarms(self) -> int:
        return int(self.alarm[self.k >= self.k_star].sum())

    @property
    def e_attack_norm(self) -> np.ndarray:
        return np.linalg.norm(self.e_attack, axis=1)

    def superposition_error(self) -> float:
        return float(np.abs(self.e_full - self.e_noise - self.e_attack).max())


def split_error_trajectories(
    model: LtiModel,
    design: KalmanDesign,
    plan: AttackPlan,
    horizon: int,
    seed=0,
    warm_up_steps: int = 1000,
    postpone_after_alarm: bool = True,
    check_tol: float | None = 1e-9,
) -> AttackTrace:
    """Simulate samples ``1..horizon`` with the attack from ``plan.k_star``.

    The error is split into a noise-driven part ``e+ = F e + v`` and an
    attack-driven part ``e+ = F e - L Sigma^{1/2} d`` from ``k_star`` on
    (before that the whole error counts as noise). Sample 1 is the state
    reached after ``warm_up_steps`` unattacked steps.

    If a CUSUM attack would begin right after a false alarm
    (``S[k*-1] > tau``) and ``postpone_after_alarm`` is set, the start moves
    one sample later, when the reset has emptied the statistic.
    """
    if horizon < 1:
        raise ValidationError("horizon must be >= 1")
    state = warm_up(model, design, warm_up_steps, seed)
    state.k = 1
    factors = NoiseFactors.of(model)
    n, m = model.n, model.m
    is_cusum = isinstance(plan.detector, CusumConfig)
    cstate = CusumState() if is_cusum else None

    ks = np.arange(1, horizon + 1)
    delta = np.zeros((horizon, m))
    z = np.zeros(horizon)
    S = np.full(horizon, np.nan)
    alarm = np.zeros(horizon, dtype=bool)
    e_full = np.zeros((horizon, n))
    e_noise = np.zeros((horizon, n))
    e_attack = np.zeros((horizon, n))
    first = np.zeros(m)
    LS = design.L @ design.sigma_sqrt
    diverged = False

    active = plan
    ev = state.e.copy()
    ed = np.zeros(n)
    for i in range(horizon):
        k = int(ks[i])
        v, eta = draw_noise(model, state.rng, factors)
        if is_cusum and k == active.k_star and cstate.S > plan.detector.tau and postpone_after_alarm:
            active = replace(active, k_star=k + 1)
        if k <= active.k_star:
            ev = state.e.copy()
            ed = np.zeros(n)
        e_full[i] = state.e
        e_noise[i] = ev
        e_attack[i] = ed
        if check_tol is not None and k >= active.k_star:
            err = np.abs(state.e - ev - ed).max()
            if err > check_tol * max(1.0, np.abs(state.e).max()):
                raise NumericalError(f"superposition violated by {err:.3e} at k={k}")

        if k >= active.k_star:
            d = free_vector(active, k, cstate.S if is_cusum else None)
            if k == active.k_star:
                first = d
            dk = -model.C @ state.e - eta + design.sigma_sqrt @ d
        else:
            d = np.zeros(m)
            dk = np.zeros(m)

        state, rec = step(model, design, state, delta=dk, noise=(v, eta))
        delta[i] = dk
        z[i] = rec.z
        if is_cusum:
            cstate, _ = cusum_update(plan.detector, cstate, rec.z)
            S[i] = cstate.S
            alarm[i] = cstate.S > plan.detector.tau
        else:
            alarm[i] = chi2_update(plan.detector, rec.z)

        if k >= active.k_star:
            ev = model.F @ ev + v
            ed = model.F @ ed - LS @ d
        if np.abs(state.e).max() > DIVERGENCE_CAP:
            diverged = True
            cut = i + 1
            ks, delta, z, S, alarm = ks[:cut], delta[:cut], z[:cut], S[:cut], alarm[:cut]
            e_full, e_noise, e_attack = e_full[:cut], e_noise[:cut], e_attack[:cut]
            break

    return AttackTrace(
        plan=plan,
        k_star=active.k_star,
        k=ks,
        delta=delta,
        z=z,
        S=S,
        alarm=alarm,
        e_full=e_full,
        e_noise=e_noise,
        e_attack=e_attack,
        first_vector=first,
        diverged=diverged,
    )


def envelope_for(trace: AttackTrace, model: LtiModel, design: KalmanDesign) -> BoundEnvelope:
    """Envelope matching a simulated trace (same start, same horizon)."""
    horizon = int(trace.k[-1]) - trace.k_star
    det = trace.plan.detector
    if isinstance(det, Chi2Config):
        return chi2_bound_envelope(design, model.F, det.alpha, trace.k_star, horizon)
    return cusum_bound_envelope(design, model.F, det.b, trace.first_vector, trace.k_star, horizon)


def is_stable(F) -> bool:
    return spectral_radius(F) < 1.0
