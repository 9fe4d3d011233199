"""CUSUM and chi-squared detectors over the distance-measure stream.

CUSUM transition (``S`` stored is the previous value ``S[k-1]``)::

    if S[k-1] > tau:  S[k] = 0, alarm at k - 1   (the incoming z is dropped)
    else:             S[k] = max(0, S[k-1] + z[k] - b)

Two alarm views are recorded and always count the same events: ``alarms``
holds the index ``k - 1`` reported on the reset transition, ``crossings``
holds the index of the update that first pushed ``S`` above ``tau``. A
crossing on the very last sample has no reset yet, so ``crossings`` can be
one longer than ``alarms`` at the end of a finite stream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NegativeDistance, ValidationError
from .output import to_csv


@dataclass(frozen=True)
class CusumConfig:
    b: float
    tau: float
    disable_reset: bool = False
    m: int | None = None

    def __post_init__(self):
        if not self.b > 0 or not self.tau > 0:
            raise ValidationError(f"CUSUM needs b > 0 and tau > 0, got b={self.b}, tau={self.tau}")

    @property
    def strict_bias(self) -> bool | None:
        """Whether ``b > m`` (mean-square boundedness); None if ``m`` unknown."""
        return None if self.m is None else self.b > self.m


@dataclass
class CusumState:
    S: float = 0.0
    k: int = 1
    alarms: list[int] = field(default_factory=list)
    crossings: list[int] = field(default_factory=list)

    def copy(self) -> "CusumState":
        return CusumState(self.S, self.k, list(self.alarms), list(self.crossings))


@dataclass(frozen=True)
class Chi2Config:
    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValidationError(f"chi-squared threshold must be positive, got {self.alpha}")


def _check_z(z: float) -> float:
    z = float(z)
    if z < 0 or np.isnan(z):
        raise NegativeDistance(f"distance measure must be >= 0, got {z}")
    return z


def cusum_update(cfg: CusumConfig, state: CusumState, z: float) -> tuple[CusumState, bool]:
    """Apply one transition in place; returns ``(state, alarm)``."""
    z = _check_z(z)
    k = state.k + 1
    alarm = False
    if not cfg.disable_reset and state.S > cfg.tau:
        state.alarms.append(k - 1)
        state.S = 0.0
        alarm = True
    else:
        state.S = max(0.0, state.S + z - cfg.b)
        if state.S > cfg.tau and not cfg.disable_reset:
            state.crossings.append(k)
    state.k = k
    return state, alarm


def chi2_update(cfg: Chi2Config, z: float) -> bool:
    return _check_z(z) > cfg.alpha


@dataclass(frozen=True)
class CusumRun:
    """Per-sample output of ``cusum_run``; index ``i`` is sample ``k0 + i``."""

    k: np.ndarray
    z: np.ndarray
    S: np.ndarray
    alarm: np.ndarray
    crossing: np.ndarray

    @property
    def n_alarms(self) -> int:
        return int(self.crossing.sum())


def cusum_run(cfg: CusumConfig, z, state: CusumState | None = None) -> CusumRun:
    """Feed a whole array through the CUSUM (state is updated in place)."""
    z = np.asarray(z, dtype=float)
    if z.size and z.min() < 0:
        raise NegativeDistance("distance measure must be >= 0")
    state = state if state is not None else CusumState()
    k0 = state.k + 1
    S_out = np.empty(z.size)
    alarm = np.zeros(z.size, dtype=bool)
    crossing = np.zeros(z.size, dtype=bool)
    b, tau, reset = cfg.b, cfg.tau, not cfg.disable_reset
    S = state.S
    zl = z.tolist()
    for i in range(z.size):
        if reset and S > tau:
            S = 0.0
            alarm[i] = True
        else:
            S = S + zl[i] - b
            if S < 0.0:
                S = 0.0
            elif reset and S > tau:
                crossing[i] = True
        S_out[i] = S
    ks = np.arange(k0, k0 + z.size)
    state.alarms.extend((ks[alarm] - 1).tolist())
    state.crossings.extend(ks[crossing].tolist())
    state.S = S
    state.k += z.size
    return CusumRun(k=ks, z=z, S=S_out, alarm=alarm, crossing=crossing)


def chi2_run(cfg: Chi2Config, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.size and z.min() < 0:
        raise NegativeDistance("distance measure must be >= 0")
    return z > cfg.alpha


def stream_csv(run: CusumRun) -> str:
    """CSV with columns ``k, z, S, alarm`` (alarm in the crossing view)."""
    rows = zip(run.k.tolist(), run.z.tolist(), run.S.tolist(), run.crossing.tolist())
    return to_csv("detector-stream", ["k", "z", "S", "alarm"], rows)
