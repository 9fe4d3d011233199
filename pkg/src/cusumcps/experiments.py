"""Experiment orchestration on top of the plant, detectors and tuning code.

Randomness: every trial draws from its own stream spawned from the run seed,
so results depend only on ``(seed, trial index)`` and not on execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import attacks, tuning
from .detectors import Chi2Config, CusumConfig, CusumState, chi2_run, cusum_run
from .errors import BracketFailure, ValidationError
from .output import to_csv
from .plant import KalmanDesign, LtiModel, design_filter, residual_stream, warm_up

DEFAULT_STEPS = 10**6
TABLE1_FACTORS = (1.05, 1.15, 2.00)
TABLE1_RATES = (0.25, 0.10, 0.02)


def trial_seeds(seed: int, trials: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(trials)


def unattacked_z(model, design, steps, seed, warm_up_steps=1000) -> np.ndarray:
    state = warm_up(model, design, warm_up_steps, seed)
    return residual_stream(model, design, state, steps)[1]


# ---------------------------------------------------------------------------
# False-alarm rates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FalseAlarmEstimate:
    """Empirical alarm rate from unattacked runs.

    ``rate_by_count`` is alarms per processed sample. ``rate_by_run_length``
    is one over the mean spacing between consecutive alarms (complete runs
    only), which includes the reset sample for the CUSUM. ``mean_run_length``
    excludes that reset sample and is what the Markov-chain ARL predicts.
    """

    rate_by_count: float
    rate_by_run_length: float
    stderr: float
    stderr_run_length: float
    total_steps: int
    alarms: int
    mean_run_length: float

    def to_record(self) -> dict:
        return {
            "rateByCount": self.rate_by_count,
            "rateByRunLength": self.rate_by_run_length,
            "stderr": self.stderr,
            "stderrRunLength": self.stderr_run_length,
            "totalSteps": self.total_steps,
            "alarms": self.alarms,
            "meanRunLength": self.mean_run_length,
        }


def _alarm_positions(detector, z: np.ndarray) -> np.ndarray:
    if isinstance(detector, CusumConfig):
        return np.flatnonzero(cusum_run(detector, z, CusumState()).crossing)
    return np.flatnonzero(chi2_run(detector, z))


def summarize_alarms(positions: list[np.ndarray], total_steps: int, reset_step: bool) -> FalseAlarmEstimate:
    alarms = int(sum(len(p) for p in positions))
    spacings = np.concatenate([np.diff(p) for p in positions]) if positions else np.empty(0)
    p_hat = alarms / total_steps
    se_count = math.sqrt(max(p_hat * (1.0 - p_hat), 0.0) / total_steps)
    if spacings.size:
        mean_sp = float(spacings.mean())
        rate_rl = 1.0 / mean_sp
        sd = float(spacings.std(ddof=1)) if spacings.size > 1 else 0.0
        se_rl = sd / math.sqrt(spacings.size) / mean_sp**2
        mrl = mean_sp - (1.0 if reset_step else 0.0)
    else:
        rate_rl, se_rl, mrl = 0.0, float("nan"), float("inf")
    return FalseAlarmEstimate(
        rate_by_count=p_hat,
        rate_by_run_length=rate_rl,
        stderr=se_count,
        stderr_run_length=se_rl,
        total_steps=total_steps,
        alarms=alarms,
        mean_run_length=mrl,
    )


def estimate_false_alarm_rate(
    model: LtiModel,
    detector: CusumConfig | Chi2Config,
    horizon: int = DEFAULT_STEPS,
    trials: int = 1,
    seed: int = 0,
    warm_up_steps: int = 1000,
    design: KalmanDesign | None = None,
) -> FalseAlarmEstimate:
    if horizon < 1 or trials < 1:
        raise ValidationError("horizon and trials must be >= 1")
    design = design or design_filter(model)
    positions = []
    for ss in trial_seeds(seed, trials):
        z = unattacked_z(model, design, horizon, ss, warm_up_steps)
        positions.append(_alarm_positions(detector, z))
    return summarize_alarms(positions, horizon * trials, reset_step=isinstance(detector, CusumConfig))


# ---------------------------------------------------------------------------
# Boundedness (resets disabled)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundednessResult:
    m: int
    factors: tuple[float, ...]
    k: np.ndarray
    S: dict[float, np.ndarray]

    def terminal(self, factor: float) -> float:
        return float(self.S[factor][-1])

    def to_csv(self) -> str:
        header = ["k"] + [f"S_b{f:g}" for f in self.factors]
        rows = zip(self.k.tolist(), *(self.S[f].tolist() for f in self.factors))
        return to_csv("boundedness", header, rows)


def boundedness_experiment(
    model: LtiModel,
    bias_factors=(0.85, 0.95, 1.05),
    horizon: int = 5000,
    seed: int = 0,
    warm_up_steps: int = 1000,
    design: KalmanDesign | None = None,
) -> BoundednessResult:
    """CUSUM without resets for ``b = factor * m`` on one shared z-stream."""
    design = design or design_filter(model)
    z = unattacked_z(model, design, horizon, seed, warm_up_steps)
    factors = tuple(float(f) for f in bias_factors)
    S = {}
    for f in factors:
        cfg = CusumConfig(b=f * model.m, tau=math.inf, disable_reset=True, m=model.m)
        S[f] = cusum_run(cfg, z).S
    return BoundednessResult(m=model.m, factors=factors, k=np.arange(1, horizon + 1), S=S)


# ---------------------------------------------------------------------------
# Threshold table
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Table1Cell:
    factor: float
    b: float
    target_rate: float
    tau: float | None
    approx_rate: float | None
    simulated: FalseAlarmEstimate | None
    note: str = ""

    @property
    def feasible(self) -> bool:
        return self.tau is not None

    def to_record(self) -> dict:
        rec = {
            "biasFactor": self.factor,
            "b": self.b,
            "targetRate": self.target_rate,
            "tau": self.tau,
            "approxRate": self.approx_rate,
            "status": "ok" if self.feasible else "infeasible",
            "note": self.note,
        }
        if self.simulated is not None:
            rec["simulated"] = self.simulated.to_record()
        return rec


def table1(
    model: LtiModel,
    seed: int = 0,
    steps: int = DEFAULT_STEPS,
    N: int = tuning.DEFAULT_PARTITIONS,
    factors=TABLE1_FACTORS,
    rates=TABLE1_RATES,
    simulate: bool = True,
    warm_up_steps: int = 1000,
) -> list[Table1Cell]:
    design = design_filter(model)
    m = model.m
    seeds = iter(trial_seeds(seed, len(factors) * len(rates)))
    cells = []
    for f in factors:
        b = f * tuning.bias_lower_bound(m)
        for rate in rates:
            ss = next(seeds)
            try:
                res = tuning.solve_cusum_threshold(m, b, rate, N=N)
            except BracketFailure as exc:
                cells.append(Table1Cell(f, b, rate, None, None, None, note=str(exc)))
                continue
            sim = None
            if simulate:
                cfg = CusumConfig(b=b, tau=res.tau, m=m)
                z = unattacked_z(model, design, steps, ss, warm_up_steps)
                sim = summarize_alarms([_alarm_positions(cfg, z)], steps, reset_step=True)
            cells.append(Table1Cell(f, b, rate, res.tau, res.approx_rate, sim))
    return cells


def table1_csv(cells: list[Table1Cell]) -> str:
    header = ["bias_factor", "b", "target_rate", "tau", "approx_rate", "sim_rate_by_count", "sim_rate_by_run_length", "status"]
    rows = []
    for c in cells:
        sim = c.simulated
        rows.append(
            [
                c.factor,
                c.b,
                c.target_rate,
                c.tau,
                c.approx_rate,
                None if sim is None else sim.rate_by_count,
                None if sim is None else sim.rate_by_run_length,
                "ok" if c.feasible else "infeasible",
            ]
        )
    return to_csv("table1", header, rows)


# ---------------------------------------------------------------------------
# Zero-alarm attack experiment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AttackRun:
    detector: str
    direction: str
    trace: attacks.AttackTrace
    envelope: attacks.BoundEnvelope

    @property
    def gamma_per_step(self) -> np.ndarray:
        """Envelope value aligned with ``trace.k`` (nan before the attack)."""
        g = np.full(self.trace.k.size, np.nan)
        sel = self.trace.k >= self.trace.k_star
        g[sel] = self.envelope.gamma[: int(sel.sum())]
        return g

    def bound_violation(self, slack: float = 1e-9) -> float:
        """Largest ``|e_attack| - gamma`` over the attacked samples (<= slack is fine)."""
        sel = self.trace.k >= self.trace.k_star
        return float((self.trace.e_attack_norm[sel] - self.gamma_per_step[sel]).max())

    def max_bound_ratio(self) -> float:
        sel = self.trace.k > self.trace.k_star
        return float((self.trace.e_attack_norm[sel] / self.gamma_per_step[sel]).max())

    def steady_state_error_norm(self) -> float:
        return float(self.trace.e_attack_norm[-1])

    def summary(self) -> dict:
        return {
            "detector": self.detector,
            "direction": self.direction,
            "kStar": self.trace.k_star,
            "alarmsAfterStart": self.trace.attack_alarms,
            "maxBoundRatio": self.max_bound_ratio(),
            "steadyStateErrorNorm": self.steady_state_error_norm(),
            "asymptote": self.envelope.asymptote,
            "starNorm": self.envelope.norm.star_norm_of_f,
            "c": self.envelope.norm.c,
            "diverged": self.trace.diverged,
        }


@dataclass(frozen=True)
class AttackExperiment:
    alpha: float
    b: float
    tau: float
    runs: list[AttackRun] = field(default_factory=list)

    def run(self, detector: str, direction: str) -> AttackRun:
        for r in self.runs:
            if r.detector == detector and r.direction == direction:
                return r
        raise KeyError((detector, direction))

    def summary(self) -> dict:
        return {
            "alpha": self.alpha,
            "b": self.b,
            "tau": self.tau,
            "asymptoticRatio": attacks.asymptotic_ratio(self.alpha, self.b),
            "runs": [r.summary() for r in self.runs],
        }

    def trajectory_csv(self) -> str:
        m = self.runs[0].trace.delta.shape[1] if self.runs else 0
        header = ["detector", "direction", "k"] + [f"delta_{i + 1}" for i in range(m)]
        header += ["z", "S", "alarm", "e_norm", "e_attack_norm", "gamma"]
        rows = []
        for r in self.runs:
            t = r.trace
            e_norm = np.linalg.norm(t.e_full, axis=1)
            g = r.gamma_per_step
            ean = t.e_attack_norm
            for i in range(t.k.size):
                rows.append(
                    [r.detector, r.direction, int(t.k[i]), *t.delta[i].tolist(), t.z[i], t.S[i], bool(t.alarm[i]), e_norm[i], ean[i], g[i]]
                )
        return to_csv("attack-trace", header, rows)

    def envelope_csv(self) -> str:
        header = ["detector", "direction", "k", "gamma"]
        rows = []
        for r in self.runs:
            for k, g in zip(r.envelope.k.tolist(), r.envelope.gamma.tolist()):
                rows.append([r.detector, r.direction, k, g])
        return to_csv("attack-envelope", header, rows)


def attack_experiment(
    model: LtiModel,
    target_rate: float = 0.02,
    b: float | None = None,
    tau: float | None = None,
    alpha: float | None = None,
    k_star: int = attacks.DEFAULT_K_STAR,
    horizon: int = 6000,
    seed: int = 0,
    warm_up_steps: int = 1000,
    detectors=("chi2", "cusum"),
    directions=("uniform", "worst_case"),
    custom=None,
) -> AttackExperiment:
    """Both detectors tuned to the same false-alarm rate, each attacked.

    Defaults: ``b = 2m``, ``tau`` from the Markov-chain tuner and ``alpha``
    from the chi-squared quantile. Every run reuses the same noise seed.
    ``custom`` is the vector used for a ``"custom"`` direction.
    """
    design = design_filter(model)
    m = model.m
    b = 2.0 * m if b is None else float(b)
    if tau is None:
        tau = tuning.solve_cusum_threshold(m, b, target_rate).tau
    if alpha is None:
        alpha = tuning.chi2_threshold(m, target_rate)
    configs = {"chi2": Chi2Config(alpha), "cusum": CusumConfig(b=b, tau=tau, m=m)}
    directions = tuple(attacks.parse_direction_kind(d).value for d in directions)
    runs = []
    for det in detectors:
        for direction in directions:
            plan = attacks.AttackPlan.build(configs[det], direction, model, design, k_star=k_star, custom=custom)
            trace = attacks.split_error_trajectories(model, design, plan, horizon, seed, warm_up_steps)
            runs.append(AttackRun(det, direction, trace, attacks.envelope_for(trace, model, design)))
    return AttackExperiment(alpha=alpha, b=b, tau=tau, runs=runs)


# ---------------------------------------------------------------------------
# Envelope ratio surface
# ---------------------------------------------------------------------------


def ratio_sweep(m: int, bias_factors, rates) -> list[dict]:
    """Steady-state envelope ratio ``sqrt(alpha / b)`` over a (b, rate) grid."""
    rows = []
    for f in bias_factors:
        b = float(f) * m
        for rate in rates:
            alpha = tuning.chi2_threshold(m, rate)
            rows.append({"biasFactor": float(f), "b": b, "rate": float(rate), "alpha": alpha, "ratio": attacks.asymptotic_ratio(alpha, b)})
    return rows


def ratio_sweep_csv(rows: list[dict]) -> str:
    header = ["bias_factor", "b", "rate", "alpha", "ratio"]
    return to_csv("ratio-sweep", header, ([r["biasFactor"], r["b"], r["rate"], r["alpha"], r["ratio"]] for r in rows))
