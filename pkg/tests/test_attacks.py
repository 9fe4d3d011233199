import math

import numpy as np
import pytest

from cusumcps.attacks import (
    AttackPlan,
    asymptotic_ratio,
    chi2_bound_envelope,
    cusum_bound_envelope,
    envelope_for,
    free_vector,
    split_error_trajectories,
    steady_state_error,
    uniform_direction,
    worst_case_direction,
    worst_case_gain,
)
from cusumcps.detectors import Chi2Config, CusumConfig
from cusumcps.errors import DomainError, StateAboveThreshold, ValidationError
from cusumcps.plant import LtiModel, design_filter
from cusumcps.tuning import chi2_threshold

ALPHA = chi2_threshold(3, 0.02)
CUSUM = CusumConfig(b=6.0, tau=4.1, m=3)


@pytest.fixture(scope="module", params=["chi2", "cusum"])
def detector(request):
    return Chi2Config(ALPHA) if request.param == "chi2" else CUSUM


@pytest.fixture(scope="module", params=["uniform", "worst_case"])
def trace(request, detector, reactor, reactor_design):
    plan = AttackPlan.build(detector, request.param, reactor, reactor_design, k_star=300)
    return split_error_trajectories(reactor, reactor_design, plan, 1500, seed=4, warm_up_steps=200)


def test_zero_alarms_after_start(trace):
    assert trace.attack_alarms == 0
    after = trace.k >= trace.k_star
    if isinstance(trace.plan.detector, Chi2Config):
        assert trace.z[after].max() <= ALPHA
    else:
        assert np.nanmax(trace.S[after]) <= CUSUM.tau


def test_envelope_holds(trace, reactor, reactor_design):
    env = envelope_for(trace, reactor, reactor_design)
    sel = trace.k >= trace.k_star
    gamma = env.gamma[: int(sel.sum())]
    assert np.all(trace.e_attack_norm[sel] <= gamma + 1e-9)


def test_superposition(trace):
    assert trace.superposition_error() < 1e-9
    before = trace.k < trace.k_star
    assert np.all(trace.e_attack[before] == 0.0)


def test_attack_error_reaches_fixed_point(trace, reactor, reactor_design):
    det = trace.plan.detector
    mag = math.sqrt(det.alpha if isinstance(det, Chi2Config) else det.b)
    e_inf = steady_state_error(reactor, reactor_design, mag * trace.plan.direction)
    np.testing.assert_allclose(trace.e_attack[-1], e_inf, rtol=1e-6)


def test_cusum_first_step_uses_threshold_headroom(reactor, reactor_design):
    plan = AttackPlan.build(CUSUM, "uniform", reactor, reactor_design, k_star=300)
    tr = split_error_trajectories(reactor, reactor_design, plan, 400, seed=4, warm_up_steps=200)
    i = int(np.flatnonzero(tr.k == tr.k_star)[0])
    S_prev = tr.S[i - 1]
    assert tr.first_vector @ tr.first_vector == pytest.approx(CUSUM.tau + CUSUM.b - S_prev, rel=1e-10)
    assert tr.S[i] == pytest.approx(CUSUM.tau, rel=1e-10)
    assert tr.S[i] <= CUSUM.tau


def test_free_vector_refuses_start_above_threshold():
    plan = AttackPlan(CUSUM, uniform_direction(3), k_star=5)
    with pytest.raises(StateAboveThreshold):
        free_vector(plan, 5, S_prev=CUSUM.tau + 1.0)
    assert np.all(free_vector(plan, 4, S_prev=100.0) == 0.0)
    assert free_vector(plan, 6) @ free_vector(plan, 6) == pytest.approx(CUSUM.b, rel=1e-11)


def test_plan_validation():
    with pytest.raises(ValidationError):
        AttackPlan(CUSUM, np.array([1.0, 1.0, 0.0]))
    with pytest.raises(ValidationError):
        AttackPlan(CUSUM, uniform_direction(3), k_star=0)


def test_zero_scale_leaves_error_untouched(reactor, reactor_design):
    plan = AttackPlan.build(Chi2Config(ALPHA), "uniform", reactor, reactor_design, k_star=50, scale=0.0)
    tr = split_error_trajectories(reactor, reactor_design, plan, 200, seed=1, warm_up_steps=50)
    assert np.all(tr.e_attack == 0.0)


def test_worst_case_direction_dominates(reactor, reactor_design):
    G = worst_case_gain(reactor, reactor_design)
    best = np.linalg.norm(G @ worst_case_direction(reactor, reactor_design))
    assert best >= np.linalg.norm(G @ uniform_direction(3))
    rng = np.random.default_rng(0)
    for _ in range(100):
        u = rng.standard_normal(3)
        assert np.linalg.norm(G @ (u / np.linalg.norm(u))) <= best + 1e-12


def test_envelope_shapes(reactor, reactor_design):
    chi = chi2_bound_envelope(reactor_design, reactor.F, ALPHA, 10, 2000)
    cs = cusum_bound_envelope(reactor_design, reactor.F, 6.0, np.full(3, 2.0), 10, 2000)
    assert chi.gamma[0] == 0.0 and np.all(np.diff(chi.gamma) >= 0)
    assert chi.gamma[-1] / cs.gamma[-1] == pytest.approx(math.sqrt(ALPHA / 6.0), rel=1e-12)
    assert chi.asymptote / cs.asymptote == pytest.approx(asymptotic_ratio(ALPHA, 6.0), rel=1e-14)
    assert chi.at(10) == 0.0


def test_ratio_domain():
    assert asymptotic_ratio(4.0, 4.0) == 1.0
    with pytest.raises(DomainError):
        asymptotic_ratio(0.0, 1.0)


def test_unstable_plant_diverges():
    model = LtiModel(F=[[1.1]], G=[[1.0]], C=[[1.0]], R0=[[1.0]], R1=[[1.0]], R2=[[1.0]])
    design = design_filter(model)
    plan = AttackPlan(Chi2Config(4.0), np.array([1.0]), k_star=5)
    tr = split_error_trajectories(model, design, plan, 2000, seed=0, warm_up_steps=5)
    assert tr.diverged and tr.k[-1] < 2000
