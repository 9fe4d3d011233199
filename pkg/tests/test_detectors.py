import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cusumcps.detectors import (
    Chi2Config,
    CusumConfig,
    CusumState,
    chi2_run,
    chi2_update,
    cusum_run,
    cusum_update,
    stream_csv,
)
from cusumcps.errors import NegativeDistance, ValidationError
from cusumcps.tuning import chi2_threshold

z_lists = st.lists(st.floats(0.0, 20.0, allow_nan=False), min_size=1, max_size=200)


def test_z_equal_to_bias_keeps_statistic_at_zero():
    cfg = CusumConfig(b=2.0, tau=5.0)
    run = cusum_run(cfg, [2.0] * 50)
    assert np.all(run.S == 0.0) and run.n_alarms == 0


def test_reset_follows_crossing_and_drops_sample():
    cfg = CusumConfig(b=1.0, tau=3.0)
    state = CusumState()
    seen = []
    for z in [3.0, 3.0, 100.0, 1.5]:
        state, alarm = cusum_update(cfg, state, z)
        seen.append((state.S, alarm))
    # 2, 4 (crossing at k=3), reset (alarm reported at k=3, z=100 dropped), 0.5
    assert seen == [(2.0, False), (4.0, False), (0.0, True), (0.5, False)]
    assert state.alarms == [3] and state.crossings == [3]


def test_periodic_stream_alarms_every_four_samples():
    cfg = CusumConfig(b=1.0, tau=2.5)
    run = cusum_run(cfg, [2.0] * 40)
    # S: 1, 2, 3 (cross), reset, 1, 2, 3, reset, ...
    assert np.flatnonzero(run.crossing).tolist() == list(range(2, 40, 4))
    assert np.flatnonzero(run.alarm).tolist() == list(range(3, 40, 4))


def test_chi2_threshold_is_strict():
    cfg = Chi2Config(alpha=4.0)
    assert not chi2_update(cfg, 4.0)
    assert chi2_update(cfg, np.nextafter(4.0, 5.0))


def test_negative_distance_rejected():
    with pytest.raises(NegativeDistance):
        cusum_update(CusumConfig(1.0, 1.0), CusumState(), -1e-3)
    with pytest.raises(NegativeDistance):
        chi2_run(Chi2Config(1.0), [1.0, -1.0])


def test_invalid_configs():
    with pytest.raises(ValidationError):
        CusumConfig(b=0.0, tau=1.0)
    with pytest.raises(ValidationError):
        Chi2Config(alpha=-1.0)


@settings(max_examples=100, deadline=None)
@given(z_lists, st.floats(0.5, 5.0), st.floats(0.5, 20.0))
def test_run_matches_single_updates(zs, b, tau):
    cfg = CusumConfig(b=b, tau=tau)
    state = CusumState()
    S, alarms = [], []
    for z in zs:
        state, a = cusum_update(cfg, state, z)
        S.append(state.S)
        alarms.append(a)
    batch_state = CusumState()
    run = cusum_run(cfg, zs, batch_state)
    np.testing.assert_array_equal(run.S, S)
    np.testing.assert_array_equal(run.alarm, alarms)
    assert batch_state.alarms == state.alarms and batch_state.crossings == state.crossings


@settings(max_examples=100, deadline=None)
@given(z_lists, st.floats(0.5, 5.0))
def test_statistic_is_monotone_in_the_stream(zs, b):
    cfg = CusumConfig(b=b, tau=math.inf, disable_reset=True)
    lo = cusum_run(cfg, zs).S
    hi = cusum_run(cfg, [z + 0.5 for z in zs]).S
    assert np.all(hi >= lo) and np.all(lo >= 0.0)


@settings(max_examples=100, deadline=None)
@given(z_lists, st.floats(0.5, 5.0), st.floats(0.5, 20.0))
def test_alarm_views_count_the_same_events(zs, b, tau):
    run = cusum_run(CusumConfig(b=b, tau=tau), zs)
    assert 0 <= run.crossing.sum() - run.alarm.sum() <= 1
    assert np.all(run.S[run.alarm] == 0.0)


def test_small_bias_drifts_linearly_large_bias_stays_bounded():
    rng = np.random.default_rng(0)
    z = rng.chisquare(3, 20_000)
    grow = cusum_run(CusumConfig(b=2.0, tau=math.inf, disable_reset=True), z).S
    assert grow[-1] == pytest.approx(20_000 * 1.0, rel=0.1)
    flat = cusum_run(CusumConfig(b=4.0, tau=math.inf, disable_reset=True), z).S
    assert flat.max() < 100


def test_chi2_monte_carlo_rate():
    rng = np.random.default_rng(4)
    alarms = chi2_run(Chi2Config(chi2_threshold(3, 0.02)), rng.chisquare(3, 400_000))
    assert alarms.mean() == pytest.approx(0.02, abs=0.003)


def test_stream_csv_layout():
    text = stream_csv(cusum_run(CusumConfig(b=1.0, tau=2.5), [2.0] * 4))
    lines = text.splitlines()
    assert lines[0].startswith("# cusumcps csv v1")
    assert lines[1] == "k,z,S,alarm"
    assert lines[2:] == ["2,2,1,0", "3,2,2,0", "4,2,3,1", "5,2,0,0"]
