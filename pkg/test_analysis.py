import json

import numpy as np
import pytest

import analysis
import dynamics
from analysis import Mode
from conftest import make_trajectory
from errors import DomainError


def test_crossing_midpoint_interpolation():
    events = analysis.detect_crossings(make_trajectory([1.0, -1.0]))
    assert len(events) == 1
    assert events[0].t == pytest.approx(0.0005)
    assert events[0].index == 0


def test_no_crossing_without_sign_change():
    assert analysis.detect_crossings(make_trajectory([1.0, 1.0, 1.0])) == []


def test_zero_run_counts_once():
    traj = make_trajectory([1.0, 0.0, 0.0, -1.0])
    events = analysis.detect_crossings(traj)
    assert len(events) == 1
    assert events[0].t == pytest.approx(0.001)
    assert events[0].index == 0
    # index stays on the last nonzero sample; the zero run follows it
    assert traj.s[events[0].index] == 1.0
    assert traj.s[events[0].index + 1] == 0.0
    # touching zero and returning is not a crossing
    assert analysis.detect_crossings(make_trajectory([1.0, 0.0, 1.0])) == []


def test_crossing_state_is_interpolated():
    traj = make_trajectory([-1.0, 3.0], x1=[0.0, 0.4], x2=[1.0, 2.0])
    (event,) = analysis.detect_crossings(traj)
    assert event.state.x1 == pytest.approx(0.1)
    assert event.state.x2 == pytest.approx(1.25)


def test_settling_time_trivial_trajectory_at_origin():
    assert analysis.settling_time(make_trajectory([0.0])) == 0.0


def test_settling_time_last_exit():
    x1 = [1.0, 0.5, 0.0, 0.2, 0.0, 0.0]
    traj = make_trajectory(np.zeros(6), x1=x1)
    assert analysis.settling_time(traj) == pytest.approx(0.004)


def test_settling_time_absent_when_last_sample_outside():
    traj = make_trajectory(np.zeros(3), x1=[0.0, 0.0, 1.0])
    assert analysis.settling_time(traj) is None


def test_settling_time_rejects_non_positive_tolerance():
    with pytest.raises(DomainError):
        analysis.settling_time(make_trajectory([0.0]), eps_x1=0.0)


@pytest.mark.parametrize("s0, eta, expected", [(-1.0, 0.1, 10.0), (0.0, 0.5, 0.0), (2.0, 1.0, 2.0)])
def test_reaching_time_bound(s0, eta, expected):
    assert analysis.reaching_time_bound(s0, eta) == pytest.approx(expected)


def test_reaching_time_bound_needs_positive_eta():
    with pytest.raises(DomainError):
        analysis.reaching_time_bound(1.0, 0.0)


@pytest.mark.parametrize("x2, s, expected", [(1.0, 1.0, 0.19), (0.0, 1.0, -0.01), (0.0, -3.0, -0.01), (-1.0, 1.0, 2.19)])
def test_reachability_margin(x2, s, expected):
    assert analysis.reachability_margin(x2, s, 0.6, 0.01) == pytest.approx(expected)


def test_margin_series_matches_pointwise_margin():
    traj = make_trajectory([1.0, -1.0, 1.0], x2=[1.0, 0.0, -1.0])
    series = analysis.margin_series(traj, 0.6, 0.01)
    assert series == pytest.approx([0.19, -0.01, 2.19])
    summary = analysis.margin_summary(traj, 0.6, 0.01)
    assert summary["fraction_positive"] == pytest.approx(2 / 3)
    assert summary["min"] == pytest.approx(-0.01)


def test_lyapunov_series():
    assert analysis.lyapunov_series(make_trajectory([2.0, 0.0])) == pytest.approx([2.0, 0.0])


def test_limit_cycle_amplitude():
    traj = make_trajectory(np.zeros(11))
    assert analysis.limit_cycle_amplitude(traj, 0.005) == 0.0
    with pytest.raises(DomainError):
        analysis.limit_cycle_amplitude(traj, 0.01)
    with pytest.raises(DomainError):
        analysis.limit_cycle_amplitude(traj, 0.0)


def test_limit_cycle_amplitude_uses_final_window():
    x1 = [0.5, 0.0, 0.0, 0.001, -0.002, 0.0]
    assert analysis.limit_cycle_amplitude(make_trajectory(np.zeros(6), x1=x1), 0.002) == pytest.approx(0.002)


def test_default_band():
    traj = make_trajectory([0.0, 0.0], x2=[1.0, -3.0], alpha=0.6)
    assert analysis.default_band(traj) == pytest.approx(5 * 0.001 * 2.2 * 3.0)


def test_classify_rejects_non_positive_band():
    with pytest.raises(DomainError):
        analysis.classify_mode(make_trajectory([1.0, -1.0]), band=0.0)


def test_classify_inside_band_without_crossing_is_terminal():
    report = analysis.classify_mode(make_trajectory([0.001, 0.002, 0.001]), band=0.01)
    assert report.mode == Mode.TERMINAL
    assert report.crossings == []


def test_classify_never_reaching_is_not_converged():
    report = analysis.classify_mode(make_trajectory([-1.0, -0.9, -0.8]), band=0.01)
    assert report.mode == Mode.NOT_CONVERGED
    assert report.reach_time is None


def test_classify_twisting_needs_shrinking_crossings():
    s = [-1, -1, 1, 1, -1, -1, 1, 1]
    report = analysis.classify_mode(make_trajectory(s, x2=[4, 4, 4, -2, -2, 1, 1, 1]))
    assert report.mode == Mode.TWISTING
    assert [c.state.norm for c in report.crossings] == pytest.approx([4.0, 2.0, 1.0])


def test_classify_growing_crossings_is_not_converged():
    s = [-1, -1, 1, 1, -1, -1, 1, 1]
    report = analysis.classify_mode(make_trajectory(s, x2=[1, 1, 1, -2, -2, 4, 4, 4]))
    assert report.mode == Mode.NOT_CONVERGED


def test_classify_same_branch_chatter_outside_band_is_mixed():
    report = analysis.classify_mode(make_trajectory([-1, 1, -1, 1, -1], x2=[1, 1, 1, 1, 1]))
    assert report.mode == Mode.MIXED


def test_chatter_at_origin_is_ignored():
    # crossings below 10*dt*U/m = 0.1 in norm
    s = [-1, -1, 1, 1, -1, -1, 1, 1]
    report = analysis.classify_mode(make_trajectory(s, x2=[0.05, 0.05, 0.05, 0.05, 0.05, 0.05, 0.05, 0.05]))
    assert report.mode == Mode.NOT_CONVERGED


def test_recovery_times():
    x2 = np.zeros(12)
    x2[6:8] = 1.0
    xi = [0.5] * 5 + [-0.5] * 7
    traj = make_trajectory(np.zeros(12), x2=x2, xi=xi)
    assert analysis.recovery_times(traj) == pytest.approx([0.003])


def test_recovery_times_when_never_leaving_or_never_back():
    xi = [0.5] * 5 + [-0.5] * 7
    assert analysis.recovery_times(make_trajectory(np.zeros(12), xi=xi)) == [0.0]
    x2 = np.zeros(12)
    x2[6:] = 1.0
    assert analysis.recovery_times(make_trajectory(np.zeros(12), x2=x2, xi=xi)) == [None]


def test_lyapunov_decreases_during_reaching(run):
    assert analysis.lyapunov_increase_fraction(run(0.6)) == 0.0


def test_reaching_check_bound_holds(run):
    check = analysis.reaching_check(run(0.6, initial=dynamics.State(-1.0, 1.0)), 0.6)
    assert check.eta_star == pytest.approx(2.2)
    assert check.bound == pytest.approx(0.94 / 2.2)
    assert check.first_crossing_time == pytest.approx(0.209, abs=2e-3)
    assert check.holds


def test_reaching_check_from_rest_has_no_bound(run):
    check = analysis.reaching_check(run(0.6), 0.6)
    assert check.eta_star == 0.0
    assert check.bound is None
    assert check.holds is None
    assert check.first_crossing_time == pytest.approx(0.3015, abs=2e-3)


def test_analyze_report_is_json_ready(run):
    report = analysis.analyze(run(0.6))
    doc = report.to_dict()
    assert doc["mode"] == "Terminal"
    assert doc["crossing_count"] == len(doc["crossings"])
    assert doc["margins"]["eta"] == 0.01
    assert doc["recovery_times"] is None
    json.dumps(doc, allow_nan=False)


def test_analysis_settings_validation():
    with pytest.raises(DomainError):
        analysis.AnalysisSettings(eps_x1=-1.0)
    with pytest.raises(DomainError):
        analysis.AnalysisSettings(band=0.0)
    assert analysis.AnalysisSettings().window is None
