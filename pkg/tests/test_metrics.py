import numpy as np
import pytest

from terranav.metrics import (
    BenchmarkReport,
    evaluate_log,
    ideal_pose_trajectory,
    inconsistency,
    jerkiness,
    summarize,
    trajectory_gap,
)
from terranav.simulator import TrialLog

DT = 1.0 / 15.0


def make_log(v, omega=None, outcome="completed", dt=DT, poses=None,
             commands=None):
    v = np.asarray(v, dtype=float)
    if omega is None:
        omega = np.zeros_like(v)
    behaviors = np.column_stack([v, omega])
    if commands is None:
        commands = behaviors.copy()
    if poses is None:
        poses = np.zeros((len(v), 3))
        x = 0.0
        for t in range(len(v)):
            x += v[t] * dt
            poses[t] = (x, 0.0, 0.0)
    return TrialLog(dt=dt, expected_commands=np.asarray(commands, dtype=float),
                    actual_behaviors=behaviors, poses=poses, outcome=outcome)


class TestInconsistency:
    def test_identical_trajectories_zero(self):
        # drive the actual poses with the same nominal plant the metric uses
        cmds = np.column_stack([np.full(40, 0.75), np.zeros(40)])
        poses = ideal_pose_trajectory(cmds, DT)
        log = TrialLog(dt=DT, expected_commands=cmds,
                       actual_behaviors=cmds.copy(), poses=poses,
                       outcome="completed")
        assert inconsistency(log) == 0.0

    def test_constant_position_offset(self):
        cmds = np.column_stack([np.full(30, 0.5), np.zeros(30)])
        poses = ideal_pose_trajectory(cmds, DT)
        shifted = poses.copy()
        shifted[:, 1] += 1.0
        log = TrialLog(dt=DT, expected_commands=cmds,
                       actual_behaviors=cmds.copy(), poses=shifted,
                       outcome="completed")
        assert inconsistency(log) == pytest.approx(1.0, abs=1e-12)

    def test_gap_symmetric_under_swap(self):
        rng = np.random.default_rng(80)
        a = rng.standard_normal((25, 3))
        b = rng.standard_normal((25, 3))
        assert trajectory_gap(a, b) == pytest.approx(trajectory_gap(b, a))

    def test_gap_translation_invariant(self):
        rng = np.random.default_rng(81)
        a = rng.standard_normal((25, 3))
        b = rng.standard_normal((25, 3))
        shift = np.array([3.0, -2.0, 0.0])
        assert trajectory_gap(a + shift, b + shift) == pytest.approx(
            trajectory_gap(a, b), rel=1e-12)

    def test_heading_error_wrapped(self):
        a = np.array([[0.0, 0.0, 3.1]])
        b = np.array([[0.0, 0.0, -3.1]])
        # 6.2 rad apart unwrapped, ~0.083 rad wrapped
        assert trajectory_gap(a, b) == pytest.approx(2 * np.pi - 6.2, abs=1e-9)

    def test_empty_log_rejected(self):
        log = TrialLog(dt=DT, expected_commands=np.zeros((0, 2)),
                       actual_behaviors=np.zeros((0, 2)),
                       poses=np.zeros((0, 3)), outcome="completed")
        with pytest.raises(ValueError):
            inconsistency(log)


class TestJerkiness:
    def test_constant_velocity_exactly_zero(self):
        log = make_log(np.full(20, 0.75))
        assert jerkiness(log) == 0.0

    def test_constant_velocity_with_constant_turn_zero(self):
        log = make_log(np.full(20, 0.75), omega=np.full(20, 0.25))
        assert jerkiness(log) == 0.0

    def test_constant_acceleration_exactly_zero(self):
        # dyadic ramp keeps the finite differences exact in floating point
        v = 0.125 * np.arange(24)
        log = make_log(v)
        assert jerkiness(log) == 0.0

    def test_sinusoid_matches_analytic_mean(self):
        # v(t) = sin(t): acceleration cos(t), jerk -sin(t); the mean of
        # |sin| over whole periods is 2 / pi
        t = np.arange(0, 4 * np.pi, DT)
        log = make_log(np.sin(t))
        assert jerkiness(log) == pytest.approx(2 / np.pi, rel=0.02)

    def test_too_short_rejected(self):
        with pytest.raises(ValueError):
            jerkiness(make_log(np.ones(3)))

    def test_non_negative(self):
        rng = np.random.default_rng(82)
        log = make_log(rng.standard_normal(30), omega=rng.standard_normal(30))
        assert jerkiness(log) >= 0.0


class TestSummarize:
    def test_all_completed_no_failures(self):
        logs = [make_log(np.full(10, 0.5)) for _ in range(3)]
        report = summarize(logs)
        assert report.failure_count == 0
        assert report.trials == 3

    def test_traversal_time_over_successes_only(self):
        ten = make_log(np.full(int(round(10.0 / DT)), 0.5))
        twenty = make_log(np.full(int(round(20.0 / DT)), 0.5))
        failed = make_log(np.full(30, 0.5), outcome="stuck")
        report = summarize([ten, twenty, failed])
        assert report.failure_count == 1
        assert report.mean_traversal_time == pytest.approx(15.0, abs=0.05)

    def test_means_match_per_trial_records(self):
        rng = np.random.default_rng(83)
        logs = [make_log(0.5 + 0.1 * rng.standard_normal(40)) for _ in range(4)]
        report = summarize(logs)
        assert report.mean_inconsistency == pytest.approx(
            np.mean([m.inconsistency for m in report.per_trial]))
        assert report.mean_jerkiness == pytest.approx(
            np.mean([m.jerkiness for m in report.per_trial]))

    def test_permutation_invariant_means(self):
        rng = np.random.default_rng(84)
        logs = [make_log(0.5 + 0.1 * rng.standard_normal(40)) for _ in range(5)]
        a = summarize(logs)
        b = summarize(logs[::-1])
        assert a.mean_inconsistency == pytest.approx(b.mean_inconsistency)
        assert a.failure_count == b.failure_count

    def test_all_failed_reports_absent_means(self):
        logs = [make_log(np.full(20, 0.5), outcome="timeout") for _ in range(2)]
        report = summarize(logs)
        assert report.failure_count == 2
        assert report.mean_traversal_time is None
        assert report.mean_inconsistency is None
        assert report.mean_jerkiness is None

    def test_seeds_attached(self):
        logs = [make_log(np.full(10, 0.5)) for _ in range(2)]
        report = summarize(logs, seeds=[7, 8])
        assert [m.seed for m in report.per_trial] == [7, 8]

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            summarize([])
