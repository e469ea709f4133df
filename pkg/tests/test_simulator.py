import numpy as np
import pytest

from terranav import model as M
from terranav.controller import CommandLimits, ControlCommand
from terranav.simulator import (
    ExpertDriver,
    FeatureGenerator,
    RobotState,
    Setback,
    SimParams,
    TerrainSegment,
    expert_policy,
    gen_dataset,
    run_trial,
    segment_at,
    step,
    track_length,
)

SPEEDS = {0: 1.0, 1: 0.9, 2: 0.6, 3: 0.4}
LAYOUT = M.FeatureLayout((5, 2, 2), ("signature", "geometry", "proprioception"))


def seg(t=0, length=5.0, slope=0.0, traction=1.0, roughness=0.0):
    return TerrainSegment(t, length, slope, traction, roughness)


def params(**kw):
    return SimParams(**kw)


class TestTypes:
    def test_segment_validation(self):
        with pytest.raises(ValueError):
            seg(length=0.0)
        with pytest.raises(ValueError):
            seg(slope=50.0)
        with pytest.raises(ValueError):
            seg(traction=0.0)

    def test_setback_validation(self):
        with pytest.raises(ValueError):
            Setback(traction_scale=1.2)
        with pytest.raises(ValueError):
            Setback(actuator_gain=0.0)
        assert Setback() == Setback(1.0, 1.0, 0.0, 0.0)

    def test_segment_lookup(self):
        track = (seg(0, 2.0), seg(1, 3.0))
        assert segment_at(track, 0.5).terrain_type == 0
        assert segment_at(track, 2.5).terrain_type == 1
        assert segment_at(track, 99.0).terrain_type == 1
        assert track_length(track) == pytest.approx(5.0)


class TestFeatures:
    def test_noise_free_features_are_exact(self):
        gen = FeatureGenerator(LAYOUT, 4)
        state = RobotState(v=0.7, omega=-0.1)
        s = seg(t=2, slope=9.0, roughness=0.3)
        f1 = gen.synth(s, state, None)
        f2 = gen.synth(s, state, None)
        np.testing.assert_array_equal(f1, f2)
        np.testing.assert_allclose(f1[5:7], [9.0 / 45.0, 0.3])
        np.testing.assert_allclose(f1[7:9], [0.7, -0.1])

    def test_types_differ_in_signature_block(self):
        gen = FeatureGenerator(LAYOUT, 4)
        state = RobotState()
        fa = gen.synth(seg(t=0, roughness=0.0), state, None)
        fb = gen.synth(seg(t=1, roughness=0.0), state, None)
        assert np.linalg.norm(fa[:5] - fb[:5]) > 1.0

    def test_empirical_means_well_separated(self):
        gen = FeatureGenerator(LAYOUT, 4)
        state = RobotState()
        rng = np.random.default_rng(70)
        sigma = 0.1
        means = []
        for t in range(2):
            samples = np.array([
                gen.synth(seg(t=t, roughness=sigma), state, rng)[:5]
                for _ in range(1000)
            ])
            means.append(samples.mean(axis=0))
        assert np.linalg.norm(means[0] - means[1]) >= 5 * sigma

    def test_signature_block_must_cover_types(self):
        with pytest.raises(Exception):
            FeatureGenerator(LAYOUT, 6)


class TestExpertPolicy:
    def test_flat_concrete_nominal(self):
        cmd = expert_policy(seg(t=0, slope=0.0), RobotState(), SPEEDS)
        assert cmd.linear_velocity == pytest.approx(1.0)
        assert cmd.angular_velocity == pytest.approx(0.0)

    def test_heading_error_corrected_with_opposite_sign(self):
        cmd = expert_policy(seg(), RobotState(heading=0.2), SPEEDS)
        assert cmd.angular_velocity < 0

    def test_rocky_ground_slower_than_concrete(self):
        rocks = expert_policy(seg(t=3), RobotState(), SPEEDS)
        concrete = expert_policy(seg(t=0), RobotState(), SPEEDS)
        assert rocks.linear_velocity < concrete.linear_velocity

    def test_slope_derates_speed(self):
        flat = expert_policy(seg(slope=0.0), RobotState(), SPEEDS)
        hill = expert_policy(seg(slope=30.0), RobotState(), SPEEDS)
        assert hill.linear_velocity < flat.linear_velocity


class TestStep:
    def test_zero_command_from_rest(self):
        state = RobotState()
        out = step(state, ControlCommand(0.0, 0.0), seg(), Setback(), 1 / 15)
        assert (out.x, out.y, out.heading, out.v, out.omega) == (0, 0, 0, 0, 0)

    def test_velocity_converges_to_command(self):
        state = RobotState()
        for _ in range(200):
            state = step(state, ControlCommand(1.0, 0.0), seg(), Setback(), 1 / 15)
        assert state.v == pytest.approx(1.0, abs=1e-6)

    def test_gain_traction_fixed_point(self):
        state = RobotState()
        setback = Setback(traction_scale=1.0, actuator_gain=0.5)
        for _ in range(300):
            state = step(state, ControlCommand(1.0, 0.0), seg(), setback, 1 / 15)
        assert state.v == pytest.approx(0.5, abs=1e-6)

    def test_payload_slows_convergence(self):
        light = RobotState()
        heavy = RobotState()
        for _ in range(10):
            light = step(light, ControlCommand(1.0, 0.0), seg(), Setback(), 1 / 15)
            heavy = step(heavy, ControlCommand(1.0, 0.0), seg(),
                         Setback(payload=50.0), 1 / 15)
        assert heavy.v < light.v

    def test_speed_bounded_by_gain_traction_envelope(self):
        rng = np.random.default_rng(71)
        setback = Setback(traction_scale=0.8, actuator_gain=0.9)
        segment = seg(traction=0.9, roughness=0.1)
        state = RobotState()
        bound = 0.9 * 0.9 * 0.8 * 1.0
        for _ in range(500):
            state = step(state, ControlCommand(1.0, 0.0), segment, setback,
                         1 / 15, rng)
            assert abs(state.v) <= bound + 0.1  # generous noise allowance

    def test_bad_dt_rejected(self):
        with pytest.raises(ValueError):
            step(RobotState(), ControlCommand(0, 0), seg(), Setback(), 0.0)


class TestRunTrial:
    def expert(self):
        return ExpertDriver(SPEEDS, CommandLimits())

    def gen(self):
        return FeatureGenerator(LAYOUT, 4)

    def test_timeout_outcome(self):
        p = params(timeout=1.0)
        log = run_trial((seg(length=100.0),), self.expert(), Setback(), p,
                        self.gen(), 1)
        assert log.outcome == "timeout"

    def test_expert_completes_flat_track(self):
        log = run_trial((seg(length=5.0),), self.expert(), Setback(),
                        params(), self.gen(), 2)
        assert log.outcome == "completed"
        assert log.poses[-1, 0] >= 5.0

    def test_same_seed_bit_identical(self):
        track = (seg(length=4.0, roughness=0.15),)
        a = run_trial(track, self.expert(), Setback(), params(), self.gen(), 7)
        b = run_trial(track, self.expert(), Setback(), params(), self.gen(), 7)
        np.testing.assert_array_equal(a.poses, b.poses)
        np.testing.assert_array_equal(a.actual_behaviors, b.actual_behaviors)
        np.testing.assert_array_equal(a.features, b.features)
        assert a.outcome == b.outcome

    def test_stuck_detection(self):
        # an immovable robot commanded forward trips the stuck detector
        p = params(timeout=30.0)
        log = run_trial((seg(length=5.0),), self.expert(),
                        Setback(traction_scale=1e-6), p, self.gen(), 3)
        assert log.outcome == "stuck"

    def test_terrain_label_matches_segment_under_robot(self):
        track = (seg(t=0, length=2.0), seg(t=1, length=2.0))
        log = run_trial(track, self.expert(), Setback(), params(),
                        self.gen(), 4, noise=False)
        # the logged type at each step matches the segment containing the
        # pre-step position (poses are logged post-step)
        x_before = np.concatenate([[0.0], log.poses[:-1, 0]])
        for xb, t in zip(x_before, log.terrain_types):
            assert segment_at(track, xb).terrain_type == t


class TestGenDataset:
    def gen(self):
        return FeatureGenerator(LAYOUT, 4)

    def test_identity_noise_free_actual_matches_expected(self):
        track = (seg(t=0, length=6.0, traction=1.0, roughness=0.0),)
        expert = ExpertDriver(SPEEDS, CommandLimits())
        log = run_trial(track, expert, Setback(), params(), self.gen(), 5,
                        noise=False)
        gap = np.abs(log.actual_behaviors - log.expected_commands)
        # exact equality is impossible through the actuation lag; the gap
        # decays to numerical dust after the spin-up transient
        assert np.median(gap) < 1e-3
        burn = int(2.0 / log.dt)
        assert gap[burn:].max() < 1e-3

    def test_weak_motor_steady_state_ratio(self):
        track = (seg(t=0, length=8.0, traction=1.0, roughness=0.0),)
        ds = gen_dataset([track], [Setback(actuator_gain=0.6)], [11], 3,
                         params(), self.gen(), SPEEDS, 4, stride=1)
        y = ds.expected
        a = ds.actual
        # away from the spin-up, actual speed settles at gain * expected
        ratio = a[0, 60:] / y[0, 60:]
        np.testing.assert_allclose(ratio, 0.6, atol=5e-3)

    def test_dataset_dims_consistent(self):
        track = (seg(t=0, length=3.0), seg(t=2, length=2.0))
        ds = gen_dataset([track], [Setback()], [1, 2], 4, params(),
                         self.gen(), SPEEDS, 4, stride=2)
        n = ds.n_instances
        assert ds.features.shape == (9, n, 4)
        assert ds.terrain_labels.shape == (4, n)
        assert ds.expected.shape == (2, n)
        assert ds.actual.shape == (2, n)
        assert ds.behavior_diffs.shape == (2, n, 4)
        assert np.all(ds.terrain_labels.sum(axis=0) == 1)

    def test_identity_noise_free_diffs_small(self):
        track = (seg(t=0, length=6.0, traction=1.0, roughness=0.0),)
        ds = gen_dataset([track], [Setback()], [3], 3, params(), self.gen(),
                         SPEEDS, 4, stride=1)
        # beyond the windows touching the spin-up, deviations are dust
        assert np.abs(ds.behavior_diffs.data[:, 60:, :]).max() < 1e-3

    def test_requires_a_track(self):
        with pytest.raises(ValueError):
            gen_dataset([], [Setback()], [1], 3, params(), self.gen(),
                        SPEEDS, 4)
