import numpy as np
import pytest

from conftest import random_weights
from terranav import model as M
from terranav.controller import (
    CommandLimits,
    ControlCommand,
    HistoryBuffer,
    generate,
)
from terranav.tensor_core import DimensionError, Tensor3


class TestHistoryBuffer:
    def test_ring_keeps_most_recent(self):
        c, d, b = 3, 2, 2
        buf = HistoryBuffer(c, d, b)
        for t in range(c + 3):
            buf.push(np.full(d, float(t)), np.zeros(b), np.zeros(b))
        assert len(buf) == c
        window = buf.feature_window()
        np.testing.assert_array_equal(window[0, :], [5.0, 4.0, 3.0])

    def test_latest_feature_in_column_zero(self):
        buf = HistoryBuffer(4, 3, 2)
        buf.push(np.array([1.0, 2.0, 3.0]), np.zeros(2), np.zeros(2))
        np.testing.assert_array_equal(buf.feature_window()[:, 0], [1.0, 2.0, 3.0])
        # unfilled columns stay zero-padded
        np.testing.assert_array_equal(buf.feature_window()[:, 1:], 0.0)

    def test_matched_behaviors_zero_diffs(self):
        buf = HistoryBuffer(3, 2, 2)
        rng = np.random.default_rng(60)
        for _ in range(5):
            cmd = rng.standard_normal(2)
            buf.push(rng.standard_normal(2), cmd, cmd.copy())
        np.testing.assert_array_equal(buf.diff_window(), 0.0)

    def test_diff_sign_is_actual_minus_expected(self):
        buf = HistoryBuffer(2, 1, 1)
        buf.push(np.zeros(1), np.array([1.0]), np.array([0.4]))
        assert buf.diff_window()[0, 0] == pytest.approx(-0.6)

    def test_length_mismatch_rejected(self):
        buf = HistoryBuffer(2, 3, 2)
        with pytest.raises(DimensionError):
            buf.push(np.zeros(4), np.zeros(2), np.zeros(2))
        with pytest.raises(DimensionError):
            buf.push(np.zeros(3), np.zeros(1), np.zeros(2))


class TestGenerate:
    def filled_buffer(self, rng, weights):
        buf = HistoryBuffer(weights.history_len, weights.feature_dim, 2)
        for _ in range(weights.history_len):
            buf.push(rng.standard_normal(weights.feature_dim),
                     rng.standard_normal(2), rng.standard_normal(2))
        return buf

    def test_zero_offset_tensor_gives_plan_alone(self):
        rng = np.random.default_rng(61)
        weights = random_weights(rng, 3, 4, 2, 2, scale=0.2)
        weights = weights.replace(u=Tensor3(np.zeros((2, 2, 2))))
        buf = self.filled_buffer(rng, weights)
        cmd = generate(weights, buf, CommandLimits())
        plan = M.predict_behavior(weights, buf.feature_window())
        assert cmd.linear_velocity == pytest.approx(plan[0])
        assert cmd.angular_velocity == pytest.approx(plan[1])

    def test_zero_diffs_match_zero_offset_case(self):
        rng = np.random.default_rng(62)
        weights = random_weights(rng, 3, 4, 2, 2, scale=0.2)
        buf = HistoryBuffer(2, 4, 2)
        for _ in range(3):
            shared = rng.standard_normal(2)
            buf.push(rng.standard_normal(4), shared, shared.copy())
        silenced = weights.replace(u=Tensor3(np.zeros((2, 2, 2))))
        a = generate(weights, buf, CommandLimits())
        b = generate(silenced, buf, CommandLimits())
        assert a == b

    def test_equals_sum_of_predictions_before_clamp(self):
        rng = np.random.default_rng(63)
        weights = random_weights(rng, 3, 4, 2, 2, scale=0.2)
        buf = self.filled_buffer(rng, weights)
        raw = (M.predict_behavior(weights, buf.feature_window())
               + M.predict_offset(weights, buf.diff_window()))
        cmd = generate(weights, buf, CommandLimits(linear=100.0, angular=100.0))
        np.testing.assert_allclose([cmd.linear_velocity, cmd.angular_velocity],
                                   raw, rtol=1e-12)

    def test_pure_function(self):
        rng = np.random.default_rng(64)
        weights = random_weights(rng, 3, 4, 2, 2)
        buf = self.filled_buffer(rng, weights)
        assert generate(weights, buf, CommandLimits()) == generate(
            weights, buf, CommandLimits())

    def test_output_clamped_to_limits(self):
        rng = np.random.default_rng(65)
        weights = random_weights(rng, 3, 4, 2, 2, scale=5.0)
        buf = self.filled_buffer(rng, weights)
        limits = CommandLimits(linear=1.5, angular=1.5)
        for _ in range(5):
            buf.push(rng.standard_normal(4) * 10, rng.standard_normal(2),
                     rng.standard_normal(2))
            cmd = generate(weights, buf, limits)
            assert abs(cmd.linear_velocity) <= 1.5
            assert abs(cmd.angular_velocity) <= 1.5

    def test_shortfall_offset_direction(self):
        # positive offset tensor and a persistent shortfall produce a
        # negative offset value of exactly -u * delta on the speed axis
        u = 0.7
        delta = 0.25
        weights = M.ModelWeights(
            Tensor3(np.zeros((2, 3, 1))),
            Tensor3(np.zeros((2, 3, 1))),
            Tensor3((u * np.eye(2)).reshape(2, 2, 1)),
        )
        e = np.array([-delta, 0.0]).reshape(2, 1)
        offset = M.predict_offset(weights, e)
        assert offset[0] == pytest.approx(-u * delta)
        buf = HistoryBuffer(1, 3, 2)
        buf.push(np.zeros(3), np.array([1.0, 0.0]), np.array([1.0 - delta, 0.0]))
        cmd = generate(weights, buf, CommandLimits())
        assert cmd.linear_velocity == pytest.approx(-u * delta)

    def test_non_finite_result_becomes_safety_stop(self):
        ones = lambda shape: Tensor3(np.ones(shape))
        weights = M.ModelWeights(ones((2, 3, 1)), ones((2, 3, 1)), ones((2, 2, 1)))
        buf = HistoryBuffer(1, 3, 2)
        buf.push(np.full(3, 1e308), np.zeros(2), np.zeros(2))
        with np.errstate(over="ignore", invalid="ignore"):
            cmd = generate(weights, buf, CommandLimits())
        assert cmd == ControlCommand(0.0, 0.0, safety_stop=True)

    def test_wrong_behavior_dim_rejected(self):
        rng = np.random.default_rng(67)
        weights = random_weights(rng, 2, 3, 1, 3)
        buf = HistoryBuffer(1, 3, 3)
        with pytest.raises(DimensionError):
            generate(weights, buf, CommandLimits())
