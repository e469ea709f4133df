"""Execution-phase command generation.

A :class:`HistoryBuffer` accumulates the feature vectors the robot observes
and the deviations between what it commanded and what it actually did.
:func:`generate` turns the buffered windows into a command: the terrain-aware
behavior plus the learned corrective offset, clamped to actuator limits.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace

import numpy as np

from .model import ModelWeights, predict_behavior, predict_offset
from .tensor_core import DimensionError


@dataclass(frozen=True)
class ControlCommand:
    linear_velocity: float  # m/s
    angular_velocity: float  # rad/s
    safety_stop: bool = False

    def as_array(self) -> np.ndarray:
        return np.array([self.linear_velocity, self.angular_velocity])


@dataclass(frozen=True)
class CommandLimits:
    """Symmetric actuator envelope."""

    linear: float = 1.5  # m/s
    angular: float = 1.5  # rad/s

    def clamp(self, cmd: ControlCommand) -> ControlCommand:
        return replace(
            cmd,
            linear_velocity=float(np.clip(cmd.linear_velocity, -self.linear, self.linear)),
            angular_velocity=float(np.clip(cmd.angular_velocity, -self.angular, self.angular)),
        )


class HistoryBuffer:
    """Sliding window of features and behavior deviations, newest first.

    Until ``capacity`` observations arrive the missing window columns are
    zero, which leaves the offset term neutral during warm-up.
    """

    def __init__(self, capacity: int, feature_dim: int, behavior_dim: int):
        if capacity < 1:
            raise DimensionError("buffer capacity must be >= 1")
        self.capacity = int(capacity)
        self.feature_dim = int(feature_dim)
        self.behavior_dim = int(behavior_dim)
        self._features = deque(maxlen=self.capacity)
        self._diffs = deque(maxlen=self.capacity)

    def __len__(self):
        return len(self._features)

    def push(self, features, expected_prev, actual_prev):
        """Record the current features and the previous step's deviation.

        The deviation is stored as ``actual_prev - expected_prev``, where
        ``expected_prev`` is the behavior the robot intended to realize on
        the previous step (during data collection, the issued command).
        """
        f = np.asarray(features, dtype=float)
        y = np.asarray(expected_prev, dtype=float)
        a = np.asarray(actual_prev, dtype=float)
        if f.shape != (self.feature_dim,):
            raise DimensionError(
                f"feature vector shape {f.shape} does not match ({self.feature_dim},)"
            )
        if y.shape != (self.behavior_dim,) or a.shape != (self.behavior_dim,):
            raise DimensionError(
                f"behavior vectors must have shape ({self.behavior_dim},)"
            )
        self._features.appendleft(f.copy())
        self._diffs.appendleft(a - y)

    def feature_window(self) -> np.ndarray:
        """(feature_dim, capacity) matrix, newest observation in column 0."""
        out = np.zeros((self.feature_dim, self.capacity))
        for k, f in enumerate(self._features):
            out[:, k] = f
        return out

    def diff_window(self) -> np.ndarray:
        """(behavior_dim, capacity) matrix, newest deviation in column 0."""
        out = np.zeros((self.behavior_dim, self.capacity))
        for k, d in enumerate(self._diffs):
            out[:, k] = d
        return out


def generate(weights: ModelWeights, buffer: HistoryBuffer,
             limits: CommandLimits) -> ControlCommand:
    """Compute the next command from the buffered windows.

    Equals the terrain-aware behavior plus the learned offset, clamped to
    ``limits``.  A non-finite result degrades to a flagged stop command.
    """
    if weights.behavior_dim != 2:
        raise DimensionError(
            f"commands are (linear, angular); model emits {weights.behavior_dim} behaviors"
        )
    plan = predict_behavior(weights, buffer.feature_window())
    offset = predict_offset(weights, buffer.diff_window())
    raw = plan + offset
    if not np.all(np.isfinite(raw)):
        return ControlCommand(0.0, 0.0, safety_stop=True)
    return limits.clamp(ControlCommand(float(raw[0]), float(raw[1])))
