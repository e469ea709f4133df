"""Trial evaluation metrics and benchmark aggregation.

Consistency is judged in pose space: the planned commands are integrated
through the nominal plant (unit gain and traction, base actuation lag,
origin start) and the resulting trajectory is compared against the poses the
robot actually reached.  Jerkiness measures how rough the realized motion
was.  :func:`summarize` aggregates per-trial records the way the benchmark
tables expect: failures are counted, means run over completions only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .simulator import TrialLog, wrap_angle

HEADING_WEIGHT = 1.0  # m per rad when mixing position and heading error
FAILURE_OUTCOMES = ("stuck", "timeout")


def ideal_pose_trajectory(commands: np.ndarray, dt: float,
                          tau0: float = 0.3) -> np.ndarray:
    """Integrate commands through the nominal plant from the origin at rest.

    Nominal means no degradation and full traction; the base first-order
    actuation lag is kept because it is part of the robot, not the fault.
    """
    commands = np.asarray(commands, dtype=float)
    steps = commands.shape[0]
    poses = np.zeros((steps, 3))
    x = y = heading = v = omega = 0.0
    alpha = dt / tau0
    for t in range(steps):
        v += alpha * (commands[t, 0] - v)
        omega += alpha * (commands[t, 1] - omega)
        heading = wrap_angle(heading + omega * dt)
        x += v * math.cos(heading) * dt
        y += v * math.sin(heading) * dt
        poses[t] = (x, y, heading)
    return poses


def trajectory_gap(poses_a: np.ndarray, poses_b: np.ndarray,
                   heading_weight: float = HEADING_WEIGHT) -> float:
    """Mean per-step pose error between two aligned trajectories.

    Position error is Euclidean; heading error is wrapped and weighted by
    ``heading_weight``.  Symmetric in its arguments and invariant to rigid
    translation of both trajectories.
    """
    a = np.asarray(poses_a, dtype=float)
    b = np.asarray(poses_b, dtype=float)
    if a.shape != b.shape or a.ndim != 2 or a.shape[1] != 3:
        raise ValueError(f"trajectories must share shape (steps, 3), got {a.shape} vs {b.shape}")
    if a.shape[0] == 0:
        raise ValueError("trajectories are empty")
    pos_err = np.hypot(a[:, 0] - b[:, 0], a[:, 1] - b[:, 1])
    head_err = np.abs([wrap_angle(d) for d in (a[:, 2] - b[:, 2])])
    return float(np.mean(pos_err + heading_weight * head_err))


def inconsistency(log: TrialLog) -> float:
    """Mean pose error between the planned and the realized trajectory."""
    if log.steps == 0:
        raise ValueError("log is empty")
    expected = ideal_pose_trajectory(log.expected_commands, log.dt)
    return trajectory_gap(expected, log.poses)


def jerkiness(log: TrialLog) -> float:
    """Mean absolute jerk summed over body axes, m/s^3.

    Longitudinal acceleration is differentiated from the speed series;
    lateral acceleration is the centripetal term v * omega.  Differences are
    central in the interior and one-sided at the ends.
    """
    if log.steps < 4:
        raise ValueError(f"need at least 4 samples, got {log.steps}")
    v = log.actual_behaviors[:, 0]
    omega = log.actual_behaviors[:, 1]
    a_lon = np.gradient(v, log.dt)
    a_lat = v * omega
    jerk_lon = np.gradient(a_lon, log.dt)
    jerk_lat = np.gradient(a_lat, log.dt)
    return float(np.mean(np.abs(jerk_lon) + np.abs(jerk_lat)))


@dataclass(frozen=True)
class TrialMetrics:
    seed: Optional[int]
    outcome: str
    traversal_time: float  # s, steps * dt regardless of outcome
    inconsistency: float
    jerkiness: Optional[float]  # None when the log is too short

    @property
    def failed(self) -> bool:
        return self.outcome in FAILURE_OUTCOMES


@dataclass(frozen=True)
class BenchmarkReport:
    trials: int
    failure_count: int
    mean_traversal_time: Optional[float]  # successes only; None if all failed
    mean_inconsistency: Optional[float]
    mean_jerkiness: Optional[float]
    per_trial: tuple


def evaluate_log(log: TrialLog, seed: Optional[int] = None) -> TrialMetrics:
    return TrialMetrics(
        seed=seed,
        outcome=log.outcome,
        traversal_time=log.steps * log.dt,
        inconsistency=inconsistency(log),
        jerkiness=jerkiness(log) if log.steps >= 4 else None,
    )


def summarize(logs, seeds=None) -> BenchmarkReport:
    """Aggregate trial logs; metric means cover successful runs only."""
    logs = list(logs)
    if not logs:
        raise ValueError("need at least one log")
    if seeds is None:
        seeds = [None] * len(logs)
    records = tuple(evaluate_log(log, seed) for log, seed in zip(logs, seeds))
    successes = [r for r in records if not r.failed]
    mean = lambda vals: float(np.mean(vals)) if vals else None
    return BenchmarkReport(
        trials=len(records),
        failure_count=len(records) - len(successes),
        mean_traversal_time=mean([r.traversal_time for r in successes]),
        mean_inconsistency=mean([r.inconsistency for r in successes]),
        mean_jerkiness=mean([r.jerkiness for r in successes if r.jerkiness is not None]),
        per_trial=records,
    )
