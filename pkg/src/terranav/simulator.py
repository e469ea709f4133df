"""Deterministic 2-D kinematic terrain world.

Tracks are straight chains of terrain segments laid along the +x axis; the
reference path is the axis itself.  The robot is a unicycle whose commanded
velocities pass through a first-order actuation lag scaled by terrain
traction and by an injected degradation (:class:`Setback`).  The same world
generates training data (scripted-expert runs with degraded actuals) and
closed-loop evaluation trials for a trained model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import model as model_mod
from .controller import CommandLimits, ControlCommand, HistoryBuffer, generate
from .model import Dataset, FeatureLayout, ModelWeights, assemble_instances
from .tensor_core import DimensionError, Tensor3

GEOMETRY_DIM = 2  # slope fraction, roughness
PROPRIO_DIM = 2  # measured linear and angular velocity
SLOPE_LIMIT_DEG = 45.0

# invented noise scales: per-step velocity noise is
# (ROUGHNESS_NOISE * roughness + DAMPING_NOISE * damping_loss) * sqrt(dt)
ROUGHNESS_NOISE = 0.08
DAMPING_NOISE = 0.05
PROPRIO_NOISE = 0.01


@dataclass(frozen=True)
class TerrainSpec:
    """Per-terrain-type constants shared by segments of that type."""

    name: str
    type_index: int
    nominal_speed: float  # expert cruise speed on flat ground, m/s
    traction: float
    roughness: float


@dataclass(frozen=True)
class TerrainSegment:
    terrain_type: int
    length: float  # m
    slope: float  # degrees
    traction: float  # (0, 1]
    roughness: float  # >= 0, noise scale

    def __post_init__(self):
        if self.length <= 0:
            raise ValueError(f"segment length must be > 0, got {self.length}")
        if not -SLOPE_LIMIT_DEG <= self.slope <= SLOPE_LIMIT_DEG:
            raise ValueError(f"slope must be within +-{SLOPE_LIMIT_DEG} deg")
        if not 0 < self.traction <= 1:
            raise ValueError(f"traction must be in (0, 1], got {self.traction}")
        if self.roughness < 0:
            raise ValueError("roughness must be >= 0")


@dataclass(frozen=True)
class Setback:
    """Parametric robot degradation injected into the plant."""

    traction_scale: float = 1.0  # (0, 1]
    actuator_gain: float = 1.0  # (0, 1.5]
    payload: float = 0.0  # kg
    damping_loss: float = 0.0  # jerk amplifier

    def __post_init__(self):
        if not 0 < self.traction_scale <= 1:
            raise ValueError("traction_scale must be in (0, 1]")
        if not 0 < self.actuator_gain <= 1.5:
            raise ValueError("actuator_gain must be in (0, 1.5]")
        if self.payload < 0 or self.damping_loss < 0:
            raise ValueError("payload and damping_loss must be >= 0")


IDENTITY_SETBACK = Setback()


@dataclass
class RobotState:
    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0  # rad, wrapped to (-pi, pi]
    v: float = 0.0  # m/s
    omega: float = 0.0  # rad/s


@dataclass(frozen=True)
class SimParams:
    dt: float = 1.0 / 15.0  # s
    tau0: float = 0.3  # base actuation time constant, s
    mass0: float = 50.0  # payload normalizer, kg
    limits: CommandLimits = field(default_factory=CommandLimits)
    stuck_speed: float = 0.02  # m/s
    stuck_window: float = 3.0  # s below stuck_speed before declaring stuck
    stuck_command: float = 0.1  # m/s commanded while not moving
    timeout: float = 90.0  # s

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be > 0")


@dataclass
class TrialLog:
    """Per-trial timeseries.  All arrays share the step count.

    ``expected_commands`` holds the planned behavior per step (for the
    scripted expert that is its command; for the model controller it is the
    terrain-aware term before the corrective offset).  ``features`` and
    ``terrain_types`` are kept in memory for dataset assembly and are not
    part of the serialized row format.
    """

    dt: float
    expected_commands: np.ndarray  # (steps, 2)
    actual_behaviors: np.ndarray  # (steps, 2)
    poses: np.ndarray  # (steps, 3): x, y, heading
    outcome: str  # completed | stuck | timeout
    features: Optional[np.ndarray] = None  # (steps, feature_dim)
    terrain_types: Optional[np.ndarray] = None  # (steps,)

    @property
    def steps(self) -> int:
        return self.poses.shape[0]


OUTCOMES = ("completed", "stuck", "timeout")


def wrap_angle(theta: float) -> float:
    """Wrap to (-pi, pi]."""
    wrapped = math.remainder(theta, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


def track_length(track) -> float:
    return float(sum(seg.length for seg in track))


def segment_at(track, x: float) -> TerrainSegment:
    """The segment under position x; positions past the end map to the last."""
    if not track:
        raise ValueError("track is empty")
    upto = 0.0
    for seg in track:
        upto += seg.length
        if x < upto:
            return seg
    return track[-1]


class FeatureGenerator:
    """Parametric stand-in for onboard perception.

    Emits one block per modality: a terrain-signature block (a fixed
    per-type pattern plus roughness-scaled noise), a geometry block (slope
    fraction and roughness, exact), and a proprioception block (measured
    velocities plus a small fixed noise).
    """

    def __init__(self, layout: FeatureLayout, n_types: int):
        if layout.n_modalities != 3:
            raise DimensionError(
                "feature generator expects 3 modalities "
                "(signature, geometry, proprioception)"
            )
        sig_dim, geo_dim, prop_dim = layout.modality_dims
        if geo_dim != GEOMETRY_DIM or prop_dim != PROPRIO_DIM:
            raise DimensionError(
                f"geometry and proprioception blocks must have dims "
                f"{GEOMETRY_DIM} and {PROPRIO_DIM}"
            )
        if sig_dim < n_types:
            raise DimensionError(
                f"signature block dim {sig_dim} cannot separate {n_types} types"
            )
        self.layout = layout
        self.n_types = n_types
        self._templates = _signature_templates(n_types, sig_dim)

    def synth(self, segment: TerrainSegment, state: RobotState,
              rng: Optional[np.random.Generator]) -> np.ndarray:
        sig = self._templates[segment.terrain_type].copy()
        prop = np.array([state.v, state.omega])
        if rng is not None:
            sig += segment.roughness * rng.standard_normal(sig.shape)
            prop += PROPRIO_NOISE * rng.standard_normal(2)
        geo = np.array([segment.slope / SLOPE_LIMIT_DEG, segment.roughness])
        return np.concatenate([sig, geo, prop])


def _signature_templates(n_types: int, dim: int) -> np.ndarray:
    """Fixed, well-separated per-type patterns (pairwise distance > 2)."""
    base = np.zeros((n_types, dim))
    for i in range(n_types):
        base[i, i] = 1.5
        for j in range(dim):
            base[i, j] += 0.1 * math.cos(1.7 * (i + 1) * (j + 1))
    return base


def expert_policy(segment: TerrainSegment, state: RobotState, speed_table,
                  heading_gain: float = 2.0, path_heading: float = 0.0) -> ControlCommand:
    """Scripted demonstrator: per-type cruise speed derated by slope, plus a
    proportional heading correction toward the reference path."""
    nominal = speed_table[segment.terrain_type]
    slope_derate = max(0.3, 1.0 - abs(segment.slope) / 60.0)
    heading_error = wrap_angle(state.heading - path_heading)
    return ControlCommand(nominal * slope_derate, -heading_gain * heading_error)


def step(state: RobotState, command: ControlCommand, segment: TerrainSegment,
         setback: Setback, dt: float, rng: Optional[np.random.Generator] = None,
         tau0: float = 0.3, mass0: float = 50.0) -> RobotState:
    """Advance the plant one tick.

    Velocities track ``gain * traction * command`` through a first-order lag
    whose time constant grows with payload; the pose integrates unicycle
    kinematics with the updated velocities.  With ``rng`` given, roughness
    and damping_loss add noise to the linear velocity.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    s = segment.traction * setback.traction_scale
    g = setback.actuator_gain
    tau = tau0 * (1.0 + setback.payload / mass0)
    alpha = dt / tau
    v = state.v + alpha * (g * s * command.linear_velocity - state.v)
    omega = state.omega + alpha * (g * s * command.angular_velocity - state.omega)
    if rng is not None:
        sigma = ROUGHNESS_NOISE * segment.roughness + DAMPING_NOISE * setback.damping_loss
        if sigma > 0:
            v += sigma * math.sqrt(dt) * float(rng.standard_normal())
    heading = wrap_angle(state.heading + omega * dt)
    return RobotState(
        x=state.x + v * math.cos(heading) * dt,
        y=state.y + v * math.sin(heading) * dt,
        heading=heading,
        v=v,
        omega=omega,
    )


class ExpertDriver:
    """Trial policy wrapping the scripted expert; plan and command coincide."""

    def __init__(self, speed_table, limits: CommandLimits):
        self.speed_table = speed_table
        self.limits = limits

    def begin(self):
        pass

    def act(self, features, segment, state, prev_actual):
        cmd = self.limits.clamp(expert_policy(segment, state, self.speed_table))
        return cmd, cmd


class ModelDriver:
    """Trial policy running the trained model closed-loop.

    Feeds the buffer the issued command and the realized behavior of the
    previous step, so the offset term sees the same deviation stream the
    model was trained on.  The corrective term is held at zero until the
    deviation window has fully populated; before that the window mixes real
    deviations with warm-start padding and the correction would fight the
    ordinary spin-up lag.  With ``use_offset=False`` the corrective term is
    silenced for the whole trial (the comparison baseline); the plan term is
    unchanged.
    """

    def __init__(self, weights: ModelWeights, limits: CommandLimits,
                 use_offset: bool = True):
        self.weights = weights
        self.limits = limits
        self.use_offset = use_offset
        self._plan_only = weights.replace(
            u=Tensor3.zeros(weights.behavior_dim, weights.behavior_dim,
                            weights.history_len)
        )
        self._buffer = None
        self._last_command = np.zeros(2)

    def begin(self):
        self._buffer = HistoryBuffer(
            self.weights.history_len, self.weights.feature_dim, 2
        )
        self._last_command = np.zeros(2)

    def act(self, features, segment, state, prev_actual):
        self._buffer.push(features, self._last_command, np.asarray(prev_actual))
        warmed = len(self._buffer) >= self._buffer.capacity
        active = self.weights if (self.use_offset and warmed) else self._plan_only
        command = generate(active, self._buffer, self.limits)
        plan_vec = model_mod.predict_behavior(
            self.weights, self._buffer.feature_window()
        )
        plan = ControlCommand(float(plan_vec[0]), float(plan_vec[1]))
        self._last_command = command.as_array()
        return plan, command


def run_trial(track, policy, setback: Setback, params: SimParams,
              feature_gen: FeatureGenerator, seed: int,
              noise: bool = True) -> TrialLog:
    """Roll one seeded trial until track end, a stuck detection, or timeout.

    With ``noise=False`` the feature and plant noise draws are disabled and
    the trial is a deterministic function of the policy alone.
    """
    if not track:
        raise ValueError("track is empty")
    rng = np.random.default_rng(seed) if noise else None
    policy.begin()
    state = RobotState()
    goal = track_length(track)
    max_steps = int(math.ceil(params.timeout / params.dt))
    stuck_steps_needed = int(math.ceil(params.stuck_window / params.dt))

    expected, actual, poses, feats, types = [], [], [], [], []
    outcome = "timeout"
    slow_streak = 0
    prev_actual = (0.0, 0.0)

    for _ in range(max_steps):
        segment = segment_at(track, state.x)
        features = feature_gen.synth(segment, state, rng)
        plan, command = policy.act(features, segment, state, prev_actual)
        state = step(state, command, segment, setback, params.dt, rng,
                     tau0=params.tau0, mass0=params.mass0)

        expected.append([plan.linear_velocity, plan.angular_velocity])
        actual.append([state.v, state.omega])
        poses.append([state.x, state.y, state.heading])
        feats.append(features)
        types.append(segment.terrain_type)
        prev_actual = (state.v, state.omega)

        if state.x >= goal:
            outcome = "completed"
            break
        if abs(command.linear_velocity) > params.stuck_command and abs(state.v) < params.stuck_speed:
            slow_streak += 1
            if slow_streak >= stuck_steps_needed:
                outcome = "stuck"
                break
        else:
            slow_streak = 0

    return TrialLog(
        dt=params.dt,
        expected_commands=np.array(expected),
        actual_behaviors=np.array(actual),
        poses=np.array(poses),
        outcome=outcome,
        features=np.array(feats),
        terrain_types=np.array(types, dtype=int),
    )


def gen_dataset(tracks, setbacks, seeds, history_len, params: SimParams,
                feature_gen: FeatureGenerator, speed_table, n_types: int,
                stride: int = 1) -> Dataset:
    """Roll expert demonstrations and window them into a training dataset.

    Every (track, setback, seed) combination yields one trial.  Trials
    shorter than the history window are skipped.  ``stride`` subsamples the
    overlapping windows to keep desk-scale training fast.
    """
    if not tracks:
        raise ValueError("need at least one track")
    xs, zs, ys, as_, es = [], [], [], [], []
    for track in tracks:
        for setback in setbacks:
            for seed in seeds:
                driver = ExpertDriver(speed_table, params.limits)
                log = run_trial(track, driver, setback, params, feature_gen, seed)
                if log.steps < history_len:
                    continue
                windows = assemble_instances(
                    log.features, log.expected_commands, log.actual_behaviors,
                    history_len,
                )
                labels = log.terrain_types[history_len - 1:]
                keep = np.arange(0, windows.expected.shape[1], stride)
                xs.append(windows.features[:, keep, :])
                ys.append(windows.expected[:, keep])
                as_.append(windows.actual[:, keep])
                es.append(windows.diffs[:, keep, :])
                z = np.zeros((n_types, keep.size))
                z[labels[keep], np.arange(keep.size)] = 1.0
                zs.append(z)
    if not xs:
        raise ValueError("no trial produced enough steps for the history window")
    return Dataset(
        features=Tensor3(np.concatenate(xs, axis=1)),
        terrain_labels=np.concatenate(zs, axis=1),
        expected=np.concatenate(ys, axis=1),
        actual=np.concatenate(as_, axis=1),
        behavior_diffs=Tensor3(np.concatenate(es, axis=1)),
        layout=feature_gen.layout,
    )
