"""Run configuration: defaults, file loading, validation.

A run config is a JSON document.  Absent optional fields take the defaults
below; unknown fields are rejected with the offending path named.  The
effective (post-default) document is what gets hashed into artifacts.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

from .controller import CommandLimits
from .model import FeatureLayout, Hyperparams
from .simulator import (
    GEOMETRY_DIM,
    PROPRIO_DIM,
    FeatureGenerator,
    Setback,
    SimParams,
    TerrainSegment,
    TerrainSpec,
)
from .solver import SolverConfig


class ConfigError(ValueError):
    """A config document failed validation; the message names the field."""


DEFAULTS = {
    "version": 1,
    "model": {
        "terrain_types": 5,
        "behavior_dim": 2,
        "history_len": 5,
        "modality_names": ["signature", "geometry", "proprioception"],
        "modality_dims": [8, GEOMETRY_DIM, PROPRIO_DIM],
    },
    "hyperparams": {
        "lambda1": 1.0,
        "lambda2": 0.1,
        "lambda_l": 10.0,
        "lambda_d": 10.0,
        "lambda_c": 10.0,
        "epsilon": 1e-8,
    },
    "solver": {
        "max_outer_iters": 150,
        "tol": 1e-6,
        "inner_max_steps": 25,
        "inner_step_tol": 1e-10,
        "seed": 0,
        "init_scale": 0.1,
    },
    "simulator": {
        "dt": 1.0 / 15.0,
        "tau0": 0.3,
        "mass0": 50.0,
        "limit_linear": 1.5,
        "limit_angular": 1.5,
        "stuck_speed": 0.02,
        "stuck_window": 3.0,
        "stuck_command": 0.1,
        "timeout": 90.0,
        "terrains": {
            "concrete": {"type_index": 0, "nominal_speed": 1.0, "traction": 1.0, "roughness": 0.02},
            "grass": {"type_index": 1, "nominal_speed": 0.9, "traction": 0.95, "roughness": 0.05},
            "gravel": {"type_index": 2, "nominal_speed": 0.6, "traction": 0.85, "roughness": 0.12},
            "rocks": {"type_index": 3, "nominal_speed": 0.4, "traction": 0.7, "roughness": 0.2},
            "snow": {"type_index": 4, "nominal_speed": 0.7, "traction": 0.8, "roughness": 0.08},
        },
        "tracks": {
            "train_flat": [
                {"terrain": "concrete", "length": 3.0, "slope": 0.0},
                {"terrain": "grass", "length": 3.0, "slope": 0.0},
                {"terrain": "gravel", "length": 2.0, "slope": 5.0},
            ],
            "train_mixed": [
                {"terrain": "grass", "length": 2.5, "slope": 0.0},
                {"terrain": "gravel", "length": 2.5, "slope": 8.0},
                {"terrain": "snow", "length": 2.5, "slope": 0.0},
            ],
            "train_rough": [
                {"terrain": "gravel", "length": 2.0, "slope": 10.0},
                {"terrain": "rocks", "length": 2.0, "slope": 0.0},
                {"terrain": "snow", "length": 2.0, "slope": 5.0},
            ],
            "heldout_mixed": [
                {"terrain": "snow", "length": 2.5, "slope": 4.0},
                {"terrain": "gravel", "length": 2.5, "slope": 0.0},
                {"terrain": "grass", "length": 2.5, "slope": 6.0},
            ],
        },
        "setbacks": {
            "identity": {"traction_scale": 1.0, "actuator_gain": 1.0, "payload": 0.0, "damping_loss": 0.0},
            "weak_motor": {"traction_scale": 1.0, "actuator_gain": 0.6, "payload": 0.0, "damping_loss": 0.0},
            "low_traction": {"traction_scale": 0.75, "actuator_gain": 1.0, "payload": 0.0, "damping_loss": 0.2},
            "loaded": {"traction_scale": 0.85, "actuator_gain": 0.9, "payload": 20.0, "damping_loss": 0.3},
        },
        "scenarios": {
            "heldout_identity": {"track": "heldout_mixed", "setback": "identity"},
            "heldout_weak": {"track": "heldout_mixed", "setback": "weak_motor"},
            "heldout_low_traction": {"track": "heldout_mixed", "setback": "low_traction"},
            "heldout_loaded": {"track": "heldout_mixed", "setback": "loaded"},
        },
    },
    "data": {
        "tracks": ["train_flat", "train_mixed", "train_rough"],
        "setbacks": ["identity", "weak_motor"],
        "seeds": [101, 102],
        "stride": 3,
    },
    "benchmark": {"scenario": "heldout_weak", "trials": 20, "seed": 5000},
}


@dataclass(frozen=True)
class Scenario:
    name: str
    track: tuple  # of TerrainSegment
    setback: Setback


@dataclass(frozen=True)
class RunConfig:
    """Validated effective configuration plus constructed domain objects."""

    effective: dict  # the post-default document; hash this
    layout: FeatureLayout
    hyperparams: Hyperparams
    solver: SolverConfig
    sim: SimParams
    terrain_types: int
    behavior_dim: int
    terrains: dict  # name -> TerrainSpec
    speed_table: dict  # type_index -> nominal speed
    tracks: dict  # name -> tuple of TerrainSegment
    setbacks: dict  # name -> Setback
    scenarios: dict  # name -> Scenario

    def feature_generator(self) -> FeatureGenerator:
        return FeatureGenerator(self.layout, self.terrain_types)

    def scenario(self, name: str) -> Scenario:
        if name not in self.scenarios:
            raise ConfigError(
                f"unknown scenario {name!r}; have {sorted(self.scenarios)}"
            )
        return self.scenarios[name]


def _merge_defaults(defaults, override, path=""):
    """Deep-merge override onto defaults, rejecting unknown keys.

    Dict-valued fields whose defaults are catalogs (terrains, tracks,
    setbacks, scenarios) are replaced wholesale when overridden.
    """
    replace_wholesale = {"simulator.terrains", "simulator.tracks",
                         "simulator.setbacks", "simulator.scenarios"}
    out = copy.deepcopy(defaults)
    for key, value in override.items():
        here = f"{path}{key}"
        if key not in defaults:
            raise ConfigError(f"unknown config field {here!r}")
        if isinstance(defaults[key], dict) and here not in replace_wholesale:
            if not isinstance(value, dict):
                raise ConfigError(f"{here!r} must be an object")
            out[key] = _merge_defaults(defaults[key], value, here + ".")
        else:
            out[key] = copy.deepcopy(value)
    return out


def _require(cond, field, message):
    if not cond:
        raise ConfigError(f"{field}: {message}")


def _build(effective: dict) -> RunConfig:
    m = effective["model"]
    _require(isinstance(m["terrain_types"], int) and m["terrain_types"] >= 2,
             "model.terrain_types", "must be an integer >= 2")
    _require(m["behavior_dim"] == 2,
             "model.behavior_dim", "must be 2 (linear and angular velocity)")
    _require(isinstance(m["history_len"], int) and m["history_len"] >= 1,
             "model.history_len", "must be an integer >= 1")
    dims = m["modality_dims"]
    names = m["modality_names"]
    _require(isinstance(dims, list) and all(isinstance(d, int) and d >= 1 for d in dims),
             "model.modality_dims", "must be a list of integers >= 1")
    _require(len(names) == len(dims),
             "model.modality_names", "must match modality_dims in length")

    try:
        layout = FeatureLayout(tuple(dims), tuple(names))
        hyper = Hyperparams(history_len=m["history_len"], **effective["hyperparams"])
        solver = SolverConfig(**effective["solver"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc

    sim_doc = effective["simulator"]
    for f in ("dt", "tau0", "mass0", "limit_linear", "limit_angular",
              "stuck_speed", "stuck_window", "stuck_command", "timeout"):
        _require(isinstance(sim_doc[f], (int, float)) and sim_doc[f] > 0,
                 f"simulator.{f}", "must be a positive number")
    sim = SimParams(
        dt=float(sim_doc["dt"]),
        tau0=float(sim_doc["tau0"]),
        mass0=float(sim_doc["mass0"]),
        limits=CommandLimits(float(sim_doc["limit_linear"]),
                             float(sim_doc["limit_angular"])),
        stuck_speed=float(sim_doc["stuck_speed"]),
        stuck_window=float(sim_doc["stuck_window"]),
        stuck_command=float(sim_doc["stuck_command"]),
        timeout=float(sim_doc["timeout"]),
    )

    terrains = {}
    speed_table = {}
    for name, doc in sim_doc["terrains"].items():
        field = f"simulator.terrains.{name}"
        for key in doc:
            _require(key in ("type_index", "nominal_speed", "traction", "roughness"),
                     f"{field}.{key}", "unknown field")
        idx = doc["type_index"]
        _require(isinstance(idx, int) and 0 <= idx < m["terrain_types"],
                 f"{field}.type_index",
                 f"must be an integer below terrain_types={m['terrain_types']}")
        _require(doc["nominal_speed"] > 0, f"{field}.nominal_speed", "must be > 0")
        spec = TerrainSpec(name, idx, float(doc["nominal_speed"]),
                           float(doc["traction"]), float(doc["roughness"]))
        terrains[name] = spec
        speed_table[idx] = spec.nominal_speed

    tracks = {}
    for name, segs in sim_doc["tracks"].items():
        field = f"simulator.tracks.{name}"
        _require(isinstance(segs, list) and segs, field, "must be a non-empty list")
        built = []
        for i, seg in enumerate(segs):
            for key in seg:
                _require(key in ("terrain", "length", "slope"),
                         f"{field}[{i}].{key}", "unknown field")
            terr = seg["terrain"]
            _require(terr in terrains, f"{field}[{i}].terrain",
                     f"unknown terrain {terr!r}")
            spec = terrains[terr]
            try:
                built.append(TerrainSegment(
                    terrain_type=spec.type_index,
                    length=float(seg["length"]),
                    slope=float(seg.get("slope", 0.0)),
                    traction=spec.traction,
                    roughness=spec.roughness,
                ))
            except ValueError as exc:
                raise ConfigError(f"{field}[{i}]: {exc}") from exc
        tracks[name] = tuple(built)

    setbacks = {}
    for name, doc in sim_doc["setbacks"].items():
        field = f"simulator.setbacks.{name}"
        for key in doc:
            _require(key in ("traction_scale", "actuator_gain", "payload", "damping_loss"),
                     f"{field}.{key}", "unknown field")
        try:
            setbacks[name] = Setback(**{k: float(v) for k, v in doc.items()})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{field}: {exc}") from exc

    scenarios = {}
    for name, doc in sim_doc["scenarios"].items():
        field = f"simulator.scenarios.{name}"
        for key in doc:
            _require(key in ("track", "setback"), f"{field}.{key}", "unknown field")
        _require(doc["track"] in tracks, f"{field}.track",
                 f"unknown track {doc['track']!r}")
        _require(doc["setback"] in setbacks, f"{field}.setback",
                 f"unknown setback {doc['setback']!r}")
        scenarios[name] = Scenario(name, tracks[doc["track"]], setbacks[doc["setback"]])

    data = effective["data"]
    for key in ("tracks", "setbacks"):
        for item in data[key]:
            pool = tracks if key == "tracks" else setbacks
            _require(item in pool, f"data.{key}", f"unknown name {item!r}")
    _require(isinstance(data["seeds"], list) and data["seeds"],
             "data.seeds", "must be a non-empty list of integers")
    _require(isinstance(data["stride"], int) and data["stride"] >= 1,
             "data.stride", "must be an integer >= 1")

    bench = effective["benchmark"]
    _require(bench["scenario"] in scenarios, "benchmark.scenario",
             f"unknown scenario {bench['scenario']!r}")
    _require(isinstance(bench["trials"], int) and bench["trials"] >= 1,
             "benchmark.trials", "must be an integer >= 1")

    used_types = {seg.terrain_type for tr in tracks.values() for seg in tr}
    _require(all(t in speed_table for t in used_types),
             "simulator.terrains", "every terrain type used by a track needs a spec")

    sig_dim = dims[0]
    _require(sig_dim >= m["terrain_types"], "model.modality_dims",
             f"signature block dim {sig_dim} must be >= terrain_types")
    _require(len(dims) == 3 and dims[1] == GEOMETRY_DIM and dims[2] == PROPRIO_DIM,
             "model.modality_dims",
             f"expected three blocks (signature, {GEOMETRY_DIM}, {PROPRIO_DIM})")

    return RunConfig(
        effective=effective,
        layout=layout,
        hyperparams=hyper,
        solver=solver,
        sim=sim,
        terrain_types=m["terrain_types"],
        behavior_dim=m["behavior_dim"],
        terrains=terrains,
        speed_table=speed_table,
        tracks=tracks,
        setbacks=setbacks,
        scenarios=scenarios,
    )


def from_dict(document: dict) -> RunConfig:
    """Validate a config document and build the domain objects."""
    if not isinstance(document, dict):
        raise ConfigError("config root must be a JSON object")
    effective = _merge_defaults(DEFAULTS, document)
    return _build(effective)


def load_config(path) -> RunConfig:
    """Load, default-fill, and validate a config file."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        document = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {p} is not valid JSON: {exc}") from exc
    return from_dict(document)
