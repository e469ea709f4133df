"""Versioned on-disk formats.

Every artifact embeds a format name, a format version, and the hash of the
run configuration that produced it, so artifacts are reproducible and
re-running with an unchanged config overwrites byte-identically.  Tensor
payloads are flat lists in the row-major element order documented on
:class:`~terranav.tensor_core.Tensor3`.  Field names are documented in
FORMATS.md at the repository root.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .controller import CommandLimits
from .metrics import BenchmarkReport, TrialMetrics
from .model import Dataset, FeatureLayout, Hyperparams, ModelWeights
from .simulator import OUTCOMES, TrialLog
from .tensor_core import Tensor3

CHECKPOINT_FORMAT = "terranav-checkpoint"
DATASET_FORMAT = "terranav-dataset"
TRIAL_FORMAT = "terranav-trial-log"
TRACE_FORMAT = "terranav-solver-trace"
REPORT_FORMAT = "terranav-benchmark-report"
FORMAT_VERSION = 1


class FormatError(ValueError):
    """An artifact file does not match its declared format."""


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(config_dict) -> str:
    """Stable identity of an effective run configuration."""
    return hashlib.sha256(canonical_json(config_dict).encode("utf-8")).hexdigest()


def _write_json(path, payload):
    text = json.dumps(payload, sort_keys=True, indent=2, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def _read_json(path, expected_format):
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != expected_format:
        raise FormatError(
            f"{path}: format {payload.get('format')!r}, expected {expected_format!r}"
        )
    if payload.get("version") != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {payload.get('version')!r}")
    return payload


def _tensor_payload(t: Tensor3):
    return {
        "height": t.height,
        "width": t.width,
        "depth": t.depth,
        "data": [float(x) for x in t.flat],
    }


def _tensor_from_payload(p) -> Tensor3:
    return Tensor3.from_flat(p["data"], p["height"], p["width"], p["depth"])


# ---------------------------------------------------------------------------
# checkpoint


def save_checkpoint(path, weights: ModelWeights, hyper: Hyperparams,
                    layout: FeatureLayout, cfg_hash: str):
    _write_json(path, {
        "format": CHECKPOINT_FORMAT,
        "version": FORMAT_VERSION,
        "config_hash": cfg_hash,
        "dims": {
            "terrain_types": weights.n_types,
            "feature_dim": weights.feature_dim,
            "history_len": weights.history_len,
            "behavior_dim": weights.behavior_dim,
            "modalities": layout.n_modalities,
        },
        "layout": {
            "modality_dims": list(layout.modality_dims),
            "modality_names": list(layout.modality_names),
        },
        "hyperparams": {
            "lambda1": hyper.lambda1,
            "lambda2": hyper.lambda2,
            "lambda_l": hyper.lambda_l,
            "lambda_d": hyper.lambda_d,
            "lambda_c": hyper.lambda_c,
            "epsilon": hyper.epsilon,
            "history_len": hyper.history_len,
        },
        "tensors": {
            "w": _tensor_payload(weights.w),
            "v": _tensor_payload(weights.v),
            "u": _tensor_payload(weights.u),
        },
    })


def load_checkpoint(path):
    """Returns (weights, hyper, layout, config_hash)."""
    p = _read_json(path, CHECKPOINT_FORMAT)
    weights = ModelWeights(
        _tensor_from_payload(p["tensors"]["w"]),
        _tensor_from_payload(p["tensors"]["v"]),
        _tensor_from_payload(p["tensors"]["u"]),
    )
    hyper = Hyperparams(**p["hyperparams"])
    layout = FeatureLayout(
        tuple(p["layout"]["modality_dims"]),
        tuple(p["layout"]["modality_names"]),
    )
    return weights, hyper, layout, p["config_hash"]


# ---------------------------------------------------------------------------
# dataset


def save_dataset(path, dataset: Dataset, cfg_hash: str):
    _write_json(path, {
        "format": DATASET_FORMAT,
        "version": FORMAT_VERSION,
        "config_hash": cfg_hash,
        "layout": {
            "modality_dims": list(dataset.layout.modality_dims),
            "modality_names": list(dataset.layout.modality_names),
        },
        "features": _tensor_payload(dataset.features),
        "terrain_labels": [[float(v) for v in row] for row in dataset.terrain_labels],
        "expected": [[float(v) for v in row] for row in dataset.expected],
        "actual": [[float(v) for v in row] for row in dataset.actual],
        "behavior_diffs": _tensor_payload(dataset.behavior_diffs),
    })


def load_dataset(path):
    """Returns (dataset, config_hash)."""
    p = _read_json(path, DATASET_FORMAT)
    dataset = Dataset(
        features=_tensor_from_payload(p["features"]),
        terrain_labels=np.array(p["terrain_labels"], dtype=float),
        expected=np.array(p["expected"], dtype=float),
        actual=np.array(p["actual"], dtype=float),
        behavior_diffs=_tensor_from_payload(p["behavior_diffs"]),
        layout=FeatureLayout(
            tuple(p["layout"]["modality_dims"]),
            tuple(p["layout"]["modality_names"]),
        ),
    )
    return dataset, p["config_hash"]


# ---------------------------------------------------------------------------
# trial logs (columnar text, one row per step, outcome footer)

TRIAL_COLUMNS = "t,v_cmd,w_cmd,v_act,w_act,x,y,heading"


def save_trial_log(path, log: TrialLog, cfg_hash: str, seed=None):
    lines = [
        f"# format: {TRIAL_FORMAT} v{FORMAT_VERSION}",
        f"# config_hash: {cfg_hash}",
        f"# dt: {log.dt!r}",
        f"# seed: {seed}",
        TRIAL_COLUMNS,
    ]
    for t in range(log.steps):
        row = [
            str(t),
            repr(float(log.expected_commands[t, 0])),
            repr(float(log.expected_commands[t, 1])),
            repr(float(log.actual_behaviors[t, 0])),
            repr(float(log.actual_behaviors[t, 1])),
            repr(float(log.poses[t, 0])),
            repr(float(log.poses[t, 1])),
            repr(float(log.poses[t, 2])),
        ]
        lines.append(",".join(row))
    lines.append(f"# outcome: {log.outcome}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_trial_log(path) -> TrialLog:
    """Rebuild a trial log; features are not part of the row format."""
    text = Path(path).read_text(encoding="utf-8").strip().splitlines()
    if not text or not text[0].startswith(f"# format: {TRIAL_FORMAT}"):
        raise FormatError(f"{path}: not a trial log")
    dt = None
    outcome = None
    rows = []
    for line in text:
        if line.startswith("# dt:"):
            dt = float(line.split(":", 1)[1])
        elif line.startswith("# outcome:"):
            outcome = line.split(":", 1)[1].strip()
        elif line.startswith("#") or line == TRIAL_COLUMNS:
            continue
        else:
            rows.append([float(v) for v in line.split(",")])
    if dt is None or outcome not in OUTCOMES:
        raise FormatError(f"{path}: missing dt or outcome footer")
    arr = np.array(rows)
    return TrialLog(
        dt=dt,
        expected_commands=arr[:, 1:3],
        actual_behaviors=arr[:, 3:5],
        poses=arr[:, 5:8],
        outcome=outcome,
    )


# ---------------------------------------------------------------------------
# solver trace (one CSV row per outer iteration)

TRACE_COLUMNS = ("iteration,objective,terrain_loss,behavior_loss,offset_loss,"
                 "behavior_reg,history_reg,orth_reg,max_orth_residual")


def save_solver_trace(path, records, cfg_hash: str):
    lines = [
        f"# format: {TRACE_FORMAT} v{FORMAT_VERSION}",
        f"# config_hash: {cfg_hash}",
        TRACE_COLUMNS,
    ]
    for r in records:
        lines.append(",".join([
            str(r.iteration),
            repr(r.objective),
            repr(r.terrain_loss),
            repr(r.behavior_loss),
            repr(r.offset_loss),
            repr(r.behavior_reg),
            repr(r.history_reg),
            repr(r.orth_reg),
            repr(r.max_orth_residual),
        ]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# benchmark reports


def _metrics_payload(m: TrialMetrics):
    return {
        "seed": m.seed,
        "outcome": m.outcome,
        "traversal_time": m.traversal_time,
        "inconsistency": m.inconsistency,
        "jerkiness": m.jerkiness,
    }


def _report_payload(r: BenchmarkReport):
    return {
        "trials": r.trials,
        "failure_count": r.failure_count,
        "mean_traversal_time": r.mean_traversal_time,
        "mean_inconsistency": r.mean_inconsistency,
        "mean_jerkiness": r.mean_jerkiness,
        "per_trial": [_metrics_payload(m) for m in r.per_trial],
    }


def save_benchmark_report(json_path, csv_path, arms, scenario: str, cfg_hash: str):
    """Write the paired benchmark result (plus a flat CSV for plotting).

    ``arms`` maps arm name (e.g. full / ablation) to a BenchmarkReport.
    """
    _write_json(json_path, {
        "format": REPORT_FORMAT,
        "version": FORMAT_VERSION,
        "config_hash": cfg_hash,
        "scenario": scenario,
        "arms": {name: _report_payload(r) for name, r in arms.items()},
    })
    lines = ["arm,seed,outcome,traversal_time,inconsistency,jerkiness"]
    for name in sorted(arms):
        for m in arms[name].per_trial:
            lines.append(",".join([
                name,
                str(m.seed),
                m.outcome,
                repr(m.traversal_time),
                repr(m.inconsistency),
                "" if m.jerkiness is None else repr(m.jerkiness),
            ]))
    Path(csv_path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_benchmark_report(json_path):
    """Returns (arms dict of BenchmarkReport, scenario, config_hash)."""
    p = _read_json(json_path, REPORT_FORMAT)
    arms = {}
    for name, rp in p["arms"].items():
        per_trial = tuple(
            TrialMetrics(
                seed=m["seed"],
                outcome=m["outcome"],
                traversal_time=m["traversal_time"],
                inconsistency=m["inconsistency"],
                jerkiness=m["jerkiness"],
            )
            for m in rp["per_trial"]
        )
        arms[name] = BenchmarkReport(
            trials=rp["trials"],
            failure_count=rp["failure_count"],
            mean_traversal_time=rp["mean_traversal_time"],
            mean_inconsistency=rp["mean_inconsistency"],
            mean_jerkiness=rp["mean_jerkiness"],
            per_trial=per_trial,
        )
    return arms, p["scenario"], p["config_hash"]


# ---------------------------------------------------------------------------
# importance report


def save_importance_report(path, report, cfg_hash: str):
    _write_json(path, {
        "format": "terranav-importance",
        "version": FORMAT_VERSION,
        "config_hash": cfg_hash,
        "modalities": {
            name: float(share)
            for name, share in zip(report.modality_names, report.modality_shares)
        },
        "timesteps": [float(s) for s in report.timestep_shares],
    })
