"""Batch entry points: data generation, training, closed-loop evaluation,
benchmarking, and importance inspection.

Every artifact written embeds the format version and the hash of the
effective run configuration; re-running a command with an unchanged config
and seed reproduces the output byte for byte.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import metrics, serialize, simulator, solver
from .config import ConfigError, RunConfig, load_config
from .model import UndefinedImportanceError, importance_report
from .serialize import config_hash
from .simulator import ModelDriver, run_trial
from .tensor_core import DimensionError, NumericError


def _cfg(args) -> tuple[RunConfig, str]:
    cfg = load_config(args.config)
    return cfg, config_hash(cfg.effective)


def cmd_gen_data(args) -> int:
    cfg, h = _cfg(args)
    data_cfg = cfg.effective["data"]
    dataset = simulator.gen_dataset(
        tracks=[cfg.tracks[name] for name in data_cfg["tracks"]],
        setbacks=[cfg.setbacks[name] for name in data_cfg["setbacks"]],
        seeds=data_cfg["seeds"],
        history_len=cfg.hyperparams.history_len,
        params=cfg.sim,
        feature_gen=cfg.feature_generator(),
        speed_table=cfg.speed_table,
        n_types=cfg.terrain_types,
        stride=data_cfg["stride"],
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    serialize.save_dataset(out / "dataset.json", dataset, h)
    print(f"wrote {out / 'dataset.json'} ({dataset.n_instances} instances)")
    return 0


def cmd_train(args) -> int:
    cfg, h = _cfg(args)
    dataset, data_hash = serialize.load_dataset(args.data)
    if data_hash != h:
        print(f"note: dataset config hash {data_hash[:12]} differs from "
              f"config {h[:12]}", file=sys.stderr)
    trace = []
    weights, report = solver.solve(dataset, cfg.hyperparams, cfg.solver, trace=trace)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    serialize.save_checkpoint(out / "checkpoint.json", weights,
                              cfg.hyperparams, dataset.layout, h)
    serialize.save_solver_trace(out / "solver_trace.csv", trace, h)
    status = "converged" if report.converged else "max iterations"
    print(f"wrote {out / 'checkpoint.json'} "
          f"({report.iterations} iterations, {status}, "
          f"objective {report.objective_trace[-1]:.6g})")
    return 0


def _run_scenario_trials(cfg: RunConfig, weights, scenario, trials, seed,
                         use_offset):
    logs = []
    seeds = list(range(seed, seed + trials))
    for s in seeds:
        driver = ModelDriver(weights, cfg.sim.limits, use_offset=use_offset)
        logs.append(run_trial(scenario.track, driver, scenario.setback,
                              cfg.sim, cfg.feature_generator(), s))
    return logs, seeds


def cmd_evaluate(args) -> int:
    cfg, h = _cfg(args)
    weights, _, _, _ = serialize.load_checkpoint(args.ckpt)
    scenario = cfg.scenario(args.scenario)
    logs, seeds = _run_scenario_trials(cfg, weights, scenario, args.trials,
                                       args.seed, use_offset=True)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for s, log in zip(seeds, logs):
        serialize.save_trial_log(out / f"trial_{s}.csv", log, h, seed=s)
    report = metrics.summarize(logs, seeds)
    arms = {"full": report}
    serialize.save_benchmark_report(out / "evaluation.json",
                                    out / "evaluation.csv", arms,
                                    scenario.name, h)
    mi = report.mean_inconsistency
    print(f"wrote {len(logs)} trial logs to {out} "
          f"(failures {report.failure_count}/{report.trials}, "
          f"mean inconsistency {'n/a' if mi is None else f'{mi:.4f}'})")
    return 0


def cmd_benchmark(args) -> int:
    cfg, h = _cfg(args)
    weights, _, _, _ = serialize.load_checkpoint(args.ckpt)
    bench = cfg.effective["benchmark"]
    scenario = cfg.scenario(bench["scenario"])
    trials, seed = bench["trials"], bench["seed"]
    arms = {}
    for name, use_offset in (("full", True), ("ablation", False)):
        logs, seeds = _run_scenario_trials(cfg, weights, scenario, trials,
                                           seed, use_offset=use_offset)
        arms[name] = metrics.summarize(logs, seeds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    serialize.save_benchmark_report(out / "benchmark.json",
                                    out / "benchmark.csv", arms,
                                    scenario.name, h)
    for name, report in arms.items():
        mi = report.mean_inconsistency
        print(f"{name}: failures {report.failure_count}/{report.trials}, "
              f"mean inconsistency {'n/a' if mi is None else f'{mi:.4f}'}")
    print(f"wrote {out / 'benchmark.json'}")
    return 0


def cmd_inspect(args) -> int:
    weights, _, layout, ckpt_hash = serialize.load_checkpoint(args.ckpt)
    report = importance_report(weights, layout)
    print("modality importance:")
    for name, share in zip(report.modality_names, report.modality_shares):
        print(f"  {name}: {share:.1%}")
    print("history step importance (most recent first):")
    for k, share in enumerate(report.timestep_shares):
        print(f"  step -{k}: {share:.1%}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        serialize.save_importance_report(out / "importance.json", report,
                                         ckpt_hash)
        print(f"wrote {out / 'importance.json'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="terranav",
        description="terrain-aware navigation with learned self-correction",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="roll expert demonstrations into a dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="fit the model to a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="run closed-loop trials for a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--scenario", required=True)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("benchmark",
                       help="evaluate the full controller against the no-offset baseline")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_benchmark)

    p = sub.add_parser("inspect", help="report modality and history importance")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_inspect)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, DimensionError, NumericError, UndefinedImportanceError,
            serialize.FormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
