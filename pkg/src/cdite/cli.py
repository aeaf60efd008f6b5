"""Command-line entry point.

Three subcommands, all driven by JSON config files and a root seed:

* ``simulate``  -- generate one scenario draw as train/test CSVs,
* ``run``       -- fit one pipeline on CSVs and write per-row ITE intervals,
* ``benchmark`` -- run the full scenario x method x replication sweep.

Unknown config keys are hard errors: a silent typo in a method name would
invalidate a benchmark.  Exit codes: 0 success, 1 usage/config error,
2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np
import pandas as pd

from cdite.evaluation import ExperimentConfig, parse_method, run_experiment, write_report
from cdite.ite import ItePipelineConfig, run_pipeline
from cdite.learners import LearnerConfig
from cdite.simulation import ScenarioConfig, gen_scenario
from cdite.tabular import load_csv, write_csv

log = logging.getLogger("cdite")


class ConfigError(ValueError):
    pass


def _check_keys(cfg: dict, allowed: set[str], context: str) -> None:
    unknown = sorted(set(cfg) - allowed)
    if unknown:
        raise ConfigError(f"unknown {context} config keys: {', '.join(unknown)}")


def _load_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    return cfg


_LEARNER_KEYS = {"kind", "iterations", "learning_rate", "max_depth", "probability_clip", "basis"}


def _learner_config(cfg: dict, context: str) -> LearnerConfig:
    _check_keys(cfg, _LEARNER_KEYS, context)
    try:
        return LearnerConfig(**cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {context} config: {exc}") from exc


def _scenario_config(cfg: dict, seed_override: int | None) -> ScenarioConfig:
    _check_keys(cfg, {"n", "n_test", "d", "sigma_kind", "gamma", "seed"}, "scenario")
    if "gamma" not in cfg:
        raise ConfigError("missing required scenario key: gamma")
    if seed_override is not None:
        cfg = {**cfg, "seed": seed_override}
    try:
        return ScenarioConfig(**cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad scenario config: {exc}") from exc


def cmd_simulate(args) -> int:
    cfg = _scenario_config(_load_json(args.config), args.seed)
    os.makedirs(args.out, exist_ok=True)
    print(f"root seed: {cfg.seed}")
    data = gen_scenario(cfg)
    write_csv(data.train, os.path.join(args.out, "train.csv"))
    write_csv(data.test, os.path.join(args.out, "test.csv"))
    print(f"wrote {data.train.n} train rows and {data.test.n} test rows to {args.out}")
    return 0


_RUN_KEYS = {
    "train",
    "test",
    "alpha",
    "score_kind",
    "variant",
    "seed",
    "learner",
    "regressor",
    "propensity_learner",
    "grid_points",
    "inflation",
}


def cmd_run(args) -> int:
    cfg = _load_json(args.config)
    _check_keys(cfg, _RUN_KEYS, "run")
    for key in ("train", "test"):
        if key not in cfg:
            raise ConfigError(f"missing required run key: {key}")
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    kwargs = {}
    for key in ("alpha", "grid_points", "inflation", "score_kind", "variant"):
        if key in cfg:
            kwargs[key] = cfg[key]
    for key in ("learner", "regressor", "propensity_learner"):
        if key in cfg:
            kwargs[key] = _learner_config(cfg[key], key)
    try:
        pipe_cfg = ItePipelineConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    train = load_csv(cfg["train"])
    test = load_csv(cfg["test"])
    if train.treatment is None or train.outcome is None:
        raise ConfigError("train CSV must have 'a' and 'y' columns")
    print(f"root seed: {seed}")
    intervals = run_pipeline(train, pipe_cfg, test.features, seed)
    df = pd.read_csv(cfg["test"])
    df["lo"] = intervals[:, 0]
    df["hi"] = intervals[:, 1]
    df.to_csv(args.out, index=False, float_format="%.15g")
    print(f"wrote {len(df)} intervals to {args.out}")
    return 0


_BENCH_KEYS = {
    "scenarios",
    "methods",
    "alpha",
    "replications",
    "base_seed",
    "learner",
    "regressor",
    "propensity_learner",
    "grid_points",
    "inflation",
}


def cmd_benchmark(args) -> int:
    cfg = _load_json(args.config)
    _check_keys(cfg, _BENCH_KEYS, "benchmark")
    for key in ("scenarios", "methods"):
        if key not in cfg:
            raise ConfigError(f"missing required benchmark key: {key}")
    if not cfg["methods"]:
        raise ConfigError("methods list must be nonempty")
    try:
        methods = tuple(parse_method(m) for m in cfg["methods"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    scenarios = tuple(_scenario_config(s, None) for s in cfg["scenarios"])
    base_seed = args.seed if args.seed is not None else int(cfg.get("base_seed", 0))
    kwargs = {}
    for key in ("alpha", "replications", "grid_points", "inflation"):
        if key in cfg:
            kwargs[key] = cfg[key]
    for key in ("learner", "regressor", "propensity_learner"):
        if key in cfg:
            kwargs[key] = _learner_config(cfg[key], key)
    try:
        exp = ExperimentConfig(scenarios=scenarios, methods=methods, base_seed=base_seed, **kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    threads = args.threads
    if threads is None:
        threads = int(os.environ.get("CDITE_THREADS", "1"))
    print(f"root seed: {base_seed}")
    result = run_experiment(exp, threads=threads, collect_details=True)
    os.makedirs(args.out, exist_ok=True)
    metrics_path = os.path.join(args.out, "metrics.csv")
    write_report(result.rows, metrics_path, details=result.details)
    for err in result.errors:
        log.warning("cell failed: %s", err)

    header = f"{'method':<14}{'scenario':<30}{'coverage':>10}{'avg_len':>10}"
    print(header)
    print("-" * len(header))
    for row in result.rows:
        print(f"{row.method:<14}{row.scenario:<30}{row.coverage:>10.3f}{row.avg_len:>10.3f}")
    print(f"wrote {metrics_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cdite",
        description="Conformal ITE intervals: simulate data, run a pipeline, or benchmark methods.",
    )
    parser.add_argument("--verbose", "-v", action="count", default=0, help="increase log verbosity")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, out_help in (
        ("simulate", cmd_simulate, "output directory for train.csv/test.csv"),
        ("run", cmd_run, "output CSV of intervals"),
        ("benchmark", cmd_benchmark, "output directory for report CSVs"),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", required=True, help=out_help)
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=int, default=None, help="parallel workers (benchmark)")
        p.set_defaults(fn=fn)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2))
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
