"""Command-line entry point.

Exit codes: 0 success, 2 config (parse/validation) errors, 1 anything else.
--threads only changes scheduling of independent seed runs; outputs are
byte-identical for any thread count.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

from . import harness, model
from .errors import KdlabError, ParseError, ValidationError
from .version import VERSION


def _load_config(path: str, args) -> harness.ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        cfg = harness.parse_config(fh.read())
    if args.seed is not None:
        raw = dict(cfg.raw)
        raw["seed"] = args.seed
        cfg = dataclasses.replace(cfg, seed=args.seed, raw=raw)
    if args.out_dir is not None:
        cfg = dataclasses.replace(cfg, out_dir=args.out_dir)
    return cfg


def _force_recipe(cfg: harness.ExperimentConfig, recipe: str) -> harness.ExperimentConfig:
    if cfg.recipe == recipe:
        return cfg
    raw = dict(cfg.raw)
    raw["recipe"] = recipe
    return dataclasses.replace(cfg, recipe=recipe, raw=raw)


def _cmd_run(cfg: harness.ExperimentConfig, args) -> int:
    report = harness.run_recipe(cfg, threads=args.threads)
    for name, path in sorted(report.outputs.items()):
        print(f"{report.recipe} [{report.config_digest}] wrote {path}")
    return 0


def _cmd_train_teacher(cfg: harness.ExperimentConfig, args) -> int:
    traj, result, _, _ = harness.train_teacher(cfg)
    os.makedirs(cfg.out_dir, exist_ok=True)
    for ckpt in traj.checkpoints:
        model.save(ckpt, os.path.join(cfg.out_dir, f"teacher_{ckpt.epoch_index:04d}.ckpt"))
    metrics_path = os.path.join(cfg.out_dir, "teacher_metrics.csv")
    harness.emit_csv(metrics_path, harness.METRICS_HEADER,
                     harness._metrics_rows(result))
    print(f"trained teacher for {len(traj.checkpoints)} epochs, wrote {metrics_path}")
    return 0


def main(argv: list | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="kdlab",
        description="desk-scale laboratory for kernel views of distillation",
    )
    parser.add_argument("--version", action="version", version=f"kdlab {VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "run": None,  # recipe taken from the config file
        "train-teacher": None,
        "complexity": "complexity_curve",
        "ntk-sim": "ntk_similarity",
        "bound": "bound_check",
    }
    for name in commands:
        p = sub.add_parser(name)
        p.add_argument("config", help="path to a TOML experiment config")
        p.add_argument("--out-dir", default=None)
        p.add_argument("--seed", type=int, default=None,
                       help="override the master seed")
        p.add_argument("--threads", type=int, default=1,
                       help="workers for independent seed runs (numerically inert)")
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args.config, args)
        forced = commands[args.command]
        if forced is not None:
            cfg = _force_recipe(cfg, forced)
        if args.command == "train-teacher":
            return _cmd_train_teacher(cfg, args)
        return _cmd_run(cfg, args)
    except (ParseError, ValidationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (KdlabError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
