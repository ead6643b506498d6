"""Command-line entry point.

Subcommands: synth, flow, train, extract, evaluate, transfer.  Exit codes:
0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import sys

from .config import load_config
from .errors import ConfigError, DataError, NumericError
from .pipeline import (cmd_evaluate, cmd_extract, cmd_flow, cmd_synth,
                       cmd_train, cmd_transfer)


def _add_config_args(sub):
    sub.add_argument("--config", required=True, help="YAML config file")
    sub.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="override a config key, e.g. train.learning_rate=0.05")


def _load(args):
    return load_config(args.config, overrides=args.set)


def _run_synth(args) -> int:
    cfg = _load(args)
    manifest = cmd_synth(cfg, force=args.force)
    n_videos = len(manifest["conditions"]) * len(manifest["subjects"])
    print(f"wrote corpus under {cfg.data.root}: "
          f"{len(manifest['subjects'])} subjects, {n_videos} videos")
    return 0


def _run_flow(args) -> int:
    cfg = _load(args)
    n = cmd_flow(cfg)
    print(f"flow cached for {n} videos ({cfg.data.mode} mode)")
    return 0


def _run_train(args) -> int:
    cfg = _load(args)
    result = cmd_train(cfg, args.out)
    last = result.log[-1]
    print(last.line())
    print(f"checkpoint written to {args.out}/model.params")
    return 0


def _run_extract(args) -> int:
    cfg = _load(args)
    summary = cmd_extract(cfg, args.checkpoint, args.store)
    print(f"wrote {summary.n_videos} descriptors to {summary.store_path}"
          f" (skipped {summary.n_skipped})")
    return 0


def _run_evaluate(args) -> int:
    cfg = _load(args)
    report = cmd_evaluate(cfg, args.store, args.out)
    print(f"rank1={report.rank1:.4f} rank5={report.rank5:.4f} "
          f"eer={report.eer:.4f}")
    print(f"report written to {args.out}")
    return 0


def _run_transfer(args) -> int:
    train_cfg = load_config(args.train_config)
    eval_cfg = load_config(args.eval_config)
    report = cmd_transfer(train_cfg, eval_cfg, args.out)
    print(f"rank1={report.rank1:.4f} rank5={report.rank5:.4f} "
          f"eer={report.eer:.4f}")
    print(f"report written to {args.out}/eval")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gaitflow",
        description="optical-flow gait recognition pipeline")
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("synth", help="generate the synthetic corpus")
    _add_config_args(sub)
    sub.add_argument("--force", action="store_true",
                     help="overwrite a non-empty corpus directory")
    sub.set_defaults(func=_run_synth)

    sub = subs.add_parser("flow", help="precompute the flow cache")
    _add_config_args(sub)
    sub.set_defaults(func=_run_flow)

    sub = subs.add_parser("train", help="train the descriptor network")
    _add_config_args(sub)
    sub.add_argument("--out", required=True, help="output directory")
    sub.set_defaults(func=_run_train)

    sub = subs.add_parser("extract", help="extract per-video descriptors")
    _add_config_args(sub)
    sub.add_argument("--checkpoint", required=True,
                     help="checkpoint stem (from train --out, <dir>/model)")
    sub.add_argument("--store", required=True, help="descriptor store path")
    sub.set_defaults(func=_run_extract)

    sub = subs.add_parser("evaluate", help="identification + verification")
    _add_config_args(sub)
    sub.add_argument("--store", required=True, help="descriptor store path")
    sub.add_argument("--out", required=True, help="report directory")
    sub.set_defaults(func=_run_evaluate)

    sub = subs.add_parser("transfer",
                          help="train on corpus A, evaluate on corpus B")
    sub.add_argument("--train-config", required=True)
    sub.add_argument("--eval-config", required=True)
    sub.add_argument("--out", required=True, help="output directory")
    sub.set_defaults(func=_run_transfer)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
