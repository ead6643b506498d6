#!/usr/bin/env python3
"""Truncation-length experiment: train once, then extract and evaluate
descriptors from only the first L frames for a sweep of lengths.

Example:
    python3 scripts/run_truncation.py --config configs/acceptance.yaml \
        --out runs/trunc --lengths 32 48 0
A length of 0 means the full video.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from gaitflow.config import load_config
from gaitflow.pipeline import cmd_evaluate, cmd_extract, cmd_flow, cmd_synth, cmd_train


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", required=True)
    ap.add_argument("--out", required=True)
    ap.add_argument("--lengths", type=int, nargs="+", default=[32, 48, 0],
                    help="frame counts; 0 = full length")
    args = ap.parse_args()

    cfg = load_config(args.config)
    out = Path(args.out)
    if not (Path(cfg.data.root) / "manifest.json").is_file():
        cmd_synth(cfg)
    cmd_flow(cfg)
    cmd_train(cfg, out / "train")

    rows = []
    for length in args.lengths:
        cfg.descriptor.truncation = length or None
        tag = length or "full"
        summary = cmd_extract(cfg, out / "train" / "model",
                              out / f"descs-{tag}.bin")
        report = cmd_evaluate(cfg, summary.store_path, out / f"eval-{tag}")
        rows.append((tag, report.rank1, report.rank5, report.eer,
                     summary.n_skipped))

    print(f"{'length':>8} {'rank1':>8} {'rank5':>8} {'eer':>8} {'skipped':>8}")
    for tag, r1, r5, eer, skipped in rows:
        print(f"{tag!s:>8} {r1:8.4f} {r5:8.4f} {eer:8.4f} {skipped:8d}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
