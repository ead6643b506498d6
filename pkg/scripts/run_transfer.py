#!/usr/bin/env python3
"""Cross-corpus transfer experiment: train the extractor on corpus A and
evaluate on corpus B without fine-tuning, next to a same-corpus baseline.

The two configs may differ in corpus root and seed (disjoint identities);
model and descriptor settings should match so feature widths line up.

Example:
    python3 scripts/run_transfer.py --train-config configs/corpus_a.yaml \
        --eval-config configs/corpus_b.yaml --out runs/transfer
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from gaitflow.config import load_config
from gaitflow.pipeline import cmd_synth, cmd_transfer


def ensure_corpus(cfg) -> None:
    if not (Path(cfg.data.root) / "manifest.json").is_file():
        cmd_synth(cfg)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--train-config", required=True)
    ap.add_argument("--eval-config", required=True)
    ap.add_argument("--out", required=True)
    ap.add_argument("--skip-baseline", action="store_true",
                    help="skip the same-corpus baseline on corpus B")
    args = ap.parse_args()

    train_cfg = load_config(args.train_config)
    eval_cfg = load_config(args.eval_config)
    out = Path(args.out)
    ensure_corpus(train_cfg)
    ensure_corpus(eval_cfg)

    transfer = cmd_transfer(train_cfg, eval_cfg, out / "a-to-b")
    print(f"{'setting':>16} {'rank1':>8} {'rank5':>8} {'eer':>8}")
    print(f"{'A -> B':>16} {transfer.rank1:8.4f} {transfer.rank5:8.4f} "
          f"{transfer.eer:8.4f}")

    if not args.skip_baseline:
        baseline = cmd_transfer(eval_cfg, eval_cfg, out / "b-to-b")
        print(f"{'B -> B':>16} {baseline.rank1:8.4f} {baseline.rank5:8.4f} "
              f"{baseline.eer:8.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
