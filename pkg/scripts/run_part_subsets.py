#!/usr/bin/env python3
"""Body-part subset experiment: train one network on all configured parts,
then extract and evaluate descriptors restricted to each part subset.

Example:
    python3 scripts/run_part_subsets.py --config configs/acceptance.yaml \
        --out runs/parts
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from gaitflow.config import load_config
from gaitflow.pipeline import cmd_evaluate, cmd_extract, cmd_flow, cmd_synth, cmd_train

SUBSETS = {
    "right-foot": ["right-foot"],
    "left-foot": ["left-foot"],
    "upper-body": ["upper-body"],
    "lower-body": ["lower-body"],
    "full-body": ["full-body"],
    "feet": ["right-foot", "left-foot"],
    "upper+lower": ["upper-body", "lower-body"],
    "all": ["right-foot", "left-foot", "upper-body", "lower-body", "full-body"],
}


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", required=True)
    ap.add_argument("--out", required=True)
    ap.add_argument("--subsets", nargs="+", default=list(SUBSETS),
                    choices=list(SUBSETS))
    args = ap.parse_args()

    cfg = load_config(args.config)
    out = Path(args.out)
    if not (Path(cfg.data.root) / "manifest.json").is_file():
        cmd_synth(cfg)
    cmd_flow(cfg)
    cmd_train(cfg, out / "train")

    rows = []
    for name in args.subsets:
        cfg.patches.parts = list(SUBSETS[name])
        summary = cmd_extract(cfg, out / "train" / "model",
                              out / f"descs-{name}.bin")
        report = cmd_evaluate(cfg, summary.store_path, out / f"eval-{name}")
        rows.append((name, report.rank1, report.rank5, report.eer))

    print(f"{'subset':>12} {'rank1':>8} {'rank5':>8} {'eer':>8}")
    for name, r1, r5, eer in rows:
        print(f"{name:>12} {r1:8.4f} {r5:8.4f} {eer:8.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
