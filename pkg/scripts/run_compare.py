"""Curriculum vs one-shot distillation at desk scale; prints accuracy against samples consumed."""

import argparse
import csv
from collections import defaultdict
from pathlib import Path

from parity_distill.harness import load_config, run

ROOT = Path(__file__).resolve().parents[1]


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--config", default=str(ROOT / "configs" / "desk_compare.json"))
    p.add_argument("--out", default="results/desk_compare")
    p.add_argument("--seed", type=int, help="run one seed instead of the configured list")
    args = p.parse_args()

    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed, cfg.seeds = args.seed, None
    bundle = run(cfg, args.out)

    curves = defaultdict(dict)
    with open(Path(args.out) / "compare.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            curves[(row["run_id"], int(row["samples_consumed"]))][row["method"]] = float(row["eval_accuracy"])
    print(f"{'run':<22}{'samples':>10}{'curriculum':>12}{'one-shot':>10}")
    for (rid, n), accs in sorted(curves.items()):
        print(f"{rid:<22}{n:>10}{accs.get('curriculum', float('nan')):>12.3f}{accs.get('oneshot', float('nan')):>10.3f}")
    for seed, s in sorted(bundle.summary["seeds"].items()):
        print(f"seed {seed}: teacher {s['teacher']['eval_accuracy']:.3f}  "
              f"curriculum {s['curriculum']['best_eval_accuracy']:.3f}  "
              f"one-shot {s['oneshot']['best_eval_accuracy']:.3f}")


if __name__ == "__main__":
    main()
