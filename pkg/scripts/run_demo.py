#!/usr/bin/env python3
"""Run the self-training demo across several seeds and summarize.

Usage: python scripts/run_demo.py [--config configs/demo.cfg] [--out demo_out]
                                  [--seeds 0 1 2] [--workers N]

Writes one report per seed plus an aggregate trend check: for each seed,
does test LER order as seed model > 1-best >= best confusion-network
condition, and does the pruned probabilistic CN beat the unpruned
unit-weight CN?
"""

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from gtc import io as gio
from gtc.toy import ExperimentConfig, self_train_experiment


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    root = Path(__file__).resolve().parent.parent
    ap.add_argument("--config", default=str(root / "configs" / "demo.cfg"))
    ap.add_argument("--out", default="demo_out")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    config = ExperimentConfig.from_mapping(gio.read_config(args.config))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    votes = []
    for seed in args.seeds:
        t0 = time.time()
        report = self_train_experiment(
            replace(config, seed=seed, workers=args.workers))
        gio.write_text_atomic(out / f"report_seed{seed}.tsv", report.to_tsv())
        gio.write_text_atomic(out / f"summary_seed{seed}.txt", report.summary())
        seed_ler = report.condition("seed").test_ler
        best_1best = report.condition("1best").test_ler
        cn = [r for r in report.conditions if r.name.startswith("cn-")]
        best_cn = min(r.test_ler for r in cn)
        prob_pruned = min(r.test_ler for r in cn
                          if "prob" in r.name and not r.name.endswith("eta0"))
        unit_unpruned = report.condition("cn-unit-eta0").test_ler
        ok = (seed_ler > best_1best >= best_cn) and (prob_pruned <= unit_unpruned)
        votes.append(ok)
        print(f"seed {seed}: seed {seed_ler:.4f}  1best {best_1best:.4f}  "
              f"best CN {best_cn:.4f}  prob+pruned {prob_pruned:.4f}  "
              f"unit+unpruned {unit_unpruned:.4f}  trend={'OK' if ok else 'MISS'}  "
              f"({time.time() - t0:.0f}s)")
    print(f"trend holds on {sum(votes)}/{len(votes)} seeds")
    return 0 if sum(votes) * 2 > len(votes) else 1


if __name__ == "__main__":
    sys.exit(main())
