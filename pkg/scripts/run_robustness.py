#!/usr/bin/env python3
"""Aggregator x attack accuracy table on the standard synthetic task.

    python scripts/run_robustness.py --seeds 3 --out out/robustness.json
"""

import argparse
import time

from _common import fmt, seed_averaged, write_json

AGGREGATORS = ("encagg", "mean", "krum", "median", "trimmed_mean", "fltrust")
ATTACKS = ("none", "gaussian", "sign_flip", "scale", "lie", "min_max", "adaptive_subspace")


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--ratio", type=float, default=0.6)
    ap.add_argument("--rounds", type=int, default=300)
    ap.add_argument("--aggregators", default=",".join(AGGREGATORS))
    ap.add_argument("--attacks", default=",".join(ATTACKS))
    ap.add_argument("--out", default="out/robustness.json")
    args = ap.parse_args()

    aggs = args.aggregators.split(",")
    atks = args.attacks.split(",")
    table = {}
    start = time.perf_counter()
    print(f"{'attack':18s}" + "".join(f"{a:>13s}" for a in aggs))
    for attack in atks:
        ratio = 0.0 if attack == "none" else args.ratio
        cells = []
        for agg in aggs:
            s = seed_averaged(range(args.seeds), aggregator=agg, attack=attack, malicious_ratio=ratio, rounds=args.rounds)
            table[f"{agg}/{attack}"] = s
            cells.append(fmt(s["final_accuracy"]))
        print(f"{attack:18s}" + "".join(f"{c:>13s}" for c in cells), flush=True)
    write_json(args.out, {"ratio": args.ratio, "results": table})
    print(f"wrote {args.out} in {time.perf_counter() - start:.0f}s")


if __name__ == "__main__":
    main()
