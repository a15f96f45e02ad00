#!/usr/bin/env python3
"""Sensitivity of EnCAgg to the radius coefficient r at a fixed malicious ratio.

    python scripts/radius_sweep.py --attack adaptive_subspace --seeds 5
"""

import argparse

from _common import fmt, seed_averaged, write_json

RADII = (0.1, 0.2, 0.3, 0.5, 0.7, 0.8, 0.9)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--attack", default="adaptive_subspace")
    ap.add_argument("--ratio", type=float, default=0.6)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--out", default="out/radius_sweep.json")
    args = ap.parse_args()

    rows = []
    print(f"{'r':>5s} {'accuracy':>9s} {'precision':>10s} {'fallback':>9s}")
    for r in RADII:
        s = seed_averaged(range(args.seeds), attack=args.attack, malicious_ratio=args.ratio, r=r)
        s["r"] = r
        rows.append(s)
        print(f"{r:5.2f} {fmt(s['final_accuracy']):>9s} {fmt(s['mean_precision']):>10s} {fmt(s['fallback_rate']):>9s}", flush=True)
    write_json(args.out, {"attack": args.attack, "ratio": args.ratio, "rows": rows})


if __name__ == "__main__":
    main()
