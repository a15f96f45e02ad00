#!/usr/bin/env python3
"""EnCAgg accuracy and filter quality as the malicious ratio grows.

    python scripts/ratio_sweep.py --attack scale --seeds 5
"""

import argparse

from _common import fmt, seed_averaged, write_json

RATIOS = (0.0, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--attack", default="scale")
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--k", type=int, default=2, help="known-benign clients; 2 keeps ratio 0.8 valid")
    ap.add_argument("--out", default="out/ratio_sweep.json")
    args = ap.parse_args()

    rows = []
    print(f"{'ratio':>6s} {'accuracy':>9s} {'precision':>10s} {'exclusion':>10s}")
    for ratio in RATIOS:
        attack = "none" if ratio == 0 else args.attack
        s = seed_averaged(range(args.seeds), attack=attack, malicious_ratio=ratio, k=args.k)
        rows.append(s)
        print(f"{ratio:6.2f} {fmt(s['final_accuracy']):>9s} {fmt(s['mean_precision']):>10s} {fmt(s['exclusion_rate']):>10s}", flush=True)
    write_json(args.out, {"attack": args.attack, "rows": rows})


if __name__ == "__main__":
    main()
