#!/usr/bin/env python3
"""Track the generator's gradient norm against the averaged descent bound.

Captures the generator training inputs from round 0 of the standard task and
runs T plain gradient steps on them, printing min |grad| over the bound
sqrt(2 L0 / (lr T)). Use --alpha 0 to drop the non-smooth mean-offset term.
"""

import argparse
import math

from encagg import generator as G, pipeline
from encagg.config import ExperimentConfig
from encagg.simulation import run_experiment


def capture(seed):
    box = []
    real = pipeline.train_step

    def spy(model, noise, labels, center, eps, hyper=None):
        box.append((model, noise, labels, center, eps))
        return real(model, noise, labels, center, eps, hyper)

    pipeline.train_step = spy
    try:
        run_experiment(ExperimentConfig(rounds=1, seed=seed).validate())
    finally:
        pipeline.train_step = real
    return box[0]


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seeds", type=int, default=6)
    ap.add_argument("--steps", type=int, default=500)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--alpha", type=float, default=None, help="override the direction-loss weight")
    args = ap.parse_args()

    hyper = G.GeneratorHyper(lr=args.lr)
    if args.alpha is not None:
        hyper = G.GeneratorHyper(lr=args.lr, alpha=args.alpha)
    for seed in range(args.seeds):
        model, noise, labels, center, eps = capture(seed)
        l0, best = None, math.inf
        for _ in range(args.steps):
            rep, grads = G.loss_and_grad(model, noise, labels, center, eps, hyper)
            l0 = rep.l_total if l0 is None else l0
            best = min(best, G.grad_norm(grads))
            model, _ = G.train_step(model, noise, labels, center, eps, hyper)
        bound = math.sqrt(2 * l0 / (hyper.lr * args.steps))
        print(f"seed {seed}: L0 {l0:.4f} min|grad| {best:.4f} bound {bound:.4f} ratio {best / bound:.2f}")


if __name__ == "__main__":
    main()
