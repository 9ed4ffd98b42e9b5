#!/usr/bin/env python3
"""Desk-scale sweep over the synthetic distributions.

Reproduces the layout of the synthetic benchmark table at reduced budgets:
relative and absolute Bias^2 / Var / MSE of the bias-corrected variance
estimate, per (distribution, d, n). Paper-scale budgets (B = 5n, R = 100,
n up to 5000) are out of desk range; the defaults below finish in tens of
minutes on a small box.
"""

import argparse
import csv
import sys
import time

from subforest.dataset import SyntheticSpec
from subforest.experiments import ExperimentSpec, SyntheticSource, run_metrics
from subforest.forest import ForestConfig
from subforest.tree import TreeConfig

ROWS = [
    ("cosine", 2, 200),
    ("cosine", 2, 1000),
    ("cosine", 10, 200),
    ("xor", 5, 200),
    ("xor", 5, 1000),
    ("and", 20, 200),
]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--b", type=int, default=1000)
    ap.add_argument("--r", type=int, default=50)
    ap.add_argument("--k", type=int, default=25)
    ap.add_argument("--mode", choices=["cart", "honest"], default="cart")
    ap.add_argument("--seed", type=int, default=1234)
    ap.add_argument("--threads", type=int, default=2)
    ap.add_argument("--out", default="table1_deskscale.csv")
    args = ap.parse_args()

    with open(args.out, "w", newline="") as fh:
        fh.write(f"# b={args.b} r={args.r} k={args.k} mode={args.mode} seed={args.seed}\n")
        writer = csv.writer(fh)
        writer.writerow(["Distr", "d", "n", "rel_bias2", "rel_var", "rel_mse",
                         "abs_bias2", "abs_var", "abs_mse", "seconds"])
        for kind, d, n in ROWS:
            t0 = time.time()
            spec = ExperimentSpec(
                source=SyntheticSource(SyntheticSpec(kind, d)),
                n=n, k_test=args.k, r_replicates=args.r,
                forest=ForestConfig(b=args.b, tree=TreeConfig(mode=args.mode)),
                seed=args.seed, n_jobs=args.threads,
            )
            rep = run_metrics(spec)
            dt = time.time() - t0
            writer.writerow([kind, d, n,
                             f"{rep.rel_bias2:.4f}", f"{rep.rel_variance:.4f}", f"{rep.rel_mse:.4f}",
                             f"{rep.abs_bias2:.3e}", f"{rep.abs_variance:.3e}", f"{rep.abs_mse:.3e}",
                             f"{dt:.0f}"])
            fh.flush()
            print(f"{kind:>6} d={d:<3} n={n:<5} rel_mse={rep.rel_mse:.4f} ({dt:.0f}s)", flush=True)
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
