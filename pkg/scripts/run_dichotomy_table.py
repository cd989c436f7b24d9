#!/usr/bin/env python3
"""Desk-scale stabilization/explosion table.

Replicates nested box topplings across the mean-mass regimes and prints the
observed plateau/growth frequencies for each one:

  mean < 1            -> plateau expected
  mean > 1            -> growth expected
  mean = 1, heavy d=3 -> growth expected (alpha below d/(d-2))
  infinite-mean tails -> growth expected (positive shift)
"""
import argparse

from sandlab import HeavyTailLaw, dichotomy_experiment

REGIMES = [
    ("subcritical gaussian", 2, HeavyTailLaw.gaussian(1.0), 0.9, (8, 16, 32, 64)),
    ("supercritical gaussian", 2, HeavyTailLaw.gaussian(1.0), 1.1, (8, 16, 32, 64)),
    ("critical heavy-tail d=3", 3, HeavyTailLaw.pareto(1.5), 1.0, (4, 8, 16, 32)),
    ("infinite-mean tails", 3, HeavyTailLaw.pareto(0.7).shifted(0.2), 1.0, (4, 8, 16)),
]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--reps", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print(f"{'regime':28s} {'plateau':>8s} {'growth':>8s} {'unclear':>8s}")
    for name, d, law, mean, radii in REGIMES:
        report = dichotomy_experiment(d, law, mean, radii, args.reps, seed=args.seed)
        print(
            f"{name:28s} {report.counts['plateau']:8d} {report.counts['growth']:8d} "
            f"{report.counts['inconclusive']:8d}"
        )


if __name__ == "__main__":
    main()
