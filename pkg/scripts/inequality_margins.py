#!/usr/bin/env python3
"""Margin statistics for the energy-inequality suite on seeded random
piecewise-linear inputs: how much slack each estimate carries in practice."""

import argparse
from collections import defaultdict

import numpy as np

from fracvolt.energy import check_inequalities, random_pwl
from fracvolt.fracops import TimeMesh


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--draws", type=int, default=100)
    ap.add_argument("--alphas", default="0.25,0.5,0.75")
    ap.add_argument("--N", type=int, default=64)
    args = ap.parse_args()

    mesh = TimeMesh(1.0, args.N, 1.0)
    for alpha in (float(s) for s in args.alphas.split(",")):
        margins = defaultdict(list)
        for d in range(args.draws):
            phi = random_pwl(mesh, 1, np.random.default_rng(args.seed + d))
            psi = random_pwl(mesh, 1, np.random.default_rng(args.seed + 10_000 + d))
            rep = check_inequalities(phi, psi, alpha)
            for r in rep.records:
                margins[r.name].append(r.margin / max(abs(r.rhs), 1e-30))
        print(f"\nalpha={alpha} ({args.draws} draws, N={args.N})")
        print(f"{'inequality':>24} {'min rel margin':>15} {'median':>10}")
        for name, vals in sorted(margins.items()):
            v = np.asarray(vals)
            print(f"{name:>24} {v.min():15.3e} {np.median(v):10.3e}")


if __name__ == "__main__":
    main()
