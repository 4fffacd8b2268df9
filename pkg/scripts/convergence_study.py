#!/usr/bin/env python3
"""Refinement study of the direct solver against the separable oracle,
for several fractional orders on their default graded meshes."""

import argparse
import math

import numpy as np

from fracvolt import (
    BasisSpec,
    CoefficientSet,
    Problem,
    SourceSpec,
    TimeMesh,
    default_grading,
    solve_direct,
)
from fracvolt.oracle import separable_exact

U0 = "pow(2,0.5)*sin(3.141592653589793*x)"


def study(alpha, grid):
    gamma = default_grading(alpha)
    fine = TimeMesh(1.0, grid[-1], gamma)
    exact_fine = np.array([separable_exact(alpha, math.pi**2, t) for t in fine.nodes])
    problem = Problem(alpha, 1.0, CoefficientSet.from_expressions(),
                      SourceSpec.from_expressions(u0=U0), BasisSpec("sine", 1))
    rows = []
    prev = None
    for N in grid:
        mesh = TimeMesh(1.0, N, gamma)
        tr = solve_direct(problem, mesh)
        err = float(np.max(np.abs(tr.u.values[:, 0] - exact_fine[:: grid[-1] // N])))
        order = math.log2(prev / err) if prev else float("nan")
        rows.append((N, err, order))
        prev = err
    return gamma, rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--alphas", default="0.3,0.5,0.7")
    ap.add_argument("--grid", default="128,256,512,1024")
    args = ap.parse_args()
    grid = [int(s) for s in args.grid.split(",")]

    for alpha in (float(s) for s in args.alphas.split(",")):
        gamma, rows = study(alpha, grid)
        print(f"\nalpha={alpha}  gamma={gamma:.3f}")
        print(f"{'N':>6} {'sup error':>12} {'order':>7}")
        for N, err, order in rows:
            print(f"{N:6d} {err:12.3e} {order:7.2f}")


if __name__ == "__main__":
    main()
