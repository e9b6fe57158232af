#!/usr/bin/env python3
"""Non-periodic forcing: certified constants, the drift variables and the backward time.

On the line, minimisers can only be kept in a bounded region if the forcing
pushes them back.  This demo

1. scans the twin-bump potential for its confinement constants and checks
   the four inequalities they must satisfy
2. estimates the mean of the per-window drift variable and compares it with
   its closed form
3. computes, for a few paths, the backward time after which minimisers are
   confined, and the forward observations on the bounded box

Run:
  python demos/02_nonperiodic_confinement.py
"""
import math

import numpy as np

from hjinverse.diagnostics import (ShallowTruncationError, backward_time, pl_expectation,
                                   sample_pl, tisecond)
from hjinverse.forcing import check_assumption_iii, default_nonperiodic, extract_np_constants
from hjinverse.observe import g_hj
from hjinverse.problems import default_nonperiodic_problem
from hjinverse.wiener import TimeGrid, sample_prior


def main():
    F = default_nonperiodic()
    c = extract_np_constants(F)
    print(f"a={c.a:.4f}  b={c.b_radius:.4f}  L={c.L:.4f}  K={c.K:.2f}  "
          f"L1={c.L1:.2e}  K1={c.K1:.4f}  alpha={c.alpha:.2e}")
    print(check_assumption_iii(c))

    P = sample_pl(10_000, seed=1, c=c)
    print(f"\ndrift variable: sample mean {P.mean():.4f} +- {P.std(ddof=1) / math.sqrt(len(P)):.4f}, "
          f"closed form {pl_expectation(c):.4f}, -L E1/2 = {-c.L * c.E1 / 2:.4f}")

    pr = default_nonperiodic_problem()
    deep = TimeGrid.from_dt(-40.0, 1.0, 0.01)
    print("\nbackward time for the observation at x=0, t=1 (t'' = "
          f"{tisecond(1.0)}):")
    for seed in range(5):
        try:
            print(f"  path {seed}: {backward_time(sample_prior(deep, seed), pr.hj, 0, c)}")
        except ShallowTruncationError as exc:
            print(f"  path {seed}: {exc}")

    W = sample_prior(pr.time_grid, 0)
    g = g_hj(W, pr.hj, pr.setup)
    print(f"\nforward observations on [-{pr.setup.grid.X:.1f}, {pr.setup.grid.X:.1f}]: "
          f"{np.round(g, 5)}")


if __name__ == "__main__":
    main()
