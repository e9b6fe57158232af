#!/usr/bin/env python3
"""Forward problem on the circle: from a sampled forcing path to observations.

Walks through the pieces used by every experiment:

1. draw a Brownian path on a truncated window
2. build the solution at t = 1 as a backward limit from zero data
3. read off point values of the potential and local velocity averages
4. look for windows where the path barely moves (where minimisers coalesce)

Run:
  python demos/01_forward_solve.py
"""
import numpy as np

from hjinverse.action import ActionParams
from hjinverse.diagnostics import detect_narrow_places
from hjinverse.laxoleinik import default_depths, global_solution, lipschitz_estimate, velocity
from hjinverse.observe import g_b, g_hj, solve_for
from hjinverse.problems import default_periodic_problem
from hjinverse.wiener import sample_prior


def main():
    pr = default_periodic_problem(t_min=-8.0)
    W = sample_prior(pr.time_grid, seed=3)
    print(f"path on [{pr.time_grid.t_min}, {pr.time_grid.t_max}] with dt={pr.time_grid.dt}, "
          f"{pr.time_grid.n_steps} steps; W(t_max) = {W.values[-1]}")

    # backward limit: restart from zero data further and further back
    p = ActionParams(pr.setup.F, W, pr.setup.b)
    gs = global_solution(1.0, p, default_depths(1.0, pr.time_grid.t_min), pr.setup.grid,
                         pr.setup.options)
    print("\nstart time   distance to previous start (sup norm, modulo constants)")
    for s, d in zip(gs.depths[1:], gs.deltas):
        print(f"  {s:6.1f}     {d:.2e}")
    print(f"converged: {gs.converged}")

    u = velocity(gs.psi)
    print(f"\nat t = 1: max |u| = {np.abs(u.values).max():.3f}, "
          f"Lipschitz estimate {lipschitz_estimate(gs.psi):.3f}")

    # one composed solve serves all observation times
    traj = solve_for(W, pr.hj, pr.setup)
    print("\npoint observations  phi(x_i, t_i) - phi(0, 0):")
    for (x, t), g in zip(pr.hj.points, g_hj(W, pr.hj, pr.setup, traj)):
        print(f"  x={x:.2f} t={t:.2f}  {g:+.5f}")
    print("local velocity averages:")
    for (c, r, t), g in zip(pr.burgers.functionals, g_b(W, pr.burgers, pr.setup)):
        print(f"  center={c:.2f} radius={r:.2f} t={t:.2f}  {g:+.5f}")

    narrow = detect_narrow_places(W, 1, threshold_scale=1.0)
    print(f"\nunit windows where |W - W(end)| < 1: {narrow}")


if __name__ == "__main__":
    main()
