#!/usr/bin/env python3
"""Stability of the posterior under perturbations of the data.

For data vectors y and y' a distance eps apart, the Hellinger distance
between the two posteriors should shrink at least linearly in eps.  Both
posteriors are estimated by importance weights on one shared set of prior
draws, so each draw costs a single forward solve.

With 1000 draws this runs in about two minutes; the acceptance suite uses
10 000.

Run:
  python demos/04_wellposedness.py
"""
import numpy as np

from hjinverse.inference import Posterior, wellposedness_experiment
from hjinverse.problems import default_periodic_problem


def main():
    pr = default_periodic_problem()
    post = Posterior(pr.hj, "hj", pr.time_grid, pr.setup)
    rep = wellposedness_experiment(post, r=1.0, n_pairs=4, n_samples=1000, seed=0)
    print("separation   mean distance   mean std error")
    for j, eps in enumerate(rep.separations):
        print(f"  {eps:8.4f}   {rep.distances[:, j].mean():.4f}          "
              f"{rep.std_errors[:, j].mean():.4f}")
    print(f"\nlog-log slope {rep.slope:.2f} (small separations {rep.slope_small:.2f})")
    print(f"largest distance / separation ratio {rep.lipschitz:.2f}")
    print(f"distance of a posterior to itself: {rep.self_distance}")
    print(f"label: {rep.to_dict()['label']}")


if __name__ == "__main__":
    main()
