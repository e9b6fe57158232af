"""Ready-made default problems shared by the demos, the CLI configs and the test suite."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forcing import default_nonperiodic, default_periodic
from .laxoleinik import SpatialGrid, default_options
from .observe import ForwardSetup, ObservationSet
from .wiener import TimeGrid


@dataclass(frozen=True)
class Problem:
    time_grid: TimeGrid
    setup: ForwardSetup
    hj: ObservationSet
    burgers: ObservationSet


def default_periodic_problem(t_min: float = -4.0, n_x: int = 128, dt: float = 0.01,
                             b: float = 0.0, noise: float = 1e-3) -> Problem:
    """Two-mode periodic potential, three point observations and two local averages.

    ``noise`` is the per-component observation variance.
    """
    grid = SpatialGrid(True, n_x)
    setup = ForwardSetup(default_periodic(), grid, b, default_options(grid))
    tg = TimeGrid.from_dt(t_min, 1.0, dt)
    hj = ObservationSet.hj([(0.2, 1.0), (0.5, 1.0), (0.8, 0.5)], (0.0, 0.0), noise * np.eye(3))
    burgers = ObservationSet.burgers([(0.25, 0.1, 1.0), (0.7, 0.1, 0.5)], noise * np.eye(2))
    return Problem(tg, setup, hj, burgers)


def default_nonperiodic_problem(t_min: float = -4.0, n_x: int = 256, dt: float = 0.002,
                                X: float = 0.3, noise: float = 1e-3) -> Problem:
    """Two-bump potential on ``[-X, X]`` with observations inside the confinement ball."""
    grid = SpatialGrid(False, n_x, X)
    setup = ForwardSetup(default_nonperiodic(), grid, 0.0, default_options(grid))
    tg = TimeGrid.from_dt(t_min, 1.0, dt)
    hj = ObservationSet.hj([(-0.05, 1.0), (0.05, 1.0), (0.0, 0.5)], (0.0, 0.0), noise * np.eye(3))
    burgers = ObservationSet.burgers([(-0.03, 0.05, 1.0), (0.03, 0.05, 0.5)], noise * np.eye(2))
    return Problem(tg, setup, hj, burgers)


def inversion_observations(noise: float = 1e-3) -> ObservationSet:
    """Sixteen point values on four times in ``(0, 1]``, referenced to ``(0, 0)``.

    Dense enough that the posterior mean recovers the recent forcing history.
    """
    pts = [(x, t) for t in (0.25, 0.5, 0.75, 1.0) for x in (0.1, 0.35, 0.6, 0.85)]
    return ObservationSet.hj(pts, (0.0, 0.0), noise * np.eye(len(pts)))
