"""Pinned Brownian paths on a truncated time window.

A path lives on a uniform grid ``t_min = tau_0 < ... < tau_N = t_max`` and is
pinned at the right end, ``W(t_max) = 0``.  Increments are generated backward
from ``t_max`` so that deepening ``t_min`` (same ``dt``, same seed) extends a
path without touching its values on the original window.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

SeedLike = Union[int, Sequence[int], np.random.SeedSequence]


class GridMismatchError(ValueError):
    """Two paths (or a path and a curve) live on incompatible time grids."""


@dataclass(frozen=True)
class TimeGrid:
    t_min: float
    t_max: float
    n_steps: int

    def __post_init__(self):
        if not (np.isfinite(self.t_min) and np.isfinite(self.t_max)):
            raise ValueError("grid end points must be finite")
        if not self.t_min < self.t_max:
            raise ValueError(f"t_min={self.t_min} must be < t_max={self.t_max}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps}")
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @classmethod
    def from_dt(cls, t_min: float, t_max: float, dt: float) -> "TimeGrid":
        n = round((t_max - t_min) / dt)
        if n < 1 or abs(n * dt - (t_max - t_min)) > 1e-9 * max(1.0, abs(t_max - t_min)):
            raise ValueError(f"dt={dt} does not divide [{t_min}, {t_max}]")
        return cls(t_min, t_max, n)

    @property
    def dt(self) -> float:
        return (self.t_max - self.t_min) / self.n_steps

    @property
    def nodes(self) -> np.ndarray:
        return self.t_min + self.dt * np.arange(self.n_steps + 1)

    def index_of(self, t: float) -> int:
        """Index of the grid node at time ``t``; raises if ``t`` is not a node."""
        x = (t - self.t_min) / self.dt
        k = int(round(x))
        if abs(x - k) > 1e-6 or k < 0 or k > self.n_steps:
            raise ValueError(f"time {t} is not a node of {self}")
        return k

    def covers(self, s: float, t: float) -> bool:
        tol = 1e-9 * self.dt
        return self.t_min - tol <= s < t <= self.t_max + tol

    def extended(self, t_min: float) -> "TimeGrid":
        """Same spacing, deeper (or shallower) left end."""
        return TimeGrid.from_dt(t_min, self.t_max, self.dt)


@dataclass(frozen=True, eq=False)
class BrownianPath:
    grid: TimeGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n_steps + 1,):
            raise ValueError(
                f"expected {self.grid.n_steps + 1} values, got shape {v.shape}")
        if v[-1] != 0.0:
            raise ValueError("path must be pinned: W(t_max) = 0")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def nodes(self) -> np.ndarray:
        return self.grid.nodes

    def at(self, t: float) -> float:
        return float(self.values[self.grid.index_of(t)])

    def window(self, s: float, t: float) -> np.ndarray:
        """Values on the grid nodes of ``[s, t]`` (both ends included)."""
        return self.values[self.grid.index_of(s):self.grid.index_of(t) + 1]

    def sup_deviation(self, s: float, t: float, ref: float | None = None) -> float:
        """``max_{s <= tau <= t} |W(tau) - W(ref)|`` over grid nodes; ``ref`` defaults to ``t``.

        The window is clipped to the grid.
        """
        s = max(s, self.grid.t_min)
        t = min(t, self.grid.t_max)
        ref = t if ref is None else ref
        i0 = int(math.ceil((s - self.grid.t_min) / self.grid.dt - 1e-6))
        i1 = int(math.floor((t - self.grid.t_min) / self.grid.dt + 1e-6))
        if i1 < i0:
            return 0.0
        return float(np.max(np.abs(self.values[i0:i1 + 1] - self.at(ref))))

    def digest(self) -> str:
        h = hashlib.sha1()
        h.update(np.array([self.grid.t_min, self.grid.t_max, self.grid.n_steps], float).tobytes())
        h.update(self.values.tobytes())
        return h.hexdigest()

    def __add__(self, other):
        if isinstance(other, BrownianPath):
            _check_same_grid(self, other)
            return BrownianPath(self.grid, self.values + other.values)
        return NotImplemented

    def scaled(self, factor: float) -> "BrownianPath":
        return BrownianPath(self.grid, factor * self.values)


@dataclass(frozen=True)
class PcnParams:
    beta: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ValueError("seed must be an unsigned integer")


def _rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, (list, tuple)):
        seed = np.random.SeedSequence([int(s) for s in seed])
    return np.random.default_rng(seed)


def sample_prior(grid: TimeGrid, seed: SeedLike) -> BrownianPath:
    """Draw a pinned Wiener path, building it backward from ``t_max``."""
    z = _rng(seed).standard_normal(grid.n_steps)
    back = np.concatenate(([0.0], np.cumsum(z) * math.sqrt(grid.dt)))
    return BrownianPath(grid, back[::-1].copy())


def zero_path(grid: TimeGrid) -> BrownianPath:
    return BrownianPath(grid, np.zeros(grid.n_steps + 1))


def _check_same_grid(w1: BrownianPath, w2: BrownianPath) -> None:
    if w1.grid != w2.grid:
        raise GridMismatchError(f"incompatible discretizations: {w1.grid} vs {w2.grid}")


def metric_terms(grid: TimeGrid) -> int:
    return max(1, math.ceil(-grid.t_min))


def metric_tail_bound(grid: TimeGrid) -> float:
    """Upper bound on the part of the path metric dropped by truncation."""
    return 2.0 ** -metric_terms(grid)


def metric_d(w1: BrownianPath, w2: BrownianPath) -> float:
    """Truncated path metric ``sum_n 2^-n s_n / (1 + s_n)``, ``n = 1..ceil(-t_min)``.

    ``s_n`` is the grid-node supremum of ``|W1 - W2|`` over
    ``[max(t_min, -n), t_max]``.  The dropped tail is at most
    :func:`metric_tail_bound`.
    """
    _check_same_grid(w1, w2)
    grid = w1.grid
    diff = np.abs(w1.values - w2.values)
    # suffix maxima: running[k] = max(diff[k:])
    running = np.maximum.accumulate(diff[::-1])[::-1]
    total = 0.0
    for n in range(1, metric_terms(grid) + 1):
        lo = max(grid.t_min, -float(n))
        if lo > grid.t_max:
            continue
        k = int(math.ceil((lo - grid.t_min) / grid.dt - 1e-9))
        s = running[min(k, grid.n_steps)]
        total += 2.0 ** -n * s / (1.0 + s)
    return float(total)


def pcn_propose(w: BrownianPath, params: PcnParams, seed_step: int) -> BrownianPath:
    """Prior-preserving autoregressive proposal ``sqrt(1 - beta^2) w + beta xi``."""
    xi = sample_prior(w.grid, (params.seed, int(seed_step)))
    beta = params.beta
    return BrownianPath(w.grid, math.sqrt(1.0 - beta * beta) * w.values + beta * xi.values)


def write_path_csv(path: BrownianPath, dest: str | Path) -> None:
    with open(dest, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["tau", "w"])
        for tau, val in zip(path.nodes, path.values):
            out.writerow([f"{tau:.17g}", f"{val:.17g}"])


def read_path_csv(src: str | Path) -> BrownianPath:
    data = np.loadtxt(src, delimiter=",", skiprows=1, ndmin=2)
    tau, vals = data[:, 0], data[:, 1]
    grid = TimeGrid(float(tau[0]), float(tau[-1]), len(tau) - 1)
    if not np.allclose(grid.nodes, tau, rtol=0, atol=1e-9 * max(1.0, abs(grid.t_min))):
        raise ValueError(f"{src}: nodes are not uniformly spaced")
    return BrownianPath(grid, vals)
