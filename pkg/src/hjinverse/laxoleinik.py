"""Lax operator on a spatial grid, backward-limit global solutions, velocity fields."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels as kern
from .action import ActionParams, ConvergenceError, SolverOptions, window_values

log = logging.getLogger(__name__)


class TruncationError(RuntimeError):
    """The time window is too shallow for the backward limit to settle."""


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform 1-D grid: ``n`` points on ``[0, 1)`` (periodic) or on ``[-X, X]``."""

    periodic: bool
    n: int
    X: float = 0.5

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise ValueError(f"need at least 3 grid points, got {self.n}")
        if not self.periodic and not self.X > 0:
            raise ValueError("box half-width X must be positive")

    @property
    def x0(self) -> float:
        return 0.0 if self.periodic else -self.X

    @property
    def h(self) -> float:
        return 1.0 / self.n if self.periodic else 2.0 * self.X / (self.n - 1)

    @property
    def points(self) -> np.ndarray:
        return self.x0 + self.h * np.arange(self.n)

    def interp(self, values: np.ndarray, x) -> np.ndarray:
        """Linear interpolation; periodic grids wrap, boxes clamp at the edges."""
        x = np.asarray(x, dtype=float)
        if self.periodic:
            xs = np.append(self.points, 1.0)
            vs = np.append(values, values[0])
            return np.interp(np.mod(x, 1.0), xs, vs)
        return np.interp(x, self.points, values)


@dataclass(frozen=True, eq=False)
class GridFunction:
    grid: SpatialGrid
    values: np.ndarray = field(repr=False)
    time_stamp: float = 0.0
    b: float = 0.0

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} values, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def normalized(self) -> "GridFunction":
        return GridFunction(self.grid, self.values - self.values.mean(), self.time_stamp, self.b)

    def shifted(self, c: float) -> "GridFunction":
        return GridFunction(self.grid, self.values + c, self.time_stamp, self.b)

    def at(self, x) -> np.ndarray:
        return self.grid.interp(self.values, x)

    def full(self, x) -> np.ndarray:
        """``b x + psi(x)``, the unreduced potential at ``x``."""
        return self.b * np.asarray(x, dtype=float) + self.at(x)

    def distance_mod_const(self, other: "GridFunction") -> float:
        """Sup norm of the difference after removing both means."""
        if self.grid != other.grid:
            raise ValueError("grid functions live on different grids")
        d = self.values - other.values
        return float(np.max(np.abs(d - d.mean())))

    def write_csv(self, dest: str | Path) -> None:
        with open(dest, "w") as fh:
            fh.write(f"# time_stamp={self.time_stamp:.17g}\n")
            fh.write("x,value\n")
            for x, v in zip(self.grid.points, self.values):
                fh.write(f"{x:.17g},{v:.17g}\n")


@dataclass(frozen=True, eq=False)
class VelocityField:
    grid: SpatialGrid
    values: np.ndarray = field(repr=False)
    time_stamp: float = 0.0

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n,) or not np.all(np.isfinite(v)):
            raise ValueError("velocity values must be finite, one per grid point")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


def read_grid_function_csv(src: str | Path, periodic: bool, b: float = 0.0) -> GridFunction:
    with open(src) as fh:
        first = fh.readline().strip()
    if not first.startswith("# time_stamp="):
        raise ValueError(f"{src}: missing time_stamp header")
    stamp = float(first.split("=", 1)[1])
    data = np.loadtxt(src, delimiter=",", skiprows=2, ndmin=2)
    x = data[:, 0]
    grid = SpatialGrid(True, len(x)) if periodic else SpatialGrid(False, len(x), float(-x[0]))
    return GridFunction(grid, data[:, 1], stamp, b)


def default_options(grid: SpatialGrid) -> SolverOptions:
    if grid.periodic:
        return SolverOptions(lattice_h=grid.h)
    return SolverOptions(lattice_h=grid.h, vmax=10.0, stride=5)


@dataclass(frozen=True, eq=False)
class LaxDetails:
    psi: GridFunction
    raw: np.ndarray
    starts: np.ndarray
    velocities: np.ndarray
    residuals: np.ndarray
    saturated: int


def _lax_raw(psi_values: np.ndarray, grid: SpatialGrid, s: float, t: float,
             p: ActionParams, opts: SolverOptions):
    sub, w = window_values(p.W, s, t)
    kind, P = p.F.kernel_spec()
    S = opts.stride_for(sub.n_steps)
    K = opts.offsets_for(S, sub.dt, grid.h)
    vals, starts, vel, res, _, sat = kern.lax_window(
        kind, P, np.ascontiguousarray(psi_values, dtype=float), grid.periodic, grid.x0,
        grid.h, w, sub.dt, p.b, S, K, opts.tol, opts.max_iter, opts.max_shift)
    bad = np.nonzero(~(res <= opts.accept_tol * (1.0 + np.abs(vals))))[0]
    if len(bad):
        i = int(bad[0])
        raise ConvergenceError(
            f"minimiser at grid point x={grid.points[i]:.6g} (window [{s}, {t}]) "
            f"has residual {res[i]:.3g}", residual=float(res[i]), where=float(grid.points[i]))
    if sat:
        log.warning("lattice initialiser hit its speed limit on %d of %d points in [%g, %g]",
                    sat, grid.n, s, t)
    if not grid.periodic:
        edge = np.isclose(starts, grid.x0) | np.isclose(starts, grid.x0 + (grid.n - 1) * grid.h)
        if np.any(edge):
            log.warning("%d minimisers start on the box boundary in [%g, %g]; enlarge X",
                        int(edge.sum()), s, t)
    return vals, starts, vel, res, sat


def lax_apply(psi_s: GridFunction, window: tuple[float, float], p: ActionParams,
              options: SolverOptions | None = None, normalize: bool = True,
              details: bool = False):
    """Evaluate ``min_gamma psi_s(gamma(s)) + A(gamma)`` at every grid point.

    With ``normalize`` the result has zero mean; the Lax operator commutes
    with adding constants, so nothing else changes.  ``details=True`` returns
    a :class:`LaxDetails` record with start points, terminal velocities and
    residuals.
    """
    s, t = window
    if abs(psi_s.time_stamp - s) > 1e-9 * max(1.0, abs(s)):
        raise ValueError(f"psi_s is stamped {psi_s.time_stamp}, window starts at {s}")
    opts = options or default_options(psi_s.grid)
    vals, starts, vel, res, sat = _lax_raw(psi_s.values, psi_s.grid, s, t, p, opts)
    out = vals - vals.mean() if normalize else vals
    gf = GridFunction(psi_s.grid, out, float(t), p.b)
    if details:
        return LaxDetails(gf, vals, starts, vel, res, sat)
    return gf


def _stage_times(t_start: float, stops: Sequence[float], unit: float) -> list[float]:
    """Window boundaries: unit steps aligned to each stop, plus the stops themselves."""
    marks = {round(t, 12) for t in stops}
    last = max(stops)
    k = 0
    while last - k * unit > t_start + 1e-12:
        marks.add(round(last - k * unit, 12))
        k += 1
    return sorted(m for m in marks if m > t_start + 1e-12)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Anchored solution snapshots from a single composed solve.

    ``fields[t]`` holds ``psi(., t)`` with a common additive constant across
    all recorded times; ``velocity[t]`` the terminal velocities of the
    minimisers.  ``max_relative_residual`` is the worst stationarity residual
    over ``1 + |value|`` across every window.
    """

    fields: dict
    velocity: dict
    max_residual: float
    saturated: int
    max_relative_residual: float = 0.0


def evolve(p: ActionParams, grid: SpatialGrid, t_start: float, record: Sequence[float],
           options: SolverOptions | None = None, unit: float = 1.0) -> Trajectory:
    """Start from ``psi = 0`` at ``t_start`` and record the solution at ``record`` times."""
    opts = options or default_options(grid)
    record = sorted(float(r) for r in record)
    if record[0] <= t_start:
        raise ValueError("record times must follow the start time")
    psi = np.zeros(grid.n)
    const = 0.0
    cur = t_start
    fields, vels = {}, {}
    worst = worst_rel = 0.0
    sat_total = 0
    rec = {round(r, 12) for r in record}
    for stop in _stage_times(t_start, record, unit):
        vals, _, vel, res, sat = _lax_raw(psi, grid, cur, stop, p, opts)
        worst = max(worst, float(res.max()))
        worst_rel = max(worst_rel, float(np.max(res / (1.0 + np.abs(vals)))))
        sat_total += sat
        m = vals.mean()
        psi = vals - m
        const += m
        cur = stop
        if stop in rec:
            fields[stop] = GridFunction(grid, psi + const, stop, p.b)
            vels[stop] = vel.copy()
    return Trajectory(fields, vels, worst, sat_total, worst_rel)


@dataclass(frozen=True, eq=False)
class GlobalSolution:
    psi: GridFunction
    depths: tuple
    deltas: np.ndarray
    converged: bool
    stages: tuple


def global_solution(t_eval: float, p: ActionParams, depth_schedule: Sequence[float],
                    grid: SpatialGrid, options: SolverOptions | None = None,
                    tol: float = 1e-3, unit: float = 1.0) -> GlobalSolution:
    """Backward-limit construction from zero data at successively earlier times.

    For each start time ``s_k`` the zero function is propagated to
    ``t_eval`` through unit windows.  ``deltas[k-1]`` is the zero-mean sup
    distance between the results for ``s_{k-1}`` and ``s_k``.

    Raises
    ------
    TruncationError
        When the last distance exceeds ``tol`` and has not decreased.
    """
    depths = [float(s) for s in depth_schedule]
    if any(b >= a for a, b in zip(depths, depths[1:])):
        raise ValueError("depth schedule must be strictly decreasing")
    if depths[-1] < p.W.grid.t_min - 1e-9:
        raise TruncationError(
            f"depth {depths[-1]} lies before the path start {p.W.grid.t_min}; deepen t_min")
    if depths[0] >= t_eval:
        raise ValueError("start times must precede t_eval")
    stages = []
    for s in depths:
        traj = evolve(p, grid, s, [t_eval], options, unit)
        stages.append(traj.fields[round(t_eval, 12)].normalized())
    deltas = np.array([a.distance_mod_const(b) for a, b in zip(stages, stages[1:])])
    converged = bool(len(deltas) and deltas[-1] <= tol)
    if len(deltas) >= 2 and not converged and deltas[-1] >= deltas[-2]:
        raise TruncationError(
            f"backward limit not settling (last distances {deltas[-2]:.3g}, {deltas[-1]:.3g}); "
            "deepen t_min")
    if not converged:
        log.warning("backward limit not converged: last distance %s > %g",
                    deltas[-1] if len(deltas) else None, tol)
    return GlobalSolution(stages[-1], tuple(depths), deltas, converged, tuple(stages))


def velocity(phi: GridFunction) -> VelocityField:
    """``b + d psi/dx`` by central differences (wrapped or one-sided at the box edge)."""
    g = phi.grid
    v = phi.values
    if g.periodic:
        d = (np.roll(v, -1) - np.roll(v, 1)) / (2 * g.h)
    else:
        d = np.gradient(v, g.h)
    return VelocityField(g, d + phi.b, phi.time_stamp)


def lipschitz_estimate(phi: GridFunction) -> float:
    """Largest slope of ``b x + psi`` between adjacent grid points."""
    g = phi.grid
    v = phi.values
    diffs = np.diff(np.append(v, v[0])) if g.periodic else np.diff(v)
    return float(np.max(np.abs(diffs / g.h + phi.b)))


def default_depths(t_eval: float, t_min: float, first: float = 1.0) -> list[float]:
    """Integer-spaced start times from ``t_eval - first`` down to ``t_min``."""
    out = []
    k = first
    while t_eval - k >= t_min - 1e-9:
        out.append(t_eval - k)
        k += 1.0
    return out


def solution_from_zero(t_eval: float, s: float, p: ActionParams, grid: SpatialGrid,
                       options: SolverOptions | None = None) -> GridFunction:
    return evolve(p, grid, s, [t_eval], options).fields[round(t_eval, 12)]


__all__ = [
    "SpatialGrid", "GridFunction", "VelocityField", "LaxDetails", "Trajectory",
    "GlobalSolution", "TruncationError", "lax_apply", "evolve", "global_solution",
    "velocity", "lipschitz_estimate", "default_depths", "read_grid_function_csv",
    "default_options", "solution_from_zero",
]
