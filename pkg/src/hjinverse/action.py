"""Discrete stochastic action and its minimisation over piecewise-linear curves.

Curves live on the nodes of the path grid.  For a curve ``g`` on ``[s, t]``
with velocities ``v_k`` the action is evaluated in integrated-by-parts form,

    A(g) = sum_k dt/2 |v_k - b|^2 + sum_k (F(g_{k+1}) - F(g_k)) (W_k + W_{k+1} - 2 W(t)) / 2
           - b^2 (t - s) / 2 - F(g_0) (W(t) - W(s)),

i.e. the exact increment of ``F`` along a segment times the trapezoidal
average of ``W - W(t)``.  This quadrature telescopes to the per-step
Stratonovich sum used by the compiled kernels, so values agree to rounding
and the discrete action splits exactly over sub-windows.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels as kern
from .forcing import Potential
from .wiener import BrownianPath, GridMismatchError, TimeGrid

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    """The optimiser left its budget without meeting the stationarity tolerance."""

    def __init__(self, message: str, best: "Curve | None" = None,
                 residual: float = math.inf, where=None):
        super().__init__(message)
        self.best = best
        self.residual = residual
        self.where = where


@dataclass(frozen=True, eq=False)
class Curve:
    grid: TimeGrid
    points: np.ndarray = field(repr=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.shape != (self.grid.n_steps + 1,):
            raise ValueError(f"expected {self.grid.n_steps + 1} points, got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("curve points must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def times(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def velocities(self) -> np.ndarray:
        return np.diff(self.points) / self.grid.dt

    def write_csv(self, dest: str | Path) -> None:
        np.savetxt(dest, np.column_stack([self.times, self.points]), delimiter=",",
                   header="tau,x", comments="", fmt="%.17g")


@dataclass(frozen=True)
class ActionParams:
    F: Potential
    W: BrownianPath
    b: float = 0.0

    def __post_init__(self):
        if not self.F.periodic and self.b != 0.0:
            raise ValueError("a mean velocity b is only meaningful for periodic forcing")
        if not np.isfinite(self.b):
            raise ValueError("b must be finite")


@dataclass(frozen=True)
class SolverOptions:
    """Optimiser settings.

    ``tol`` is the Newton target and ``accept_tol`` the stationarity level a
    minimiser must reach, both relative to ``1 + |value|``.  The coarse
    dynamic-programming initialiser uses straight segments spanning
    ``stride`` time steps with speeds up to ``vmax``.
    """

    tol: float = 1e-9
    accept_tol: float = 1e-6
    max_iter: int = 10_000
    stride: int = 10
    vmax: float = 3.0
    max_shift: int = 50
    lattice_h: float = 1.0 / 128
    fixed_margin: float = 0.5
    seed: int = 0

    def stride_for(self, n: int) -> int:
        """Largest divisor of ``n`` not exceeding ``stride`` that leaves ten or more segments.

        Short windows fall back to node resolution.
        """
        cap = max(1, min(self.stride, n // 10))
        return max(d for d in range(1, cap + 1) if n % d == 0)

    def offsets_for(self, S: int, dt: float, h: float, vmax: float | None = None) -> int:
        vm = self.vmax if vmax is None else vmax
        return max(1, math.ceil(vm * S * dt / h - 1e-9))


@dataclass(frozen=True)
class FixedStart:
    x_start: float
    init: Curve | None = None


@dataclass(frozen=True)
class FreeStart:
    psi_s: object  # GridFunction; typed loosely to avoid an import cycle


@dataclass(frozen=True, eq=False)
class MinimizerResult:
    curve: Curve
    value: float
    residual: float
    saturated: bool = False

    def __iter__(self):
        yield self.curve
        yield self.value


def window_values(W: BrownianPath, s: float, t: float) -> tuple[TimeGrid, np.ndarray]:
    """Sub-grid and path values on ``[s, t]``; both ends must be path nodes."""
    try:
        i, j = W.grid.index_of(s), W.grid.index_of(t)
    except ValueError as exc:
        raise GridMismatchError(f"window [{s}, {t}] is not aligned with the path grid") from exc
    if j <= i:
        raise ValueError(f"empty window [{s}, {t}]")
    sub = TimeGrid(float(W.grid.nodes[i]), float(W.grid.nodes[j]), j - i)
    return sub, np.ascontiguousarray(W.values[i:j + 1])


def _curve_path(curve: Curve, p: ActionParams) -> np.ndarray:
    g = curve.grid
    if abs(g.dt - p.W.grid.dt) > 1e-9 * g.dt:
        raise GridMismatchError(f"curve step {g.dt} differs from path step {p.W.grid.dt}")
    return window_values(p.W, g.t_min, g.t_max)[1]


def action_ibp(curve: Curve, p: ActionParams) -> float:
    """Integrated-by-parts action of a piecewise-linear curve."""
    w = _curve_path(curve, p)
    dt = curve.grid.dt
    g = curve.points
    F = p.F.eval(g)
    what = w - w[-1]
    kinetic = 0.5 * dt * np.sum((np.diff(g) / dt - p.b) ** 2)
    coupling = np.sum(np.diff(F) * 0.5 * (what[:-1] + what[1:]))
    span = curve.grid.t_max - curve.grid.t_min
    return float(kinetic + coupling - 0.5 * p.b ** 2 * span - F[0] * (w[-1] - w[0]))


def euler_lagrange_residual(curve: Curve, p: ActionParams) -> float:
    """Max-norm defect of the discrete momentum balance at interior nodes.

    The minimiser equation ``d(gamma')/dtau = -F'(gamma) dW`` is checked in
    its local form ``v_j - v_{j-1} + F'(g_j) (W_{j+1} - W_{j-1}) / 2 = 0``;
    summing it over nodes recovers the integrated velocity relation.
    """
    w = _curve_path(curve, p)
    g = curve.points
    if len(g) < 3:
        return 0.0
    v = np.diff(g) / curve.grid.dt
    r = v[1:] - v[:-1] + 0.5 * p.F.grad(g[1:-1]) * (w[2:] - w[:-2])
    return float(np.max(np.abs(r)))


def terminal_velocity(curve: Curve, p: ActionParams) -> float:
    """End velocity including the half impulse delivered at the final node."""
    w = _curve_path(curve, p)
    g = curve.points
    return float((g[-1] - g[-2]) / curve.grid.dt - 0.5 * p.F.grad(g[-1]) * (w[-1] - w[-2]))


def minimize_action(x_end: float, window: tuple[float, float], p: ActionParams,
                    mode: FixedStart | FreeStart,
                    options: SolverOptions | None = None) -> MinimizerResult:
    """Minimise the action over curves ending at ``x_end`` at time ``window[1]``.

    With :class:`FixedStart` the start point is prescribed; with
    :class:`FreeStart` the objective is ``psi_s(gamma(s)) + A(gamma)`` and the
    start is restricted to the nodes of ``psi_s``'s grid.  A coarse lattice
    dynamic programme supplies the global initial guess, which damped Newton
    then polishes.

    Raises
    ------
    ConvergenceError
        If no candidate meets ``accept_tol``.
    """
    opts = options or SolverOptions()
    s, t = window
    sub, w = window_values(p.W, s, t)
    kind, P = p.F.kernel_spec()
    if isinstance(mode, FreeStart):
        return _minimize_free(float(x_end), sub, w, kind, P, p, mode.psi_s, opts)
    return _minimize_fixed(float(x_end), sub, w, kind, P, p, mode, opts)


def _finish(points, sub, p, extra, opts, saturated=False) -> MinimizerResult:
    curve = Curve(sub, points)
    value = action_ibp(curve, p) + extra
    resid = euler_lagrange_residual(curve, p)
    if not resid <= opts.accept_tol * (1 + abs(value)):
        raise ConvergenceError(
            f"stationarity residual {resid:.3g} above tolerance", curve, resid)
    return MinimizerResult(curve, value, resid, saturated)


def _minimize_free(x_end, sub, w, kind, P, p, psi_s, opts):
    grid = psi_s.grid
    if abs(psi_s.time_stamp - sub.t_min) > 1e-9 * max(1.0, abs(sub.t_min)):
        raise ValueError(f"psi_s is stamped {psi_s.time_stamp}, window starts at {sub.t_min}")
    n = sub.n_steps
    S = opts.stride_for(n)
    K = opts.offsets_for(S, sub.dt, grid.h)
    val, pts, resid, stat, sat = kern.free_point(
        kind, P, np.ascontiguousarray(psi_s.values, dtype=float), grid.periodic,
        grid.x0, grid.h, w, sub.dt, p.b, S, K, opts.tol, opts.max_iter,
        opts.max_shift, x_end)
    if not np.isfinite(val):
        raise ConvergenceError(f"no admissible start reaches x={x_end}", where=x_end)
    if sat:
        log.warning("lattice initialiser hit its speed limit at x=%g; raise vmax", x_end)
    start = pts[0]
    i0 = int(round((start - grid.x0) / grid.h))
    extra = float(psi_s.values[i0 % grid.n if grid.periodic else i0])
    return _finish(pts, sub, p, extra, opts, bool(sat))


def _minimize_fixed(x_end, sub, w, kind, P, p, mode, opts):
    xs = float(mode.x_start)
    n = sub.n_steps
    dt = sub.dt
    span = sub.t_max - sub.t_min
    dist = abs(x_end - xs)
    N = max(1, round(dist / opts.lattice_h)) if dist > 0 else 0
    h = dist / N if N else opts.lattice_h
    J = math.ceil(opts.fixed_margin / h)
    lo = min(xs, x_end) - J * h
    M = N + 2 * J + 1
    S = opts.stride_for(n)
    vmax = max(opts.vmax, 2.0 * dist / span)
    K = opts.offsets_for(S, dt, h, vmax)

    candidates = []
    dp_curve, sat = kern.fixed_dp(kind, P, xs, x_end, lo, h, M, w, dt, p.b, S, K)
    if sat >= 0:
        candidates.append(dp_curve)
    line = xs + (x_end - xs) * np.linspace(0.0, 1.0, n + 1)
    candidates.append(line)
    if mode.init is not None:
        if mode.init.grid.n_steps != n:
            raise GridMismatchError("initial curve does not match the window")
        init = np.array(mode.init.points, dtype=float)
        init[0], init[-1] = xs, x_end
        candidates.append(init)
    rng = np.random.default_rng(opts.seed)
    bump = np.sin(np.pi * np.arange(n + 1) / n) * rng.standard_normal() * 0.25
    candidates.append(line + bump)

    best = None
    fallback = None
    for cand in candidates:
        cur = np.ascontiguousarray(cand, dtype=float)
        val, gmax, _, _ = kern.polish(kind, P, cur, w, dt, p.b, opts.tol, opts.max_iter)
        if gmax > opts.accept_tol * (1 + abs(val)):
            if fallback is None or gmax < fallback[2]:
                fallback = (val, cur, gmax)
            continue
        # ties keep the earlier candidate
        if best is None or val < best[0] - 1e-12 * (1 + abs(val)):
            best = (val, cur, gmax)
    if best is None:
        raise ConvergenceError("no start converged", Curve(sub, fallback[1]), fallback[2])
    return _finish(best[1], sub, p, 0.0, opts, sat == 1)
