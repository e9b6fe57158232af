"""Forward observation maps for the Hamilton-Jacobi and Burgers problems."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .action import ActionParams, SolverOptions
from .forcing import Potential
from .laxoleinik import SpatialGrid, Trajectory, evolve, velocity
from .wiener import BrownianPath


def _spd(Sigma) -> np.ndarray:
    S = np.atleast_2d(np.array(Sigma, dtype=float))
    if S.shape[0] != S.shape[1]:
        raise ValueError(f"Sigma must be square, got {S.shape}")
    if not np.allclose(S, S.T, rtol=0, atol=1e-12 * max(1.0, np.abs(S).max())):
        raise ValueError("Sigma must be symmetric")
    try:
        np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise ValueError("Sigma must be positive definite") from exc
    return S


def mollifier_weights(grid: SpatialGrid, center: float, radius: float) -> np.ndarray:
    """Smooth compactly supported bump with unit grid mass ``sum(chi) h = 1``."""
    x = grid.points
    d = x - center
    if grid.periodic:
        d = (d + 0.5) % 1.0 - 0.5
        if radius >= 0.5:
            raise ValueError("mollifier radius must stay below half the period")
    elif center - radius < grid.x0 or center + radius > grid.x0 + (grid.n - 1) * grid.h:
        raise ValueError("mollifier support leaves the spatial box")
    u = d / radius
    chi = np.zeros_like(x)
    inside = np.abs(u) < 1
    chi[inside] = np.exp(-1.0 / (1.0 - u[inside] ** 2))
    mass = chi.sum() * grid.h
    if mass <= 0:
        raise ValueError("mollifier support contains no grid points; widen it")
    return chi / mass


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """Observation layout, noise covariance and data.

    ``kind == "hj"`` uses ``points`` ``(x_i, t_i)`` and the reference
    ``(x_0, t_0)``; ``kind == "burgers"`` uses ``functionals``
    ``(center, radius, t_i)`` with saturation scale ``saturation``.
    """

    kind: str
    Sigma: np.ndarray
    y: np.ndarray | None = None
    points: tuple = ()
    ref: tuple | None = None
    functionals: tuple = ()
    saturation: float = 1e3
    _chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        S = _spd(self.Sigma)
        object.__setattr__(self, "Sigma", S)
        object.__setattr__(self, "_chol", np.linalg.cholesky(S))
        m = S.shape[0]
        if self.kind == "hj":
            if self.ref is None or len(self.points) != m:
                raise ValueError(f"need {m} observation points and a reference point")
            pts = tuple((float(x), float(t)) for x, t in self.points)
            t0 = float(self.ref[1])
            if not all(t0 < t for _, t in pts):
                raise ValueError("reference time t_0 must precede every observation time")
            object.__setattr__(self, "points", pts)
            object.__setattr__(self, "ref", (float(self.ref[0]), t0))
        elif self.kind == "burgers":
            if len(self.functionals) != m:
                raise ValueError(f"need {m} functionals")
            if not self.saturation > 0:
                raise ValueError("saturation scale must be positive")
            object.__setattr__(self, "functionals",
                               tuple((float(c), float(r), float(t)) for c, r, t in self.functionals))
        else:
            raise ValueError(f"unknown observation kind {self.kind!r}")
        if self.y is not None:
            y = np.array(self.y, dtype=float).reshape(-1)
            if y.shape != (m,):
                raise ValueError(f"data vector must have length {m}")
            object.__setattr__(self, "y", y)

    @classmethod
    def hj(cls, points, ref, Sigma, y=None) -> "ObservationSet":
        return cls("hj", Sigma, y, points=tuple(points), ref=tuple(ref))

    @classmethod
    def burgers(cls, functionals, Sigma, y=None, saturation: float = 1e3) -> "ObservationSet":
        return cls("burgers", Sigma, y, functionals=tuple(functionals), saturation=saturation)

    @property
    def m(self) -> int:
        return self.Sigma.shape[0]

    @property
    def chol(self) -> np.ndarray:
        return self._chol

    @property
    def times(self) -> list[float]:
        if self.kind == "hj":
            return sorted({t for _, t in self.points} | {self.ref[1]})
        return sorted({t for *_, t in self.functionals})

    def with_data(self, y) -> "ObservationSet":
        return ObservationSet(self.kind, self.Sigma, y, self.points, self.ref,
                              self.functionals, self.saturation)


@dataclass(frozen=True)
class ForwardSetup:
    """Everything the forward solve needs besides the path.

    ``t_start`` defaults to the left end of the path grid.
    """

    F: Potential
    grid: SpatialGrid
    b: float = 0.0
    options: SolverOptions | None = None
    t_start: float | None = None
    unit: float = 1.0


def solve_for(W: BrownianPath, obs: ObservationSet, setup: ForwardSetup) -> Trajectory:
    """One composed solve from zero data, recording every observation time."""
    p = ActionParams(setup.F, W, setup.b)
    t_start = W.grid.t_min if setup.t_start is None else setup.t_start
    if max(obs.times) > W.grid.t_max + 1e-12:
        raise ValueError("observation times beyond the path window")
    return evolve(p, setup.grid, t_start, obs.times, setup.options, setup.unit)


def g_hj(W: BrownianPath, obs: ObservationSet, setup: ForwardSetup,
         trajectory: Trajectory | None = None) -> np.ndarray:
    """``phi(x_i, t_i) - phi(x_0, t_0)`` with one additive constant for all times."""
    if obs.kind != "hj":
        raise ValueError("g_hj needs point observations")
    traj = trajectory or solve_for(W, obs, setup)
    x0, t0 = obs.ref
    ref = traj.fields[round(t0, 12)].full(x0)
    return np.array([traj.fields[round(t, 12)].full(x) - ref for x, t in obs.points])


def g_b(W: BrownianPath, obs: ObservationSet, setup: ForwardSetup,
        trajectory: Trajectory | None = None) -> np.ndarray:
    """Saturated local velocity averages ``S tanh(sum(chi u) h / S)``."""
    if obs.kind != "burgers":
        raise ValueError("g_b needs functional observations")
    traj = trajectory or solve_for(W, obs, setup)
    grid = setup.grid
    S = obs.saturation
    out = []
    for c, r, t in obs.functionals:
        u = velocity(traj.fields[round(t, 12)]).values
        out.append(S * np.tanh(np.sum(mollifier_weights(grid, c, r) * u) * grid.h / S))
    return np.array(out)


def forward(kind: str, W: BrownianPath, obs: ObservationSet, setup: ForwardSetup) -> np.ndarray:
    if kind == "hj":
        return g_hj(W, obs, setup)
    if kind == "burgers":
        return g_b(W, obs, setup)
    raise ValueError(f"unknown forward map {kind!r}")


def synthesize(W: BrownianPath, obs: ObservationSet, setup: ForwardSetup,
               seed: int) -> np.ndarray:
    """Noisy data ``G(W) + eta`` with ``eta ~ N(0, Sigma)``."""
    clean = forward(obs.kind, W, obs, setup)
    eta = obs.chol @ np.random.default_rng(seed).standard_normal(obs.m)
    return clean + eta


def hj_envelope(W: BrownianPath, obs: ObservationSet) -> float:
    """``1 + sum_i max_{[t_0 - 1, t_i]} |W - W(t_i)|^2`` on grid nodes."""
    t0 = obs.ref[1]
    return 1.0 + sum(W.sup_deviation(t0 - 1.0, t, ref=t) ** 2 for _, t in obs.points)


def unit_envelope(W: BrownianPath, t: float) -> float:
    """``1 + max_{[t - 1, t]} |W - W(t)|^2``."""
    return 1.0 + W.sup_deviation(t - 1.0, t) ** 2


__all__ = ["ObservationSet", "ForwardSetup", "g_hj", "g_b", "forward", "synthesize",
           "solve_for", "mollifier_weights", "hj_envelope", "unit_envelope"]
