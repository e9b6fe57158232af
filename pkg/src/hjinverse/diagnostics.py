"""Brownian moment constants, the confinement variables P_l, and related path diagnostics."""

from __future__ import annotations

import functools
import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from ._kernels import brownian_sup_batch
from .forcing import NpConstants
from .wiener import BrownianPath

log = logging.getLogger(__name__)

SCALING_TIMES = (0.25, 0.5, 1.0)


@dataclass(frozen=True)
class MomentConstants:
    """``E1 = E|W(1)|``, ``E2 = E sup_[0,1] |W - W(1)|``, ``E3 = E sup_[0,1] |W - W(1)|^2``."""

    E1: float
    E2: float
    E3: float
    se1: float = 0.0
    se2: float = 0.0
    se3: float = 0.0
    n_samples: int = 0
    exponent: float = 0.5
    seed: int = 0
    dt: float = 0.0

    def __post_init__(self):
        for name in ("E1", "E2", "E3"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    def rows(self) -> list[tuple]:
        return [(name, getattr(self, name), getattr(self, "se" + name[1]), self.n_samples, self.seed)
                for name in ("E1", "E2", "E3")]


def _unit_path_stats(n: int, seed: int, dt: float, marks_t=SCALING_TIMES, batch: int = 256):
    """``|W(0) - W(1)|`` and grid suprema of ``|W - W(1)|`` over ``[1 - t, 1]``."""
    steps = round(1.0 / dt)
    if abs(steps * dt - 1.0) > 1e-9:
        raise ValueError("dt must divide the unit interval")
    marks = np.array([round(t * steps) for t in marks_t], dtype=np.int64)
    rng = np.random.default_rng(seed)
    ends = np.empty(n)
    sups = np.empty((n, len(marks)))
    sq = math.sqrt(dt)
    for lo in range(0, n, batch):
        hi = min(n, lo + batch)
        z = rng.standard_normal((hi - lo, steps))
        ends[lo:hi], sups[lo:hi] = brownian_sup_batch(z, sq, marks)
    return ends, sups


def estimate_moments(n_samples: int, seed: int, dt: float = 1e-4) -> MomentConstants:
    """Monte-Carlo moment constants over pinned unit-interval paths.

    ``E2`` pools ``sup_[1-t,1]|W - W(1)| / sqrt(t)`` over ``t`` in
    ``{1/4, 1/2, 1}``; the log-log slope of the three means is reported as
    ``exponent`` and should be close to one half.  Suprema are taken over
    grid nodes, which biases them low by ``O(sqrt(dt))``.
    """
    if n_samples < 1000:
        raise ValueError("need at least 1000 samples")
    ends, sups = _unit_path_stats(n_samples, seed, dt)
    ts = np.array(SCALING_TIMES)
    scaled = sups / np.sqrt(ts)
    pooled = scaled.mean(axis=1)
    means = sups.mean(axis=0)
    exponent = float(np.polyfit(np.log(ts), np.log(means), 1)[0])
    if abs(exponent - 0.5) > 0.05:
        warnings.warn(f"sup scaling exponent {exponent:.3f} is off 1/2; refine dt", RuntimeWarning)
    sup1 = sups[:, -1]
    rt = math.sqrt(n_samples)
    return MomentConstants(
        E1=float(ends.mean()), E2=float(pooled.mean()), E3=float(np.mean(sup1 ** 2)),
        se1=float(ends.std(ddof=1) / rt), se2=float(pooled.std(ddof=1) / rt),
        se3=float((sup1 ** 2).std(ddof=1) / rt), n_samples=n_samples,
        exponent=exponent, seed=seed, dt=dt)


def scaling_profile(n_samples: int, seed: int, dt: float = 1e-4):
    """Per-``t`` estimates of ``E sup_[1-t,1]|W - W(1)| / sqrt(t)`` with standard errors."""
    _, sups = _unit_path_stats(n_samples, seed, dt)
    ts = np.array(SCALING_TIMES)
    scaled = sups / np.sqrt(ts)
    return ts, scaled.mean(axis=0), scaled.std(axis=0, ddof=1) / math.sqrt(n_samples)


@functools.lru_cache(maxsize=1)
def default_moments() -> MomentConstants:
    return estimate_moments(10_000, seed=20240601, dt=1e-4)


def _pl_formula(c: NpConstants, jump: float, sup_alpha: float, sup_unit: float) -> float:
    alpha = c.alpha
    return (2 * c.a ** 2 / alpha + 2 * c.a * c.K * sup_alpha - c.L * jump
            + c.L1 * jump + 0.5 * c.K1 ** 2 * sup_unit ** 2)


def compute_pl(W: BrownianPath, l: int, c: NpConstants) -> float:
    """``P_l`` on the unit window ``[l, l+1]`` (grid-node suprema).

    The first supremum runs over ``[l + 1 - min(alpha, 1), l + 1]``.
    """
    l = int(l)
    if l < W.grid.t_min - 1e-9 or l + 1 > W.grid.t_max + 1e-9:
        raise ValueError(f"window [{l}, {l + 1}] lies outside the path grid")
    top = float(l + 1)
    jump = abs(W.at(float(l)) - W.at(top))
    sup_alpha = W.sup_deviation(top - min(c.alpha, 1.0), top)
    sup_unit = W.sup_deviation(float(l), top)
    return _pl_formula(c, jump, sup_alpha, sup_unit)


def sample_pl(n: int, seed: int, c: NpConstants, dt: float = 1e-4) -> np.ndarray:
    """``n`` independent draws of ``P_l`` from independent unit windows."""
    alpha = min(c.alpha, 1.0)
    ends, sups = _unit_path_stats(n, seed, dt, marks_t=(alpha, 1.0))
    return _pl_formula(c, ends, sups[:, 0], sups[:, 1])


def pl_expectation(c: NpConstants) -> float:
    """Closed form of ``E P_l`` in terms of the moment constants.

    Uses ``E sup_[1-alpha,1]|W - W(1)| = E2 sqrt(alpha)`` by Brownian scaling.
    """
    alpha = min(c.alpha, 1.0)
    return (2 * c.a ** 2 / alpha + 2 * c.a * c.K * c.E2 * math.sqrt(alpha)
            - c.L * c.E1 + c.L1 * c.E1 + 0.5 * c.K1 ** 2 * c.E3)


def tiprime(t: float) -> int:
    """Integer ``t'`` with ``t <= t' < t + 1``."""
    return math.ceil(t - 1e-12)


def tisecond(t: float) -> int:
    """Integer ``t''`` with ``t - 2 < t'' <= t - 1``."""
    return math.floor(t - 1 + 1e-12)


@dataclass(frozen=True)
class ConfinementConstants:
    """The two otherwise unspecified constants of the confinement inequality.

    The defaults were calibrated on a pilot ensemble of default
    non-periodic paths so that the backward time sits a few units below the
    observation time, where the backward-limit distances stop changing.
    """

    c_point: float = 0.1
    c_global: float = 0.1


class ShallowTruncationError(RuntimeError):
    """No admissible backward time satisfies the confinement inequality."""


def _unit_sup_sq(W: BrownianPath, j: int) -> float:
    lo, hi = max(float(j), W.grid.t_min), min(float(j + 1), W.grid.t_max)
    if hi <= lo:
        return 0.0
    return W.sup_deviation(lo, hi, ref=hi) ** 2


def confinement_margins(W: BrownianPath, t_i: float, t_0: float, c: NpConstants,
                        cc: ConfinementConstants = ConfinementConstants()):
    """Admissible integers ``tb`` and ``lhs(tb) - rhs(tb)`` for each.

    ``lhs = sum_{l=tb}^{t_i''-1} P_l`` and ``rhs`` is the negative envelope
    built from unit-window suprema between ``t_0''`` and ``t_i'`` (windows
    are clipped to the path grid).
    """
    ti2 = tisecond(t_i)
    ti1 = tiprime(t_i)
    t02 = tisecond(t_0)
    lo = math.ceil(W.grid.t_min - 1e-9) + 2
    hi = ti2 - 1
    if hi < lo:
        raise ShallowTruncationError(
            f"no admissible backward time in [{lo}, {hi}]; deepen t_min")
    point_env = 1.0 + sum(_unit_sup_sq(W, j) for j in range(t02, ti1 + 1))
    tbs = np.arange(lo, hi + 1)
    pls = np.array([compute_pl(W, int(l), c) for l in range(lo, ti2)])
    # suffix sums: lhs[k] = sum_{l = tbs[k]}^{ti2 - 1} P_l
    lhs = np.cumsum(pls[::-1])[::-1]
    glob = np.array([1.0 + W.sup_deviation(float(tb - 2), float(tb)) ** 2 for tb in tbs])
    rhs = -cc.c_point * point_env - cc.c_global * glob
    return tbs, lhs - rhs


def backward_time(W: BrownianPath, obs, i: int, c: NpConstants,
                  cc: ConfinementConstants = ConfinementConstants()) -> int:
    """Deepest admissible integer at which the confinement inequality holds for point ``i``.

    ``obs`` is a point-observation set; ``i`` indexes ``obs.points``.

    Every deeper admissible integer violates it, i.e. the accumulated
    ``P_l`` are negative enough to force minimisers into the ball.  Deeper
    truncation can only lower the result.

    Raises
    ------
    ShallowTruncationError
        If the inequality holds nowhere within the truncated window.
    """
    t_i = obs.points[i][1]
    t_0 = obs.ref[1]
    tbs, margin = confinement_margins(W, t_i, t_0, c, cc)
    ok = np.nonzero(margin > 0)[0]
    if len(ok) == 0:
        raise ShallowTruncationError("confinement inequality never holds; deepen t_min")
    return int(tbs[ok[0]])


def detect_narrow_places(W: BrownianPath, T: int, threshold_scale: float = 1.0) -> list[tuple]:
    """Integer-aligned windows ``[s1, s1 + T]`` with ``max |W - W(s1 + T)| < scale / T^2``."""
    if T < 1:
        raise ValueError("window length must be at least 1")
    thr = threshold_scale / T ** 2
    out = []
    s1 = math.ceil(W.grid.t_min - 1e-9)
    while s1 + T <= W.grid.t_max + 1e-9:
        s2 = float(s1 + T)
        if W.sup_deviation(float(s1), s2) < thr:
            out.append((float(s1), s2))
        s1 += 1
    return out
