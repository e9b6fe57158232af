"""Bayesian layer: data misfit, evidence, posterior sampling and Hellinger distances."""

from __future__ import annotations

import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .action import ConvergenceError
from .laxoleinik import TruncationError
from .observe import ForwardSetup, ObservationSet, forward as run_forward
from .wiener import BrownianPath, PcnParams, TimeGrid, pcn_propose, sample_prior

log = logging.getLogger(__name__)

# failures that reject an MCMC step instead of aborting the chain
FORWARD_FAILURES = (ConvergenceError, TruncationError, FloatingPointError)


class EstimatorError(ArithmeticError):
    """A Monte-Carlo estimator produced an inconsistent value."""


class Posterior:
    """Posterior over paths given observations.

    Parameters
    ----------
    obs : ObservationSet
    forward : {"hj", "burgers"} or callable
        Named forward maps use ``setup``; a callable maps a path to a data
        vector directly (surrogates, tests).
    setup : ForwardSetup, optional
    prior_grid : TimeGrid
    cache : bool
        Memoise forward evaluations by path digest.
    """

    def __init__(self, obs: ObservationSet, forward: str | Callable[[BrownianPath], np.ndarray],
                 prior_grid: TimeGrid, setup: ForwardSetup | None = None, cache: bool = True):
        if isinstance(forward, str):
            if forward not in ("hj", "burgers"):
                raise ValueError(f"unknown forward map {forward!r}")
            if setup is None:
                raise ValueError("named forward maps need a ForwardSetup")
            if forward != obs.kind:
                raise ValueError(f"observations of kind {obs.kind!r} do not fit forward {forward!r}")
            start = prior_grid.t_min if setup.t_start is None else setup.t_start
            if start < prior_grid.t_min - 1e-12:
                raise ValueError("solver start precedes the prior window")
            self.forward_key = forward
        else:
            self.forward_key = f"callable-{id(forward)}"
        self.obs = obs
        self.forward = forward
        self.setup = setup
        self.prior_grid = prior_grid
        self._cache: dict | None = {} if cache else None
        self._lock = threading.Lock()
        self.evaluations = 0

    def forward_of(self, W: BrownianPath) -> np.ndarray:
        if W.grid != self.prior_grid:
            raise ValueError("path grid differs from the prior grid")
        key = (W.digest(), self.forward_key)
        if self._cache is not None:
            with self._lock:
                hit = self._cache.get(key)
            if hit is not None:
                return hit
        if callable(self.forward):
            g = np.asarray(self.forward(W), dtype=float).reshape(-1)
        else:
            g = run_forward(self.forward, W, self.obs, self.setup)
        g.setflags(write=False)
        self.evaluations += 1
        if self._cache is not None:
            with self._lock:
                self._cache[key] = g
        return g

    def prior_draw(self, seed: int, index: int) -> BrownianPath:
        return sample_prior(self.prior_grid, (seed, index))

    def forward_many(self, seed: int, n: int, threads: int = 1) -> np.ndarray:
        """Forward values of prior draws ``(seed, 0..n-1)``, in draw order."""
        def task(j):
            return self.forward_of(self.prior_draw(seed, j))
        if threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                return np.array(list(pool.map(task, range(n))))
        return np.array([task(j) for j in range(n)])

    def misfit(self, g: np.ndarray, y: np.ndarray) -> float:
        z = solve_triangular(self.obs.chol, np.asarray(y, float) - g, lower=True)
        return 0.5 * float(z @ z)


def phi_potential(W: BrownianPath, post: Posterior, y=None) -> float:
    """``|y - G(W)|_Sigma^2 / 2`` through a Cholesky solve."""
    y = post.obs.y if y is None else y
    if y is None:
        raise ValueError("no data vector supplied")
    return post.misfit(post.forward_of(W), y)


def _misfits(G: np.ndarray, y, post: Posterior) -> np.ndarray:
    R = np.asarray(y, float)[None, :] - G
    Z = solve_triangular(post.obs.chol, R.T, lower=True)
    return 0.5 * np.sum(Z * Z, axis=0)


def z_estimate(y, post: Posterior, n_samples: int, seed: int,
               threads: int = 1) -> tuple[float, float]:
    """Prior mean of ``exp(-Phi(W; y))`` with its standard error."""
    if n_samples < 2:
        raise ValueError("need at least two samples")
    phi = _misfits(post.forward_many(seed, n_samples, threads), y, post)
    e = np.exp(-phi)
    return float(e.mean()), float(e.std(ddof=1) / math.sqrt(n_samples))


def hellinger_estimate(y, y2, post: Posterior, n_samples: int, seed: int,
                       threads: int = 1) -> tuple[float, float]:
    """Common-draw estimate of the Hellinger distance between two posteriors.

    ``d^2 = 1 - M / sqrt(Z(y) Z(y2))`` with ``M`` the prior mean of
    ``exp(-(Phi(y) + Phi(y2))/2)``; all three means use the same draws.  The
    standard error follows from the delta method.
    """
    if n_samples < 2:
        raise ValueError("need at least two samples")
    G = post.forward_many(seed, n_samples, threads)
    return _hellinger_from(_misfits(G, y, post), _misfits(G, y2, post))


def _hellinger_from(phi1: np.ndarray, phi2: np.ndarray) -> tuple[float, float]:
    n = len(phi1)
    a = np.exp(-(phi1 - phi1.min()))
    b = np.exp(-(phi2 - phi2.min()))
    m = np.sqrt(a * b)
    Za, Zb, Mm = a.mean(), b.mean(), m.mean()
    ratio = Mm / math.sqrt(Za * Zb)
    d2 = 1.0 - ratio
    if d2 < -1e-12:
        raise EstimatorError(f"negative squared distance {d2:.3g}")
    d2 = max(d2, 0.0)
    grad = np.array([-ratio / (2 * Za), -ratio / (2 * Zb), 1.0 / math.sqrt(Za * Zb)])
    cov = np.cov(np.vstack([a, b, m]))
    var_d2 = max(float(grad @ cov @ grad) / n, 0.0)
    se_d2 = math.sqrt(var_d2)
    d = math.sqrt(d2)
    se = se_d2 / (2 * d) if d > 0 else math.sqrt(se_d2)
    return d, se


@dataclass(eq=False)
class Chain:
    samples: list
    phi_values: np.ndarray
    steps: np.ndarray
    accepted: np.ndarray = field(repr=False)
    seed: int = 0
    beta: float = 0.0
    failures: int = 0
    flagged: bool = False

    def __post_init__(self):
        if len(self.samples) not in (0, len(self.phi_values)):
            raise ValueError("samples and phi values differ in length")
        if len(self.steps) != len(self.phi_values):
            raise ValueError("steps and phi values differ in length")

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accepted)) if len(self.accepted) else 0.0

    def node_values(self, t: float) -> np.ndarray:
        return np.array([w.at(t) for w in self.samples])

    def mean_path(self) -> BrownianPath:
        vals = np.mean([w.values for w in self.samples], axis=0)
        return BrownianPath(self.samples[0].grid, vals)

    def write_csv(self, dest: str | Path, include_paths: bool = False) -> None:
        with open(dest, "w") as fh:
            head = ["step", "phi", "accepted"]
            if include_paths and self.samples:
                head += [f"w{k}" for k in range(len(self.samples[0].values))]
            fh.write(",".join(head) + "\n")
            for r, (st, ph) in enumerate(zip(self.steps, self.phi_values)):
                row = [str(int(st)), f"{ph:.17g}", str(int(self.accepted[st - 1]))]
                if include_paths and self.samples:
                    row += [f"{v:.17g}" for v in self.samples[r].values]
                fh.write(",".join(row) + "\n")


def pcn_sample(post: Posterior, params: PcnParams, n_steps: int, burn_in: int = 0,
               thin: int = 1, y=None, init: BrownianPath | None = None,
               keep_paths: bool = True) -> Chain:
    """Metropolis chain with the prior-preserving autoregressive proposal.

    Steps are numbered ``1..n_steps``; step ``k`` is retained when
    ``k > burn_in`` and ``(k - burn_in) % thin == 0``.  Forward failures
    reject the step and are counted; more than 1% raises a warning flag.
    """
    if not n_steps > burn_in:
        raise ValueError("n_steps must exceed burn_in")
    if thin < 1:
        raise ValueError("thin must be positive")
    y = post.obs.y if y is None else y
    rng = np.random.default_rng([params.seed, 0xACCE])
    cur = init if init is not None else sample_prior(post.prior_grid, (params.seed, 0))
    phi_cur = post.misfit(post.forward_of(cur), y)
    accepted = np.zeros(n_steps, dtype=bool)
    kept, kept_phi, kept_steps = [], [], []
    failures = 0
    for k in range(1, n_steps + 1):
        prop = pcn_propose(cur, params, k)
        log_u = math.log(rng.random())
        try:
            phi_prop = post.misfit(post.forward_of(prop), y)
        except FORWARD_FAILURES as exc:
            failures += 1
            log.debug("step %d rejected: %s", k, exc)
            phi_prop = None
        if phi_prop is not None and log_u < phi_cur - phi_prop:
            cur, phi_cur = prop, phi_prop
            accepted[k - 1] = True
        if k > burn_in and (k - burn_in) % thin == 0:
            if keep_paths:
                kept.append(cur)
            kept_phi.append(phi_cur)
            kept_steps.append(k)
    flagged = failures > 0.01 * n_steps
    if flagged:
        log.warning("%d of %d forward evaluations failed", failures, n_steps)
    return Chain(kept, np.array(kept_phi), np.array(kept_steps, dtype=int), accepted,
                 params.seed, params.beta, failures, flagged)


DEFAULT_SEPARATIONS = tuple(2.0 ** -k for k in range(7, 0, -1))


@dataclass(frozen=True)
class WellposednessReport:
    """Empirical data-stability evidence (not a proof of the Lipschitz bound)."""

    r: float
    separations: tuple
    distances: np.ndarray
    std_errors: np.ndarray
    gaps: np.ndarray
    slope: float
    slope_small: float
    lipschitz: float
    self_distance: float
    n_samples: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "label": "empirical evidence, not a proof",
            "r": self.r,
            "separations": list(self.separations),
            "distances": self.distances.tolist(),
            "std_errors": self.std_errors.tolist(),
            "gaps": self.gaps.tolist(),
            "slope": self.slope,
            "slope_small": self.slope_small,
            "lipschitz_estimate": self.lipschitz,
            "self_distance": self.self_distance,
            "n_samples": self.n_samples,
            "seed": self.seed,
        }


def _fit_slope(gaps: np.ndarray, dists: np.ndarray) -> float:
    ok = dists > 0
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(gaps[ok]), np.log(dists[ok]), 1)[0])


def wellposedness_experiment(post: Posterior, r: float, n_pairs: int, n_samples: int,
                             seed: int, separations: Sequence[float] = DEFAULT_SEPARATIONS,
                             threads: int = 1) -> WellposednessReport:
    """Hellinger distances between posteriors for nearby data vectors.

    Base points ``y`` are uniform in the ball of radius ``r/2``; each is paired
    with ``y + eps r u`` for every separation ``eps`` and a random unit
    direction ``u``, so both stay within radius ``r``.  All distances share
    one set of prior draws, hence one forward evaluation per draw.
    """
    if not r > 0:
        raise ValueError("r must be positive")
    m = post.obs.m
    rng = np.random.default_rng([seed, 0x5EED])
    G = post.forward_many(seed, n_samples, threads)
    seps = np.asarray(separations, dtype=float)
    dist = np.empty((n_pairs, len(seps)))
    err = np.empty_like(dist)
    gaps = np.empty_like(dist)
    self_d = 0.0
    for i in range(n_pairs):
        u = rng.standard_normal(m)
        y = u / np.linalg.norm(u) * (r / 2) * rng.random() ** (1.0 / m)
        d_dir = rng.standard_normal(m)
        d_dir /= np.linalg.norm(d_dir)
        phi_y = _misfits(G, y, post)
        self_d = max(self_d, _hellinger_from(phi_y, phi_y)[0])
        for j, eps in enumerate(seps):
            y2 = y + eps * r * d_dir
            gaps[i, j] = np.linalg.norm(y2 - y)
            dist[i, j], err[i, j] = _hellinger_from(phi_y, _misfits(G, y2, post))
    small = seps <= 2.0 ** -4
    flat_g, flat_d = gaps.ravel(), dist.ravel()
    slope = _fit_slope(flat_g, flat_d)
    slope_small = _fit_slope(gaps[:, small].ravel(), dist[:, small].ravel()) if small.sum() >= 2 else slope
    lip = float(np.max(flat_d / flat_g))
    return WellposednessReport(r, tuple(seps), dist, err, gaps, slope, slope_small, lip,
                               self_d, n_samples, seed)
