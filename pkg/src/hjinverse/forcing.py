"""Forcing potentials and certification of the non-periodic confinement constants.

Two closed-form families are provided, both one-dimensional:

* :class:`PeriodicPotential` -- a finite Fourier series of period 1,
  ``F(x) = sum_j A_j cos(2 pi k_j x + phi_j)``.
* :class:`NonPeriodicPotential` -- a sum of Gaussian bumps
  ``h exp(-(x - c)^2 / (2 w^2))`` plus a bounded tail ``T tanh(x / s)``.

The non-periodic constants ``a, b, L, K, L1, K1`` are measured by a fine grid
scan (:func:`extract_np_constants`) and checked against the four confinement
inequalities (:func:`check_assumption_iii`).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

KIND_PERIODIC = 0
KIND_NONPERIODIC = 1


class CertificationError(ValueError):
    """The scanned potential does not admit the requested constants."""

    def __init__(self, clause: str, detail: str):
        super().__init__(f"clause {clause} violated: {detail}")
        self.clause = clause


class Potential:
    """Common interface: vectorised ``eval``, ``grad``, ``hess`` on 1-D points."""

    variant: str = ""
    dimension: int = 1

    def eval(self, x):
        raise NotImplementedError

    def grad(self, x):
        raise NotImplementedError

    def hess(self, x):
        raise NotImplementedError

    def third(self, x):
        raise NotImplementedError

    def kernel_spec(self) -> tuple[int, np.ndarray]:
        """``(kind, params)`` consumed by the compiled kernels."""
        raise NotImplementedError

    @property
    def periodic(self) -> bool:
        return self.variant == "periodic"

    def is_zero(self) -> bool:
        return False


@dataclass(frozen=True)
class PeriodicPotential(Potential):
    """``F(x) = sum A cos(2 pi k x + phase)`` with integer wave numbers ``k``.

    ``modes`` is a sequence of ``(k, amplitude, phase)`` triples.
    """

    modes: tuple = ()
    variant: str = field(default="periodic", init=False)

    def __post_init__(self):
        rows = []
        for m in self.modes:
            k, amp, ph = (float(v) for v in m)
            if k != int(k) or k < 1:
                raise ValueError(f"wave number must be a positive integer, got {k}")
            rows.append((k, amp, ph))
        object.__setattr__(self, "modes", tuple(rows))
        arr = np.array(rows, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "_arr", arr)

    def _phase(self, x):
        x = np.asarray(x, dtype=float)
        k = self._arr[:, 0]
        return 2 * np.pi * np.multiply.outer(x, k) + self._arr[:, 2], 2 * np.pi * k

    def eval(self, x):
        th, _ = self._phase(x)
        return np.cos(th) @ self._arr[:, 1]

    def grad(self, x):
        th, om = self._phase(x)
        return -np.sin(th) @ (self._arr[:, 1] * om)

    def hess(self, x):
        th, om = self._phase(x)
        return -np.cos(th) @ (self._arr[:, 1] * om ** 2)

    def third(self, x):
        th, om = self._phase(x)
        return np.sin(th) @ (self._arr[:, 1] * om ** 3)

    def kernel_spec(self):
        return KIND_PERIODIC, self._arr.copy() if len(self._arr) else np.zeros((1, 3))

    def is_zero(self):
        return not np.any(self._arr[:, 1])

    def sup_bounds(self) -> tuple[float, float, float]:
        """Crude ``(sup|F|, sup|F'|, sup|F''|)`` from the triangle inequality."""
        amp = np.abs(self._arr[:, 1])
        om = 2 * np.pi * self._arr[:, 0]
        return float(amp.sum()), float((amp * om).sum()), float((amp * om ** 2).sum())


@dataclass(frozen=True)
class NonPeriodicPotential(Potential):
    """Gaussian bumps plus a bounded ``tanh`` tail.

    ``bumps`` is a sequence of ``(center, height, width)``; heights may be
    negative.  ``tail_amp * tanh(x / tail_scale)`` keeps ``F`` bounded with
    all derivatives decaying.
    """

    bumps: tuple = ()
    tail_amp: float = 0.0
    tail_scale: float = 1.0
    variant: str = field(default="nonperiodic", init=False)

    def __post_init__(self):
        rows = []
        for bmp in self.bumps:
            c, h, w = (float(v) for v in bmp)
            if not w > 0:
                raise ValueError(f"bump width must be positive, got {w}")
            rows.append((c, h, w))
        if not self.tail_scale > 0:
            raise ValueError("tail_scale must be positive")
        object.__setattr__(self, "bumps", tuple(rows))
        object.__setattr__(self, "_arr", np.array(rows, dtype=float).reshape(-1, 3))

    def _gauss(self, x):
        x = np.asarray(x, dtype=float)
        c, h, w = self._arr.T
        u = (np.subtract.outer(x, c)) / w
        return u, h * np.exp(-0.5 * u * u), w

    def _tail(self, x):
        x = np.asarray(x, dtype=float)
        th = np.tanh(x / self.tail_scale)
        return th, 1.0 - th * th

    def eval(self, x):
        _, e, _ = self._gauss(x)
        th, _ = self._tail(x)
        return e.sum(axis=-1) + self.tail_amp * th

    def grad(self, x):
        u, e, w = self._gauss(x)
        th, sech2 = self._tail(x)
        return (-e * u / w).sum(axis=-1) + self.tail_amp / self.tail_scale * sech2

    def hess(self, x):
        u, e, w = self._gauss(x)
        th, sech2 = self._tail(x)
        s = self.tail_scale
        return (e * (u * u - 1) / w ** 2).sum(axis=-1) - 2 * self.tail_amp / s ** 2 * th * sech2

    def third(self, x):
        u, e, w = self._gauss(x)
        th, sech2 = self._tail(x)
        s = self.tail_scale
        return ((e * u * (3 - u * u)) / w ** 3).sum(axis=-1) + \
            2 * self.tail_amp / s ** 3 * sech2 * (2 * th * th - sech2)

    def kernel_spec(self):
        tail = np.array([[self.tail_amp, self.tail_scale, 0.0]])
        return KIND_NONPERIODIC, np.vstack([self._arr, tail])

    def is_zero(self):
        return not np.any(self._arr[:, 1]) and self.tail_amp == 0.0

    def scan_radius(self) -> float:
        """Radius beyond which every bump contributes below ``exp(-72)``."""
        if len(self._arr) == 0:
            return 1.0
        c, _, w = self._arr.T
        return float(np.max(np.abs(c) + 12.0 * w))


def zero_potential(periodic: bool = True) -> Potential:
    return PeriodicPotential(()) if periodic else NonPeriodicPotential(())


def default_periodic() -> PeriodicPotential:
    """Two-mode periodic forcing used by the shipped experiments."""
    return PeriodicPotential(((1, 0.15, 0.0), (2, 0.05, 0.7)))


def default_nonperiodic() -> NonPeriodicPotential:
    """Twin-bump potential whose scanned constants satisfy all four inequalities."""
    return NonPeriodicPotential(((0.03, 1.0, 0.018), (-0.03, -1.0, 0.018)))


@dataclass(frozen=True)
class NpConstants:
    a: float
    b_radius: float
    L: float
    K: float
    L1: float
    K1: float
    E1: float
    E2: float
    E3: float

    def __post_init__(self):
        for name in ("a", "b_radius", "L", "K", "L1", "K1", "E1", "E2", "E3"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be positive and finite, got {val}")
        if not self.b_radius > self.a:
            raise ValueError(f"b_radius={self.b_radius} must exceed a={self.a}")
        if not self.K1 < self.K:
            raise ValueError(f"K1={self.K1} must be below K={self.K}")

    @property
    def alpha(self) -> float:
        return min(1.0, self.L ** 2 * self.E1 ** 2 / (16 * self.a ** 2 * self.K ** 2 * self.E2 ** 2))


@dataclass(frozen=True)
class ClauseResult:
    name: str
    lhs: float
    rhs: float

    @property
    def passed(self) -> bool:
        return bool(self.lhs < self.rhs)


@dataclass(frozen=True)
class AssumptionReport:
    clauses: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.clauses)

    def first_failure(self) -> ClauseResult | None:
        return next((c for c in self.clauses if not c.passed), None)

    def __str__(self):
        return "\n".join(
            f"{c.name:<28s} {c.lhs:.6g} < {c.rhs:.6g}  {'pass' if c.passed else 'FAIL'}"
            for c in self.clauses)


def check_assumption_iii(c: NpConstants) -> AssumptionReport:
    """Evaluate the four strict inequalities on the certified constants.

    Each clause is reported with both sides so that near misses are visible.
    """
    return AssumptionReport((
        ClauseResult("128a^4E2^2K^2/E1^3 < L^3",
                     128 * c.a ** 4 * c.E2 ** 2 * c.K ** 2 / c.E1 ** 3, c.L ** 3),
        ClauseResult("8a^2 < L*E1", 8 * c.a ** 2, c.L * c.E1),
        ClauseResult("K1^2 < L*E1/(3E3)", c.K1 ** 2, c.L * c.E1 / (3 * c.E3)),
        ClauseResult("L1 < L/16", c.L1, c.L / 16),
    ))


def _default_moments():
    from .diagnostics import default_moments
    return default_moments()


def extract_np_constants(F: NonPeriodicPotential, resolution: float = 1e-3,
                         moments=None, margin: float = 1e-3,
                         require_iii: bool = True) -> NpConstants:
    """Measure confinement constants of ``F`` by a uniform grid scan.

    Parameters
    ----------
    F : NonPeriodicPotential
    resolution : float
        Scan spacing as a fraction of the scanned interval ``[-R, R]``; it is
        further refined so every bump width holds at least 20 points.
    moments : MomentConstants, optional
        Source of ``E1, E2, E3``.  Defaults to a cached Monte-Carlo estimate.
    margin : float
        Relative slack placed between measured extrema and the certified
        strict bounds.
    require_iii : bool
        When true, raise if any of the four inequalities fails.

    The outer radius ``b_radius`` is the smallest scanned radius beyond which
    ``|F| <= L/32`` and ``|F'| <= K1_target/2`` hold, so that ``L1`` and
    ``K1`` sit comfortably inside their clauses.
    """
    if F.variant != "nonperiodic":
        raise ValueError("constants are defined for the non-periodic variant only")
    if moments is None:
        moments = _default_moments()
    E1, E2, E3 = moments.E1, moments.E2, moments.E3

    R = 2.0 * F.scan_radius() + 4.0 * F.tail_scale
    widths = F._arr[:, 2] if len(F._arr) else np.array([R])
    step = min(resolution * 2 * R, float(widths.min()) / 20)
    n = int(math.ceil(R / step))
    x = np.linspace(-R, R, 2 * n + 1)
    f = F.eval(x)
    g = np.abs(F.grad(x))
    # the tails are monotone beyond the scan box; their limits close the sup
    f_inf = abs(F.tail_amp)

    imax, imin = int(np.argmax(f)), int(np.argmin(f))
    L = float(min(f[imax], -f[imin])) * (1 - margin)
    if not L > 0:
        raise CertificationError("(i)", "F needs a positive maximum and negative minimum (no L > 0)")
    a = float(max(abs(x[imax]), abs(x[imin]))) + step

    L1_goal = L / 32
    K1_goal = 0.5 * math.sqrt(L * E1 / (3 * E3))
    r = np.abs(x)
    order = np.argsort(-r, kind="stable")
    # suffix sups over |x| >= radius, scanning inward
    f_out = np.maximum.accumulate(np.abs(f[order]))
    g_out = np.maximum.accumulate(g[order])
    ok = (np.maximum(f_out, f_inf) <= L1_goal) & (g_out <= K1_goal)
    if f_inf > L1_goal or not ok[0]:
        raise CertificationError("(i)", f"tail |F| -> {f_inf:.3g} does not decay below L/32")
    # innermost radius such that everything outside it satisfies the goals
    bad = np.nonzero(~ok)[0]
    j = bad[0] - 1 if len(bad) else len(order) - 1
    b = max(float(r[order[j]]), a + step)
    outside = r >= b
    L1 = max(float(np.max(np.abs(f[outside]), initial=f_inf)), f_inf) * (1 + margin) + 1e-300
    K1 = float(np.max(g[outside], initial=0.0)) * (1 + margin) + 1e-300
    K = float(np.max(g[r < b])) * (1 + margin) + step * _hess_bound(F, x)
    L1 = max(L1, 1e-12 * L)
    K1 = max(K1, 1e-12 * K)
    consts = NpConstants(a=a, b_radius=b, L=L, K=K, L1=L1, K1=K1, E1=E1, E2=E2, E3=E3)
    log.debug("scanned constants %s", consts)
    if require_iii:
        bad_clause = check_assumption_iii(consts).first_failure()
        if bad_clause is not None:
            raise CertificationError(
                "(iii)", f"{bad_clause.name}: {bad_clause.lhs:.6g} >= {bad_clause.rhs:.6g}")
    return consts


def _hess_bound(F: Potential, x: np.ndarray) -> float:
    """Scanned ``sup|F''|``; bounds the gradient growth between scan points."""
    return float(np.max(np.abs(F.hess(x))))


def potential_from_spec(variant: str, entries: Sequence[Sequence[float]],
                        tail: Sequence[float] = (0.0, 1.0)) -> Potential:
    if variant == "periodic":
        return PeriodicPotential(tuple(tuple(e) for e in entries))
    if variant == "nonperiodic":
        return NonPeriodicPotential(tuple(tuple(e) for e in entries), *tail)
    raise ValueError(f"unknown potential variant {variant!r}")
