"""Experiment configuration: an INI-style file with fixed sections and keys.

Grammar (``configparser`` syntax, ``#`` or ``;`` comments on their own line)::

    [problem]       kind = periodic_hj | periodic_burgers | nonperiodic_hj | nonperiodic_burgers
                    b = <float>                       mean velocity, periodic only
    [potential]     modes = k amp phase | k amp phase ...   (periodic; empty means F = 0)
                    bumps = center height width | ...        (non-periodic)
                    tail = amp scale
    [grid]          dt, t_min, t_max, n_x, X, vmax, stride
    [observations]  points = x t | x t ...   ref = x t        (HJ problems)
                    functionals = center radius t | ...       (Burgers problems)
                    saturation = <float>
                    Sigma = s              (s times identity) or  a b | c d  (rows)
                    y = v1 v2 ...   or   y_file = <path>
    [sampler]       beta, steps, burn_in, thin, chains, seed, keep_paths
    [experiment]    name = forward | make_data | invert | wellposedness | verify_bounds | moments
                    n_samples, r, n_pairs, n_paths, path_file, truth_file, moment_dt

Lists use ``|`` between entries and whitespace inside an entry.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .action import SolverOptions
from .forcing import NonPeriodicPotential, PeriodicPotential, Potential
from .laxoleinik import SpatialGrid
from .observe import ObservationSet
from .wiener import PcnParams, TimeGrid

PROBLEMS = ("periodic_hj", "periodic_burgers", "nonperiodic_hj", "nonperiodic_burgers")
EXPERIMENTS = ("forward", "make_data", "invert", "wellposedness", "verify_bounds", "moments")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split()]


def _table(text: str) -> list[list[float]]:
    return [_floats(row) for row in text.split("|") if row.strip()]


SCHEMA = {
    "problem": {"kind": str, "b": float},
    "potential": {"modes": str, "bumps": str, "tail": str},
    "grid": {"dt": float, "t_min": float, "t_max": float, "n_x": int, "X": float,
             "vmax": float, "stride": int},
    "observations": {"points": str, "ref": str, "functionals": str, "saturation": float,
                     "Sigma": str, "y": str, "y_file": str},
    "sampler": {"beta": float, "steps": int, "burn_in": int, "thin": int, "chains": int,
                "seed": int, "keep_paths": str},
    "experiment": {"name": str, "n_samples": int, "r": float, "n_pairs": int, "n_paths": int,
                   "path_file": str, "truth_file": str, "moment_dt": float},
}


@dataclass
class ExperimentConfig:
    problem: str
    potential: Potential
    b: float
    time_grid: TimeGrid
    space: SpatialGrid
    options: SolverOptions
    obs: ObservationSet
    y_file: Path | None
    sampler: PcnParams
    steps: int
    burn_in: int
    thin: int
    chains: int
    keep_paths: bool
    experiment: str
    seed: int
    settings: dict = field(default_factory=dict)
    text: str = ""
    base: Path = Path(".")

    @property
    def periodic(self) -> bool:
        return self.problem.startswith("periodic")

    @property
    def forward_kind(self) -> str:
        return "hj" if self.problem.endswith("_hj") else "burgers"


def _get(cp, section, key, default=None, required=False):
    conv = SCHEMA[section][key]
    if not cp.has_option(section, key):
        if required:
            raise ConfigError(f"missing required key `{key}` in [{section}]")
        return default
    raw = cp.get(section, key)
    try:
        return conv(raw) if conv is not str else raw.strip()
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from exc


def _check(name, value, ok, bound):
    if not ok:
        raise ConfigError(f"{name}={value} out of range: must be {bound}")


def _sigma(text: str, m: int) -> np.ndarray:
    rows = _table(text)
    if len(rows) == 1 and len(rows[0]) == 1:
        return rows[0][0] * np.eye(m)
    S = np.array(rows, dtype=float)
    if S.shape != (m, m):
        raise ConfigError(f"Sigma must be {m}x{m}, got shape {S.shape}")
    return S


def parse_config(text: str, base: Path | str = ".", seed: int | None = None) -> ExperimentConfig:
    """Parse and validate configuration text; ``seed`` overrides ``[sampler] seed``."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unparseable config: {exc}") from exc
    unknown = [f"[{s}]" for s in cp.sections() if s not in SCHEMA]
    unknown += [f"[{s}] {k}" for s in cp.sections() if s in SCHEMA
                for k in cp.options(s) if k not in SCHEMA[s]]
    if unknown:
        raise ConfigError("unknown config entries: " + ", ".join(unknown))
    base = Path(base)

    kind = _get(cp, "problem", "kind", required=True)
    _check("kind", kind, kind in PROBLEMS, "one of " + ", ".join(PROBLEMS))
    periodic = kind.startswith("periodic")
    b = _get(cp, "problem", "b", 0.0)
    _check("b", b, math.isfinite(b) and (periodic or b == 0.0), "0 for non-periodic problems")

    if periodic:
        if cp.has_option("potential", "bumps"):
            raise ConfigError("[potential] bumps belongs to non-periodic problems")
        modes = _table(_get(cp, "potential", "modes", ""))
        if any(len(r) != 3 for r in modes):
            raise ConfigError("[potential] modes entries need: k amplitude phase")
        potential: Potential = PeriodicPotential(tuple(tuple(r) for r in modes))
    else:
        if cp.has_option("potential", "modes"):
            raise ConfigError("[potential] modes belongs to periodic problems")
        bumps = _table(_get(cp, "potential", "bumps", ""))
        if any(len(r) != 3 for r in bumps):
            raise ConfigError("[potential] bumps entries need: center height width")
        tail = _floats(_get(cp, "potential", "tail", "0 1"))
        if len(tail) != 2:
            raise ConfigError("[potential] tail needs: amplitude scale")
        potential = NonPeriodicPotential(tuple(tuple(r) for r in bumps), tail[0], tail[1])

    dt = _get(cp, "grid", "dt", 0.01)
    _check("dt", dt, 0 < dt <= 0.5, "in (0, 0.5]")
    t_max = _get(cp, "grid", "t_max", 1.0)
    t_min = _get(cp, "grid", "t_min", -6.0)
    _check("t_min", t_min, t_min < t_max - 1, f"below t_max - 1 = {t_max - 1}")
    try:
        tgrid = TimeGrid.from_dt(t_min, t_max, dt)
    except ValueError as exc:
        raise ConfigError(f"dt={dt} must divide t_max - t_min") from exc
    if abs(round(1.0 / dt) * dt - 1.0) > 1e-9:
        raise ConfigError(f"dt={dt} out of range: must divide 1")
    n_x = _get(cp, "grid", "n_x", 128 if periodic else 256)
    _check("n_x", n_x, 8 <= n_x <= 4096, "in [8, 4096]")
    X = _get(cp, "grid", "X", 0.5 if periodic else 0.3)
    _check("X", X, X > 0, "positive")
    space = SpatialGrid(True, n_x) if periodic else SpatialGrid(False, n_x, X)
    vmax = _get(cp, "grid", "vmax", 3.0 if periodic else 10.0)
    _check("vmax", vmax, vmax > 0, "positive")
    stride = _get(cp, "grid", "stride", 10 if periodic else 5)
    _check("stride", stride, stride >= 1, ">= 1")
    options = SolverOptions(lattice_h=space.h, vmax=vmax, stride=stride)

    if not cp.has_option("observations", "Sigma"):
        raise ConfigError("missing required key `Sigma` in [observations]")
    y = None
    if cp.has_option("observations", "y"):
        y = _floats(_get(cp, "observations", "y"))
    y_file = _get(cp, "observations", "y_file")
    y_file = (base / y_file) if y_file else None
    if y_file is not None and not y_file.exists():
        raise ConfigError(f"y_file {y_file} does not exist")
    try:
        if kind.endswith("_hj"):
            points = _table(_get(cp, "observations", "points", required=True))
            ref = _floats(_get(cp, "observations", "ref", required=True))
            if any(len(r) != 2 for r in points) or len(ref) != 2:
                raise ConfigError("[observations] points/ref entries need: x t")
            for xx, tt in points + [ref]:
                _check("observation time", tt, t_min < tt <= t_max, f"in ({t_min}, {t_max}]")
                if not periodic:
                    _check("observation x", xx, abs(xx) <= X, f"within [-{X}, {X}]")
            Sigma = _sigma(_get(cp, "observations", "Sigma"), len(points))
            obs = ObservationSet.hj([tuple(r) for r in points], tuple(ref), Sigma, y)
        else:
            funcs = _table(_get(cp, "observations", "functionals", required=True))
            if any(len(r) != 3 for r in funcs):
                raise ConfigError("[observations] functionals entries need: center radius t")
            for _, _, tt in funcs:
                _check("observation time", tt, t_min < tt <= t_max, f"in ({t_min}, {t_max}]")
            sat = _get(cp, "observations", "saturation", 1e3)
            _check("saturation", sat, sat > 0, "positive")
            Sigma = _sigma(_get(cp, "observations", "Sigma"), len(funcs))
            obs = ObservationSet.burgers([tuple(r) for r in funcs], Sigma, y, sat)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"[observations] {exc}") from exc

    beta = _get(cp, "sampler", "beta", 0.2)
    _check("beta", beta, 0 < beta <= 1, "in (0, 1]")
    cfg_seed = _get(cp, "sampler", "seed", 0)
    seed = cfg_seed if seed is None else seed
    _check("seed", seed, seed >= 0, ">= 0")
    steps = _get(cp, "sampler", "steps", 1000)
    burn_in = _get(cp, "sampler", "burn_in", 0)
    _check("burn_in", burn_in, 0 <= burn_in < steps, f"in [0, steps={steps})")
    thin = _get(cp, "sampler", "thin", 1)
    _check("thin", thin, thin >= 1, ">= 1")
    chains = _get(cp, "sampler", "chains", 1)
    _check("chains", chains, chains >= 1, ">= 1")
    keep = _get(cp, "sampler", "keep_paths", "false").lower()
    _check("keep_paths", keep, keep in ("true", "false"), "true or false")

    name = _get(cp, "experiment", "name", required=True)
    _check("name", name, name in EXPERIMENTS, "one of " + ", ".join(EXPERIMENTS))
    settings = {}
    for key in ("n_samples", "r", "n_pairs", "n_paths", "moment_dt"):
        val = _get(cp, "experiment", key)
        if val is not None:
            _check(key, val, val > 0, "positive")
            settings[key] = val
    for key in ("path_file", "truth_file"):
        val = _get(cp, "experiment", key)
        if val:
            path = base / val
            if not path.exists():
                raise ConfigError(f"{key} {path} does not exist")
            settings[key] = path

    return ExperimentConfig(
        problem=kind, potential=potential, b=b, time_grid=tgrid, space=space,
        options=options, obs=obs, y_file=y_file, sampler=PcnParams(beta, seed),
        steps=steps, burn_in=burn_in, thin=thin, chains=chains, keep_paths=keep == "true",
        experiment=name, seed=seed, settings=settings, text=text, base=base)


def load_config(path: str | Path, seed: int | None = None) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(), path.parent, seed)
