"""Command-line experiment runner.

Usage::

    python -m hjinverse --config exp.ini [--seed N] [--out DIR] [--threads N] [--verbose]

Each run writes ``run-<timestamp>-<seed>/`` under ``--out`` holding
``config.echo``, ``result.json`` and experiment-specific CSV files.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config
from .diagnostics import estimate_moments
from .inference import Posterior, pcn_sample, phi_potential, wellposedness_experiment
from .laxoleinik import lipschitz_estimate
from .observe import ForwardSetup, g_b, g_hj, hj_envelope, solve_for, synthesize, unit_envelope
from .wiener import BrownianPath, PcnParams, read_path_csv, sample_prior, write_path_csv, zero_path

log = logging.getLogger("hjinverse")


def setup_of(cfg: ExperimentConfig) -> ForwardSetup:
    return ForwardSetup(cfg.potential, cfg.space, cfg.b, cfg.options)


def _write_vector(path: Path, values, header="index,value") -> None:
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for i, v in enumerate(values):
            fh.write(f"{i},{float(v):.17g}\n")


def _read_vector(path: Path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)[:, 1]


def _map(fn, items, threads: int):
    """Apply ``fn`` to every item; results come back in item order."""
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def _forward_vec(cfg: ExperimentConfig, W: BrownianPath, traj=None) -> np.ndarray:
    if cfg.forward_kind == "hj":
        return g_hj(W, cfg.obs, setup_of(cfg), traj)
    return g_b(W, cfg.obs, setup_of(cfg), traj)


def run_forward(cfg: ExperimentConfig, out: Path, threads: int) -> dict:
    path_file = cfg.settings.get("path_file")
    W = read_path_csv(path_file) if path_file else sample_prior(cfg.time_grid, cfg.seed)
    traj = solve_for(W, cfg.obs, setup_of(cfg))
    g = _forward_vec(cfg, W, traj)
    write_path_csv(W, out / "path.csv")
    _write_vector(out / "forward.csv", g)
    for k, t in enumerate(sorted(traj.fields)):
        traj.fields[t].write_csv(out / f"field_{k}.csv")
    return {"forward": g.tolist(), "max_residual": traj.max_residual,
            "max_relative_residual": traj.max_relative_residual}


def run_make_data(cfg: ExperimentConfig, out: Path, threads: int) -> dict:
    W = sample_prior(cfg.time_grid, cfg.seed)
    y = synthesize(W, cfg.obs, setup_of(cfg), seed=cfg.seed + 1)
    write_path_csv(W, out / "truth_path.csv")
    _write_vector(out / "y.csv", y)
    return {"y": y.tolist()}


def _latest_data_dir(root: Path, seed: int) -> Path | None:
    runs = sorted(p for p in root.glob(f"run-*-{seed}") if (p / "y.csv").exists())
    return runs[-1] if runs else None


def _resolve_data(cfg: ExperimentConfig, root: Path):
    truth_file = cfg.settings.get("truth_file")
    if cfg.obs.y is not None:
        y = cfg.obs.y
    elif cfg.y_file is not None:
        y = _read_vector(cfg.y_file)
    else:
        src = _latest_data_dir(root, cfg.seed)
        if src is None:
            raise ConfigError("no data: set y or y_file in [observations], or run make_data first")
        y = _read_vector(src / "y.csv")
        truth_file = truth_file or src / "truth_path.csv"
    truth = read_path_csv(truth_file) if truth_file and Path(truth_file).exists() else None
    return np.asarray(y, float), truth


def run_invert(cfg: ExperimentConfig, out: Path, threads: int, root: Path) -> dict:
    y, truth = _resolve_data(cfg, root)
    obs = cfg.obs.with_data(y)
    post = Posterior(obs, cfg.forward_kind, cfg.time_grid, setup_of(cfg))

    def chain(k):
        params = PcnParams(cfg.sampler.beta, cfg.seed * 1000 + k)
        return pcn_sample(post, params, cfg.steps, cfg.burn_in, cfg.thin)

    chains = _map(chain, range(cfg.chains), threads)
    for k, ch in enumerate(chains):
        ch.write_csv(out / f"chain_{k}.csv", include_paths=cfg.keep_paths)
    samples = [w for ch in chains for w in ch.samples]
    mean = BrownianPath(cfg.time_grid, np.mean([w.values for w in samples], axis=0))
    write_path_csv(mean, out / "posterior_mean.csv")
    prior_mean = zero_path(cfg.time_grid)
    result = {
        "y": y.tolist(),
        "acceptance_rates": [ch.acceptance_rate for ch in chains],
        "failures": [ch.failures for ch in chains],
        "phi_posterior_mean": phi_potential(mean, post, y),
        "phi_prior_mean": phi_potential(prior_mean, post, y),
        "chain_seeds": [ch.seed for ch in chains],
    }
    if truth is not None:
        a, b = mean.values[:-1], truth.values[:-1]
        result["truth_correlation"] = float(np.corrcoef(a, b)[0, 1])
    return result


def run_wellposedness(cfg: ExperimentConfig, out: Path, threads: int) -> dict:
    post = Posterior(cfg.obs, cfg.forward_kind, cfg.time_grid, setup_of(cfg))
    rep = wellposedness_experiment(post, cfg.settings.get("r", 1.0),
                                   int(cfg.settings.get("n_pairs", 8)),
                                   int(cfg.settings.get("n_samples", 10_000)), cfg.seed,
                                   threads=threads)
    with open(out / "distances.csv", "w") as fh:
        fh.write("pair,separation,gap,distance,std_error\n")
        for i in range(rep.distances.shape[0]):
            for j, eps in enumerate(rep.separations):
                fh.write(f"{i},{eps:.17g},{rep.gaps[i, j]:.17g},"
                         f"{rep.distances[i, j]:.17g},{rep.std_errors[i, j]:.17g}\n")
    return rep.to_dict()


def bound_sample(cfg: ExperimentConfig, W: BrownianPath) -> dict:
    """Solution-size statistics of one path against the unit-window envelopes."""
    t = cfg.time_grid.t_max
    traj = solve_for(W, cfg.obs, setup_of(cfg))
    field_t = traj.fields[round(t, 12)] if round(t, 12) in traj.fields else None
    if field_t is None:
        raise ValueError("verify_bounds needs an observation time at t_max")
    rec = {
        "velocity": float(np.max(np.abs(traj.velocity[round(t, 12)]))),
        "lipschitz": lipschitz_estimate(field_t),
        "envelope": unit_envelope(W, t),
    }
    if cfg.forward_kind == "hj":
        rec["forward"] = float(np.max(np.abs(g_hj(W, cfg.obs, setup_of(cfg), traj))))
        rec["forward_envelope"] = hj_envelope(W, cfg.obs)
    return rec


def run_verify_bounds(cfg: ExperimentConfig, out: Path, threads: int) -> dict:
    n = int(cfg.settings.get("n_paths", 100))
    paths = [sample_prior(cfg.time_grid, (cfg.seed, k)) for k in range(2 * n)]
    recs = _map(lambda W: bound_sample(cfg, W), paths, threads)
    keys = [("velocity", "envelope"), ("lipschitz", "envelope")]
    if cfg.forward_kind == "hj":
        keys.append(("forward", "forward_envelope"))
    summary = {}
    for num, den in keys:
        ratio = np.array([r[num] / r[den] for r in recs])
        c = 1.5 * ratio[:n].max()
        summary[num] = {"constant": float(c), "calibration_max_ratio": float(ratio[:n].max()),
                        "validation_max_ratio": float(ratio[n:].max()),
                        "violations": int(np.sum(ratio[n:] > c))}
    with open(out / "bounds.csv", "w") as fh:
        cols = sorted(recs[0])
        fh.write("index,set," + ",".join(cols) + "\n")
        for k, r in enumerate(recs):
            fh.write(f"{k},{'calibration' if k < n else 'validation'}," +
                     ",".join(f"{r[c]:.17g}" for c in cols) + "\n")
    return {"bounds": summary, "n_calibration": n, "n_validation": n}


def run_moments(cfg: ExperimentConfig, out: Path, threads: int) -> dict:
    mc = estimate_moments(int(cfg.settings.get("n_samples", 10_000)), cfg.seed,
                          cfg.settings.get("moment_dt", 1e-4))
    with open(out / "moments.csv", "w") as fh:
        fh.write("name,estimate,std_error,n,seed\n")
        for name, est, se, n, seed in mc.rows():
            fh.write(f"{name},{est:.17g},{se:.17g},{n},{seed}\n")
    return {"E1": mc.E1, "E2": mc.E2, "E3": mc.E3, "se": [mc.se1, mc.se2, mc.se3],
            "exponent": mc.exponent, "dt": mc.dt, "n_samples": mc.n_samples}


def run(cfg: ExperimentConfig, out_root: Path | str = ".", threads: int = 1) -> Path:
    """Run the configured experiment and return its output directory."""
    root = Path(out_root)
    stamp = datetime.now().strftime("%Y%m%dT%H%M%S%f")
    out = root / f"run-{stamp}-{cfg.seed}"
    out.mkdir(parents=True, exist_ok=False)
    (out / "config.echo").write_text(
        f"# hjinverse {__version__}\n# seed={cfg.seed}\n" + cfg.text)
    started = time.perf_counter()
    name = cfg.experiment
    if name == "forward":
        result = run_forward(cfg, out, threads)
    elif name == "make_data":
        result = run_make_data(cfg, out, threads)
    elif name == "invert":
        result = run_invert(cfg, out, threads, root)
    elif name == "wellposedness":
        result = run_wellposedness(cfg, out, threads)
    elif name == "verify_bounds":
        result = run_verify_bounds(cfg, out, threads)
    else:
        result = run_moments(cfg, out, threads)
    result = {"experiment": name, "version": __version__, "seed": cfg.seed,
              "elapsed_seconds": time.perf_counter() - started, **result,
              "config": cfg.text}
    (out / "result.json").write_text(json.dumps(result, indent=2, sort_keys=False))
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hjinverse", description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True, help="experiment configuration file")
    ap.add_argument("--seed", type=int, help="override [sampler] seed")
    ap.add_argument("--out", default=".", help="directory receiving run-* folders")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for task pools")
    ap.add_argument("--verbose", action="store_true", help="debug logging")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads < 1:
            raise ConfigError(f"threads={args.threads} out of range: must be >= 1")
        cfg = load_config(args.config, args.seed)
        out = run(cfg, args.out, args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError, ArithmeticError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0
