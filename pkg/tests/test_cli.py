import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from hjinverse import __version__
from hjinverse.cli import main, run
from hjinverse.config import ConfigError, parse_config

BASE = """
[problem]
kind = periodic_hj
[potential]
modes = 1 0.15 0 | 2 0.05 0.7
[grid]
dt = 0.02
t_min = -2
t_max = 1
n_x = 32
[observations]
points = 0.25 1 | 0.75 0.5
ref = 0 0
Sigma = 0.01
[sampler]
steps = 6
beta = 0.3
seed = 4
[experiment]
name = {name}
"""


def _cfg(name="forward", extra=""):
    return BASE.format(name=name) + extra


def _write(tmp_path, text, name="exp.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_parse_defaults_and_override():
    cfg = parse_config(_cfg(), seed=9)
    assert cfg.seed == 9 and cfg.sampler.seed == 9
    assert cfg.forward_kind == "hj" and cfg.periodic
    assert cfg.time_grid.n_steps == 150 and cfg.space.n == 32
    assert np.allclose(cfg.obs.Sigma, 0.01 * np.eye(2))
    assert parse_config(_cfg()).seed == 4


def test_unknown_entries_are_listed():
    text = _cfg() + "bogus = 1\n[extras]\nx = 2\n"
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert "[experiment] bogus" in str(exc.value) and "[extras]" in str(exc.value)


def test_missing_sigma_is_named():
    text = _cfg().replace("Sigma = 0.01\n", "")
    with pytest.raises(ConfigError, match="`Sigma`"):
        parse_config(text)


@pytest.mark.parametrize("old,new,field", [
    ("beta = 0.3", "beta = 1.5", "beta"),
    ("n_x = 32", "n_x = 2", "n_x"),
    ("dt = 0.02", "dt = 0.7", "dt"),
    ("name = forward", "name = explode", "name"),
    ("kind = periodic_hj", "kind = torus", "kind"),
])
def test_range_errors_name_field_and_bound(old, new, field):
    with pytest.raises(ConfigError) as exc:
        parse_config(_cfg().replace(old, new))
    msg = str(exc.value)
    assert msg.startswith(f"{field}=") and "must be" in msg


def test_missing_referenced_file(tmp_path):
    text = _cfg().replace("Sigma = 0.01", "Sigma = 0.01\ny_file = nowhere.csv")
    with pytest.raises(ConfigError, match="does not exist"):
        parse_config(text, base=tmp_path)


def test_full_sigma_matrix():
    cfg = parse_config(_cfg().replace("Sigma = 0.01", "Sigma = 0.02 0.01 | 0.01 0.03"))
    assert np.allclose(cfg.obs.Sigma, [[0.02, 0.01], [0.01, 0.03]])
    with pytest.raises(ConfigError):
        parse_config(_cfg().replace("Sigma = 0.01", "Sigma = 1 2 3"))


def test_forward_zero_forcing_writes_zeros(tmp_path):
    text = _cfg().replace("modes = 1 0.15 0 | 2 0.05 0.7", "modes =")
    out = run(parse_config(text), tmp_path)
    vals = np.loadtxt(out / "forward.csv", delimiter=",", skiprows=1)[:, 1]
    assert np.allclose(vals, 0.0, atol=1e-12)
    echo = (out / "config.echo").read_text()
    assert __version__ in echo and text in echo
    result = json.loads((out / "result.json").read_text())
    assert result["config"] == text and result["version"] == __version__
    assert out.name.startswith("run-") and out.name.endswith("-4")


def test_runs_are_bit_reproducible(tmp_path):
    cfg = parse_config(_cfg("make_data"))
    a = run(cfg, tmp_path / "a")
    b = run(cfg, tmp_path / "b")
    for name in ("y.csv", "truth_path.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_make_data_then_invert(tmp_path):
    run(parse_config(_cfg("make_data")), tmp_path)
    out = run(parse_config(_cfg("invert")), tmp_path)
    res = json.loads((out / "result.json").read_text())
    assert "truth_correlation" in res and len(res["acceptance_rates"]) == 1
    assert (out / "chain_0.csv").exists() and (out / "posterior_mean.csv").exists()


def test_invert_without_data_fails(tmp_path):
    with pytest.raises(ConfigError, match="no data"):
        run(parse_config(_cfg("invert")), tmp_path)


def test_moments_and_bounds_outputs(tmp_path):
    out = run(parse_config(_cfg("moments", "n_samples = 1000\nmoment_dt = 0.0005\n")), tmp_path)
    header = (out / "moments.csv").read_text().splitlines()[0]
    assert header == "name,estimate,std_error,n,seed"
    text = _cfg("verify_bounds", "n_paths = 2\n").replace("0.75 0.5", "0.75 1")
    out = run(parse_config(text), tmp_path)
    res = json.loads((out / "result.json").read_text())
    assert set(res["bounds"]) == {"velocity", "lipschitz", "forward"}


def test_wellposedness_outputs(tmp_path):
    text = _cfg("wellposedness", "n_samples = 50\nn_pairs = 2\n")
    out = run(parse_config(text), tmp_path, threads=2)
    res = json.loads((out / "result.json").read_text())
    assert res["label"] == "empirical evidence, not a proof"
    rows = (out / "distances.csv").read_text().splitlines()
    assert len(rows) == 1 + 2 * 7


def test_main_exit_codes(tmp_path, capsys):
    good = _write(tmp_path, _cfg())
    assert main(["--config", str(good), "--out", str(tmp_path / "o"), "--seed", "2"]) == 0
    bad = _write(tmp_path, _cfg().replace("Sigma = 0.01\n", ""), "bad.ini")
    assert main(["--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "Sigma" in capsys.readouterr().err
    assert main(["--config", str(good), "--threads", "0"]) == 2
    assert main(["--config", str(tmp_path / "missing.ini")]) == 1


def test_module_entry_point(tmp_path):
    cfg = _write(tmp_path, _cfg().replace("Sigma = 0.01\n", ""))
    proc = subprocess.run([sys.executable, "-m", "hjinverse", "--config", str(cfg)],
                          capture_output=True, text=True)
    assert proc.returncode != 0 and "Sigma" in proc.stderr
