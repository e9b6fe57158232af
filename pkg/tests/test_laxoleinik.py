import numpy as np
import pytest

from hjinverse.action import ActionParams, FreeStart, minimize_action
from hjinverse.forcing import default_nonperiodic, default_periodic, zero_potential
from hjinverse.laxoleinik import (GridFunction, SpatialGrid, TruncationError, default_depths,
                                  evolve, global_solution, lax_apply, lipschitz_estimate,
                                  read_grid_function_csv, velocity)
from hjinverse.wiener import TimeGrid, sample_prior, zero_path

from oracles import lax_lattice_dp, random_periodic_potential


def _zero(grid, t=0.0, b=0.0):
    return GridFunction(grid, np.zeros(grid.n), t, b)


def test_zero_forcing_zero_data():
    grid = SpatialGrid(True, 32)
    p = ActionParams(zero_potential(), zero_path(TimeGrid.from_dt(0, 1, 0.01)))
    out = lax_apply(_zero(grid), (0.0, 1.0), p)
    assert np.max(np.abs(out.values)) < 1e-12
    assert out.time_stamp == 1.0


def test_hopf_lax_box():
    grid = SpatialGrid(False, 201, 1.0)
    p = ActionParams(zero_potential(False), zero_path(TimeGrid.from_dt(0, 1, 0.01)))
    psi = GridFunction(grid, 0.5 * grid.points ** 2, 0.0)
    out = lax_apply(psi, (0.0, 1.0), p, normalize=False)
    inner = np.abs(grid.points) <= 0.5
    err = np.abs(out.values - 0.25 * grid.points ** 2)[inner]
    assert err.max() <= 5 * (0.01 + grid.h ** 2)


@pytest.mark.parametrize("seed", range(3))
def test_matches_lattice_dynamic_programme(seed):
    rng = np.random.default_rng(seed)
    F = random_periodic_potential(rng, amp=0.3)
    n = 21
    grid = SpatialGrid(True, n)
    W = sample_prior(TimeGrid(0.0, 1.0, 5), (seed, 2))
    psi = 0.1 * np.cos(2 * np.pi * grid.points + rng.uniform(0, 6))
    p = ActionParams(F, W)
    got = lax_apply(GridFunction(grid, psi, 0.0), (0.0, 1.0), p, normalize=False).values
    ref = lax_lattice_dp(psi, n, W.values, W.grid.dt, F)
    # continuous interior nodes can only improve on the lattice
    assert np.all(got <= ref + 1e-9)
    assert np.max(ref - got) < 0.05


def test_semigroup_modulo_constant():
    W = sample_prior(TimeGrid.from_dt(-1, 1, 0.01), 3)
    grid = SpatialGrid(True, 128)
    p = ActionParams(default_periodic(), W)
    psi = GridFunction(grid, 0.1 * np.sin(2 * np.pi * grid.points), -1.0)
    direct = lax_apply(psi, (-1.0, 1.0), p)
    mid = lax_apply(psi, (-1.0, 0.0), p)
    composed = lax_apply(mid, (0.0, 1.0), p)
    # restricting the middle node to the grid costs O(h^2 / dt) at most
    assert composed.distance_mod_const(direct) < 5 * grid.h ** 2 / 0.01


def test_order_preservation_and_constants():
    W = sample_prior(TimeGrid.from_dt(0, 1, 0.01), 4)
    grid = SpatialGrid(True, 64)
    p = ActionParams(default_periodic(), W)
    base = 0.1 * np.sin(2 * np.pi * grid.points)
    bump = 0.05 * np.exp(-((grid.points - 0.5) / 0.1) ** 2)
    lo = lax_apply(GridFunction(grid, base, 0.0), (0, 1), p, normalize=False)
    hi = lax_apply(GridFunction(grid, base + bump, 0.0), (0, 1), p, normalize=False)
    sh = lax_apply(GridFunction(grid, base + 2.5, 0.0), (0, 1), p, normalize=False)
    assert np.all(lo.values <= hi.values + 1e-9)
    assert np.allclose(sh.values, lo.values + 2.5, atol=1e-9)


def test_stamp_mismatch_rejected():
    grid = SpatialGrid(True, 16)
    p = ActionParams(zero_potential(), zero_path(TimeGrid.from_dt(0, 1, 0.1)))
    with pytest.raises(ValueError):
        lax_apply(_zero(grid, 0.5), (0.0, 1.0), p)


def test_global_solution_zero_forcing():
    W = zero_path(TimeGrid.from_dt(-4, 1, 0.01))
    p = ActionParams(zero_potential(), W)
    gs = global_solution(1.0, p, default_depths(1.0, -4.0), SpatialGrid(True, 32))
    assert gs.converged and np.all(gs.deltas == 0.0)


def test_global_solution_periodic_converges():
    W = sample_prior(TimeGrid.from_dt(-5, 1, 0.01), 12)
    p = ActionParams(default_periodic(), W)
    gs = global_solution(1.0, p, default_depths(1.0, -5.0), SpatialGrid(True, 64))
    d = gs.deltas
    assert gs.converged and d[-1] <= 1e-3
    assert np.all(np.diff(d) <= 1e-12)


def test_truncation_error_for_too_deep_schedule():
    W = sample_prior(TimeGrid.from_dt(-2, 1, 0.01), 1)
    p = ActionParams(default_periodic(), W)
    with pytest.raises(TruncationError):
        global_solution(1.0, p, [0.0, -1.0, -3.0], SpatialGrid(True, 32))
    with pytest.raises(ValueError):
        global_solution(1.0, p, [-1.0, 0.0], SpatialGrid(True, 32))


def test_evolve_anchors_constants_across_times():
    W = sample_prior(TimeGrid.from_dt(-3, 1, 0.01), 2)
    p = ActionParams(default_periodic(), W)
    grid = SpatialGrid(True, 64)
    tr = evolve(p, grid, -3.0, [0.5, 1.0])
    step = lax_apply(tr.fields[0.5], (0.5, 1.0), p, normalize=False)
    assert np.allclose(step.values, tr.fields[1.0].values, atol=1e-12)
    assert tr.max_residual < 1e-6
    assert 0 <= tr.max_relative_residual <= tr.max_residual


def test_velocity_of_constant_and_quadratic():
    per = SpatialGrid(True, 50)
    v = velocity(GridFunction(per, np.full(50, 3.0), 0.0, 0.3))
    assert np.allclose(v.values, 0.3)
    box = SpatialGrid(False, 201, 1.0)
    v = velocity(GridFunction(box, 0.5 * box.points ** 2, 0.0))
    assert np.max(np.abs(v.values - box.points)[1:-1]) < 1e-12 + box.h ** 2


def test_velocity_matches_minimiser_end_velocity():
    W = sample_prior(TimeGrid.from_dt(-3, 1, 0.01), 6)
    p = ActionParams(default_periodic(), W)
    grid = SpatialGrid(True, 128)
    tr = evolve(p, grid, -3.0, [0.0, 1.0])
    u = velocity(tr.fields[1.0]).values
    du = np.abs(np.roll(u, -1) - np.roll(u, 1))
    smooth = np.nonzero(du < 20 * grid.h)[0]
    pick = np.random.default_rng(0).choice(smooth, 20, replace=False)
    psi0 = tr.fields[0.0]
    for i in pick:
        res = minimize_action(grid.points[i], (0.0, 1.0), p, FreeStart(psi0))
        end = res.curve.velocities[-1]
        assert abs(end - u[i]) < 10 * grid.h + 0.05 * abs(W.at(1.0) - W.at(0.99))


def test_lipschitz_estimate():
    box = SpatialGrid(False, 401, 1.0)
    assert lipschitz_estimate(GridFunction(box, np.full(401, 2.0), 0.0)) == 0.0
    assert lipschitz_estimate(GridFunction(box, 0.5 * box.points ** 2, 0.0)) == pytest.approx(
        1.0, abs=box.h)
    per = SpatialGrid(True, 64)
    assert lipschitz_estimate(GridFunction(per, np.zeros(64), 0.0, -0.4)) == pytest.approx(0.4)


def test_default_depths():
    assert default_depths(1.0, -2.0) == [0.0, -1.0, -2.0]
    assert default_depths(1.0, -2.0, first=2.0) == [-1.0, -2.0]


def test_grid_function_csv_roundtrip(tmp_path):
    box = SpatialGrid(False, 11, 0.3)
    f = GridFunction(box, np.linspace(-1, 1, 11) ** 3, 0.75)
    f.write_csv(tmp_path / "f.csv")
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "# time_stamp=0.75" and lines[1] == "x,value"
    g = read_grid_function_csv(tmp_path / "f.csv", periodic=False)
    assert g.grid == box and np.array_equal(g.values, f.values) and g.time_stamp == 0.75


def test_grid_function_comparisons_ignore_constants():
    per = SpatialGrid(True, 16)
    a = GridFunction(per, np.sin(2 * np.pi * per.points), 0.0)
    assert a.distance_mod_const(a.shifted(7.0)) < 1e-14
    assert abs(a.normalized().values.mean()) < 1e-15


def test_nonperiodic_window_runs_inside_box():
    W = sample_prior(TimeGrid.from_dt(-1, 1, 0.002), 3)
    p = ActionParams(default_nonperiodic(), W)
    grid = SpatialGrid(False, 128, 0.3)
    det = lax_apply(_zero(grid, 0.0), (0.0, 1.0), p, details=True)
    assert np.all(det.residuals <= 1e-6 * (1 + np.abs(det.raw)))
    assert np.all(np.abs(det.starts) <= 0.3 + 1e-12)
