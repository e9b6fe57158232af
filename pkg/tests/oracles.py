"""Independent reference computations used by the tests."""

import itertools
import math

import numpy as np

from hjinverse.forcing import PeriodicPotential


def direct_action(points, w, dt, F, b=0.0):
    """White-noise form: left-point Ito sum plus kinetic quadrature, no integration by parts."""
    g = np.asarray(points, float)
    kinetic = 0.5 * dt * np.sum((np.diff(g) / dt - b) ** 2)
    noise = -np.sum(F.eval(g[:-1]) * np.diff(w))
    return kinetic + noise - 0.5 * b * b * dt * (len(g) - 1)


def random_periodic_potential(rng, n_modes=3, amp=0.4):
    modes = [(k, amp * rng.uniform(-1, 1), rng.uniform(0, 2 * np.pi))
             for k in rng.choice(np.arange(1, 5), size=n_modes, replace=False)]
    return PeriodicPotential(tuple(modes))


def lattice_enumeration(x_start, x_end, w, dt, F, lattices, chunk=21 ** 3):
    """Exhaustive minimum of the discrete action over all lattice curves.

    ``lattices[k]`` lists the candidate positions for interior node ``k``.
    Every combination is evaluated; returns ``(value, points)``.
    """
    lat = [np.asarray(l, float) for l in lattices]
    n = len(lat) + 1
    best, arg = np.inf, None
    head = list(itertools.product(*[range(len(l)) for l in lat[:2]]))
    tail_idx = np.array(list(itertools.product(*[range(len(l)) for l in lat[2:]])))
    tail = np.column_stack([lat[2 + k][tail_idx[:, k]] for k in range(len(lat) - 2)])
    for i, j in head:
        pts = np.empty((len(tail), n + 1))
        pts[:, 0] = x_start
        pts[:, 1] = lat[0][i]
        pts[:, 2] = lat[1][j]
        pts[:, 3:-1] = tail
        pts[:, -1] = x_end
        vals = _discrete_action_rows(pts, w, dt, F)
        k = int(np.argmin(vals))
        if vals[k] < best:
            best, arg = float(vals[k]), pts[k].copy()
    return best, arg


def lattice_enumeration_tensor(x_start, x_end, w, dt, F, lattices):
    """Same exhaustive minimum as :func:`lattice_enumeration`, via one broadcast tensor.

    The discrete action is a sum of terms coupling neighbouring nodes, so the
    value of every lattice curve is assembled by broadcasting those terms over
    a ``len(lattices[0]) x ... x len(lattices[-1])`` array.  Every curve is
    still evaluated.
    """
    nodes = [np.array([x_start], float)] + [np.asarray(l, float) for l in lattices]
    nodes.append(np.array([x_end], float))
    wh = np.asarray(w, float) - w[-1]
    n_int = len(lattices)
    total = np.zeros([len(l) for l in lattices])
    for k in range(len(nodes) - 1):
        a, b = nodes[k], nodes[k + 1]
        term = (0.5 / dt * (b[None, :] - a[:, None]) ** 2
                + (F.eval(b)[None, :] - F.eval(a)[:, None]) * 0.5 * (wh[k] + wh[k + 1]))
        # node k lives on axis k - 1 (start and end are singleton)
        shape = [1] * n_int
        if k >= 1:
            shape[k - 1] = len(a)
        if k + 1 <= n_int:
            shape[k] = len(b)
        total = total + term.reshape(shape)
    total -= F.eval(np.array([x_start]))[0] * (w[-1] - w[0])
    flat = int(np.argmin(total))
    idx = np.unravel_index(flat, total.shape)
    pts = np.array([x_start] + [lattices[k][i] for k, i in enumerate(idx)] + [x_end], float)
    return float(total.flat[flat]), pts


def _discrete_action_rows(pts, w, dt, F):
    f = F.eval(pts)
    kin = 0.5 / dt * np.sum(np.diff(pts, axis=1) ** 2, axis=1)
    wh = w - w[-1]
    coup = np.sum(np.diff(f, axis=1) * 0.5 * (wh[:-1] + wh[1:]), axis=1)
    return kin + coup - f[:, 0] * (w[-1] - w[0])


def lax_lattice_dp(psi, grid_n, w, dt, F, b=0.0, span=1.5, sub=4):
    """Periodic Lax operator by brute dynamic programming over lattice curves.

    Start points run over the grid nodes (on the universal cover, ``psi`` has
    period one); interior nodes over a ``sub``-times finer lattice.  Only
    nodes with ``|x - x_end| <= span`` are used.  Returns one value per grid point.
    """
    n = len(w) - 1
    h = 1.0 / grid_n
    hf = h / sub
    wh = w - w[-1]
    out = np.empty(grid_n)
    for i in range(grid_n):
        x_end = i * h
        ks = np.arange(int(np.floor((x_end - span) / h)), int(np.ceil((x_end + span) / h)) + 1)
        xs = ks * h
        val = psi[np.mod(ks, grid_n)] - F.eval(xs) * (w[-1] - w[0])
        fine = np.arange(int(np.floor((x_end - span) / hf)), int(np.ceil((x_end + span) / hf)) + 1) * hf
        prev, fprev = xs, F.eval(xs)
        for k in range(n):
            nxt = fine if k < n - 1 else np.array([x_end])
            fn = F.eval(nxt)
            kin = 0.5 / dt * (nxt[None, :] - prev[:, None] - b * dt) ** 2
            coup = (fn[None, :] - fprev[:, None]) * 0.5 * (wh[k] + wh[k + 1])
            val = np.min(val[:, None] + kin + coup, axis=0)
            prev, fprev = nxt, fn
        out[i] = val[0] - 0.5 * b * b * dt * n
    return out


def pinned_cov(times, t_max):
    """Covariance of a Brownian path pinned to zero at ``t_max``."""
    t = np.asarray(times, float)
    return t_max - np.maximum.outer(t, t)


def gaussian_posterior(C, Sigma, y):
    """Mean and covariance for ``y = x + eta`` with ``x ~ N(0, C)`` and ``eta ~ N(0, Sigma)``."""
    Si = np.linalg.inv(Sigma)
    Cp = np.linalg.inv(np.linalg.inv(C) + Si)
    return Cp @ Si @ y, Cp


def gaussian_evidence(C, Sigma, y):
    """Prior mean of ``exp(-|y - x|_Sigma^2 / 2)``."""
    S = C + Sigma
    return math.sqrt(np.linalg.det(Sigma) / np.linalg.det(S)) * math.exp(
        -0.5 * y @ np.linalg.solve(S, y))


def gaussian_hellinger(C, Sigma, y1, y2):
    """Hellinger distance (``d^2 = 1 - affinity``) between the two conjugate posteriors."""
    _, Cp = gaussian_posterior(C, Sigma, y1)
    Si = np.linalg.inv(Sigma)
    dy = np.asarray(y2, float) - np.asarray(y1, float)
    q = dy @ Si @ Cp @ Si @ dy
    return math.sqrt(1.0 - math.exp(-q / 8.0))


def gaussian_hellinger_lipschitz(C, Sigma):
    _, Cp = gaussian_posterior(C, Sigma, np.zeros(len(Sigma)))
    Si = np.linalg.inv(Sigma)
    return math.sqrt(np.linalg.eigvalsh(Si @ Cp @ Si).max() / 8.0)


def batch_means_se(x, n_batches=50):
    """Standard error of the mean of a correlated series by non-overlapping batch means."""
    x = np.asarray(x, float)
    m = len(x) // n_batches
    b = x[:m * n_batches].reshape(n_batches, m).mean(axis=1)
    return float(b.std(ddof=1) / math.sqrt(n_batches))
