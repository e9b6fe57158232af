"""Compiled inner loops: potential evaluation, discrete action, Newton polish, lattice DP.

The discrete action of a curve ``g_0..g_n`` on a uniform grid with path
values ``w_0..w_n`` is

    A = sum_k [ dt/2 (v_k - b)^2 - (F(g_k) + F(g_{k+1}))/2 (w_{k+1} - w_k) ] - n dt b^2/2

with ``v_k = (g_{k+1} - g_k)/dt``.  Its interior gradient is
``G_j = v_{j-1} - v_j - F'(g_j)(w_{j+1} - w_{j-1})/2`` and its Hessian is
tridiagonal.
"""

import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi

STATUS_OK = 0
STATUS_BUDGET = 1
STATUS_STALLED = 2


@njit(cache=True)
def pot_f(kind, P, x):
    s = 0.0
    if kind == 0:
        for r in range(P.shape[0]):
            s += P[r, 1] * math.cos(TWO_PI * P[r, 0] * x + P[r, 2])
    else:
        nb = P.shape[0] - 1
        for r in range(nb):
            u = (x - P[r, 0]) / P[r, 2]
            s += P[r, 1] * math.exp(-0.5 * u * u)
        s += P[nb, 0] * math.tanh(x / P[nb, 1])
    return s


@njit(cache=True)
def pot_fgh(kind, P, x):
    f = 0.0
    g = 0.0
    h = 0.0
    if kind == 0:
        for r in range(P.shape[0]):
            om = TWO_PI * P[r, 0]
            th = om * x + P[r, 2]
            c = math.cos(th)
            sn = math.sin(th)
            f += P[r, 1] * c
            g -= P[r, 1] * om * sn
            h -= P[r, 1] * om * om * c
    else:
        nb = P.shape[0] - 1
        for r in range(nb):
            wd = P[r, 2]
            u = (x - P[r, 0]) / wd
            e = P[r, 1] * math.exp(-0.5 * u * u)
            f += e
            g -= e * u / wd
            h += e * (u * u - 1.0) / (wd * wd)
        amp = P[nb, 0]
        sc = P[nb, 1]
        th = math.tanh(x / sc)
        sech2 = 1.0 - th * th
        f += amp * th
        g += amp / sc * sech2
        h -= 2.0 * amp / (sc * sc) * th * sech2
    return f, g, h


@njit(cache=True)
def curve_action(kind, P, gam, w, dt, b):
    n = gam.shape[0] - 1
    total = 0.0
    f_prev = pot_f(kind, P, gam[0])
    for k in range(n):
        f_next = pot_f(kind, P, gam[k + 1])
        v = (gam[k + 1] - gam[k]) / dt - b
        total += 0.5 * dt * v * v - 0.5 * (f_prev + f_next) * (w[k + 1] - w[k])
        f_prev = f_next
    return total - 0.5 * b * b * n * dt


@njit(cache=True)
def _fill_derivs(kind, P, gam, f, g, h):
    for k in range(gam.shape[0]):
        f[k], g[k], h[k] = pot_fgh(kind, P, gam[k])


@njit(cache=True)
def _action_from_f(gam, f, w, dt, b):
    n = gam.shape[0] - 1
    total = 0.0
    for k in range(n):
        v = (gam[k + 1] - gam[k]) / dt - b
        total += 0.5 * dt * v * v - 0.5 * (f[k] + f[k + 1]) * (w[k + 1] - w[k])
    return total - 0.5 * b * b * n * dt


@njit(cache=True)
def _interior_grad(gam, g, w, dt, G):
    n = gam.shape[0] - 1
    gmax = 0.0
    for j in range(1, n):
        vl = (gam[j] - gam[j - 1]) / dt
        vr = (gam[j + 1] - gam[j]) / dt
        G[j - 1] = vl - vr - 0.5 * g[j] * (w[j + 1] - w[j - 1])
        a = abs(G[j - 1])
        if a > gmax:
            gmax = a
    return gmax


@njit(cache=True)
def _solve_shifted(dg, off, rhs, shift, piv, out):
    """Solve the symmetric tridiagonal system ``(T + shift I) out = rhs``.

    Returns False when a non-positive pivot shows the shifted matrix is not
    positive definite.
    """
    m = dg.shape[0]
    piv[0] = dg[0] + shift
    if piv[0] <= 0.0:
        return False
    out[0] = rhs[0]
    for i in range(1, m):
        l = off / piv[i - 1]
        piv[i] = dg[i] + shift - off * l
        if piv[i] <= 0.0:
            return False
        out[i] = rhs[i] - l * out[i - 1]
    out[m - 1] = out[m - 1] / piv[m - 1]
    for i in range(m - 2, -1, -1):
        out[i] = (out[i] - off * out[i + 1]) / piv[i]
    return True


@njit(cache=True, nogil=True)
def polish(kind, P, gam, w, dt, b, tol, maxit):
    """Damped Newton on the interior nodes of ``gam`` (both ends held fixed).

    ``gam`` is updated in place.  Returns ``(value, max|G|, iterations, status)``
    where the stopping test is ``max|G| <= tol * (1 + |value|)``.
    """
    n = gam.shape[0] - 1
    f = np.empty(n + 1)
    g = np.empty(n + 1)
    h = np.empty(n + 1)
    _fill_derivs(kind, P, gam, f, g, h)
    val = _action_from_f(gam, f, w, dt, b)
    m = n - 1
    if m <= 0:
        return val, 0.0, 0, STATUS_OK
    G = np.empty(m)
    dg = np.empty(m)
    piv = np.empty(m)
    p = np.empty(m)
    rhs = np.empty(m)
    trial = gam.copy()
    ft = np.empty(n + 1)
    gt = np.empty(n + 1)
    ht = np.empty(n + 1)
    off = -1.0 / dt
    gmax = _interior_grad(gam, g, w, dt, G)
    shift = 0.0
    it = 0
    status = STATUS_BUDGET
    while it < maxit:
        if gmax <= tol * (1.0 + abs(val)):
            status = STATUS_OK
            break
        for j in range(m):
            dg[j] = 2.0 / dt - 0.5 * h[j + 1] * (w[j + 2] - w[j])
            rhs[j] = -G[j]
        while not _solve_shifted(dg, off, rhs, shift, piv, p):
            shift = max(2.0 * shift, 1e-3 / dt)
        slope = 0.0
        for j in range(m):
            slope += G[j] * p[j]
        step = 1.0
        accepted = False
        for _ls in range(50):
            for j in range(m):
                trial[j + 1] = gam[j + 1] + step * p[j]
            _fill_derivs(kind, P, trial, ft, gt, ht)
            vt = _action_from_f(trial, ft, w, dt, b)
            if vt <= val + 1e-4 * step * slope or \
                    (step == 1.0 and vt <= val + 1e-13 * (1.0 + abs(val))):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            status = STATUS_STALLED
            break
        for k in range(n + 1):
            gam[k] = trial[k]
            f[k] = ft[k]
            g[k] = gt[k]
            h[k] = ht[k]
        val = vt
        gmax = _interior_grad(gam, g, w, dt, G)
        shift = 0.25 * shift if step == 1.0 else max(2.0 * shift, 1e-3 / dt)
        if shift < 1e-8 / dt:
            shift = 0.0
        it += 1
    return val, gmax, it, status


@njit(cache=True)
def polish_batch(kind, P, curves, w, dt, b, tol, maxit, vals, res, its, stats):
    for r in range(curves.shape[0]):
        vals[r], res[r], its[r], stats[r] = polish(kind, P, curves[r], w, dt, b, tol, maxit)


@njit(cache=True)
def lattice_dp(V0, ftab, periodic, S, kin, K, coef):
    """Value iteration over straight coarse segments on a uniform lattice.

    Parameters
    ----------
    V0 : (M,) initial values (``inf`` marks forbidden starts)
    ftab : potential sampled at lattice spacing / ``S``; length ``M*S`` when
        periodic, ``(M-1)*S + 1`` otherwise
    kin : (2K+1,) kinetic cost of each offset over one coarse segment
    coef : (nseg, S+1) weights ``c_q`` so the forcing term of a segment is
        ``-sum_q c_q F(x_q)``

    Returns final values and back-pointers (chosen offsets) per segment.
    """
    M = V0.shape[0]
    nseg = coef.shape[0]
    NT = ftab.shape[0]
    V = V0.copy()
    Vn = np.empty(M)
    bp = np.zeros((nseg, M), dtype=np.int16)
    for sgm in range(nseg):
        for x in range(M):
            Vn[x] = np.inf
        for y in range(M):
            vy = V[y]
            if not np.isfinite(vy):
                continue
            base = y * S
            for o in range(-K, K + 1):
                xe = y + o
                if periodic:
                    xe = xe % M
                elif xe < 0 or xe >= M:
                    continue
                c = vy + kin[o + K]
                for q in range(S + 1):
                    j = base + o * q
                    if periodic:
                        j = j % NT
                    c -= coef[sgm, q] * ftab[j]
                if c < Vn[xe]:
                    Vn[xe] = c
                    bp[sgm, xe] = o
        for x in range(M):
            V[x] = Vn[x]
    return V, bp


@njit(cache=True)
def backtrack(bp, end, M, periodic):
    """Unwrapped lattice coordinates of the optimal coarse path ending at ``end``."""
    nseg = bp.shape[0]
    pos = np.empty(nseg + 1, dtype=np.int64)
    pos[nseg] = end
    cur = end
    for sgm in range(nseg - 1, -1, -1):
        o = bp[sgm, cur]
        pos[sgm] = pos[sgm + 1] - o
        cur = cur - o
        if periodic:
            cur = cur % M
    return pos


@njit(cache=True)
def _refine(pos, x0, h, S, out):
    nseg = pos.shape[0] - 1
    for sgm in range(nseg):
        a = x0 + pos[sgm] * h
        c = x0 + pos[sgm + 1] * h
        for q in range(S):
            out[sgm * S + q] = a + (c - a) * q / S
    out[nseg * S] = x0 + pos[nseg] * h


@njit(cache=True)
def _shift_start(src, delta, out):
    n = src.shape[0] - 1
    for k in range(n + 1):
        out[k] = src[k] + delta * (n - k) / n


@njit(cache=True)
def _window_tables(kind, P, periodic, M, x0, h, w, dt, b, S, K):
    n = w.shape[0] - 1
    nseg = n // S
    NT = M * S if periodic else (M - 1) * S + 1
    ftab = np.empty(NT)
    for j in range(NT):
        ftab[j] = pot_f(kind, P, x0 + j * h / S)
    kin = np.empty(2 * K + 1)
    Tseg = S * dt
    for o in range(-K, K + 1):
        v = o * h / Tseg - b
        kin[o + K] = 0.5 * Tseg * v * v
    coef = np.zeros((nseg, S + 1))
    for sgm in range(nseg):
        for q in range(S):
            dw = 0.5 * (w[sgm * S + q + 1] - w[sgm * S + q])
            coef[sgm, q] += dw
            coef[sgm, q + 1] += dw
    return ftab, kin, coef


@njit(cache=True)
def _psi_at(psi, i, periodic):
    M = psi.shape[0]
    if periodic:
        return psi[i % M]
    return psi[i]


@njit(cache=True)
def _polish_and_search(kind, P, psi, periodic, x0, h, w, dt, b, tol, maxit,
                       max_shift, cur, i0, best):
    """Polish ``cur`` (start fixed at lattice node ``i0``) and walk the start.

    The start node moves one lattice step at a time, in each direction, while
    the total ``psi(start) + action`` keeps decreasing.  The winning curve is
    left in ``best``.
    """
    M = psi.shape[0]
    n = cur.shape[0] - 1
    cand = np.empty(n + 1)
    v0, r0, _, s0 = polish(kind, P, cur, w, dt, b, tol, maxit)
    bval = _psi_at(psi, i0, periodic) + v0
    bres = r0
    bstat = s0
    bi = i0
    for k in range(n + 1):
        best[k] = cur[k]
    for direction in (-1, 1):
        i = bi
        for _ in range(max_shift):
            j = i + direction
            if not periodic and (j < 0 or j >= M):
                break
            _shift_start(best, direction * h, cand)
            vc, rc, _, sc = polish(kind, P, cand, w, dt, b, tol, maxit)
            tot = _psi_at(psi, j, periodic) + vc
            if tot < bval - 1e-14 * (1.0 + abs(bval)):
                bval = tot
                bres = rc
                bstat = sc
                bi = j
                i = j
                for k in range(n + 1):
                    best[k] = cand[k]
            else:
                break
    return bval, bres, bstat, bi


@njit(cache=True)
def _end_velocity(kind, P, gam, w, dt):
    n = gam.shape[0] - 1
    _, gn, _ = pot_fgh(kind, P, gam[n])
    return (gam[n] - gam[n - 1]) / dt - 0.5 * gn * (w[n] - w[n - 1])


@njit(cache=True, nogil=True)
def lax_window(kind, P, psi, periodic, x0, h, w, dt, b, S, K, tol, maxit, max_shift):
    """Apply the Lax operator on a 1-D lattice for every end point at once.

    ``psi`` holds the start-time values on the lattice ``x0 + i h``.  Starts
    are restricted to lattice nodes.  For each end node a coarse DP path is
    polished by Newton, then the start is moved one node at a time while the
    total value keeps dropping.

    Returns per-node arrays: values, start coordinate, terminal velocity,
    stationarity residual, status, and the number of DP paths that used the
    extreme offset.
    """
    M = psi.shape[0]
    n = w.shape[0] - 1
    nseg = n // S
    ftab, kin, coef = _window_tables(kind, P, periodic, M, x0, h, w, dt, b, S, K)
    _, bp = lattice_dp(psi, ftab, periodic, S, kin, K, coef)

    vals = np.empty(M)
    starts = np.empty(M)
    vel = np.empty(M)
    res = np.empty(M)
    stats = np.zeros(M, dtype=np.int64)
    saturated = 0
    cur = np.empty(n + 1)
    best = np.empty(n + 1)
    for x in range(M):
        pos = backtrack(bp, x, M, periodic)
        for sgm in range(nseg):
            if abs(pos[sgm + 1] - pos[sgm]) == K:
                saturated += 1
                break
        _refine(pos, x0, h, S, cur)
        vals[x], res[x], stats[x], _ = _polish_and_search(
            kind, P, psi, periodic, x0, h, w, dt, b, tol, maxit, max_shift,
            cur, pos[0], best)
        starts[x] = best[0]
        vel[x] = _end_velocity(kind, P, best, w, dt)
    return vals, starts, vel, res, stats, saturated


@njit(cache=True, nogil=True)
def free_point(kind, P, psi, periodic, x0, h, w, dt, b, S, K, tol, maxit,
               max_shift, x_end):
    """Single end point version of :func:`lax_window`; ``x_end`` may be off-lattice.

    The last coarse segment is evaluated directly from every reachable
    lattice node to ``x_end``.  Returns ``(value, curve, residual, status,
    saturated)``.
    """
    M = psi.shape[0]
    n = w.shape[0] - 1
    nseg = n // S
    ftab, kin, coef = _window_tables(kind, P, periodic, M, x0, h, w, dt, b, S, K)
    if nseg > 1:
        V, bp = lattice_dp(psi, ftab, periodic, S, kin, K, coef[:nseg - 1])
    else:
        V = psi.copy()
        bp = np.zeros((0, M), dtype=np.int16)
    Tseg = S * dt
    k0 = (nseg - 1) * S
    jlo = int(math.ceil((x_end - K * h - x0) / h - 1e-9))
    jhi = int(math.floor((x_end + K * h - x0) / h + 1e-9))
    bestc = np.inf
    bestj = 0
    for j in range(jlo, jhi + 1):
        if periodic:
            st = j % M
        else:
            if j < 0 or j >= M:
                continue
            st = j
        vy = V[st]
        if not np.isfinite(vy):
            continue
        ya = x0 + j * h
        v = (x_end - ya) / Tseg - b
        c = vy + 0.5 * Tseg * v * v
        for q in range(S + 1):
            c -= coef[nseg - 1, q] * pot_f(kind, P, ya + (x_end - ya) * q / S)
        if c < bestc:
            bestc = c
            bestj = j
    if not np.isfinite(bestc):
        return np.inf, np.full(n + 1, np.nan), np.inf, STATUS_STALLED, 0
    # coarse path: unwrapped lattice coordinates up to the last lattice node
    pos = np.empty(nseg, dtype=np.int64)
    pos[nseg - 1] = bestj
    cur_state = bestj % M if periodic else bestj
    for sgm in range(nseg - 2, -1, -1):
        o = bp[sgm, cur_state]
        pos[sgm] = pos[sgm + 1] - o
        cur_state = cur_state - o
        if periodic:
            cur_state = cur_state % M
    saturated = 1 if abs(x_end - (x0 + bestj * h)) > (K - 1) * h else 0
    for sgm in range(nseg - 1):
        if abs(pos[sgm + 1] - pos[sgm]) == K:
            saturated = 1
    cur = np.empty(n + 1)
    for sgm in range(nseg - 1):
        a = x0 + pos[sgm] * h
        c2 = x0 + pos[sgm + 1] * h
        for q in range(S):
            cur[sgm * S + q] = a + (c2 - a) * q / S
    a = x0 + pos[nseg - 1] * h
    for q in range(S + 1):
        cur[k0 + q] = a + (x_end - a) * q / S
    best = np.empty(n + 1)
    val, res, stat, _ = _polish_and_search(kind, P, psi, periodic, x0, h, w, dt, b,
                                           tol, maxit, max_shift, cur, pos[0], best)
    return val, best, res, stat, saturated


@njit(cache=True, nogil=True)
def fixed_dp(kind, P, x_start, x_end, lo, h, M, w, dt, b, S, K):
    """Coarse DP path between two fixed end points on the lattice ``lo + i h``.

    Both end points must be lattice nodes.  Returns the refined fine-grid
    curve and a flag: 1 if an extreme offset was used, -1 if the end point is
    unreachable with the allowed offsets.
    """
    n = w.shape[0] - 1
    ftab, kin, coef = _window_tables(kind, P, False, M, lo, h, w, dt, b, S, K)
    V0 = np.full(M, np.inf)
    i_s = int(round((x_start - lo) / h))
    i_e = int(round((x_end - lo) / h))
    V0[i_s] = 0.0
    Vend, bp = lattice_dp(V0, ftab, False, S, kin, K, coef)
    pos = backtrack(bp, i_e, M, False)
    sat = 0 if np.isfinite(Vend[i_e]) else -1
    for sgm in range(pos.shape[0] - 1):
        if sat == 0 and abs(pos[sgm + 1] - pos[sgm]) == K:
            sat = 1
    cur = np.empty(n + 1)
    _refine(pos, lo, h, S, cur)
    cur[0] = x_start
    cur[n] = x_end
    return cur, sat


@njit(cache=True)
def brownian_sup_batch(z, sqdt, marks):
    """Running suprema of ``|W(tau) - W(1)|`` for pinned unit-interval paths.

    ``z`` holds standard normal increments ordered backward from ``t = 1``;
    ``marks`` lists step counts at which the backward supremum is recorded.
    Returns ``(|W(0) - W(1)|, sup table)``.
    """
    npath, n = z.shape
    nm = marks.shape[0]
    out = np.empty((npath, nm))
    endv = np.empty(npath)
    for p in range(npath):
        s = 0.0
        m = 0.0
        im = 0
        for k in range(n):
            s += z[p, k] * sqdt
            a = abs(s)
            if a > m:
                m = a
            while im < nm and marks[im] == k + 1:
                out[p, im] = m
                im += 1
        endv[p] = abs(s)
    return endv, out
