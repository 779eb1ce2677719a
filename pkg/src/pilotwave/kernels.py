"""Hot kernels: state evaluation, pilot-wave velocity, Dormand-Prince 5(4).

Every kernel exists twice:

* ``*_nb``: loop code over points, compiled by numba (``parallel`` over
  points for batch integration);
* ``*_np``: vectorised numpy over points.

Both work on a :class:`PackedState` and share one log scale per point:
``psi = u * exp(L)`` and ``d psi / d y_r = g_r * exp(L)`` with O(1)
mantissas ``u, g``, so ratios such as ``j / |psi|^2`` never overflow.

:func:`get_backend` returns the set of functions for one backend.
"""
import math
from types import SimpleNamespace
from typing import NamedTuple

import numpy as np

from . import _backend
from ._backend import njit, prange
from .specfun import SERIES_TOL, kummer_pair_nb, kummer_pair_np

STATUS_OK = 0
STATUS_STEP_FAILURE = 1
STATUS_NODE_FAILURE = 2
STATUS_BAD_START = 3
STATUS_MAX_STEPS = 4

STATUS_NAMES = {
    STATUS_OK: "ok",
    STATUS_STEP_FAILURE: "step size underflow",
    STATUS_NODE_FAILURE: "node: too many consecutive step halvings",
    STATUS_BAD_START: "start point is a node",
    STATUS_MAX_STEPS: "step budget exhausted",
}

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.array([
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1 / 5, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3 / 40, 9 / 40, 0.0, 0.0, 0.0, 0.0],
    [44 / 45, -56 / 15, 32 / 9, 0.0, 0.0, 0.0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0.0, 0.0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0.0],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
])
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# fifth-order minus embedded fourth-order weights
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# continuous extension (Shampine), rows = stages, cols = powers theta^1..theta^4
DENSE_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])


class PackedState(NamedTuple):
    """Array form of a superposition consumed by the kernels.

    ``coef[j]`` term coefficient, ``ksum[j]`` sum of the term's K values (for
    the phase ``exp(-i ksum t / 2)``), ``K[j, g]``, ``a0[j, g] = cos(theta)`` and
    ``a1[j, g] = sin(theta) e^{i phi}`` per particle.  ``window_L = inf``
    disables the window ``exp(-(|y| - L)^(2m))`` applied beyond ``|y| > L``.
    """

    coef: np.ndarray
    ksum: np.ndarray
    K: np.ndarray
    a0: np.ndarray
    a1: np.ndarray
    window_L: float = math.inf
    window_m: int = 1


class IntegratorOptions(NamedTuple):
    abs_tol: float = 1e-9
    rel_tol: float = 1e-8
    min_step: float = 1e-12
    node_gap: float = 60.0
    max_halvings: int = 40
    max_steps: int = 1_000_000
    first_step: float = 0.0  # 0 selects automatically


# ---------------------------------------------------------------------------
# numba backend


@njit
def basis_nb(K, y, tol):
    """phi_0^K, phi_0^K', phi_1^K, phi_1^K' at y sharing the scale exp(L)."""
    x = y * y
    s0, s0p, l0, n0 = kummer_pair_nb(0.25 * (1.0 - K), 0.5, x, tol)
    s1, s1p, l1, n1 = kummer_pair_nb(0.25 * (3.0 - K), 1.5, x, tol)
    lm = max(l0, l1)
    f0 = math.exp(l0 - lm)
    f1 = math.exp(l1 - lm)
    p0 = s0 * f0
    d0 = y * (2.0 * s0p - s0) * f0
    p1 = y * s1 * f1
    d1 = (s1 - x * s1 + 2.0 * x * s1p) * f1
    return p0, d0, p1, d1, lm - 0.5 * x, (n0 > 0 and n1 > 0)


@njit
def eval_point_nb(y, t, coef, ksum, K, a0, a1, window_L, window_m, grad):
    """Value mantissa and log scale at one point; gradient written to ``grad``.

    Returns ``(u, L, ok)``.
    """
    T, N = K.shape
    acc = 0j
    lacc = -math.inf
    for r in range(N):
        grad[r] = 0j
    mv = np.empty(N, dtype=np.complex128)
    dv = np.empty(N, dtype=np.complex128)
    gterm = np.empty(N, dtype=np.complex128)
    ok = True
    for j in range(T):
        lt = 0.0
        for g in range(N):
            p0, d0, p1, d1, lb, okb = basis_nb(K[j, g], y[g], SERIES_TOL)
            if not okb:
                ok = False
            m = a0[j, g] * p0 + a1[j, g] * p1
            d = a0[j, g] * d0 + a1[j, g] * d1
            sc = max(abs(m), abs(d))
            if sc > 0.0:
                m /= sc
                d /= sc
                lb += math.log(sc)
            else:
                lb = -math.inf
            mv[g] = m
            dv[g] = d
            lt += lb
        if lt == -math.inf:
            continue
        ph = 0.5 * ksum[j] * t
        cj = coef[j] * complex(math.cos(ph), -math.sin(ph))
        val = cj
        for g in range(N):
            val *= mv[g]
        for r in range(N):
            gr = cj * dv[r]
            for g in range(N):
                if g != r:
                    gr *= mv[g]
            gterm[r] = gr
        if lt > lacc:
            f = 0.0 if lacc == -math.inf else math.exp(lacc - lt)
            acc = acc * f + val
            for r in range(N):
                grad[r] = grad[r] * f + gterm[r]
            lacc = lt
        else:
            f = math.exp(lt - lacc)
            acc += val * f
            for r in range(N):
                grad[r] += gterm[r] * f
    if window_L < math.inf:
        for r in range(N):
            yr = y[r]
            if yr > window_L:
                s = yr - window_L
            elif yr < -window_L:
                s = yr + window_L
            else:
                continue
            lacc -= s ** (2 * window_m)
            grad[r] += acc * (-2.0 * window_m * s ** (2 * window_m - 1))
    return acc, lacc, ok


@njit
def velocity_point_nb(y, t, coef, ksum, K, a0, a1, window_L, window_m, v, grad):
    """Velocity into ``v``; returns ``log|psi|^2`` (-inf at an exact node)."""
    u, lsc, ok = eval_point_nb(y, t, coef, ksum, K, a0, a1, window_L, window_m, grad)
    a2 = u.real * u.real + u.imag * u.imag
    if a2 == 0.0 or not ok or lsc == -math.inf:
        for r in range(y.size):
            v[r] = math.nan
        return -math.inf
    for r in range(y.size):
        v[r] = (u.real * grad[r].imag - u.imag * grad[r].real) / a2
    return 2.0 * lsc + math.log(a2)


@njit
def eval_points_nb(Y, t, coef, ksum, K, a0, a1, window_L, window_m):
    n, N = Y.shape
    u = np.empty(n, dtype=np.complex128)
    G = np.empty((n, N), dtype=np.complex128)
    L = np.empty(n)
    ok = np.empty(n, dtype=np.bool_)
    grad = np.empty(N, dtype=np.complex128)
    for i in range(n):
        ui, li, oki = eval_point_nb(Y[i], t, coef, ksum, K, a0, a1, window_L, window_m, grad)
        u[i] = ui
        L[i] = li
        ok[i] = oki
        for r in range(N):
            G[i, r] = grad[r]
    return u, G, L, ok


@njit
def velocities_nb(Y, t, coef, ksum, K, a0, a1, window_L, window_m):
    n, N = Y.shape
    V = np.empty((n, N))
    logp = np.empty(n)
    grad = np.empty(N, dtype=np.complex128)
    v = np.empty(N)
    for i in range(n):
        logp[i] = velocity_point_nb(Y[i], t, coef, ksum, K, a0, a1, window_L, window_m, v, grad)
        for r in range(N):
            V[i, r] = v[r]
    return V, logp


@njit
def _stage_ok(lp, runmax, node_gap):
    return lp > -math.inf and lp >= runmax - node_gap


@njit
def integrate_point_nb(y0, t0, t1, coef, ksum, K, a0, a1, window_L, window_m,
                       abs_tol, rel_tol, min_step, node_gap, max_halvings, max_steps,
                       first_step, record):
    """Adaptive DOPRI5 for one trajectory.

    Returns ``(y, status, n_steps, n_rejected, min_log_psi_sq, ts, ys, ks)``;
    when ``record`` is true, ``ts/ys/ks`` hold every accepted step (start
    time, start point, the seven stage slopes) for dense output.
    """
    N = y0.size
    y = y0.copy()
    t = t0
    direction = 1.0 if t1 >= t0 else -1.0
    k = np.empty((7, N))
    grad = np.empty(N, dtype=np.complex128)
    ytmp = np.empty(N)
    ynew = np.empty(N)
    cap = 64 if record else 1
    ts = np.empty(cap + 1)
    ys = np.empty((cap + 1, N))
    hs = np.empty(cap)
    ks = np.empty((cap, 7, N))
    n_steps = 0
    n_rej = 0
    lp = velocity_point_nb(y, t, coef, ksum, K, a0, a1, window_L, window_m, k[0], grad)
    if not (lp > -math.inf):
        return y, STATUS_BAD_START, 0, 0, lp, ts[:0], ys[:0], ks[:0], hs[:0]
    runmax = lp
    minlog = lp
    span = abs(t1 - t0)
    if span == 0.0:
        ts[0] = t
        ys[0] = y
        return y, STATUS_OK, 0, 0, minlog, ts[:1], ys[:1], ks[:0], hs[:0]
    if first_step > 0.0:
        h = first_step
    else:
        sc = 0.0
        fn = 0.0
        for r in range(N):
            w = abs_tol + rel_tol * abs(y[r])
            fn = max(fn, abs(k[0, r]) / w)
            sc = max(sc, abs(y[r]) / w)
        if fn < 1e-5 or sc < 1e-5:
            h = 1e-3
        else:
            h = 0.01 * sc / fn
        h = min(h, 0.1, span)
        h = max(h, 1e-8)
    halvings = 0
    status = STATUS_OK
    while (t1 - t) * direction > 0.0:
        if n_steps + n_rej >= max_steps:
            status = STATUS_MAX_STEPS
            break
        remaining = abs(t1 - t)
        hh = min(h, remaining)
        hs_signed = hh * direction
        node = False
        stage_min = math.inf
        for s in range(1, 7):
            for r in range(N):
                acc = 0.0
                for q in range(s):
                    acc += _A[s, q] * k[q, r]
                ytmp[r] = y[r] + hs_signed * acc
            lps = velocity_point_nb(ytmp, t + _C[s] * hs_signed, coef, ksum, K, a0, a1,
                                    window_L, window_m, k[s], grad)
            if not _stage_ok(lps, runmax, node_gap):
                node = True
                break
            stage_min = min(stage_min, lps)
        if node:
            n_rej += 1
            halvings += 1
            h = 0.5 * hh
            if halvings > max_halvings:
                status = STATUS_NODE_FAILURE
                break
            if h < min_step and remaining > min_step:
                status = STATUS_STEP_FAILURE
                break
            continue
        # seventh stage (FSAL) is the slope at the new point
        for r in range(N):
            ynew[r] = ytmp[r]
        errn = 0.0
        for r in range(N):
            e = 0.0
            for q in range(7):
                e += _E[q] * k[q, r]
            e *= hs_signed
            w = abs_tol + rel_tol * max(abs(y[r]), abs(ynew[r]))
            errn = max(errn, abs(e) / w)
        if errn <= 1.0:
            if record:
                if n_steps >= cap:
                    cap2 = 2 * cap
                    ts2 = np.empty(cap2 + 1)
                    ys2 = np.empty((cap2 + 1, N))
                    ks2 = np.empty((cap2, 7, N))
                    hs2 = np.empty(cap2)
                    ts2[:cap] = ts[:cap]
                    ys2[:cap] = ys[:cap]
                    ks2[:cap] = ks[:cap]
                    hs2[:cap] = hs[:cap]
                    ts, ys, ks, hs, cap = ts2, ys2, ks2, hs2, cap2
                ts[n_steps] = t
                ys[n_steps] = y
                ks[n_steps] = k
                hs[n_steps] = hs_signed
            t = t + hs_signed if hh < remaining else t1
            for r in range(N):
                y[r] = ynew[r]
                k[0, r] = k[6, r]
            runmax = max(runmax, stage_min)
            minlog = min(minlog, stage_min)
            n_steps += 1
            halvings = 0
            if errn == 0.0:
                fac = 5.0
            else:
                fac = min(5.0, 0.9 * errn ** -0.2)
            h = hh * fac
        else:
            n_rej += 1
            h = hh * max(0.2, 0.9 * errn ** -0.2)
            if h < min_step and remaining > min_step:
                status = STATUS_STEP_FAILURE
                break
    if not record:
        return y, status, n_steps, n_rej, minlog, ts[:0], ys[:0], ks[:0], hs[:0]
    ts[n_steps] = t
    ys[n_steps] = y
    return (y, status, n_steps, n_rej, minlog, ts[:n_steps + 1], ys[:n_steps + 1],
            ks[:n_steps], hs[:n_steps])


def _batch_nb_impl(Y0, t0, t1, coef, ksum, K, a0, a1, window_L, window_m,
                   abs_tol, rel_tol, min_step, node_gap, max_halvings, max_steps, first_step):
    n, N = Y0.shape
    out = np.empty((n, N))
    status = np.empty(n, dtype=np.int64)
    nsteps = np.empty(n, dtype=np.int64)
    nrej = np.empty(n, dtype=np.int64)
    minlog = np.empty(n)
    for i in prange(n):
        res = integrate_point_nb(Y0[i], t0, t1, coef, ksum, K, a0, a1, window_L, window_m,
                                 abs_tol, rel_tol, min_step, node_gap, max_halvings,
                                 max_steps, first_step, False)
        out[i] = res[0]
        status[i] = res[1]
        nsteps[i] = res[2]
        nrej[i] = res[3]
        minlog[i] = res[4]
    return out, status, nsteps, nrej, minlog


integrate_batch_nb = njit(parallel=_backend.USE_NUMBA)(_batch_nb_impl)


# ---------------------------------------------------------------------------
# numpy backend


def basis_np(K, y):
    y = np.asarray(y, dtype=float)
    x = y * y
    s0, s0p, l0, n0 = kummer_pair_np(0.25 * (1.0 - K), 0.5, x)
    s1, s1p, l1, n1 = kummer_pair_np(0.25 * (3.0 - K), 1.5, x)
    lm = np.maximum(l0, l1)
    f0 = np.exp(l0 - lm)
    f1 = np.exp(l1 - lm)
    p0 = s0 * f0
    d0 = y * (2.0 * s0p - s0) * f0
    p1 = y * s1 * f1
    d1 = (s1 - x * s1 + 2.0 * x * s1p) * f1
    return p0, d0, p1, d1, lm - 0.5 * x, (n0 > 0) & (n1 > 0)


def _combine_scales(la, lb):
    """Common scale max(la, lb) and the factors to bring each to it."""
    new = np.maximum(la, lb)
    fin = new > -np.inf
    fa = np.where(fin & (la > -np.inf), np.exp(np.where(fin, la - new, 0.0)), 0.0)
    fb = np.where(fin & (lb > -np.inf), np.exp(np.where(fin, lb - new, 0.0)), 0.0)
    return new, fa, fb


def eval_points_np(Y, t, coef, ksum, K, a0, a1, window_L, window_m):
    """``t`` may be a scalar or one time per point."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    n, N = Y.shape
    T = K.shape[0]
    acc = np.zeros(n, dtype=complex)
    G = np.zeros((n, N), dtype=complex)
    lacc = np.full(n, -np.inf)
    ok = np.ones(n, dtype=bool)
    cache = {}
    with np.errstate(divide="ignore", invalid="ignore"):
        for j in range(T):
            lt = np.zeros(n)
            ms = []
            ds = []
            for g in range(N):
                key = (float(K[j, g]), g)
                if key not in cache:
                    cache[key] = basis_np(K[j, g], Y[:, g])
                p0, d0, p1, d1, lb, okb = cache[key]
                ok &= okb
                m = a0[j, g] * p0 + a1[j, g] * p1
                d = a0[j, g] * d0 + a1[j, g] * d1
                sc = np.maximum(np.abs(m), np.abs(d))
                pos = sc > 0
                safe = np.where(pos, sc, 1.0)
                ms.append(m / safe)
                ds.append(d / safe)
                lt = lt + np.where(pos, lb + np.log(safe), -np.inf)
            cj = coef[j] * np.exp(-0.5j * ksum[j] * t)
            val = cj * np.prod(ms, axis=0) if N > 1 else cj * ms[0]
            new, fa, fb = _combine_scales(lacc, lt)
            acc = acc * fa + val * fb
            for r in range(N):
                gr = cj * ds[r]
                for g in range(N):
                    if g != r:
                        gr = gr * ms[g]
                G[:, r] = G[:, r] * fa + gr * fb
            lacc = new
        if window_L < math.inf:
            for r in range(N):
                yr = Y[:, r]
                s = np.where(yr > window_L, yr - window_L,
                             np.where(yr < -window_L, yr + window_L, 0.0))
                lacc = lacc - s ** (2 * window_m)
                G[:, r] = G[:, r] + acc * (-2.0 * window_m * s ** (2 * window_m - 1))
    return acc, G, lacc, ok


def velocities_np(Y, t, coef, ksum, K, a0, a1, window_L, window_m):
    u, G, L, ok = eval_points_np(Y, t, coef, ksum, K, a0, a1, window_L, window_m)
    a2 = u.real ** 2 + u.imag ** 2
    good = (a2 > 0) & ok & (L > -np.inf)
    safe = np.where(good, a2, 1.0)
    V = (u.real[:, None] * G.imag - u.imag[:, None] * G.real) / safe[:, None]
    V[~good] = np.nan
    with np.errstate(divide="ignore"):
        logp = np.where(good, 2.0 * L + np.log(safe), -np.inf)
    return V, logp


def integrate_batch_np(Y0, t0, t1, coef, ksum, K, a0, a1, window_L, window_m,
                       abs_tol, rel_tol, min_step, node_gap, max_halvings, max_steps,
                       first_step, record=False):
    """Vectorised DOPRI5: every live point attempts one step per sweep."""
    Y = np.array(Y0, dtype=float, copy=True)
    n, N = Y.shape
    args = (coef, ksum, K, a0, a1, window_L, window_m)
    status = np.zeros(n, dtype=np.int64)
    nsteps = np.zeros(n, dtype=np.int64)
    nrej = np.zeros(n, dtype=np.int64)
    halv = np.zeros(n, dtype=np.int64)
    t = np.full(n, float(t0))
    direction = 1.0 if t1 >= t0 else -1.0
    span = abs(t1 - t0)
    kk = np.zeros((7, n, N))
    V, lp = velocities_np(Y, t0, *args)
    kk[0] = V
    runmax = lp.copy()
    minlog = lp.copy()
    live = np.isfinite(lp)
    status[~live] = STATUS_BAD_START
    rec = [] if record else None
    if span == 0.0:
        live[:] = False
    if first_step > 0.0:
        h = np.full(n, first_step)
    else:
        w = abs_tol + rel_tol * np.abs(Y)
        with np.errstate(invalid="ignore", divide="ignore"):
            fn = np.nanmax(np.abs(np.nan_to_num(V)) / w, axis=1)
        sc = np.max(np.abs(Y) / w, axis=1)
        h = np.where((fn < 1e-5) | (sc < 1e-5), 1e-3, 0.01 * sc / np.where(fn > 0, fn, 1.0))
        h = np.clip(np.minimum(h, min(0.1, span)), 1e-8, None)
    while live.any():
        idx = np.nonzero(live)[0]
        over = (nsteps[idx] + nrej[idx]) >= max_steps
        if over.any():
            status[idx[over]] = STATUS_MAX_STEPS
            live[idx[over]] = False
            idx = idx[~over]
            if not idx.size:
                break
        remaining = np.abs(t1 - t[idx])
        hh = np.minimum(h[idx], remaining)
        hsg = hh * direction
        y = Y[idx]
        k = np.zeros((7, idx.size, N))
        k[0] = kk[0, idx]
        node = np.zeros(idx.size, dtype=bool)
        stage_min = np.full(idx.size, np.inf)
        ytmp = y
        for s in range(1, 7):
            incr = np.tensordot(_A[s, :s], k[:s], axes=(0, 0))
            ytmp = y + hsg[:, None] * incr
            Vs, lps = _velocities_at_times(ytmp, t[idx] + _C[s] * hsg, args)
            bad = ~(np.isfinite(lps) & (lps >= runmax[idx] - node_gap))
            node |= bad
            k[s] = np.where(node[:, None], 0.0, Vs)
            stage_min = np.where(node, stage_min, np.minimum(stage_min, lps))
        ynew = ytmp
        err = hsg[:, None] * np.tensordot(_E, k, axes=(0, 0))
        wgt = abs_tol + rel_tol * np.maximum(np.abs(y), np.abs(ynew))
        errn = np.max(np.abs(err) / wgt, axis=1)
        errn = np.where(node, np.inf, errn)
        accept = ~node & (errn <= 1.0)

        # node retreat
        ni = idx[node]
        nrej[ni] += 1
        halv[ni] += 1
        h[ni] = 0.5 * hh[node]
        fail_node = node & (halv[idx] > max_halvings)
        status[idx[fail_node]] = STATUS_NODE_FAILURE
        fail_small = node & ~fail_node & (h[idx] < min_step) & (remaining > min_step)
        status[idx[fail_small]] = STATUS_STEP_FAILURE
        live[idx[fail_node | fail_small]] = False

        # error-control rejection
        rej = ~node & ~accept
        ri = idx[rej]
        nrej[ri] += 1
        with np.errstate(divide="ignore"):
            h[ri] = hh[rej] * np.maximum(0.2, 0.9 * errn[rej] ** -0.2)
        fail_rej = rej & (h[idx] < min_step) & (remaining > min_step)
        status[idx[fail_rej]] = STATUS_STEP_FAILURE
        live[idx[fail_rej]] = False

        ai = idx[accept]
        if ai.size:
            if rec is not None:
                for q, i in enumerate(ai):
                    loc = np.nonzero(accept)[0][q]
                    rec.append((t[i], Y[i].copy(), k[:, loc].copy(), hsg[loc]))
            finishing = hh[accept] >= remaining[accept]
            t[ai] = np.where(finishing, t1, t[ai] + hsg[accept])
            Y[ai] = ynew[accept]
            kk[0, ai] = k[6][accept]
            runmax[ai] = np.maximum(runmax[ai], stage_min[accept])
            minlog[ai] = np.minimum(minlog[ai], stage_min[accept])
            nsteps[ai] += 1
            halv[ai] = 0
            e = errn[accept]
            with np.errstate(divide="ignore"):
                fac = np.where(e == 0.0, 5.0, np.minimum(5.0, 0.9 * e ** -0.2))
            h[ai] = hh[accept] * fac
            live[ai[finishing]] = False
    if record:
        return Y, status, nsteps, nrej, minlog, rec
    return Y, status, nsteps, nrej, minlog


def _velocities_at_times(Y, times, args):
    return velocities_np(Y, times, *args)


# ---------------------------------------------------------------------------
# dispatch


def _eval_points_nb_wrap(Y, t, p):
    return eval_points_nb(np.ascontiguousarray(Y, dtype=float), float(t), *_unpack(p))


def _velocities_nb_wrap(Y, t, p):
    return velocities_nb(np.ascontiguousarray(Y, dtype=float), float(t), *_unpack(p))


def _integrate_batch_nb_wrap(Y0, t0, t1, p, opts):
    return integrate_batch_nb(np.ascontiguousarray(Y0, dtype=float), float(t0), float(t1),
                              *_unpack(p), *_opts(opts))


def _integrate_one_nb_wrap(y0, t0, t1, p, opts):
    res = integrate_point_nb(np.ascontiguousarray(y0, dtype=float), float(t0), float(t1),
                             *_unpack(p), *_opts(opts), True)
    y, status, ns, nr, minlog, ts, ys, ks, hs = res
    return y, int(status), int(ns), int(nr), float(minlog), ts, ys, ks, hs


def _eval_points_np_wrap(Y, t, p):
    return eval_points_np(Y, t, *_unpack(p))


def _velocities_np_wrap(Y, t, p):
    return velocities_np(np.atleast_2d(np.asarray(Y, dtype=float)), t, *_unpack(p))


def _integrate_batch_np_wrap(Y0, t0, t1, p, opts):
    return integrate_batch_np(np.atleast_2d(np.asarray(Y0, dtype=float)), float(t0), float(t1),
                              *_unpack(p), *_opts(opts))


def _integrate_one_np_wrap(y0, t0, t1, p, opts):
    y0 = np.asarray(y0, dtype=float).reshape(1, -1)
    Y, status, ns, nr, minlog, rec = integrate_batch_np(y0, float(t0), float(t1), *_unpack(p),
                                                       *_opts(opts), record=True)
    N = y0.shape[1]
    ts = np.array([r[0] for r in rec] + [float(t1) if status[0] == STATUS_OK else np.nan])
    ys = np.array([r[1] for r in rec] + [Y[0]]).reshape(-1, N)
    ks = np.array([r[2] for r in rec]).reshape(-1, 7, N)
    hs = np.array([r[3] for r in rec])
    if status[0] != STATUS_OK and len(rec):
        ts[-1] = rec[-1][0] + rec[-1][3]
    elif status[0] != STATUS_OK:
        ts[-1] = float(t0)
    return Y[0], int(status[0]), int(ns[0]), int(nr[0]), float(minlog[0]), ts, ys, ks, hs


def _unpack(p):
    return (np.ascontiguousarray(p.coef, dtype=np.complex128),
            np.ascontiguousarray(p.ksum, dtype=float),
            np.ascontiguousarray(p.K, dtype=float),
            np.ascontiguousarray(p.a0, dtype=float),
            np.ascontiguousarray(p.a1, dtype=np.complex128),
            float(p.window_L), int(p.window_m))


def _opts(o):
    return (float(o.abs_tol), float(o.rel_tol), float(o.min_step), float(o.node_gap),
            int(o.max_halvings), int(o.max_steps), float(o.first_step))


_BACKENDS = {
    "numba": SimpleNamespace(
        name="numba",
        eval_points=_eval_points_nb_wrap,
        velocities=_velocities_nb_wrap,
        integrate_batch=_integrate_batch_nb_wrap,
        integrate_one=_integrate_one_nb_wrap,
    ),
    "numpy": SimpleNamespace(
        name="numpy",
        eval_points=_eval_points_np_wrap,
        velocities=_velocities_np_wrap,
        integrate_batch=_integrate_batch_np_wrap,
        integrate_one=_integrate_one_np_wrap,
    ),
}


def get_backend(name=None):
    """Kernel set for ``"numba"`` or ``"numpy"`` (default: the env-selected one)."""
    return _BACKENDS[name or _backend.DEFAULT_BACKEND]


def dense_eval(t_start, y_start, h, k, t):
    """Evaluate the DOPRI5 continuous extension of one step at time ``t``."""
    theta = (t - t_start) / h
    powers = np.array([theta, theta ** 2, theta ** 3, theta ** 4])
    return y_start + h * (k.T @ (DENSE_P @ powers))
