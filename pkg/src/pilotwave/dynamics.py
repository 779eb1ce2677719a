"""Pilot-wave velocity field and trajectory integration.

With hbar = m = 1 the velocity of particle ``r`` is

    v_r = Im(conj(psi) d_r psi) / |psi|^2,

evaluated from mantissas that share one log scale per point, so the ratio
never overflows however large ``|psi|`` is.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NodeError, StepFailure
from .kernels import (STATUS_NAMES, STATUS_OK, IntegratorOptions, dense_eval,
                      eval_point_nb, get_backend, velocity_point_nb)
from .states import _point

__all__ = [
    "IntegratorOptions",
    "VelocitySample",
    "ProfilePoint",
    "Trajectory",
    "velocity",
    "velocities",
    "eigenstate_current_constant",
    "wronskian",
    "velocity_decay_profile",
    "region_max_speed",
    "integrate_trajectory",
]


@dataclass(frozen=True)
class VelocitySample:
    ybar: np.ndarray
    t: float
    v: np.ndarray
    log_psi_sq: float


def velocity(state, ybar, t=0.0, log_psi_sq_floor=-math.inf):
    """Velocity at one configuration.

    Raises :class:`NodeError` at an exact node, or when ``log|psi|^2`` falls
    below ``log_psi_sq_floor``.
    """
    y = _point(ybar, state.n_particles)
    p = state.packed
    v = np.empty(y.size)
    grad = np.empty(y.size, dtype=complex)
    lp = velocity_point_nb(y, float(t), p.coef, p.ksum, p.K, p.a0, p.a1,
                           p.window_L, p.window_m, v, grad)
    if not lp > log_psi_sq_floor or not np.all(np.isfinite(v)):
        raise NodeError(f"velocity requested at a node: y={y}, t={t}, log|psi|^2={lp}",
                        ybar=y, t=t, log_psi_sq=lp)
    return VelocitySample(y, float(t), v, float(lp))


def velocities(state, Y, t=0.0, backend=None):
    """Vectorised velocities at rows of ``Y``; NaN rows mark nodes.

    Returns ``(V, log_psi_sq)``.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y.reshape(-1, state.n_particles)
    return get_backend(backend).velocities(Y, t, state.packed)


def eigenstate_current_constant(spec):
    """``conj(psi) psi' - psi conj(psi)'`` for one eigenstate: ``2i cos(theta) sin(theta) sin(phi)``.

    It is independent of y and K because the basis Wronskian is 1.
    """
    return 2j * math.cos(spec.theta) * math.sin(spec.theta) * math.sin(spec.phi)


def wronskian(state, ybar, t=0.0, axis=0):
    """Numerical ``conj(psi) d psi - psi d conj(psi)`` along one axis at one point."""
    y = _point(ybar, state.n_particles)
    p = state.packed
    grad = np.empty(y.size, dtype=complex)
    u, lsc, _ = eval_point_nb(y, float(t), p.coef, p.ksum, p.K, p.a0, p.a1,
                              p.window_L, p.window_m, grad)
    if lsc == -math.inf:
        return 0j
    im = (u.conjugate() * grad[axis]).imag
    return 2j * im * math.exp(2.0 * lsc)


@dataclass(frozen=True)
class ProfilePoint:
    y: float
    v: float  # NaN marks a node gap
    y_v: float


def velocity_decay_profile(state, axis=0, y_range=(2.0, 15.0), n=50, t=0.0, fixed=None):
    """Velocity component ``axis`` sampled along that axis, other coordinates fixed."""
    if n < 2:
        raise ValueError("n must be >= 2")
    N = state.n_particles
    base = np.zeros(N) if fixed is None else np.asarray(fixed, dtype=float).reshape(N).copy()
    ys = np.linspace(y_range[0], y_range[1], n)
    Y = np.repeat(base[None, :], n, axis=0)
    Y[:, axis] = ys
    V, _ = velocities(state, Y, t)
    return [ProfilePoint(float(yv), float(vv), float(yv * vv)) for yv, vv in zip(ys, V[:, axis])]


def region_max_speed(state, axis, lo, hi, n=201, t=0.0, others=None):
    """max |v_axis| over ``lo <= |y_axis| <= hi`` (both signs), at each row of ``others``.

    ``others`` lists values of the remaining coordinates (default: zeros).
    """
    N = state.n_particles
    if others is None or N == 1:
        others = np.zeros((1, N - 1))
    else:
        others = np.asarray(others, dtype=float).reshape(-1, N - 1)
    ys = np.concatenate([np.linspace(-hi, -lo, n), np.linspace(lo, hi, n)])
    best = 0.0
    for o in others:
        Y = np.empty((ys.size, N))
        Y[:, axis] = ys
        Y[:, [r for r in range(N) if r != axis]] = o
        V, _ = velocities(state, Y, t)
        vals = np.abs(V[:, axis])
        vals = vals[np.isfinite(vals)]
        if vals.size:
            best = max(best, float(vals.max()))
    return best


@dataclass
class Trajectory:
    """Integrated path.  ``times`` are strictly increasing (chronological order
    even for backward integration); ``end_time`` is where the integration stopped."""

    times: np.ndarray
    points: np.ndarray
    n_steps: int
    n_rejected: int
    min_log_psi_sq: float
    end_time: float
    final: np.ndarray
    _steps: tuple = field(default=(), repr=False)

    def at(self, t):
        """Dense-output position at time ``t`` inside the integrated span."""
        ts, ys, ks, hs = self._steps
        if ts.size == 1:
            return ys[0].copy()
        lo, hi = min(ts[0], ts[-1]), max(ts[0], ts[-1])
        if not lo - 1e-12 <= t <= hi + 1e-12:
            raise ValueError(f"t={t} outside the integrated span [{lo}, {hi}]")
        starts = ts[:-1]
        if hs[0] > 0:
            q = int(np.clip(np.searchsorted(starts, t, side="right") - 1, 0, len(hs) - 1))
        else:
            q = int(np.clip(np.searchsorted(-starts, -t, side="right") - 1, 0, len(hs) - 1))
        return dense_eval(ts[q], ys[q], hs[q], ks[q], t)


def integrate_trajectory(state, y0, t0, t1, opts=None, sample_times=None, backend=None):
    """Adaptive Dormand-Prince 5(4) integration of ``dy/dt = v(y, t)``.

    A step whose stages land where ``log|psi|^2`` has dropped more than
    ``opts.node_gap`` below the running maximum is halved and retried; after
    ``opts.max_halvings`` consecutive halvings, or a step below
    ``opts.min_step``, :class:`StepFailure` is raised.

    ``sample_times`` selects dense-output times; otherwise accepted step
    points are returned.
    """
    opts = opts or IntegratorOptions()
    y0 = _point(y0, state.n_particles)
    t0, t1 = float(t0), float(t1)
    if t0 == t1:
        raise ValueError("t1 must differ from t0")
    res = get_backend(backend).integrate_one(y0, t0, t1, state.packed, opts)
    y, status, n_steps, n_rej, minlog, ts, ys, ks, hs = res
    if status != STATUS_OK:
        t_fail = float(ts[-1]) if len(ts) else t0
        raise StepFailure(f"trajectory from {y0} failed near t={t_fail}: {STATUS_NAMES[status]}",
                          t=t_fail, y=np.asarray(y).copy())
    steps = (np.asarray(ts), np.asarray(ys), np.asarray(ks), np.asarray(hs))
    traj = Trajectory(np.asarray(ts), np.asarray(ys), n_steps, n_rej, minlog, t1,
                      np.asarray(y).copy(), steps)
    if sample_times is not None:
        st = np.sort(np.asarray(sample_times, dtype=float))
        traj.times = st
        traj.points = np.array([traj.at(tq) for tq in st]).reshape(-1, y0.size)
    elif t1 < t0:
        traj.times = traj.times[::-1].copy()
        traj.points = traj.points[::-1].copy()
    return traj
