import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy.integrate import solve_ivp

from pilotwave import reference_states as refs
from pilotwave.dynamics import (IntegratorOptions, eigenstate_current_constant, integrate_trajectory,
                                region_max_speed, velocities, velocity, velocity_decay_profile,
                                wronskian)
from pilotwave.errors import NodeError, StepFailure
from pilotwave.kernels import get_backend
from pilotwave.states import EigenstateSpec, SuperpositionState, eval_eigenstate


def eigenstate(K, theta, phi):
    return SuperpositionState.eigenstate(EigenstateSpec(K, theta, phi))


@given(st.floats(-5, 16), st.floats(0.05, math.pi - 0.05), st.floats(0, 2 * math.pi),
       st.floats(-3, 3))
def test_current_is_constant(K, theta, phi, y):
    spec = EigenstateSpec(K, theta, phi)
    c = eigenstate_current_constant(spec)
    j = wronskian(SuperpositionState.eigenstate(spec), [y])
    psi, dpsi = eval_eigenstate(spec, y)
    # the Wronskian is a difference of two products of size |psi||psi'|
    cond = math.exp(psi.log_mag + dpsi.log_mag) if not psi.is_zero else 0.0
    assert abs(j - c) <= 1e-12 * max(abs(c), cond, 1.0)


def test_single_eigenstate_current_value():
    spec = refs.single_eigenstate_spec()
    c = eigenstate_current_constant(spec)
    assert c.imag == pytest.approx(2 * math.cos(16 * math.pi / 5) * math.sin(16 * math.pi / 5)
                                   * math.sin(1.5 * math.pi), abs=1e-15)
    for y in np.linspace(-3, 3, 13):
        assert abs(wronskian(refs.single_eigenstate(), [y]) - c) < 1e-9 * abs(c)


@given(st.floats(-5, 16), st.floats(0.1, 3.0), st.floats(0, 2 * math.pi), st.floats(-4, 4))
def test_eigenstate_velocity_formula(K, theta, phi, y):
    spec = EigenstateSpec(K, theta, phi)
    psi = eval_eigenstate(spec, y)[0]
    assume(not psi.is_zero and psi.log_mag > -10)
    v = velocity(SuperpositionState.eigenstate(spec), [y]).v[0]
    want = math.cos(spec.theta) * math.sin(spec.theta) * math.sin(spec.phi) / math.exp(2 * psi.log_mag)
    assert v == pytest.approx(want, rel=1e-7, abs=1e-12)


@pytest.mark.parametrize("theta, phi", [(0.0, 0.0), (math.pi / 2, 0.0), (0.6, math.pi), (1.1, 0.0)])
def test_real_eigenstate_is_static(theta, phi):
    s = eigenstate(6.3, theta, phi)
    Y = np.linspace(-5, 5, 41)[:, None] + 0.01
    V, lp = velocities(s, Y)
    # float pi leaves sin(phi) ~ 1e-16, so bound the current rather than v
    assert np.max(np.abs(V[:, 0]) * np.exp(lp)) < 1e-15
    tr = integrate_trajectory(s, [0.7], 0.0, 2 * math.pi)
    assert tr.final[0] == pytest.approx(0.7, abs=1e-12)


def test_velocity_near_node():
    # odd basis function; cos(pi/2) = 6e-17 leaves psi(0) tiny but nonzero
    s = eigenstate(3.0, math.pi / 2, 0.0)
    assert velocity(s, [0.0]).log_psi_sq < -70
    with pytest.raises(NodeError):
        velocity(s, [0.0], log_psi_sq_floor=-60.0)
    assert velocity(s, [0.5], log_psi_sq_floor=-60.0).v[0] == pytest.approx(0.0, abs=1e-12)


def test_velocity_at_exact_node():
    # two copies of one eigenstate with opposite signs cancel exactly
    spec = EigenstateSpec(3.7, 0.8, 0.4)
    s = SuperpositionState([(1 / math.sqrt(2), spec), (-1 / math.sqrt(2), spec)])
    V, lp = velocities(s, np.array([[0.3], [2.0]]))
    assert np.all(np.isnan(V)) and np.all(lp == -np.inf)
    with pytest.raises(NodeError):
        velocity(s, [0.3])


def test_velocity_floor():
    s = refs.three_term_state()
    with pytest.raises(NodeError):
        velocity(s, [1.0], log_psi_sq_floor=1e6)


def test_velocity_backends_agree():
    s = refs.two_particle_state()
    Y = np.random.default_rng(11).uniform(-6, 6, size=(300, 2))
    V1, L1 = get_backend("numba").velocities(Y, 0.9, s.packed)
    V2, L2 = get_backend("numpy").velocities(Y, 0.9, s.packed)
    np.testing.assert_allclose(V1, V2, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(L1, L2, rtol=1e-12, atol=1e-9)


def scipy_path(state, y0, t1):
    def rhs(t, y):
        return velocity(state, y, t).v
    sol = solve_ivp(rhs, (0.0, t1), np.atleast_1d(y0), method="DOP853", rtol=1e-12, atol=1e-12)
    return sol.y[:, -1]


@pytest.mark.parametrize("y0", [-1.0, 0.5, 1.5])
def test_trajectory_matches_scipy_1d(y0):
    s = refs.three_term_state()
    tr = integrate_trajectory(s, [y0], 0.0, math.pi / 2)
    np.testing.assert_allclose(tr.final, scipy_path(s, y0, math.pi / 2), atol=1e-6)


def test_trajectory_matches_scipy_2d():
    s = refs.two_particle_state()
    y0 = [0.5, 0.5]
    tr = integrate_trajectory(s, y0, 0.0, 0.3)
    np.testing.assert_allclose(tr.final, scipy_path(s, y0, 0.3), atol=1e-6)


@pytest.mark.parametrize("backend", ["numba", "numpy"])
def test_trajectory_is_reversible(backend):
    s = refs.three_term_state()
    fwd = integrate_trajectory(s, [0.8], 0.0, math.pi, backend=backend)
    back = integrate_trajectory(s, fwd.final, math.pi, 0.0, backend=backend)
    assert back.final[0] == pytest.approx(0.8, abs=1e-6)
    assert back.times[0] < back.times[-1]


def test_backends_integrate_alike():
    s = refs.three_term_state()
    a = integrate_trajectory(s, [1.2], 0.0, math.pi, backend="numba")
    b = integrate_trajectory(s, [1.2], 0.0, math.pi, backend="numpy")
    assert a.final[0] == pytest.approx(b.final[0], abs=1e-10)
    assert a.n_steps == b.n_steps


def test_dense_output():
    s = refs.three_term_state()
    ts = np.linspace(0, math.pi, 9)
    tr = integrate_trajectory(s, [1.2], 0.0, math.pi, sample_times=ts)
    assert tr.points.shape == (9, 1)
    assert tr.points[0, 0] == pytest.approx(1.2, abs=1e-14)
    for t, p in zip(ts[1:], tr.points[1:]):
        direct = integrate_trajectory(s, [1.2], 0.0, t).final
        assert p[0] == pytest.approx(direct[0], abs=1e-6)
    with pytest.raises(ValueError):
        tr.at(4.0)


def test_integrator_failure_reported():
    s = refs.three_term_state()
    with pytest.raises(StepFailure):
        integrate_trajectory(s, [1.2], 0.0, math.pi, opts=IntegratorOptions(max_steps=2))
    with pytest.raises(ValueError):
        integrate_trajectory(s, [1.2], 1.0, 1.0)


@settings(max_examples=10)
@given(st.floats(-3, 3))
def test_equivariance_of_single_eigenstate(y0):
    # for one complex eigenstate |psi|^2 is static, so the flux through y(t) is constant:
    # the mass between two trajectories is conserved
    spec = EigenstateSpec(4.3, 0.9, 1.3)
    s = SuperpositionState.eigenstate(spec)
    y1 = y0 + 0.3
    t1 = 1.0
    a = integrate_trajectory(s, [y0], 0.0, t1).final[0]
    b = integrate_trajectory(s, [y1], 0.0, t1).final[0]

    def mass(lo, hi):
        xs = np.linspace(lo, hi, 2001)
        vals = [math.exp(2 * eval_eigenstate(spec, x)[0].log_mag) for x in xs]
        return np.trapezoid(vals, xs)

    assert mass(a, b) == pytest.approx(mass(y0, y1), rel=1e-5)


def test_decay_profile_and_region_speed():
    s = refs.single_eigenstate()
    prof = velocity_decay_profile(s, 0, (10.0, 15.0), 11)
    assert len(prof) == 11
    assert all(abs(p.y_v - p.y * p.v) < 1e-300 + 1e-15 * abs(p.y_v) for p in prof)
    near = region_max_speed(s, 0, 2.0, 5.0)
    far = region_max_speed(s, 0, 10.0, 15.0)
    assert far < near
