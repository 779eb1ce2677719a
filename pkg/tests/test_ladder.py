import math

import pytest
from hypothesis import assume, given, strategies as st

from pilotwave.ladder import (Annihilated, apply_lowering, apply_operator, apply_raising,
                              evaluate_result, verify_basis_action)
from pilotwave.states import EigenstateSpec, eval_eigenstate

SPEC_KS = (-3.5, 1.0, 5.8, 14.0)
YS = (0.5, 1.5, 2.5)


@pytest.mark.parametrize("K", SPEC_KS)
@pytest.mark.parametrize("parity", ["even", "odd"])
@pytest.mark.parametrize("op", ["lower", "raise"])
def test_basis_actions(K, parity, op):
    dev = verify_basis_action(K, parity, op, YS)
    limit = 1e-12 if (K == 1.0 and parity == "even" and op == "lower") else 1e-8
    assert dev <= limit


def test_basis_action_rejects_bad_input():
    with pytest.raises(ValueError):
        verify_basis_action(2.0, "even", "sideways", YS)
    with pytest.raises(ValueError):
        verify_basis_action(2.0, "even", "lower", [])


@pytest.mark.parametrize("theta", [0.0, math.pi])
def test_ground_state_annihilated(theta):
    res = apply_lowering(EigenstateSpec(1.0, theta, 0.3))
    assert res.annihilated and res.out_spec is Annihilated and res.scale == 0
    assert evaluate_result(res, 0.7).is_zero
    res = apply_raising(EigenstateSpec(-1.0, theta, 0.3))
    assert res.annihilated


def test_not_annihilated_with_odd_part():
    assert not apply_lowering(EigenstateSpec(1.0, 0.3, 0.0)).annihilated


def state_tol(spec, y):
    v, d = eval_eigenstate(spec, y)
    mags = [z.log_mag for z in (v, d) if not z.is_zero]
    return 1e-9 * math.exp(max(mags))


specs = st.builds(EigenstateSpec, st.floats(-5, 16), st.floats(0, math.pi), st.floats(0, 2 * math.pi))


@given(specs, st.floats(-3, 3), st.sampled_from(["lower", "raise"]))
def test_whole_state_rotation(spec, y, op):
    fn = apply_lowering if op == "lower" else apply_raising
    res = fn(spec)
    assume(not res.annihilated)
    direct = apply_operator(spec, op, y).to_complex()
    closed = evaluate_result(res, y).to_complex()
    assert abs(direct - closed) <= state_tol(spec, y) * max(1.0, abs(y))


@given(specs, st.sampled_from([apply_lowering, apply_raising]))
def test_normalized_scale(spec, fn):
    a, b = fn(spec), fn(spec, normalized=True)
    assert b.out_spec == a.out_spec
    assert b.scale == pytest.approx(a.scale / math.sqrt(2), rel=1e-15, abs=0)


@given(specs)
def test_k_shift_and_magnitude(spec):
    lo, hi = apply_lowering(spec), apply_raising(spec)
    if not lo.annihilated:
        assert lo.out_spec.K == spec.K - 2
        R = math.hypot(math.cos(spec.theta) * (1 - spec.K), math.sin(spec.theta))
        assert lo.magnitude == pytest.approx(R, rel=1e-14)
    if not hi.annihilated:
        assert hi.out_spec.K == spec.K + 2


def compose(first, second, spec, y):
    r1 = first(spec)
    if r1.annihilated:
        return 0j
    r2 = second(r1.out_spec)
    if r2.annihilated:
        return 0j
    return evaluate_result(r2, y).to_complex() * r1.scale


@given(specs, st.floats(-3, 3))
def test_number_operator(spec, y):
    # A+ A = -d^2 + y^2 - 1 = K - 1 on an eigenstate
    psi = eval_eigenstate(spec, y)[0].to_complex()
    got = compose(apply_lowering, apply_raising, spec, y)
    assert abs(got - (spec.K - 1) * psi) <= 20 * state_tol(spec, y) * max(1.0, abs(spec.K))


@given(specs, st.floats(-3, 3))
def test_commutator(spec, y):
    psi = eval_eigenstate(spec, y)[0].to_complex()
    a = compose(apply_raising, apply_lowering, spec, y)
    b = compose(apply_lowering, apply_raising, spec, y)
    assert abs((a - b) - 2 * psi) <= 40 * state_tol(spec, y) * max(1.0, abs(spec.K))
