import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import kummer_decimal
from pilotwave.errors import NonconvergenceError, PoleError
from pilotwave.specfun import (ComplexLog, gamma, kummer_m, kummer_m_asymptotic, kummer_m_series,
                               kummer_pair_np, log_abs_gamma, pochhammer)


def rel(a, b):
    return abs(a - b) / abs(b)


# --- pochhammer --------------------------------------------------------------

@pytest.mark.parametrize("t, j, expected", [(3.7, 0, 1.0), (1, 4, 24.0), (-2, 3, 0.0),
                                            (0.5, 2, 0.75)])
def test_pochhammer_examples(t, j, expected):
    assert pochhammer(t, j) == expected


def test_pochhammer_rejects_negative_order():
    with pytest.raises(ValueError):
        pochhammer(1.0, -1)


@given(st.floats(-20, 20), st.integers(0, 12))
def test_pochhammer_recurrence(t, j):
    assert pochhammer(t, j + 1) == pytest.approx(pochhammer(t, j) * (t + j), rel=1e-12, abs=1e-300)


# --- gamma -------------------------------------------------------------------

@given(st.floats(0.05, 60.0))
def test_gamma_matches_mpmath(z):
    assert rel(gamma(z), float(mpmath.gamma(z))) < 1e-12


@given(st.floats(-30.0, 0.5).filter(lambda z: abs(z - round(z)) > 1e-3))
def test_gamma_reflection_region(z):
    assert rel(gamma(z), float(mpmath.gamma(z))) < 1e-11


@given(st.floats(0.1, 150.0))
def test_log_abs_gamma(z):
    lg, sign = log_abs_gamma(z)
    assert sign == 1.0
    assert lg == pytest.approx(float(mpmath.loggamma(z)), abs=1e-12 * max(1.0, abs(lg)))


@pytest.mark.parametrize("z", [0.0, -1.0, -7.0])
def test_gamma_poles(z):
    with pytest.raises(PoleError):
        gamma(z)


# --- ComplexLog --------------------------------------------------------------

finite = st.floats(-1e6, 1e6, allow_nan=False).filter(lambda v: v == 0 or abs(v) > 1e-6)
cplx = st.builds(complex, finite, finite).filter(lambda z: z != 0)


@given(cplx)
def test_complexlog_round_trip(z):
    assert rel(ComplexLog.from_complex(z).to_complex(), z) < 1e-14


@given(cplx, cplx)
def test_complexlog_arithmetic(a, b):
    A, B = ComplexLog.from_complex(a), ComplexLog.from_complex(b)
    assert rel((A * B).to_complex(), a * b) < 1e-13
    assert rel((A / B).to_complex(), a / b) < 1e-13
    s = (A + B).to_complex()
    assert abs(s - (a + b)) <= 1e-13 * (abs(a) + abs(b))


def test_complexlog_beyond_float_range():
    big = ComplexLog(2000.0, 0.3)
    prod = big * big
    assert prod.log_mag == 4000.0
    assert (prod / big).log_mag == pytest.approx(2000.0)
    assert (big - big).is_zero or (big - big).log_mag < 2000.0 - 30


def test_complexlog_zero():
    z = ComplexLog.zero()
    assert z.is_zero and z.to_complex() == 0
    assert (z + ComplexLog(1.0)).log_mag == 1.0
    assert (z * ComplexLog(5.0)).is_zero
    with pytest.raises(ZeroDivisionError):
        ComplexLog(1.0) / z


@given(st.floats(-100, 100))
def test_complexlog_phase_canonical(p):
    assert -math.pi < ComplexLog(0.0, p).phase <= math.pi


# --- Kummer M: series ----------------------------------------------------------

def test_series_examples():
    assert kummer_m_series(0.0, 0.5, 7.3).to_complex() == 1.0
    assert rel(kummer_m_series(1.0, 1.0, 2.0).real(), math.e ** 2) < 1e-15
    ref = float(kummer_decimal(0.25, 0.5, 4.0))
    assert rel(kummer_m_series(0.25, 0.5, 4.0).real(), ref) < 1e-12


def test_series_at_zero_is_one():
    assert kummer_m_series(-3.3, 1.5, 0.0).real() == 1.0


@pytest.mark.parametrize("c", [-4.0, -2.0])
def test_series_polynomial_for_nonpositive_integer_c(c):
    # M(-n, d, x) is a degree-n polynomial
    x = 3.1
    expected = float(kummer_decimal(c, 0.5, x))
    assert rel(kummer_m_series(c, 0.5, x).real(), expected) < 1e-13


def test_series_invalid_d():
    with pytest.raises(ValueError):
        kummer_m_series(0.3, -2.0, 1.0)
    with pytest.raises(ValueError):
        kummer_m_series(0.3, 0.5, -1.0)


def test_series_nonconvergence():
    with pytest.raises(NonconvergenceError):
        kummer_m_series(0.3, 0.5, 5e4)


@given(st.floats(-10, 10).filter(lambda c: not (c <= 0 and c == round(c))),
       st.sampled_from([0.5, 1.5]), st.floats(0, 50))
def test_series_matches_decimal_oracle(c, d, x):
    ref = float(kummer_decimal(c, d, x))
    got = kummer_m_series(c, d, x, tol=1e-13).real()
    # relative accuracy is lost only near a zero of M, where the series cancels
    assert abs(got - ref) <= 1e-10 * max(abs(ref), 1e-12 * math.exp(x))


@given(st.floats(-6, 6), st.sampled_from([0.5, 1.5]), st.floats(0.1, 30))
def test_kummer_transformation(c, d, x):
    # M(c, d, x) = e^x M(d - c, d, -x); evaluate the right side with mpmath
    lhs = kummer_m_series(c, d, x)
    with mpmath.workdps(40):
        rhs = mpmath.e ** x * mpmath.hyp1f1(d - c, d, -x)
    if lhs.is_zero or rhs == 0:
        return
    assert abs(lhs.real() - float(rhs)) <= 1e-10 * max(abs(float(rhs)), 1e-12 * math.exp(x))


# --- Kummer M: asymptotic ------------------------------------------------------

def test_asymptotic_leading_term_exact():
    # M(1, 1, x) = e^x and every correction carries (1 - c) = 0
    m = kummer_m_asymptotic(1.0, 1.0, 100.0, n_terms=0)
    assert m.log_mag == pytest.approx(100.0, abs=1e-13)


def asym_error(c, d, x, n):
    ref = kummer_decimal(c, d, x)
    got = kummer_m_asymptotic(c, d, x, n_terms=n).real()
    return abs(got - float(ref)) / abs(float(ref))


def test_asymptotic_three_corrections_within_1e6():
    assert asym_error(0.25, 0.5, 64.0, 3) < 1e-6


def test_asymptotic_two_corrections_at_64():
    # the first dropped term, (3/4)_3 (1/4)_3 / (3! 64^3), is 1.6e-6 on its own
    err = asym_error(0.25, 0.5, 64.0, 2)
    assert 1e-6 < err < 2e-6


def test_asymptotic_agreement_improves_with_x():
    c = (1.0 - 14.0) / 4.0
    errs = [asym_error(c, 0.5, x, 2) for x in (25.0, 36.0, 81.0)]
    assert errs[0] > errs[1] > errs[2]


@given(st.floats(-3, 3).filter(lambda c: abs(c - round(c)) > 0.05 or c > 0.5),
       st.sampled_from([0.5, 1.5]))
def test_asymptotic_more_terms_help_at_large_x(c, d):
    x = 400.0
    e1, e3 = asym_error(c, d, x, 1), asym_error(c, d, x, 3)
    assert e3 <= e1 + 1e-15


def test_asymptotic_pole():
    with pytest.raises(PoleError):
        kummer_m_asymptotic(-2.0, 0.5, 50.0)


def test_one_correction_matches_eigenstate_factor():
    # the s = 1 term gives the factor 1 + (3 + K)(1 + K)/(16 y^2) of the basis
    K, y = 5.8, 9.0
    c, x = (1.0 - K) / 4.0, y * y
    lead = kummer_m_asymptotic(c, 0.5, x, n_terms=0)
    one = kummer_m_asymptotic(c, 0.5, x, n_terms=1)
    ratio = math.exp(one.log_mag - lead.log_mag)
    assert ratio == pytest.approx(1.0 + (3.0 + K) * (1.0 + K) / (16.0 * y * y), rel=1e-14)


# --- dispatch and vectorised kernel ---------------------------------------------

@pytest.mark.parametrize("c, d, x", [(0.25, 0.5, 2000.0), (-3.2, 1.5, 2500.0), (4.1, 0.5, 1800.0)])
def test_dispatch_large_x(c, d, x):
    ref = mpmath.hyp1f1(c, d, x)
    got = kummer_m(c, d, x)
    assert got.log_mag == pytest.approx(float(mpmath.log(abs(ref))), rel=1e-13)


@given(st.floats(-5, 5), st.sampled_from([0.5, 1.5]),
       st.lists(st.floats(0, 300), min_size=1, max_size=6))
def test_vector_kernel_matches_scalar(c, d, xs):
    S, Sp, L, n = kummer_pair_np(c, d, np.array(xs))
    assert np.all(n >= 0)
    for si, spi, Li, x in zip(S, Sp, L, xs):
        ref = kummer_m(c, d, x)
        # dM/dx = (c/d) M(c+1, d+1, x)
        dref = kummer_m(c + 1.0, d + 1.0, x) * (c / d) if c != 0 else ComplexLog.zero()
        for got, want in ((ComplexLog.from_scaled(si, Li), ref),
                          (ComplexLog.from_scaled(spi, Li), dref)):
            if want.is_zero:
                assert abs(got.to_complex()) < 1e-300 or got.is_zero
                continue
            diff = got - want
            scale = max(want.log_mag, x - 12 * math.log(10.0))
            assert diff.is_zero or diff.log_mag - scale < math.log(1e-10)
