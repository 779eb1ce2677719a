"""Special-function kernels: Pochhammer symbols, Gamma, and Kummer's M(c, d, x).

All large values are carried in a log representation.  The Kummer kernels
return a scaled pair ``(S, L)`` with ``M = S * exp(L)``; public wrappers turn
that into :class:`ComplexLog`.

The kernels come in two flavours: scalar loop code (``*_nb``), compiled with
numba when the backend allows it, and a vectorised numpy version
(``kummer_pair_np``) used by the numpy backend.
"""
import math
from dataclasses import dataclass

import numpy as np

from ._backend import njit
from .errors import NonconvergenceError, PoleError

MAX_TERMS = 10_000
SERIES_TOL = 1e-17

# Above this argument the series needs thousands of terms; the asymptotic
# expansion is used instead whenever it converges to working precision.
X_ASYMPTOTIC = 1600.0
ASYMPTOTIC_MAX_TERMS = 80

_BIG = 1e250
_LOG_BIG = math.log(_BIG)
_TWO_PI = 2.0 * math.pi
_HALF_LOG_TWO_PI = 0.5 * math.log(_TWO_PI)
_LOG_PI = math.log(math.pi)

_LANCZOS_G = 7.0
_LANCZOS_P = np.array([
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
])


@dataclass(frozen=True)
class ComplexLog:
    """A complex number stored as ``exp(log_mag) * exp(1j * phase)``.

    ``log_mag = -inf`` encodes an exact zero; the phase is then stored as 0.
    """

    log_mag: float
    phase: float = 0.0

    def __post_init__(self):
        if self.log_mag == -math.inf or math.isnan(self.log_mag):
            object.__setattr__(self, "phase", 0.0)
            if math.isnan(self.log_mag):
                raise ValueError("log_mag is NaN")
            return
        p = math.remainder(float(self.phase), _TWO_PI)
        if p <= -math.pi:
            p += _TWO_PI
        object.__setattr__(self, "phase", p)
        object.__setattr__(self, "log_mag", float(self.log_mag))

    @classmethod
    def from_complex(cls, z):
        z = complex(z)
        a = abs(z)
        if a == 0.0:
            return cls(-math.inf, 0.0)
        return cls(math.log(a), math.atan2(z.imag, z.real))

    @classmethod
    def from_scaled(cls, mantissa, log_scale):
        """``mantissa * exp(log_scale)`` with a finite complex mantissa."""
        z = complex(mantissa)
        a = abs(z)
        if a == 0.0:
            return cls(-math.inf, 0.0)
        return cls(log_scale + math.log(a), math.atan2(z.imag, z.real))

    @classmethod
    def zero(cls):
        return cls(-math.inf, 0.0)

    @property
    def is_zero(self):
        return self.log_mag == -math.inf

    def to_complex(self):
        if self.is_zero:
            return 0j
        r = math.exp(self.log_mag)
        return complex(r * math.cos(self.phase), r * math.sin(self.phase))

    def __complex__(self):
        return self.to_complex()

    def real(self):
        return self.to_complex().real

    def conjugate(self):
        return ComplexLog(self.log_mag, -self.phase)

    def __neg__(self):
        return ComplexLog(self.log_mag, self.phase + math.pi)

    def __mul__(self, other):
        other = _as_clog(other)
        if self.is_zero or other.is_zero:
            return ComplexLog.zero()
        return ComplexLog(self.log_mag + other.log_mag, self.phase + other.phase)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _as_clog(other)
        if other.is_zero:
            raise ZeroDivisionError("division by an exact zero ComplexLog")
        if self.is_zero:
            return ComplexLog.zero()
        return ComplexLog(self.log_mag - other.log_mag, self.phase - other.phase)

    def __add__(self, other):
        other = _as_clog(other)
        if self.is_zero:
            return other
        if other.is_zero:
            return self
        big, small = (self, other) if self.log_mag >= other.log_mag else (other, self)
        rel = math.exp(small.log_mag - big.log_mag)
        dphi = small.phase - big.phase
        z = complex(1.0 + rel * math.cos(dphi), rel * math.sin(dphi))
        return ComplexLog.from_scaled(z, big.log_mag) * ComplexLog(0.0, big.phase)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-_as_clog(other))


def _as_clog(value):
    if isinstance(value, ComplexLog):
        return value
    return ComplexLog.from_complex(value)


@dataclass(frozen=True)
class KummerParams:
    c: float
    d: float
    x: float

    def __post_init__(self):
        if not (math.isfinite(self.c) and math.isfinite(self.d) and math.isfinite(self.x)):
            raise ValueError("Kummer parameters must be finite")
        if is_nonpositive_integer(self.d, 0.0):
            raise ValueError(f"M(c, d, x) is undefined for d = {self.d}")
        if self.x < 0:
            raise ValueError("x must be >= 0")


def is_nonpositive_integer(t, tol=1e-9):
    return t <= tol and abs(t - round(t)) <= tol


def pochhammer(t, j):
    """Rising factorial (t)_j as an explicit product; no Gamma ratios."""
    if j < 0 or int(j) != j:
        raise ValueError("j must be a non-negative integer")
    out = 1.0
    for i in range(int(j)):
        out *= t + i
    return out


# ---------------------------------------------------------------------------
# Gamma function (Lanczos, g = 7, nine coefficients)


@njit
def _lanczos_sum(w):
    a = _LANCZOS_P[0]
    for i in range(1, 9):
        a += _LANCZOS_P[i] / (w + i)
    return a


@njit
def log_abs_gamma_nb(z):
    """Return ``(log|Gamma(z)|, sign(Gamma(z)))``; ``(inf, 0)`` at poles."""
    if z < 0.5:
        s = math.sin(math.pi * z)
        if s == 0.0:
            return math.inf, 0.0
        w = -z  # (1 - z) - 1
        t = w + _LANCZOS_G + 0.5
        lg = _HALF_LOG_TWO_PI + (w + 0.5) * math.log(t) - t + math.log(_lanczos_sum(w))
        sign = 1.0 if s > 0 else -1.0
        return _LOG_PI - math.log(abs(s)) - lg, sign
    w = z - 1.0
    t = w + _LANCZOS_G + 0.5
    return _HALF_LOG_TWO_PI + (w + 0.5) * math.log(t) - t + math.log(_lanczos_sum(w)), 1.0


def gamma(z):
    """Gamma function via the Lanczos approximation with reflection below 1/2."""
    z = float(z)
    if is_nonpositive_integer(z, 0.0):
        raise PoleError(f"Gamma has a pole at {z}")
    if z < 0.5:
        return math.pi / (math.sin(math.pi * z) * gamma(1.0 - z))
    if z > 170.0:
        lg, _ = log_abs_gamma_nb(z)
        return math.exp(lg)
    w = z - 1.0
    t = w + _LANCZOS_G + 0.5
    return math.sqrt(_TWO_PI) * t ** (w + 0.5) * math.exp(-t) * float(_lanczos_sum(w))


def log_abs_gamma(z):
    z = float(z)
    if is_nonpositive_integer(z, 0.0):
        raise PoleError(f"Gamma has a pole at {z}")
    lg, sign = log_abs_gamma_nb(z)
    return float(lg), float(sign)


# ---------------------------------------------------------------------------
# Kummer M(c, d, x): scalar kernels


@njit
def kummer_series_nb(c, d, x, tol):
    """Scaled series for M and dM/dx.

    Returns ``(S, Sp, L, n)`` with ``M = S e^L`` and ``M' = Sp e^L``; ``n`` is
    the number of terms used, or -1 when the term budget ran out.  Uses
    ``M'(x) = sum_j u_j (c+j)/(d+j)`` where ``u_j`` are the terms of M.
    Truncation: three consecutive terms below ``tol`` relative to the sums.
    """
    u = 1.0
    s = 1.0
    sp = c / d
    log_scale = 0.0
    small = 0
    j = 0
    while j < MAX_TERMS:
        u = u * ((c + j) / (d + j)) * (x / (j + 1))
        j += 1
        up = u * ((c + j) / (d + j))
        s += u
        sp += up
        if abs(u) <= tol * abs(s) and abs(up) <= tol * abs(sp):
            small += 1
            if small >= 3:
                return s, sp, log_scale, j + 1
        else:
            small = 0
        if abs(u) > _BIG or abs(s) > _BIG:
            u /= _BIG
            s /= _BIG
            sp /= _BIG
            log_scale += _LOG_BIG
    return s, sp, log_scale, -1


@njit
def kummer_asymptotic_nb(c, d, x, n_terms, tol):
    """Large-x expansion of M and dM/dx in scaled form.

    ``M ~ Gamma(d)/Gamma(c) e^x x^(c-d) sum_s (1-c)_s (d-c)_s / (s! x^s)``;
    dM/dx shares the prefactor with ``(1-c)_s`` replaced by ``(-c)_s``.
    ``n_terms >= 0`` keeps exactly that many correction terms; ``n_terms < 0``
    sums adaptively until the terms drop below ``tol`` (or start growing).
    Returns ``(S, Sp, L, ok)``.
    """
    lg_c, sg_c = log_abs_gamma_nb(c)
    lg_d, sg_d = log_abs_gamma_nb(d)
    log_pref = x + (c - d) * math.log(x) + lg_d - lg_c
    sign = sg_c * sg_d
    term = 1.0
    termp = 1.0
    s = 1.0
    sp = 1.0
    ok = n_terms >= 0
    limit = n_terms if n_terms >= 0 else ASYMPTOTIC_MAX_TERMS
    prev = math.inf
    for k in range(limit):
        term = term * (k + 1.0 - c) * (k + d - c) / ((k + 1.0) * x)
        termp = termp * (k - c) * (k + d - c) / ((k + 1.0) * x)
        mag = max(abs(term), abs(termp))
        if n_terms < 0 and mag > prev:
            break
        s += term
        sp += termp
        prev = mag
        if n_terms < 0 and abs(term) <= tol * abs(s) and abs(termp) <= tol * abs(sp):
            ok = True
            break
    return sign * s, sign * sp, log_pref, ok


@njit
def kummer_pair_nb(c, d, x, tol):
    """M and dM/dx with automatic choice of series or asymptotic expansion."""
    if x >= X_ASYMPTOTIC and not (c <= 1e-12 and abs(c - round(c)) <= 1e-12):
        s, sp, lsc, ok = kummer_asymptotic_nb(c, d, x, -1, tol)
        if ok:
            return s, sp, lsc, 1
    return kummer_series_nb(c, d, x, tol)


# ---------------------------------------------------------------------------
# Kummer M(c, d, x): vectorised numpy kernel


def kummer_pair_np(c, d, x, tol=SERIES_TOL):
    """Vectorised :func:`kummer_pair_nb` over an array of ``x``.

    Returns arrays ``(S, Sp, L, n)`` with the same meaning as the scalar
    kernel.  Elements are retired individually as they meet the criterion.
    """
    x = np.asarray(x, dtype=float)
    shape = x.shape
    x = x.ravel()
    n = x.size
    s = np.ones(n)
    sp = np.full(n, c / d)
    log_scale = np.zeros(n)
    nterms = np.full(n, -1, dtype=np.int64)

    polynomial = c <= 1e-12 and abs(c - round(c)) <= 1e-12
    asym = np.zeros(n, dtype=bool)
    if not polynomial:
        big = np.nonzero(x >= X_ASYMPTOTIC)[0]
        if big.size:
            a_s, a_sp, a_l, a_ok = _kummer_asymptotic_np(c, d, x[big], tol)
            took = big[a_ok]
            s[took], sp[took], log_scale[took] = a_s[a_ok], a_sp[a_ok], a_l[a_ok]
            nterms[took] = 1
            asym[took] = True

    idx = np.nonzero(~asym)[0]
    xa = x[idx]
    u = np.ones(idx.size)
    ss = np.ones(idx.size)
    ssp = np.full(idx.size, c / d)
    ls = np.zeros(idx.size)
    small = np.zeros(idx.size, dtype=np.int64)
    j = 0
    while idx.size and j < MAX_TERMS:
        u = u * ((c + j) / (d + j)) * (xa / (j + 1))
        j += 1
        up = u * ((c + j) / (d + j))
        ss = ss + u
        ssp = ssp + up
        below = (np.abs(u) <= tol * np.abs(ss)) & (np.abs(up) <= tol * np.abs(ssp))
        small = np.where(below, small + 1, 0)
        rescale = (np.abs(u) > _BIG) | (np.abs(ss) > _BIG)
        if rescale.any():
            u = np.where(rescale, u / _BIG, u)
            ss = np.where(rescale, ss / _BIG, ss)
            ssp = np.where(rescale, ssp / _BIG, ssp)
            ls = np.where(rescale, ls + _LOG_BIG, ls)
        done = small >= 3
        if done.any():
            di = idx[done]
            s[di], sp[di], log_scale[di] = ss[done], ssp[done], ls[done]
            nterms[di] = j + 1
            keep = ~done
            idx, xa, u, ss, ssp, ls, small = (
                idx[keep], xa[keep], u[keep], ss[keep], ssp[keep], ls[keep], small[keep])
    if idx.size:
        s[idx], sp[idx], log_scale[idx] = ss, ssp, ls
    return (s.reshape(shape), sp.reshape(shape), log_scale.reshape(shape),
            nterms.reshape(shape))


def _kummer_asymptotic_np(c, d, x, tol):
    lg_c, sg_c = log_abs_gamma_nb(c)
    lg_d, sg_d = log_abs_gamma_nb(d)
    log_pref = x + (c - d) * np.log(x) + lg_d - lg_c
    sign = sg_c * sg_d
    term = np.ones_like(x)
    termp = np.ones_like(x)
    s = np.ones_like(x)
    sp = np.ones_like(x)
    prev = np.full_like(x, np.inf)
    live = np.ones(x.shape, dtype=bool)
    ok = np.zeros(x.shape, dtype=bool)
    for k in range(ASYMPTOTIC_MAX_TERMS):
        term = term * (k + 1.0 - c) * (k + d - c) / ((k + 1.0) * x)
        termp = termp * (k - c) * (k + d - c) / ((k + 1.0) * x)
        mag = np.maximum(np.abs(term), np.abs(termp))
        live &= ~(mag > prev)
        s = np.where(live, s + term, s)
        sp = np.where(live, sp + termp, sp)
        prev = mag
        conv = live & (np.abs(term) <= tol * np.abs(s)) & (np.abs(termp) <= tol * np.abs(sp))
        ok |= conv
        live &= ~conv
        if not live.any():
            break
    return sign * s, sign * sp, log_pref, ok


# ---------------------------------------------------------------------------
# Public scalar API


def _scaled_to_clog(s, log_scale):
    if s == 0.0:
        return ComplexLog.zero()
    return ComplexLog(log_scale + math.log(abs(s)), 0.0 if s > 0 else math.pi)


def kummer_m_series(c, d, x, tol=1e-15):
    """M(c, d, x) by direct summation, as a :class:`ComplexLog`.

    Raises :class:`NonconvergenceError` when 10,000 terms do not satisfy the
    three-consecutive-small-terms criterion.
    """
    p = KummerParams(float(c), float(d), float(x))
    if tol <= 0:
        raise ValueError("tol must be positive")
    s, _, log_scale, n = kummer_series_nb(p.c, p.d, p.x, tol)
    if n < 0:
        raise NonconvergenceError(f"M({c}, {d}, {x}) did not converge in {MAX_TERMS} terms")
    return _scaled_to_clog(s, log_scale)


def kummer_m_asymptotic(c, d, x, n_terms=2):
    """Large-x asymptotic M(c, d, x) keeping ``n_terms`` correction terms."""
    p = KummerParams(float(c), float(d), float(x))
    if is_nonpositive_integer(p.c):
        raise PoleError(f"asymptotic form needs 1/Gamma(c) != 0; c = {c}")
    if p.x <= 0:
        raise ValueError("asymptotic form needs x > 0")
    if n_terms < 0:
        raise ValueError("n_terms must be >= 0")
    s, _, log_scale, _ = kummer_asymptotic_nb(p.c, p.d, p.x, int(n_terms), 0.0)
    return _scaled_to_clog(s, log_scale)


def kummer_m(c, d, x, tol=SERIES_TOL):
    """M(c, d, x) choosing series or asymptotic evaluation automatically."""
    p = KummerParams(float(c), float(d), float(x))
    s, _, log_scale, n = kummer_pair_nb(p.c, p.d, p.x, tol)
    if n < 0:
        raise NonconvergenceError(f"M({c}, {d}, {x}) did not converge")
    return _scaled_to_clog(s, log_scale)
