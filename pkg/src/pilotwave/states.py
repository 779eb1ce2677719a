"""Harmonic-oscillator eigenstates for arbitrary real K and their superpositions.

Natural units hbar = m = omega = 1 throughout: positions ``y`` and times ``t``
are dimensionless and ``K = 2E`` is the dimensionless energy.

The even and odd solutions of ``-psi'' + y^2 psi = K psi`` are

    phi0(y) = exp(-y^2/2) M((1-K)/4, 1/2, y^2)
    phi1(y) = exp(-y^2/2) y M((3-K)/4, 3/2, y^2)

and a general eigenstate is ``cos(theta) phi0 + sin(theta) e^{i phi} phi1``.
For K not an odd integer both grow like ``exp(y^2/2)``, so values are returned
as :class:`~pilotwave.specfun.ComplexLog` or as (mantissa, log-scale) arrays.
"""
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import NonconvergenceError, StateError
from .kernels import PackedState, basis_nb, eval_point_nb, get_backend
from .specfun import SERIES_TOL, ComplexLog

MAX_TERMS = 64
NORM_TOL = 1e-12
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class UnitsConvention:
    hbar: float = 1.0
    m: float = 1.0
    omega: float = 1.0


def canonical_angles(theta, phi):
    """Map (theta, phi) to theta in [0, pi], phi in [0, 2 pi) without changing the state.

    ``theta -> 2 pi - theta`` flips the sign of sin(theta); adding pi to phi
    compensates.
    """
    theta = math.fmod(float(theta), TWO_PI)
    if theta < 0:
        theta += TWO_PI
    phi = float(phi)
    if theta > math.pi:
        theta = TWO_PI - theta
        phi += math.pi
    phi = math.fmod(phi, TWO_PI)
    if phi < 0:
        phi += TWO_PI
    if phi >= TWO_PI:
        phi = 0.0
    return theta, phi


@dataclass(frozen=True)
class EigenstateSpec:
    """Eigenstate label (K, theta, phi); angles are canonicalised on construction."""

    K: float
    theta: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        for name in ("K", "theta", "phi"):
            value = getattr(self, name)
            if isinstance(value, complex) or np.iscomplexobj(value):
                raise StateError(f"{name} must be real, got {value!r}")
            if not math.isfinite(float(value)):
                raise StateError(f"{name} must be finite, got {value!r}")
        theta, phi = canonical_angles(self.theta, self.phi)
        object.__setattr__(self, "K", float(self.K))
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "phi", phi)

    @property
    def even_weight(self):
        return math.cos(self.theta)

    @property
    def odd_weight(self):
        return math.sin(self.theta) * complex(math.cos(self.phi), math.sin(self.phi))


@dataclass(frozen=True)
class Term:
    coeff: complex
    particles: tuple


class SuperpositionState:
    """Finite superposition of N-particle product eigenstates.

    ``terms`` is a sequence of ``(coeff, specs)`` where ``specs`` holds one
    :class:`EigenstateSpec` per particle.  Coefficients must satisfy
    ``sum |c|^2 = 1`` (within 1e-12) unless ``auto_normalize`` is set; the
    global phase is fixed so that the first nonzero coefficient is real and
    positive.  Term ``j`` evolves with ``exp(-i t sum_g K_j^g / 2)``.
    """

    def __init__(self, terms, auto_normalize=False):
        terms = list(terms)
        if not terms:
            raise StateError("state must contain at least one term")
        if len(terms) > MAX_TERMS:
            raise StateError(f"at most {MAX_TERMS} terms are supported, got {len(terms)}")
        coeffs = []
        particles = []
        for coeff, specs in terms:
            if isinstance(specs, EigenstateSpec):
                specs = (specs,)
            specs = tuple(specs)
            if not specs or not all(isinstance(s, EigenstateSpec) for s in specs):
                raise StateError("each term needs a non-empty list of EigenstateSpec")
            coeffs.append(complex(coeff))
            particles.append(specs)
        n = len(particles[0])
        if any(len(p) != n for p in particles):
            raise StateError("every term must have one eigenstate per particle")
        c = np.array(coeffs, dtype=complex)
        if not np.all(np.isfinite(c)):
            raise StateError("coefficients must be finite")
        norm2 = float(np.sum(np.abs(c) ** 2))
        if norm2 == 0.0:
            raise StateError("all coefficients are zero")
        if abs(norm2 - 1.0) > NORM_TOL:
            if not auto_normalize:
                raise StateError(f"coefficients are not normalized: sum |c|^2 = {norm2!r}")
            c = c / math.sqrt(norm2)
        first = c[np.nonzero(c)[0][0]]
        c = c * (abs(first) / first)
        self.terms = tuple(Term(complex(cj), p) for cj, p in zip(c, particles))
        self.n_particles = n

    def __len__(self):
        return len(self.terms)

    def __eq__(self, other):
        return isinstance(other, SuperpositionState) and self.terms == other.terms

    def __repr__(self):
        return f"SuperpositionState(n_terms={len(self.terms)}, n_particles={self.n_particles})"

    @cached_property
    def packed(self):
        T, N = len(self.terms), self.n_particles
        K = np.empty((T, N))
        a0 = np.empty((T, N))
        a1 = np.empty((T, N), dtype=complex)
        for j, term in enumerate(self.terms):
            for g, s in enumerate(term.particles):
                K[j, g] = s.K
                a0[j, g] = s.even_weight
                a1[j, g] = s.odd_weight
        coef = np.array([term.coeff for term in self.terms], dtype=complex)
        return PackedState(coef, K.sum(axis=1), K, a0, a1)

    @classmethod
    def eigenstate(cls, spec):
        return cls([(1.0, (spec,))])


class WindowedState:
    """``state`` multiplied by ``exp(-(|y_r| - L)^(2 m))`` wherever ``|y_r| > L``.

    The window is real and positive, so the velocity field inside ``|y_r| < L``
    is untouched and the product is square-integrable.
    """

    def __init__(self, state, L, m_exp=1):
        if not L > 0:
            raise StateError("window half-width L must be positive")
        if int(m_exp) != m_exp or m_exp < 1:
            raise StateError("window exponent must be a positive integer")
        self.state = state
        self.L = float(L)
        self.m_exp = int(m_exp)
        self.n_particles = state.n_particles

    @cached_property
    def packed(self):
        return self.state.packed._replace(window_L=self.L, window_m=self.m_exp)


def build_windowed_state(state, L, m_exp=1):
    return WindowedState(state, L, m_exp)


@dataclass(frozen=True)
class StateValue:
    value: ComplexLog
    dvalue: tuple


def _parity_index(parity):
    if parity in (0, "even"):
        return 0
    if parity in (1, "odd"):
        return 1
    raise ValueError(f"parity must be 'even' or 'odd', got {parity!r}")


def eval_basis(K, parity, y):
    """(phi_parity^K(y), d/dy phi_parity^K(y)) as ComplexLog values."""
    p0, d0, p1, d1, lsc, ok = basis_nb(float(K), float(y), SERIES_TOL)
    if not ok:
        raise NonconvergenceError(f"basis function for K={K} did not converge at y={y}")
    if _parity_index(parity) == 0:
        return ComplexLog.from_scaled(p0, lsc), ComplexLog.from_scaled(d0, lsc)
    return ComplexLog.from_scaled(p1, lsc), ComplexLog.from_scaled(d1, lsc)


def eval_eigenstate(spec, y):
    """(psi(y), psi'(y)) for one eigenstate as ComplexLog values."""
    p0, d0, p1, d1, lsc, ok = basis_nb(spec.K, float(y), SERIES_TOL)
    if not ok:
        raise NonconvergenceError(f"basis function for K={spec.K} did not converge at y={y}")
    a0, a1 = spec.even_weight, spec.odd_weight
    return (ComplexLog.from_scaled(a0 * p0 + a1 * p1, lsc),
            ComplexLog.from_scaled(a0 * d0 + a1 * d1, lsc))


def _point(ybar, n_particles):
    y = np.atleast_1d(np.asarray(ybar, dtype=float))
    if y.shape != (n_particles,):
        raise StateError(f"expected {n_particles} coordinates, got shape {y.shape}")
    return np.ascontiguousarray(y)


def eval_state(state, ybar, t=0.0):
    """Value and gradient of a (possibly windowed) state at one configuration."""
    y = _point(ybar, state.n_particles)
    p = state.packed
    grad = np.empty(y.size, dtype=complex)
    u, lsc, ok = eval_point_nb(y, float(t), p.coef, p.ksum, p.K, p.a0, p.a1,
                               p.window_L, p.window_m, grad)
    if not ok:
        raise NonconvergenceError(f"state evaluation did not converge at {y}")
    if lsc == -math.inf:
        return StateValue(ComplexLog.zero(), tuple(ComplexLog.zero() for _ in y))
    return StateValue(ComplexLog.from_scaled(u, lsc),
                      tuple(ComplexLog.from_scaled(g, lsc) for g in grad))


def eval_state_points(state, Y, t=0.0, backend=None):
    """Vectorised evaluation at points ``Y`` (shape ``(n, N)``).

    Returns mantissas ``u`` (n,), gradients ``G`` (n, N) and log scales ``L``
    (n,) with ``psi = u e^L``.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y.reshape(-1, state.n_particles)
    u, G, L, ok = get_backend(backend).eval_points(Y, t, state.packed)
    if not np.all(ok):
        raise NonconvergenceError("state evaluation did not converge at some points")
    return u, G, L


def log_abs_sq(state, Y, t=0.0, backend=None):
    """``log |psi|^2`` at each row of ``Y`` (-inf at exact zeros)."""
    u, _, L = eval_state_points(state, Y, t, backend)
    with np.errstate(divide="ignore"):
        return 2.0 * L + np.log(np.abs(u) ** 2)


def tise_residual(spec, y, h=1e-3):
    """Relative residual of ``-psi'' + y^2 psi - K psi`` by 5-point differences."""
    if not h > 0:
        raise ValueError("h must be positive")
    y = float(y)
    vals = [eval_eigenstate(spec, y + k * h)[0] for k in (-2, -1, 0, 1, 2)]
    ref = vals[2].log_mag if not vals[2].is_zero else max(v.log_mag for v in vals)
    f = [(v / ComplexLog(ref)).to_complex() for v in vals]
    second = (-f[0] + 16.0 * f[1] - 30.0 * f[2] + 16.0 * f[3] - f[4]) / (12.0 * h * h)
    res = -second + (y * y - spec.K) * f[2]
    return abs(res) / max(abs(f[2]), 1e-300)


def asymptotic_log_magnitude(spec, y):
    """``log|psi(y)|`` from the large-|y| form truncated after the ``1/y^2`` term.

    Both basis functions behave like ``A_p exp(y^2/2) |y|^{-(1+K)/2}
    [1 + (3+K)(1+K)/(16 y^2)]``, with ``A_0 = Gamma(1/2)/Gamma((1-K)/4)`` and
    ``A_1 = sign(y) Gamma(3/2)/Gamma((3-K)/4)``.
    """
    y = float(y)
    if y == 0.0:
        raise ValueError("the asymptotic form needs y != 0")
    K = spec.K
    amp = (spec.even_weight * math.sqrt(math.pi) * _rgamma((1.0 - K) / 4.0)
           + spec.odd_weight * math.copysign(0.5 * math.sqrt(math.pi), y) * _rgamma((3.0 - K) / 4.0))
    if amp == 0:
        return -math.inf
    ay = abs(y)
    corr = 1.0 + (3.0 + K) * (1.0 + K) / (16.0 * y * y)
    return math.log(abs(amp)) + 0.5 * y * y - 0.5 * (1.0 + K) * math.log(ay) + math.log(abs(corr))


def _rgamma(z):
    # 1/Gamma, zero at the poles
    if z <= 0 and z == math.floor(z):
        return 0.0
    return 1.0 / math.gamma(z)
