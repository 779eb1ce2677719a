"""Lowering and raising operators acting on eigenstates of arbitrary K.

With ``A = d/dy + y`` and ``A+ = -d/dy + y`` the basis actions are

    A phi0^K = (1 - K) phi1^{K-2}      A phi1^K = phi0^{K-2}
    A+ phi0^K = (1 + K) phi1^{K+2}     A+ phi1^K = -phi0^{K+2}

so an eigenstate maps to a single eigenstate two units down or up, times a
complex scale.  The usual ladder operators are ``A / sqrt(2)`` and
``A+ / sqrt(2)``; ``normalized=True`` returns scales for those.
"""
import math
from dataclasses import dataclass

from .specfun import ComplexLog
from .states import EigenstateSpec, eval_basis, eval_eigenstate

ANNIHILATION_TOL = 1e-12
_SQRT2 = math.sqrt(2.0)


class _Annihilated:
    def __repr__(self):
        return "Annihilated"

    def __bool__(self):
        return False


Annihilated = _Annihilated()


@dataclass(frozen=True)
class LadderResult:
    """``op psi = scale * psi[out_spec]``; ``out_spec`` is ``Annihilated`` for zero."""

    out_spec: object
    scale: complex

    @property
    def annihilated(self):
        return self.out_spec is Annihilated

    @property
    def magnitude(self):
        return abs(self.scale)


def _is_real_basis(spec):
    # theta in {0, pi}: no odd component
    return min(spec.theta, math.pi - spec.theta) <= ANNIHILATION_TOL


def apply_lowering(spec, normalized=False):
    """``A psi^K_{theta, phi} = e^{i phi} R psi^{K-2}_{theta', 2 pi - phi}``,
    ``R = sqrt(cos^2(theta) (1 - K)^2 + sin^2(theta))``."""
    if _is_real_basis(spec) and abs(spec.K - 1.0) <= ANNIHILATION_TOL:
        return LadderResult(Annihilated, 0j)
    even = math.sin(spec.theta)
    odd = math.cos(spec.theta) * (1.0 - spec.K)
    R = math.hypot(even, odd)
    out = EigenstateSpec(spec.K - 2.0, math.atan2(odd, even), 2.0 * math.pi - spec.phi)
    scale = R * complex(math.cos(spec.phi), math.sin(spec.phi))
    return LadderResult(out, scale / _SQRT2 if normalized else scale)


def apply_raising(spec, normalized=False):
    """``A+ psi^K_{theta, phi} = -e^{i phi} R psi^{K+2}_{theta', pi - phi}``,
    ``R = sqrt(cos^2(theta) (1 + K)^2 + sin^2(theta))``."""
    if _is_real_basis(spec) and abs(spec.K + 1.0) <= ANNIHILATION_TOL:
        return LadderResult(Annihilated, 0j)
    even = math.sin(spec.theta)
    odd = math.cos(spec.theta) * (1.0 + spec.K)
    R = math.hypot(even, odd)
    out = EigenstateSpec(spec.K + 2.0, math.atan2(odd, even), math.pi - spec.phi)
    scale = -R * complex(math.cos(spec.phi), math.sin(spec.phi))
    return LadderResult(out, scale / _SQRT2 if normalized else scale)


def apply_operator(spec, op, y, normalized=False):
    """Direct ``(+-d/dy + y) psi`` at ``y`` from analytic derivatives, as ComplexLog."""
    value, deriv = eval_eigenstate(spec, y)
    out = _combine(op, value, deriv, y)
    return out * ComplexLog(-0.5 * math.log(2.0)) if normalized else out


def _combine(op, value, deriv, y):
    if op == "lower":
        return deriv + value * y
    if op == "raise":
        return value * y - deriv
    raise ValueError(f"op must be 'lower' or 'raise', got {op!r}")


def evaluate_result(result, y):
    """``scale * psi[out_spec](y)`` as ComplexLog (zero when annihilated)."""
    if result.annihilated:
        return ComplexLog.zero()
    return eval_eigenstate(result.out_spec, y)[0] * result.scale


def verify_basis_action(K, parity, op, y_samples):
    """Max relative deviation between ``op phi`` and the closed-form image.

    When the image vanishes identically (K = 1 even lowered, K = -1 even
    raised), the maximum absolute value of ``op phi`` is returned instead.
    """
    parity = {0: "even", 1: "odd"}.get(parity, parity)
    if op == "lower":
        target_K = K - 2.0
        coeff, target = ((1.0 - K), "odd") if parity == "even" else (1.0, "even")
    elif op == "raise":
        target_K = K + 2.0
        coeff, target = ((1.0 + K), "odd") if parity == "even" else (-1.0, "even")
    else:
        raise ValueError(f"op must be 'lower' or 'raise', got {op!r}")
    y_samples = list(y_samples)
    if not y_samples:
        raise ValueError("y_samples must be non-empty")
    worst = 0.0
    for y in y_samples:
        value, deriv = eval_basis(K, parity, y)
        left = _combine(op, value, deriv, y)
        if coeff == 0.0:
            worst = max(worst, abs(left.to_complex()))
            continue
        right = eval_basis(target_K, target, y)[0] * coeff
        diff = left - right
        worst = max(worst, 0.0 if diff.is_zero else math.exp(diff.log_mag - right.log_mag))
    return worst
