"""Property suites run by ``pilotwave verify``.

Each suite draws its parameters from a seeded generator, evaluates one
deviation per case and compares it with a fixed tolerance.
"""
import math
from dataclasses import dataclass

import numpy as np

from . import reference_states as refs
from .dynamics import eigenstate_current_constant, region_max_speed, velocity_decay_profile, wronskian
from .ladder import (apply_lowering, apply_operator, apply_raising, evaluate_result,
                     verify_basis_action)
from .specfun import kummer_m_asymptotic, kummer_m_series
from .states import (EigenstateSpec, SuperpositionState, asymptotic_log_magnitude,
                     eval_eigenstate, tise_residual)

DEFAULT_SEED = 12345
SUITES = ("current", "tise", "ladder", "asymptotic", "bound")


@dataclass
class Case:
    name: str
    deviation: float
    tolerance: float
    passed: bool
    note: str = ""


def _random_specs(rng, n, K_range=(-5.0, 16.0)):
    return [EigenstateSpec(rng.uniform(*K_range), rng.uniform(0.0, math.pi),
                           rng.uniform(0.0, 2.0 * math.pi)) for _ in range(n)]


def _label(spec):
    return f"K={spec.K:.4g} theta={spec.theta:.4g} phi={spec.phi:.4g}"


def current_flatness(spec, ys):
    """max |j(y) - 2i cos sin sin| / |2 cos sin sin| over ``ys``."""
    state = SuperpositionState.eigenstate(spec)
    c = eigenstate_current_constant(spec)
    dev = max(abs(wronskian(state, y) - c) for y in ys)
    return dev / abs(c) if c != 0 else dev


def suite_current(seed=DEFAULT_SEED, tol=1e-9):
    rng = np.random.default_rng(seed)
    ys = np.linspace(-3.0, 3.0, 25)
    specs = [refs.single_eigenstate_spec()] + _random_specs(rng, 10)
    cases = []
    for spec in specs:
        dev = current_flatness(spec, ys)
        cases.append(Case(f"current {_label(spec)}", dev, tol, dev <= tol))
    return cases


def suite_tise(seed=DEFAULT_SEED, tol=1e-5):
    rng = np.random.default_rng(seed)
    ys = np.linspace(-3.0, 3.0, 61)
    cases = []
    for spec in _random_specs(rng, 20):
        dev = max(tise_residual(spec, y) for y in ys)
        cases.append(Case(f"tise {_label(spec)}", dev, tol, dev < tol))
    return cases


def suite_ladder(seed=DEFAULT_SEED, tol=1e-8, zero_tol=1e-12):
    ys = (0.5, 1.5, 2.5)
    cases = []
    for K in (-3.5, 1.0, 5.8, 14.0):
        for parity in ("even", "odd"):
            for op in ("lower", "raise"):
                dev = verify_basis_action(K, parity, op, ys)
                vanishes = (op == "lower" and parity == "even" and K == 1.0)
                t = zero_tol if vanishes else tol
                cases.append(Case(f"{op} {parity} K={K}", dev, t, dev <= t,
                                  "annihilated" if vanishes else ""))
    # whole eigenstates: rotated closed form against direct differentiation
    rng = np.random.default_rng(seed)
    for spec in _random_specs(rng, 6):
        for op, fn in (("lower", apply_lowering), ("raise", apply_raising)):
            res = fn(spec)
            dev = 0.0
            for y in ys:
                direct = apply_operator(spec, op, y)
                diff = direct - evaluate_result(res, y)
                if not diff.is_zero:
                    dev = max(dev, math.exp(diff.log_mag - direct.log_mag))
            cases.append(Case(f"{op} {_label(spec)}", dev, tol, dev <= tol))
    for K, op, fn in ((1.0, "lower", apply_lowering), (-1.0, "raise", apply_raising)):
        res = fn(EigenstateSpec(K, 0.0, 0.0))
        cases.append(Case(f"{op} ground K={K}", 0.0 if res.annihilated else 1.0, zero_tol,
                          res.annihilated, "annihilated"))
    return cases


def asymptotic_deviations(K, ys, theta=0.7, phi=1.1):
    spec = EigenstateSpec(K, theta, phi)
    return [abs(eval_eigenstate(spec, y)[0].log_mag - asymptotic_log_magnitude(spec, y)) for y in ys]


def suite_asymptotic(seed=DEFAULT_SEED):
    """Truncated large-|y| forms must agree better as |y| grows."""
    cases = []
    for K in (5.8, 14.0):
        for sign in (1.0, -1.0):
            ys = [sign * y for y in (8.0, 10.0, 12.0)]
            devs = asymptotic_deviations(K, ys)
            ok = all(b < a for a, b in zip(devs, devs[1:]))
            cases.append(Case(f"eigenstate K={K} y={ys}", devs[-1], devs[0], ok,
                              "deviations " + ", ".join(f"{d:.3g}" for d in devs)))
        for d_, c_ in ((0.5, (1 - K) / 4), (1.5, (3 - K) / 4)):
            devs = []
            for x in (64.0, 100.0, 144.0):
                ref = kummer_m_series(c_, d_, x)
                diff = kummer_m_asymptotic(c_, d_, x, n_terms=2) - ref
                devs.append(math.exp(diff.log_mag - ref.log_mag))
            ok = all(b < a for a, b in zip(devs, devs[1:]))
            cases.append(Case(f"M({c_:.3g}, {d_}, x) x=64,100,144", devs[-1], devs[0], ok,
                              "deviations " + ", ".join(f"{d:.3g}" for d in devs)))
    return cases


def yv_spread(state, ys=(10.0, 12.0, 14.0)):
    """Relative spread of y*v over ``ys``: (max - min) / max |.|."""
    prof = [velocity_decay_profile(state, 0, (y, y), 2)[0].y_v for y in ys]
    a = np.abs(prof)
    return float((np.max(prof) - np.min(prof)) / np.max(a)), prof


def suite_bound(seed=DEFAULT_SEED, tol=0.2):
    cases = []
    others = np.linspace(-3.0, 3.0, 7)
    for name, state in (("single", refs.single_eigenstate()), ("three-term", refs.three_term_state()),
                        ("two-particle", refs.two_particle_state())):
        for axis in range(state.n_particles):
            near = region_max_speed(state, axis, 2.0, 5.0, others=others)
            far = region_max_speed(state, axis, 10.0, 15.0, others=others)
            cases.append(Case(f"{name} axis {axis} far/near max speed", far / near, 1.0,
                              far < near, f"near {near:.4g}, far {far:.4g}"))
    spread, prof = yv_spread(refs.three_term_state())
    cases.append(Case("three-term y*v spread over y=10..14", spread, tol, spread <= tol,
                      "y*v " + ", ".join(f"{v:.4g}" for v in prof)))
    return cases


def run_suite(name, seed=DEFAULT_SEED):
    fn = {"current": suite_current, "tise": suite_tise, "ladder": suite_ladder,
          "asymptotic": suite_asymptotic, "bound": suite_bound}[name]
    return fn(seed=seed)
