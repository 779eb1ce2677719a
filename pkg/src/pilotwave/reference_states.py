"""Reference states used throughout the docs, tests and verification suites."""
import cmath
import math

from .states import EigenstateSpec, SuperpositionState

pi = math.pi


def single_eigenstate_spec():
    return EigenstateSpec(14.0, 16 * pi / 5, 3 * pi / 2)


def single_eigenstate():
    return SuperpositionState.eigenstate(single_eigenstate_spec())


def three_term_state():
    """Single-particle superposition of three non-normalizable eigenstates."""
    return SuperpositionState([
        (1 / math.sqrt(6), [EigenstateSpec(15.2, pi / 3, pi / 4)]),
        (math.sqrt(2 / 3) * cmath.exp(1j * pi / 5), [EigenstateSpec(5.8, pi / 2, pi)]),
        (cmath.exp(1j * pi / 8) / math.sqrt(6), [EigenstateSpec(10.2, pi / 7, pi / 5)]),
    ])


def two_particle_state():
    """Two-particle superposition of four product eigenstates."""
    E = EigenstateSpec
    return SuperpositionState([
        (math.sqrt(2) / 3, [E(1.4, 3 * pi / 4, 4 * pi / 3), E(8.0, 2.2 * pi, 4.1 * pi)]),
        (math.sqrt(2) / 3 * cmath.exp(1j * pi / 5),
         [E(5.0, 8 * pi / 5, 5.8 * pi), E(15.6, 2 * pi / 5, 9 * pi / 16)]),
        (cmath.exp(1j * pi / 8) / 3, [E(9.0, pi / 5, pi / 7), E(0.75, pi / 6, pi / 9)]),
        (2 / 3 * cmath.exp(1j * pi / 9), [E(11.4, 5 * pi / 3, 6 * pi / 7), E(12.6, 2 * pi / 5, 7 * pi / 16)]),
    ])
