import math

import numpy as np
import pytest

from qtmhalt.core import Configuration, StateVector, Tape
from qtmhalt.machine import RIGHT, Branch, MachineSpec
from qtmhalt.machines import load_bundled

S = 1 / math.sqrt(2)


@pytest.fixture(scope="session")
def two_phase():
    return load_bundled("two_phase")


@pytest.fixture(scope="session")
def permutation():
    return load_bundled("permutation")


@pytest.fixture(scope="session")
def violator():
    return load_bundled("halt_violator")


def blank_start(spec, tape=None, q=None, halt=0):
    tape = Tape((), spec.alphabet_size) if tape is None else tape
    q = spec.initial_state if q is None else q
    return StateVector.basis(Configuration(q, 0, tape, halt))


def flip_machine():
    """One state, never halts: flips the symbol under the head and moves right.

    Its transition operator is unitary on the whole configuration space.
    """
    rules = {}
    for s in (0, 1):
        rules[(0, 0, s)] = (Branch(1 - s, 0, 0, RIGHT, 1.0),)
        rules[(0, 1, s)] = (Branch(s, 1, 0, RIGHT, 1.0),)
    return MachineSpec(2, 1, 0, rules)


def identity_halted_machine(alphabet=2):
    """One state; halted configurations keep everything and walk right."""
    rules = {}
    for s in range(alphabet):
        rules[(0, 0, s)] = (Branch(s, 1, 0, RIGHT, 1.0),)
        rules[(0, 1, s)] = (Branch(s, 1, 0, RIGHT, 1.0),)
    return MachineSpec(alphabet, 1, 0, rules)


def superposing_violator():
    """Isometric, but a Hadamard mixes the working and halted keys, so halted mass leaks back."""
    rules = {}
    for q in range(2):
        rules[(q, 0, 0)] = (Branch(0, 1, q, RIGHT, S), Branch(1, 0, q, RIGHT, S))
        rules[(q, 1, 0)] = (Branch(0, 1, q, RIGHT, S), Branch(1, 0, q, RIGHT, -S))
        rules[(q, 0, 1)] = (Branch(1, 0, q, RIGHT, 1.0),)
        rules[(q, 1, 1)] = (Branch(1, 1, q, RIGHT, 1.0),)
    return MachineSpec(2, 2, 0, rules)


def non_orthogonal_machine():
    """Two keys whose images overlap: U^dag U != I."""
    rules = {
        (0, 0, 0): (Branch(0, 0, 0, RIGHT, S), Branch(1, 0, 0, RIGHT, S)),
        (0, 0, 1): (Branch(0, 0, 0, RIGHT, 1.0),),
        (0, 1, 0): (Branch(0, 1, 0, RIGHT, 1.0),),
        (0, 1, 1): (Branch(1, 1, 0, RIGHT, 1.0),),
    }
    return MachineSpec(2, 1, 0, rules)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(12345))
