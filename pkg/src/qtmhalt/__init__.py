"""Quantum Turing machine simulator with a halt qubit.

Checks numerically that measuring the halt flag after every step leaves the
output distribution unchanged, for machines whose halted configurations keep
their tape.
"""
from .core import Configuration, StateVector, Tape, inner, norm_sq, tape_from_label, tape_label
from .evolution import evolve, project_halt, project_tape, step, tape_components
from .machine import (
    MachineSpec,
    ParseError,
    SemanticError,
    parse_machine,
    serialize_machine,
    validate_halt_preservation,
    validate_unitarity,
)
from .measurement import (
    Distribution,
    compare_distributions,
    measure_halt,
    measure_tape,
    monitored_distribution,
    run_monitored,
    unmonitored_distribution,
)

__version__ = "0.1.0"
