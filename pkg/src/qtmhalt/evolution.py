"""One step of the machine's unitary and the spectral projections of the halt flag and tape."""
from __future__ import annotations

from .core import DROP_TOL, Configuration, StateVector, tape_label, tape_write
from .machine import MachineSpec


def step(spec: MachineSpec, psi: StateVector) -> StateVector:
    """Apply ``U`` once.

    Each term ``a|q, h, T, n0>`` is spread over the branches of the rule for
    ``(q, n0, T(h))``; amplitudes landing on the same configuration add up.
    Terms are visited in configuration order so the summation order is
    reproducible.
    """
    acc: dict[Configuration, complex] = {}
    for c, a in psi.items():
        tape = c.tape
        for b in spec.branches(c.q, c.halt, tape[c.h]):
            target = Configuration(b.q, c.h + b.d, tape_write(tape, c.h, b.tau), b.halt)
            acc[target] = acc.get(target, 0j) + a * b.amp
    return StateVector._trusted({c: acc[c] for c in sorted(acc) if abs(acc[c]) >= DROP_TOL})


def evolve(spec: MachineSpec, psi: StateVector, n: int) -> StateVector:
    """``U^n psi``."""
    if n < 0:
        raise ValueError("step count must be non-negative")
    for _ in range(n):
        psi = step(spec, psi)
    return psi


def project_halt(psi: StateVector, bit: int) -> StateVector:
    """Keep the terms whose halt flag equals ``bit`` (``P`` for 1, ``P_perp`` for 0)."""
    if bit not in (0, 1):
        raise ValueError("halt bit must be 0 or 1")
    return psi.filter(lambda c: c.halt == bit)


def project_tape(psi: StateVector, label: int) -> StateVector:
    """Keep the terms whose tape carries ``label`` (the projection ``Q_j``)."""
    return psi.filter(lambda c: tape_label(c.tape) == label)


def tape_components(psi: StateVector) -> dict[int, StateVector]:
    """Split ``psi`` into its ``Q_j psi`` pieces, keyed by tape label."""
    parts: dict[int, dict] = {}
    for c, a in psi.items():
        parts.setdefault(tape_label(c.tape), {})[c] = a
    return {j: StateVector._trusted(parts[j]) for j in sorted(parts)}
