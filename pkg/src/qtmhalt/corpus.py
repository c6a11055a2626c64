"""Seeded random machines and initial states for property tests and the acceptance run.

The generated machines sweep right.  On *fresh* configurations (every cell at
or right of the head is blank) each step maps the reachable configurations of
one layer unitarily onto those of the next:

* halted configurations apply a random phase permutation to the internal
  state and keep their tape;
* the internal states are split into blocks.  A working block reading blank
  is rotated by a Haar unitary onto an equal number of targets: whole blocks
  of working states (all writing one machine-wide symbol) plus halted states
  that write a non-blank symbol.  Target sets of different blocks are
  disjoint, so working states always come in whole blocks.

Starting from every internal state and both halt bits on a tape (see
:func:`closure_of`), the reachable rows therefore satisfy ``U U^dag = I`` as
well as ``U^dag U = I``, which is what the Heisenberg-picture checks need.
"""
from __future__ import annotations

import numpy as np

from .core import Configuration, StateVector, Tape
from .machine import RIGHT, Branch, MachineSpec, validate_halt_preservation, validate_unitarity


def _haar_isometry(rng, rows: int, cols: int) -> np.ndarray:
    z = rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def _unit(rng, n: int) -> np.ndarray:
    z = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return z / np.linalg.norm(z)


def _blocks(rng, Q: int) -> list[list[int]]:
    order = [int(q) for q in rng.permutation(Q)]
    cuts = sorted(int(c) for c in rng.choice(np.arange(1, Q), size=int(rng.integers(0, Q)), replace=False)) if Q > 1 else []
    return [order[i:j] for i, j in zip([0] + cuts, cuts + [Q])]


def random_sweep_machine(rng, max_states: int = 4, max_symbols: int = 3) -> MachineSpec:
    """A random halt-preserving machine, unitary layer to layer on fresh configurations."""
    Q = int(rng.integers(1, max_states + 1))
    A = int(rng.integers(2, max_symbols + 1))
    rules: dict[tuple[int, int, int], list[Branch]] = {}

    for s in range(A):
        perm = rng.permutation(Q)
        phases = np.exp(2j * np.pi * rng.random(Q))
        for p in range(Q):
            rules[(p, 1, s)] = [Branch(s, 1, int(perm[p]), RIGHT, complex(phases[p]))]

    work_symbol = int(rng.integers(0, A))
    blocks = _blocks(rng, Q)
    unused = list(range(len(blocks)))
    halting = [(t, 1, q) for t in range(1, A) for q in range(Q)]
    halting = [halting[i] for i in rng.permutation(len(halting))]
    for block in blocks:
        working: list[int] = []
        for i in [unused[k] for k in rng.permutation(len(unused))]:
            if len(working) + len(blocks[i]) <= len(block) and rng.random() < 0.6:
                working += blocks[i]
                unused.remove(i)
        targets = [(work_symbol, 0, q) for q in working]
        targets += [halting.pop() for _ in range(len(block) - len(working))]
        u = _haar_isometry(rng, len(block), len(block))
        for c, p in enumerate(block):
            rules[(p, 0, 0)] = [Branch(t, n, q, RIGHT, complex(u[i, c])) for i, (t, n, q) in enumerate(targets)]

    # keys never met on fresh configurations: any unit-norm rule
    for p in range(Q):
        for s in range(1, A):
            k = int(rng.integers(1, 3))
            amps = _unit(rng, k)
            outs = set()
            while len(outs) < k:
                outs.add((int(rng.integers(0, A)), int(rng.integers(0, 2)), int(rng.integers(0, Q))))
            rules[(p, 0, s)] = [Branch(t, n, q, RIGHT, complex(a)) for (t, n, q), a in zip(sorted(outs), amps)]
    return MachineSpec(A, Q, 0, {k: tuple(v) for k, v in rules.items()})


def fresh_configurations(spec: MachineSpec, left_cells: int = 2) -> list[Configuration]:
    """Head at 0, any state and halt bit, arbitrary symbols on cells ``-left_cells .. -1``."""
    A = spec.alphabet_size
    out = []
    for code in range(A ** left_cells):
        cells, x = [], code
        for i in range(1, left_cells + 1):
            x, s = divmod(x, A)
            if s:
                cells.append((-i, s))
        tape = Tape(tuple(cells), A, spec.blank)
        out.extend(Configuration(q, 0, tape, n0) for n0 in (0, 1) for q in range(spec.state_count))
    return out


def random_fresh_state(rng, spec: MachineSpec, max_terms: int = 4, left_cells: int = 2) -> StateVector:
    """Random unit superposition of a few fresh configurations."""
    pool = fresh_configurations(spec, left_cells)
    k = int(rng.integers(1, min(max_terms, len(pool)) + 1))
    chosen = [pool[i] for i in sorted(rng.choice(len(pool), size=k, replace=False))]
    amps = _unit(rng, k)
    return StateVector(zip(chosen, (complex(a) for a in amps)))


def closure_of(spec: MachineSpec, psi: StateVector) -> list[Configuration]:
    """Every internal state and halt bit on each (head, tape) pair in the support of ``psi``."""
    seats = sorted({(c.h, c.tape) for c in psi}, key=lambda x: (x[0], x[1].cells))
    return [Configuration(q, h, tape, n0) for h, tape in seats for n0 in (0, 1) for q in range(spec.state_count)]


def is_validated(spec: MachineSpec, depth: int = 4, tol: float = 1e-12) -> bool:
    """Halt preservation plus isometry on everything reachable from the fresh family."""
    from .analysis.truncation import Reach

    if not validate_halt_preservation(spec).ok:
        return False
    return validate_unitarity(spec, Reach(fresh_configurations(spec, 1), depth), tol).ok


def random_corpus(seed: int, count: int, max_states: int = 4, max_symbols: int = 3) -> list[MachineSpec]:
    """``count`` validated random machines from one seeded stream."""
    from .measurement import make_rng

    rng = make_rng(seed)
    out = []
    while len(out) < count:
        spec = random_sweep_machine(rng, max_states, max_symbols)
        if is_validated(spec):
            out.append(spec)
    return out
