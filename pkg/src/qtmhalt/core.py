"""Configurations, tapes and sparse state vectors.

A configuration is the classical snapshot ``(q, h, T, n0)``: internal state,
head position, tape string and halt bit.  A :class:`StateVector` is a finite
superposition of configurations with complex amplitudes.

All types are immutable values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, NamedTuple

#: Terms with ``|amplitude|`` below this are pruned after every linear operation.
DROP_TOL = 1e-15

#: Largest tape label accepted (labels are stored as int64 in the dense oracle).
LABEL_CAPACITY = 2**63 - 1


class LabelCapacityError(OverflowError):
    """The tape is too large for the integer label encoding."""


@dataclass(frozen=True, order=True)
class Tape:
    """A finite-support tape over ``symbols`` letters.

    ``cells`` holds sorted ``(index, symbol)`` pairs for every non-blank cell;
    a cell absent from ``cells`` reads as ``blank``.
    """

    cells: tuple[tuple[int, int], ...] = ()
    symbols: int = 2
    blank: int = 0
    _lookup: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        if not 0 <= self.blank < self.symbols:
            raise ValueError(f"blank {self.blank} outside alphabet of size {self.symbols}")
        cells = tuple(sorted(self.cells))
        seen = set()
        for i, s in cells:
            if not 0 <= s < self.symbols:
                raise ValueError(f"symbol {s} outside alphabet of size {self.symbols}")
            if s == self.blank:
                raise ValueError(f"cell {i} stores the blank symbol")
            if i in seen:
                raise ValueError(f"cell {i} given twice")
            seen.add(i)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "_lookup", dict(cells))

    @classmethod
    def from_mapping(cls, mapping: Mapping[int, int], symbols: int = 2, blank: int = 0) -> "Tape":
        """Build a tape from ``{index: symbol}``, dropping blank entries."""
        return cls(tuple((i, s) for i, s in mapping.items() if s != blank), symbols, blank)

    def __getitem__(self, i: int) -> int:
        return self._lookup.get(i, self.blank)

    def as_dict(self) -> dict[int, int]:
        return dict(self._lookup)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(i for i, _ in self.cells)

    def write(self, i: int, symbol: int) -> "Tape":
        return tape_write(self, i, symbol)

    def __str__(self):
        if not self.cells:
            return "<blank>"
        return ",".join(f"{i}:{s}" for i, s in self.cells)


def tape_read(tape: Tape, i: int) -> int:
    """Symbol in cell ``i``; blank outside the stored support."""
    return tape._lookup.get(i, tape.blank)


def tape_write(tape: Tape, i: int, symbol: int) -> Tape:
    """Return the tape that reads ``symbol`` at ``i`` and agrees with ``tape`` elsewhere."""
    if tape._lookup.get(i, tape.blank) == symbol:
        return tape
    if not 0 <= symbol < tape.symbols:
        raise ValueError(f"symbol {symbol} outside alphabet of size {tape.symbols}")
    cells = [(j, s) for j, s in tape.cells if j != i]
    if symbol != tape.blank:
        cells.append((i, symbol))
        cells.sort()
    return _unchecked_tape(tuple(cells), tape.symbols, tape.blank)


def _unchecked_tape(cells, symbols, blank) -> Tape:
    # cells already sorted, blank-free and in range
    t = object.__new__(Tape)
    object.__setattr__(t, "cells", cells)
    object.__setattr__(t, "symbols", symbols)
    object.__setattr__(t, "blank", blank)
    object.__setattr__(t, "_lookup", dict(cells))
    return t


def _zigzag(i: int) -> int:
    # 0, -1, 1, -2, 2, ... -> 0, 1, 2, 3, 4, ...
    return 2 * i if i >= 0 else -2 * i - 1


def tape_label(tape: Tape) -> int:
    """Positive integer identifying the tape string.

    Cells are ordered ``0, -1, 1, -2, 2, ...`` and the tape is read as a
    base-``symbols`` numeral in that order, with the blank as digit zero.
    The map is a bijection between finite-support tapes and ``1, 2, 3, ...``;
    the all-blank tape gets 1.
    """
    base = tape.symbols
    value = 0
    for i, s in tape.cells:
        value += ((s - tape.blank) % base) * base ** _zigzag(i)
    label = value + 1
    if label > LABEL_CAPACITY:
        raise LabelCapacityError(f"tape {tape} exceeds the label capacity")
    return label


def tape_from_label(label: int, symbols: int = 2, blank: int = 0) -> Tape:
    """Inverse of :func:`tape_label`."""
    if label < 1:
        raise ValueError("tape labels are positive")
    value, k, cells = label - 1, 0, []
    while value:
        value, digit = divmod(value, symbols)
        if digit:
            i = k // 2 if k % 2 == 0 else -(k + 1) // 2
            cells.append((i, (digit + blank) % symbols))
        k += 1
    return Tape(tuple(cells), symbols, blank)


class Configuration(NamedTuple):
    """Basis configuration ``|q>|h>|T>|n0>``."""

    q: int
    h: int
    tape: Tape
    halt: int = 0

    def __str__(self):
        return f"(q={self.q}, h={self.h}, T={self.tape}, n0={self.halt})"


def _check_amplitude(a: complex) -> complex:
    a = complex(a)
    if not (math.isfinite(a.real) and math.isfinite(a.imag)):
        raise ValueError(f"non-finite amplitude {a}")
    return a


class StateVector(Mapping):
    """Immutable sparse superposition ``sum_C a_C |C>``.

    Terms below :data:`DROP_TOL` in magnitude are dropped on construction.
    Iteration follows the deterministic configuration ordering.
    """

    __slots__ = ("_terms",)

    def __init__(self, terms: Mapping[Configuration, complex] | Iterable[tuple[Configuration, complex]] = ()):
        items = terms.items() if isinstance(terms, Mapping) else terms
        kept = {}
        for c, a in items:
            a = _check_amplitude(a)
            if abs(a) >= DROP_TOL:
                kept[c] = a
        self._terms = {c: kept[c] for c in sorted(kept)}

    @classmethod
    def basis(cls, config: Configuration) -> "StateVector":
        return cls({config: 1.0})

    @classmethod
    def _trusted(cls, terms: dict) -> "StateVector":
        # terms already pruned, finite and sorted
        obj = cls.__new__(cls)
        obj._terms = terms
        return obj

    def __getitem__(self, c: Configuration) -> complex:
        return self._terms[c]

    def get(self, c, default=0.0):
        return self._terms.get(c, default)

    def __iter__(self) -> Iterator[Configuration]:
        return iter(self._terms)

    def __len__(self) -> int:
        return len(self._terms)

    def __eq__(self, other):
        if isinstance(other, StateVector):
            return self._terms == other._terms
        return NotImplemented

    __hash__ = None

    def __add__(self, other: "StateVector") -> "StateVector":
        acc = dict(self._terms)
        for c, a in other._terms.items():
            acc[c] = acc.get(c, 0.0) + a
        return StateVector(acc)

    def __sub__(self, other: "StateVector") -> "StateVector":
        return self + other.scale(-1.0)

    def scale(self, factor: complex) -> "StateVector":
        return StateVector({c: a * factor for c, a in self._terms.items()})

    def normalized(self) -> "StateVector":
        n = math.sqrt(norm_sq(self))
        if n == 0.0:
            raise ZeroDivisionError("cannot normalize the zero vector")
        return self.scale(1.0 / n)

    def filter(self, predicate) -> "StateVector":
        """Keep the terms whose configuration satisfies ``predicate``."""
        return StateVector._trusted({c: a for c, a in self._terms.items() if predicate(c)})

    def __repr__(self):
        body = ", ".join(f"{a:.6g}*{c}" for c, a in self._terms.items())
        return f"StateVector({body})"


def inner(psi: StateVector, phi: StateVector) -> complex:
    """``<psi|phi>``, antilinear in the first argument."""
    if len(psi) > len(phi):
        return sum((a.conjugate() * psi._terms[c] for c, a in phi._terms.items() if c in psi._terms), 0j).conjugate()
    return sum((a.conjugate() * phi._terms[c] for c, a in psi._terms.items() if c in phi._terms), 0j)


def norm_sq(psi: StateVector) -> float:
    return math.fsum(a.real * a.real + a.imag * a.imag for a in psi._terms.values())


def random_state(rng, configs: Iterable[Configuration]) -> StateVector:
    """Uniformly random unit vector on the span of ``configs``.

    ``rng`` is a :class:`numpy.random.Generator`.
    """
    configs = sorted(set(configs))
    z = rng.standard_normal(len(configs)) + 1j * rng.standard_normal(len(configs))
    z /= math.sqrt(float((abs(z) ** 2).sum()))
    return StateVector(zip(configs, (complex(x) for x in z)))
