"""Finite truncations of the configuration space with matrix forms of ``U``, ``P``, ``Q_j`` and ``O``.

Two truncations are supported.

``Window(radius)``
    Every configuration whose head and tape support lie in ``[-radius, radius]``.
    Columns whose transitions leave the window, and rows whose preimages
    could lie outside it, are inexact.

``Reach(initial, depth)``
    Configurations reachable from ``initial`` in at most ``depth`` steps.  The
    matrices describe ``U`` restricted to the reachable subspace; columns of
    the deepest layer are inexact, and so is every row on which ``U U^dag``
    differs from the identity (the reachable set does not map onto it).
    Initial configurations without reachable preimages count as exact rows.

Every basis configuration gets a *budget*: its graph distance (following
transitions forwards or backwards) to the nearest inexact configuration.
Any product of ``m`` factors of ``U`` or ``U^dag`` (interleaved with the
diagonal projections) is exact on a column whose budget is at least ``m``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph

from ..core import Configuration, StateVector, Tape, tape_from_label, tape_label, tape_write
from ..machine import MachineSpec
from . import _kernels

DEFAULT_BASIS_CAP = 200_000
DENSE_LIMIT = 4000
ROW_TOL = 1e-12


class TruncationError(ValueError):
    """The truncation cannot support the requested computation."""

    def __init__(self, message: str, required: int | None = None):
        super().__init__(message)
        self.required = required


class BasisCapError(TruncationError):
    """Enumerating the truncation would exceed the basis-size cap."""


@dataclass(frozen=True)
class Window:
    radius: int
    cap: int = DEFAULT_BASIS_CAP
    backend: str | None = None


@dataclass(frozen=True)
class Reach:
    initial: tuple[Configuration, ...]
    depth: int | None = None
    cap: int = DEFAULT_BASIS_CAP

    def __init__(self, initial: Iterable[Configuration], depth: int | None = None, cap: int = DEFAULT_BASIS_CAP):
        object.__setattr__(self, "initial", tuple(sorted(set(initial))))
        object.__setattr__(self, "depth", depth)
        object.__setattr__(self, "cap", cap)


def register_family(spec: MachineSpec, tape: Tape | None = None, head: int = 0) -> list[Configuration]:
    """All internal states with both halt bits, at ``head`` on ``tape``."""
    if tape is None:
        tape = Tape((), spec.alphabet_size, spec.blank)
    return [Configuration(q, head, tape, n0) for n0 in (0, 1) for q in range(spec.state_count)]


def _images(spec: MachineSpec, c: Configuration):
    """``U|c>`` as ``[(config, amplitude)]`` straight from the rule table; None if the key is missing."""
    branches = spec.rules.get((c.q, c.halt, c.tape[c.h]))
    if branches is None:
        return None
    return [(Configuration(b.q, c.h + b.d, tape_write(c.tape, c.h, b.tau), b.halt), b.amp) for b in branches]


@dataclass
class TruncatedModel:
    spec: MachineSpec
    mode: str
    basis: list[Configuration]
    U: sp.csr_matrix
    halt: np.ndarray
    tape_ids: np.ndarray
    tapes: list[Tape]
    col_exact: np.ndarray
    row_exact: np.ndarray
    max_steps: int = 0
    missing_keys: set = field(default_factory=set)
    graded: bool = False
    layer: np.ndarray | None = None
    initial: tuple[Configuration, ...] = ()

    @cached_property
    def index(self) -> dict[Configuration, int]:
        return {c: i for i, c in enumerate(self.basis)}

    @property
    def size(self) -> int:
        return len(self.basis)

    # -- projections, all diagonal in the computational basis

    @cached_property
    def P(self) -> sp.dia_matrix:
        return sp.diags(self.halt.astype(float)).tocsr()

    @cached_property
    def P_perp(self) -> sp.csr_matrix:
        return sp.diags(1.0 - self.halt).tocsr()

    def label_of(self, tape_id: int) -> int:
        """Tape label of the tape numbered ``tape_id`` (ids start at 1)."""
        return tape_label(self.tapes[tape_id - 1])

    def id_of(self, label: int) -> int:
        """Tape id of the tape with ``label``; 0 if that tape is not in the basis."""
        return self._id_by_tape.get(tape_from_label(label, self.spec.alphabet_size, self.spec.blank), 0)

    @cached_property
    def _id_by_tape(self) -> dict[Tape, int]:
        return {t: i for i, t in enumerate(self.tapes, start=1)}

    def Q(self, label: int) -> sp.csr_matrix:
        return sp.diags((self.tape_ids == self.id_of(label)).astype(float)).tocsr()

    @cached_property
    def output_values(self) -> np.ndarray:
        """Diagonal of the output observable: the tape id where halted, else 0.

        Any distinct nonzero eigenvalues give the same spectral projections;
        small consecutive ids keep commutator magnitudes comparable to the
        absolute tolerances used by the checks.
        """
        return np.where(self.halt == 1, self.tape_ids, 0).astype(float)

    @cached_property
    def O_hat(self) -> sp.csr_matrix:
        return sp.diags(self.output_values).tocsr()

    @cached_property
    def halted_tape_ids(self) -> np.ndarray:
        return np.unique(self.tape_ids[self.halt == 1])

    def mask(self, label: int) -> np.ndarray:
        """Diagonal of ``P Q_j`` for tape label ``label`` > 0, or of ``P_perp`` for ``label`` == 0."""
        if label == 0:
            return (self.halt == 0).astype(float)
        return ((self.halt == 1) & (self.tape_ids == self.id_of(label))).astype(float)

    # -- exactness bookkeeping

    @cached_property
    def budget(self) -> np.ndarray:
        n = self.size
        sources = np.nonzero(~(self.col_exact & self.row_exact))[0]
        if not len(sources):
            return np.full(n, n + 1, dtype=np.int64)
        pattern = (abs(self.U) + abs(self.U).T).tocsr()
        pattern.eliminate_zeros()
        pattern.data[:] = 1.0
        dist = csgraph.dijkstra(pattern, directed=False, indices=sources, min_only=True)
        dist[~np.isfinite(dist)] = n + 1
        return dist.astype(np.int64)

    def interior_columns(self, m: int = 1) -> np.ndarray:
        """Basis indices on which products of ``m`` applications of ``U``/``U^dag`` are exact."""
        return np.nonzero(self.budget >= m)[0]

    def require(self, m: int) -> np.ndarray:
        cols = self.interior_columns(m)
        if not len(cols):
            raise TruncationError(f"no configuration has budget {m}; enlarge the truncation", required=m)
        return cols

    def gram_deviation(self, cols) -> tuple[float, tuple[int, int]]:
        """``max |(U^dag U - I)[a, b]|`` over column pairs, with the worst pair (positions within ``cols``)."""
        sub = self.U[:, cols]
        G = (sub.conj().T @ sub).toarray() if len(cols) <= DENSE_LIMIT else None
        if G is None:
            G = (sub.conj().T @ sub).tocoo()
            dev = np.abs(G.data - (G.row == G.col))
            diag = np.asarray(abs(sub).power(2).sum(axis=0)).ravel()
            worst = (0.0, (0, 0))
            if dev.size:
                k = int(np.argmax(dev))
                worst = (float(dev[k]), (int(G.row[k]), int(G.col[k])))
            zero = np.nonzero(diag == 0)[0]
            if zero.size and worst[0] < 1.0:
                worst = (1.0, (int(zero[0]), int(zero[0])))
            return worst
        G -= np.eye(len(cols))
        k = int(np.argmax(np.abs(G)))
        i, j = divmod(k, len(cols))
        return float(abs(G[i, j])), (i, j)

    # -- vectors

    def vector(self, psi: StateVector) -> np.ndarray:
        v = np.zeros(self.size, dtype=complex)
        for c, a in psi.items():
            try:
                v[self.index[c]] = a
            except KeyError:
                raise TruncationError(f"configuration {c} is outside the truncation") from None
        return v

    def state(self, v: np.ndarray) -> StateVector:
        nz = np.nonzero(v)[0]
        return StateVector((self.basis[i], complex(v[i])) for i in nz)

    def budget_of(self, psi: StateVector) -> int:
        return int(min(self.budget[self.index[c]] for c in psi)) if len(psi) else int(self.budget.max(initial=0))

    # -- powers

    def power(self, k: int) -> sp.csr_matrix:
        cache = self.__dict__.setdefault("_powers", {0: sp.identity(self.size, dtype=complex, format="csr")})
        if k not in cache:
            cache[k] = (self.U @ self.power(k - 1)).tocsr()
        return cache[k]

    def adjoint_power(self, k: int) -> sp.csr_matrix:
        cache = self.__dict__.setdefault("_adjoint_powers", {})
        if k not in cache:
            cache[k] = self.power(k).conj().T.tocsr()
        return cache[k]

    def selector(self, cols) -> sp.csc_matrix:
        """The columns ``cols`` of the identity, as a sparse block."""
        cols = np.asarray(cols, dtype=np.int64)
        ones = np.ones(len(cols), dtype=complex)
        return sp.csc_matrix((ones, (cols, np.arange(len(cols)))), shape=(self.size, len(cols)))

    def dense_U(self) -> np.ndarray:
        if self.size > DENSE_LIMIT:
            raise BasisCapError(f"basis of {self.size} too large for dense matrices (limit {DENSE_LIMIT})")
        return self.U.toarray()


def _finish(spec, mode, basis, rows, cols, vals, col_exact, row_exact, **kw):
    n = len(basis)
    U = sp.csr_matrix((vals, (rows, cols)), shape=(n, n), dtype=complex)
    U.sum_duplicates()
    halt = np.fromiter((c.halt for c in basis), dtype=np.int8, count=n)
    tapes = sorted({c.tape for c in basis})
    ids = {t: i for i, t in enumerate(tapes, start=1)}
    tape_ids = np.fromiter((ids[c.tape] for c in basis), dtype=np.int64, count=n)
    return TruncatedModel(spec, mode, basis, U, halt, tape_ids, tapes, col_exact, row_exact, **kw)


def _build_window(spec: MachineSpec, w: Window, max_steps: int) -> TruncatedModel:
    W = w.radius
    if W < 0:
        raise TruncationError("window radius must be non-negative")
    if W < max_steps + 1:
        raise TruncationError(f"window radius {W} too small for {max_steps} steps; need {max_steps + 1}",
                              required=max_steps + 1)
    Q, A, P = spec.state_count, spec.alphabet_size, 2 * W + 1
    n = 2 * Q * P * A ** P
    if n > w.cap:
        raise BasisCapError(f"window of radius {W} has {n} configurations (cap {w.cap})")
    rows, cols, vals, col_exact, missing = _kernels.window_triplets(spec, W, w.backend)

    idx = np.arange(n, dtype=np.int64)
    code = idx % A ** P
    rest = idx // A ** P
    pos = rest % P
    rest //= P
    q = rest % Q
    halt = rest // Q
    tapes = {}
    basis = []
    for k in range(n):
        cd = int(code[k])
        tape = tapes.get(cd)
        if tape is None:
            cells, x = [], cd
            for cell in range(P):
                x, digit = divmod(x, A)
                if digit:
                    cells.append((cell - W, (digit + spec.blank) % A))
            tape = tapes[cd] = Tape(tuple(cells), A, spec.blank)
        basis.append(Configuration(int(q[k]), int(pos[k]) - W, tape, int(halt[k])))
    # preimages of a row sit one cell away, on a tape differing only there
    row_exact = np.abs(pos - W) <= W - 1
    missing_keys = {(basis[i].q, basis[i].halt, basis[i].tape[basis[i].h]) for i in np.nonzero(missing)[0]}
    return _finish(spec, "window", basis, rows, cols, vals, col_exact, row_exact,
                   max_steps=max_steps, missing_keys=missing_keys)


def _build_reach(spec: MachineSpec, r: Reach, max_steps: int) -> TruncatedModel:
    if not r.initial:
        raise TruncationError("reachable truncation needs at least one initial configuration")
    depth = r.depth if r.depth is not None else max_steps + 1
    if depth < max_steps + 1:
        raise TruncationError(f"depth {depth} too small for {max_steps} steps; need {max_steps + 1}",
                              required=max_steps + 1)
    index: dict[Configuration, int] = {}
    basis: list[Configuration] = []
    layer: list[int] = []
    for c in r.initial:
        if c.tape.symbols != spec.alphabet_size:
            raise TruncationError(f"initial configuration {c} uses a different alphabet")
        index[c] = len(basis)
        basis.append(c)
        layer.append(0)
    columns: dict[int, list] = {}
    missing_keys = set()
    frontier = list(range(len(basis)))
    for t in range(depth):
        nxt = []
        for i in frontier:
            imgs = _images(spec, basis[i])
            if imgs is None:
                c = basis[i]
                missing_keys.add((c.q, c.halt, c.tape[c.h]))
                imgs = []
            columns[i] = imgs
            for c, _ in imgs:
                if c not in index:
                    if len(basis) >= r.cap:
                        raise BasisCapError(f"reachable set exceeds the cap of {r.cap} configurations")
                    index[c] = len(basis)
                    basis.append(c)
                    layer.append(t + 1)
                    nxt.append(index[c])
        frontier = nxt

    n = len(basis)
    col_exact = np.zeros(n, dtype=bool)
    rows, cols, vals = [], [], []
    for i in range(n):
        imgs = columns.get(i)
        if imgs is None:
            imgs = _images(spec, basis[i]) or []
        inside = True
        for c, a in imgs:
            j = index.get(c)
            if j is None:
                inside = False
                continue
            rows.append(j), cols.append(i), vals.append(a)
        col_exact[i] = inside and i in columns

    heads = {c.h for c in r.initial}
    graded = len(spec.directions) == 1 and len(heads) == 1
    # A row is exact when U U^dagger is the identity on it: the enumerated columns
    # then map onto that configuration, so the adjoint loses nothing there.
    R, C = np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64)
    U = sp.csr_matrix((np.array(vals, dtype=complex), (R, C)), shape=(n, n))
    D = (U @ U.conj().T - sp.identity(n, format="csr")).tocsr()
    D.data = np.abs(D.data)
    row_exact = np.asarray(D.max(axis=1).todense()).ravel() <= ROW_TOL
    # Initial configurations nothing maps to: the adjoint there is zero on the reachable
    # subspace, and sandwiches U^dag^k X U^k never step below their starting layer.
    row_exact |= (np.asarray(layer) == 0) & (np.diff(U.indptr) == 0)
    return _finish(spec, "reach", basis, R, C, np.array(vals, dtype=complex), col_exact, row_exact, max_steps=max_steps,
                   missing_keys=missing_keys, graded=graded, layer=np.array(layer), initial=r.initial)


def build_truncated(spec: MachineSpec, truncation, max_steps: int = 0) -> TruncatedModel:
    """Enumerate a finite basis and fill ``U`` column by column from the rule table.

    ``truncation`` is a :class:`Window`, a :class:`Reach`, or an integer window radius.
    """
    if isinstance(truncation, int):
        truncation = Window(truncation)
    if isinstance(truncation, Window):
        return _build_window(spec, truncation, max_steps)
    if isinstance(truncation, Reach):
        return _build_reach(spec, truncation, max_steps)
    raise TypeError(f"unsupported truncation {truncation!r}")
