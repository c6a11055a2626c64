"""Matrix-side checks: the output observable in the Heisenberg picture, its spectral
projections, the halting lemmas and the telescoping identity.

All checks act on blocks of basis columns.  A check that multiplies ``m``
factors of ``U`` or ``U^dag`` only uses columns whose budget is at least
``m`` (see :mod:`qtmhalt.analysis.truncation`), so every number reported here
is the value of the untruncated operator identity on those columns.

Spectral projections are never formed densely::

    E_K(j) X = (U^dag)^K  PQ_j  U^K X          (j > 0)
    E_K(0) X = (U^dag)^K  P_perp U^K X
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..core import StateVector
from ..evolution import step
from ..measurement import Distribution, make_rng, monitored_distribution, monitored_terms
from .truncation import DENSE_LIMIT, BasisCapError, TruncatedModel, TruncationError

LEMMA_TOL = 1e-10


def _max_abs(m) -> float:
    if sp.issparse(m):
        return float(abs(m).max()) if m.nnz else 0.0
    return float(np.abs(m).max(initial=0.0))


def heisenberg_observable(model: TruncatedModel, n: int) -> np.ndarray:
    """Dense ``O(n) = (U^dag)^n O U^n``.

    Only the columns with budget ``>= 2 n`` carry the untruncated operator.
    """
    if model.size > DENSE_LIMIT:
        raise BasisCapError(f"basis of {model.size} too large for dense matrices (limit {DENSE_LIMIT})")
    if n == 0:
        return model.O_hat.toarray().astype(complex)
    return (model.adjoint_power(n) @ model.O_hat @ model.power(n)).toarray()


def _apply_O(model: TruncatedModel, n: int, X):
    return model.adjoint_power(n) @ (model.O_hat @ (model.power(n) @ X))


def qnd_check(model: TruncatedModel, n: int, n2: int) -> float:
    """``max |[O(n), O(n2)]|`` over the columns where the product is exact."""
    if n == n2:
        return 0.0
    X = model.selector(model.require(2 * n + 2 * n2))
    c = _apply_O(model, n, _apply_O(model, n2, X)) - _apply_O(model, n2, _apply_O(model, n, X))
    return _max_abs(c)


def spectral_blocks(model: TruncatedModel, k: int, X) -> dict[int, sp.csr_matrix]:
    """``{j: E_k(j) X}`` for every outcome with a nonzero block; ``j = 0`` is "not halted"."""
    V = sp.coo_matrix(model.power(k) @ X)
    key = np.where(model.halt[V.row] == 1, model.tape_ids[V.row], 0)
    UH = model.adjoint_power(k)
    out = {}
    for j in np.unique(key):
        sel = key == j
        block = sp.csr_matrix((V.data[sel], (V.row[sel], V.col[sel])), shape=V.shape)
        out[int(j)] = (UH @ block).tocsr()
    return out


@dataclass
class RelationReport:
    n: int
    n2: int
    columns: int
    deviations: dict[str, float] = field(default_factory=dict)

    def worst(self) -> float:
        return max(self.deviations.values(), default=0.0)


def projection_relations_check(model: TruncatedModel, n: int, n2: int) -> RelationReport:
    """Products of the spectral projections of ``O(n)`` and ``O(n2)`` for ``n >= n2``.

    ``a``: ``E_n(j) E_n2(k) = delta_jk E_n2(j)``; ``b``: ``E_n(j) E_n2(0) = E_n(j) - E_n2(j)``;
    ``c``: ``E_n(0) E_n2(j) = 0``; ``d``: ``E_n(0) E_n2(0) = E_n(0)``;
    ``spectral``: the projections of ``O(n)`` sum to the identity.
    """
    if n < n2:
        raise ValueError("relations are stated for n >= n2")
    cols = model.require(2 * n + 2 * n2)
    X = model.selector(cols)
    dev = dict.fromkeys(("a", "b", "c", "d", "spectral"), 0.0)
    inner = spectral_blocks(model, n2, X)
    outer = spectral_blocks(model, n, X)

    total = -X.tocsr()
    for block in outer.values():
        total = total + block
    dev["spectral"] = _max_abs(total)

    zero = sp.csr_matrix(X.shape, dtype=complex)
    for k, Y in inner.items():
        prod = spectral_blocks(model, n, Y)
        if k:
            for j in set(prod) | {k}:
                if j == 0:
                    continue
                expected = Y if j == k else zero
                dev["a"] = max(dev["a"], _max_abs(prod.get(j, zero) - expected))
            dev["c"] = max(dev["c"], _max_abs(prod.get(0, zero)))
        else:
            for j in (set(prod) | set(outer) | set(inner)) - {0}:
                expected = outer.get(j, zero) - inner.get(j, zero)
                dev["b"] = max(dev["b"], _max_abs(prod.get(j, zero) - expected))
            dev["d"] = max(dev["d"], _max_abs(prod.get(0, zero) - outer.get(0, zero)))
    if 0 not in inner:
        # E_n2(0) X vanishes, so E_n(j) E_n2(0) X = 0 must equal E_n(j) X - E_n2(j) X
        for j in (set(outer) | set(inner)) - {0}:
            dev["b"] = max(dev["b"], _max_abs(outer.get(j, zero) - inner.get(j, zero)))
        dev["d"] = max(dev["d"], _max_abs(outer.get(0, zero)))
    return RelationReport(n, n2, len(cols), dev)


def _id_masses(model: TruncatedModel, v: np.ndarray) -> dict[int, float]:
    """``{tape id: ||P Q_j v||^2}`` over halted tapes carrying weight."""
    w = np.abs(v) ** 2
    sel = (model.halt == 1) & (w > 0)
    out: dict[int, float] = {}
    for j, x in zip(model.tape_ids[sel], w[sel]):
        out[int(j)] = out.get(int(j), 0.0) + float(x)
    return out


def _cross_entries(model: TruncatedModel, M, cols) -> float:
    """Largest ``|M[r, c]|`` where row ``r`` is not halted on the tape of column ``cols[c]``."""
    M = sp.coo_matrix(M)
    if not M.nnz:
        return 0.0
    c = np.asarray(cols)[M.col]
    bad = (model.halt[M.row] != 1) | (model.tape_ids[M.row] != model.tape_ids[c])
    return float(np.abs(M.data[bad]).max(initial=0.0))


@dataclass
class LemmaReport:
    trials: int
    seed: int | None
    deviations: dict[str, float] = field(default_factory=dict)
    tol: float = LEMMA_TOL

    @property
    def failing(self) -> list[str]:
        return [k for k, v in self.deviations.items() if not v <= self.tol]

    @property
    def ok(self) -> bool:
        return not self.failing


def random_interior_vectors(model: TruncatedModel, m: int, trials: int, rng) -> np.ndarray:
    """``trials`` unit vectors drawn uniformly from the span of the columns with budget ``>= m``."""
    cols = model.require(m)
    V = np.zeros((model.size, trials), dtype=complex)
    z = rng.standard_normal((len(cols), trials)) + 1j * rng.standard_normal((len(cols), trials))
    z /= np.linalg.norm(z, axis=0)
    V[cols] = z
    return V


def lemma_suite(model: TruncatedModel, trials: int = 100, seed: int | None = 0, horizon: int | None = None) -> LemmaReport:
    """Check the lemmas behind the monitoring theorem.

    ``invariance``
        ``PQ_j U^K PQ_j = U^K PQ_j`` for ``K <= horizon`` (matrix identity on exact columns).
    ``no_cross_label``
        ``PQ_j U PQ_j_perp = 0``.
    ``pythagorean``
        ``||PQ_j U psi||^2 = ||PQ_j psi||^2 + ||PQ_j U P_perp psi||^2``.
    ``orthogonality``
        ``<U PQ_j psi | PQ_j U P_perp psi> = 0``.
    ``telescoping``
        ``||PQ_j U^N psi||^2 = sum_K ||PQ_j (U P_perp)^K psi||^2`` for ``N <= horizon``.

    The vector lemmas use ``trials`` random unit vectors on the interior.
    """
    horizon = model.max_steps if horizon is None else horizon
    report = LemmaReport(trials, seed)
    dev = report.deviations
    halted = np.nonzero(model.halt == 1)[0]

    dev["invariance"] = 0.0
    for k in range(horizon + 1):
        cols = np.intersect1d(halted, model.interior_columns(max(k, 1)))
        if len(cols):
            dev["invariance"] = max(dev["invariance"], _cross_entries(model, model.power(k) @ model.selector(cols), cols))
    cols = np.intersect1d(halted, model.interior_columns(1))
    M = sp.coo_matrix(model.U @ model.selector(cols))
    c = cols[M.col]
    cross = (model.halt[M.row] == 1) & (model.tape_ids[M.row] != model.tape_ids[c])
    dev["no_cross_label"] = float(np.abs(M.data[cross]).max(initial=0.0))

    rng = make_rng(seed)
    V = random_interior_vectors(model, max(horizon, 1), trials, rng)
    perp = (model.halt == 0)[:, None]
    UV = model.U @ V
    UPV = model.U @ (V * perp)
    pyth = orth = 0.0
    for t in range(trials):
        a = _id_masses(model, UV[:, t])
        b = _id_masses(model, V[:, t])
        c_ = _id_masses(model, UPV[:, t])
        for j in set(a) | set(b) | set(c_):
            pyth = max(pyth, abs(a.get(j, 0.0) - b.get(j, 0.0) - c_.get(j, 0.0)))
        # <U PQ_j psi | PQ_j U P_perp psi>, for each label j
        left = model.U @ (V[:, t] * (model.halt == 1))
        prod = np.conj(left) * UPV[:, t] * (model.halt == 1)
        sums: dict[int, complex] = {}
        for j, x in zip(model.tape_ids[prod != 0], prod[prod != 0]):
            sums[int(j)] = sums.get(int(j), 0j) + x
        orth = max([orth] + [abs(x) for x in sums.values()])
    dev["pythagorean"] = pyth
    dev["orthogonality"] = orth

    tel = 0.0
    for t in range(trials):
        v = V[:, t]
        phi = v.copy()
        acc: dict[int, float] = {}
        for n in range(horizon + 1):
            if n:
                phi = model.U @ (phi * (model.halt == 0))
            for j, x in _id_masses(model, phi).items():
                acc[j] = acc.get(j, 0.0) + x
            direct = _id_masses(model, model.power(n) @ v)
            for j in set(acc) | set(direct):
                tel = max(tel, abs(acc.get(j, 0.0) - direct.get(j, 0.0)))
    dev["telescoping"] = tel
    return report


@dataclass
class HeisenbergReport:
    differences: Distribution
    projection: Distribution
    schrodinger: Distribution
    disagreement: float
    tol: float = LEMMA_TOL

    @property
    def ok(self) -> bool:
        return self.disagreement <= self.tol


def _distance(a: Distribution, b: Distribution) -> float:
    labels = set(a.entries) | set(b.entries)
    d = max((abs(a.entries.get(j, 0.0) - b.entries.get(j, 0.0)) for j in labels), default=0.0)
    return max(d, abs(a.residual - b.residual))


def heisenberg_monitored_distribution(model: TruncatedModel, psi0: StateVector, n: int,
                                      tol: float = LEMMA_TOL) -> HeisenbergReport:
    """Monitored output distribution three ways.

    1. ``||E_0(j) psi||^2 + sum_K ||E_K(j) psi - E_{K-1}(j) psi||^2``
    2. ``||E_n(j) psi||^2``
    3. the sparse monitored computation of :mod:`qtmhalt.measurement`
    """
    v = model.vector(psi0)
    if model.budget_of(psi0) < 2 * n:
        raise TruncationError(f"initial state needs budget {2 * n}", required=2 * n)
    x = sp.csc_matrix(v.reshape(-1, 1))
    prev: dict[int, np.ndarray] = {}
    diff_sum: dict[int, float] = {}
    for k in range(n + 1):
        cur = {j: b.toarray().ravel() for j, b in spectral_blocks(model, k, x).items()}
        for j in (set(cur) | set(prev)) - {0}:
            delta = cur.get(j, 0.0) - prev.get(j, 0.0)
            if np.ndim(delta):
                diff_sum[j] = diff_sum.get(j, 0.0) + float(np.vdot(delta, delta).real)
        prev = cur
    final = {j: float(np.vdot(b, b).real) for j, b in prev.items()}
    residual = final.pop(0, 0.0)
    differences = Distribution(dict(sorted((model.label_of(j), p) for j, p in diff_sum.items() if p > 0)), residual)
    projection = Distribution(dict(sorted((model.label_of(j), p) for j, p in final.items() if p > 0)), residual)
    schrodinger = monitored_distribution(model.spec, psi0, n)
    schrodinger = Distribution({j: p for j, p in schrodinger.entries.items() if p > 0}, schrodinger.residual,
                               schrodinger.by_step)
    disagreement = max(_distance(differences, projection), _distance(projection, schrodinger),
                       _distance(differences, schrodinger))
    return HeisenbergReport(differences, projection, schrodinger, disagreement, tol)


@dataclass
class TelescopingReport:
    term_deviation: float
    identity_deviation: float
    terms: int

    def worst(self) -> float:
        return max(self.term_deviation, self.identity_deviation)


def telescoping_check(model: TruncatedModel, psi0: StateVector, n: int) -> TelescopingReport:
    """Compare every term ``||PQ_j (U P_perp)^K psi||^2`` of the sparse computation with the matrix one,
    and check that the terms add up to ``||PQ_j U^n psi||^2``."""
    if model.budget_of(psi0) < n:
        raise TruncationError(f"initial state needs budget {n}", required=n)
    v = model.vector(psi0)
    perp = model.halt == 0
    phi = v
    sums: dict[int, float] = {}
    term_dev, count = 0.0, 0
    for k, terms, _ in monitored_terms(model.spec, psi0, n):
        if k:
            phi = model.U @ (phi * perp)
        oracle = {model.label_of(j): p for j, p in _id_masses(model, phi).items()}
        for j in set(oracle) | set(terms):
            term_dev = max(term_dev, abs(oracle.get(j, 0.0) - terms.get(j, 0.0)))
            sums[j] = sums.get(j, 0.0) + oracle.get(j, 0.0)
            count += 1
    direct = {model.label_of(j): p for j, p in _id_masses(model, model.power(n) @ v).items()}
    ident = max((abs(sums.get(j, 0.0) - direct.get(j, 0.0)) for j in set(sums) | set(direct)), default=0.0)
    return TelescopingReport(term_dev, ident, count)


def evolution_agreement(model: TruncatedModel, n: int, cols=None) -> float:
    """Largest amplitude gap between ``U^k e_c`` (matrix) and the sparse ``evolve`` of ``|c>``, ``k <= n``.

    By linearity, agreement on every interior basis configuration gives
    agreement on every interior state.
    """
    if cols is None:
        cols = model.require(max(n, 1))
    worst = 0.0
    for c in cols:
        cfg = model.basis[c]
        psi = StateVector.basis(cfg)
        for k in range(n + 1):
            if k:
                psi = step(model.spec, psi)
            col = model.power(k)[:, c].toarray().ravel()
            try:
                diff = col - model.vector(psi)
            except TruncationError:
                return math.inf
            worst = max(worst, float(np.abs(diff).max(initial=0.0)))
    return worst
