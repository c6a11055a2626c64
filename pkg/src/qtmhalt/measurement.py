"""Projective measurements of the halt flag and tape, and the halt-flag monitoring protocol.

Only two observables are ever measured: the halt flag (projections ``P``,
``P_perp``) and the tape string (projections ``Q_j``).  There is deliberately
no entry point for measuring anything else.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .core import StateVector, norm_sq
from .evolution import evolve, project_halt, step, tape_components
from .machine import MachineSpec

NORM_TOL = 1e-10


def make_rng(seed: int | None) -> np.random.Generator:
    """Counter-based (Philox) generator used by every sampling routine."""
    return np.random.Generator(np.random.Philox(seed))


def _require_normalized(psi: StateVector) -> float:
    n = norm_sq(psi)
    if n == 0.0:
        raise ValueError("cannot measure the zero vector")
    if abs(n - 1.0) > NORM_TOL:
        raise ValueError(f"state is not normalized (norm^2 = {n!r})")
    return n


def measure_halt(psi: StateVector, rng: np.random.Generator) -> tuple[int, StateVector]:
    """Measure the halt flag with the projection postulate.

    Returns the outcome and the renormalized post-measurement state.
    """
    _require_normalized(psi)
    halted = project_halt(psi, 1)
    p1 = norm_sq(halted)
    if rng.random() < p1:
        return 1, halted.normalized()
    return 0, project_halt(psi, 0).normalized()


def measure_tape(psi: StateVector, rng: np.random.Generator) -> tuple[int, StateVector]:
    """Measure the tape string; the outcome is the tape label."""
    _require_normalized(psi)
    parts = tape_components(psi)
    u = rng.random()
    acc = 0.0
    label = None
    for label, part in parts.items():
        acc += norm_sq(part)
        if u < acc:
            break
    return label, parts[label].normalized()


@dataclass
class OutcomeRecord:
    halted_at: int | None
    output_label: int | None
    final_state: StateVector

    def __post_init__(self):
        if (self.halted_at is None) != (self.output_label is None):
            raise ValueError("an output label is recorded exactly when the machine halted")


def run_monitored(spec: MachineSpec, psi0: StateVector, horizon: int, rng: np.random.Generator,
                  measure_at_zero: bool = True) -> OutcomeRecord:
    """One run of the halt scheme.

    The halt flag is measured after every step (and, by default, once before
    the first step).  On the first outcome 1 the tape is measured and its
    label is the output.
    """
    _require_normalized(psi0)
    phi = psi0
    for k in range(horizon + 1):
        if k:
            phi = step(spec, phi)
        elif not measure_at_zero:
            continue
        bit, phi = measure_halt(phi, rng)
        if bit:
            label, phi = measure_tape(phi, rng)
            return OutcomeRecord(k, label, phi)
    return OutcomeRecord(None, None, phi)


@dataclass
class Distribution:
    """Output probabilities keyed by tape label, plus the mass that has not halted."""

    entries: dict[int, float]
    residual: float
    by_step: dict[int, float] | None = None

    @property
    def total(self) -> float:
        return math.fsum(self.entries.values()) + self.residual

    def is_consistent(self, tol: float = 1e-10) -> bool:
        probs = list(self.entries.values()) + [self.residual]
        return all(-tol <= p <= 1 + tol for p in probs) and abs(self.total - 1.0) <= tol


def monitored_terms(spec: MachineSpec, psi0: StateVector, horizon: int, measure_at_zero: bool = True):
    """Yield ``(K, {label: ||P Q_j (U P_perp)^K psi||^2}, phi)`` for ``K = 0..horizon``.

    ``phi`` is the unnormalized non-halted remainder ``P_perp (U P_perp)^K psi``
    after the measurement at time ``K``.
    """
    phi = psi0
    for k in range(horizon + 1):
        if k:
            phi = step(spec, phi)
        elif not measure_at_zero:
            yield 0, {}, phi
            continue
        terms = {j: norm_sq(part) for j, part in tape_components(project_halt(phi, 1)).items()}
        phi = project_halt(phi, 0)
        yield k, terms, phi


def monitored_distribution(spec: MachineSpec, psi0: StateVector, horizon: int,
                           measure_at_zero: bool = True) -> Distribution:
    """Exact output distribution of the halt scheme up to ``horizon`` steps."""
    entries: dict[int, float] = {}
    by_step: dict[int, float] = {}
    phi = psi0
    for k, terms, phi in monitored_terms(spec, psi0, horizon, measure_at_zero):
        for j, p in terms.items():
            entries[j] = entries.get(j, 0.0) + p
        if terms:
            by_step[k] = math.fsum(terms.values())
    return Distribution(dict(sorted(entries.items())), norm_sq(phi), by_step)


def unmonitored_distribution(spec: MachineSpec, psi0: StateVector, horizon: int) -> Distribution:
    """Output distribution of a single halt-flag and tape measurement after ``horizon`` steps."""
    return distribution_of(evolve(spec, psi0, horizon))


def sweep_horizons(spec: MachineSpec, psi0: StateVector, horizon: int, measure_at_zero: bool = True):
    """Yield ``(N, monitored, unmonitored)`` for ``N = 0..horizon`` from one pass over the steps.

    Gives the same numbers as calling :func:`monitored_distribution` and
    :func:`unmonitored_distribution` once per ``N``.
    """
    entries: dict[int, float] = {}
    by_step: dict[int, float] = {}
    free = psi0
    for n, terms, phi in monitored_terms(spec, psi0, horizon, measure_at_zero):
        if n:
            free = step(spec, free)
        for j, p in terms.items():
            entries[j] = entries.get(j, 0.0) + p
        if terms:
            by_step[n] = math.fsum(terms.values())
        mon = Distribution(dict(sorted(entries.items())), norm_sq(phi), dict(by_step))
        yield n, mon, distribution_of(free)


def distribution_of(phi: StateVector) -> Distribution:
    """``{label: ||P Q_j phi||^2}`` with residual ``||P_perp phi||^2``."""
    entries = {j: norm_sq(part) for j, part in tape_components(project_halt(phi, 1)).items()}
    return Distribution(entries, norm_sq(project_halt(phi, 0)))


@dataclass
class ComparisonReport:
    rows: list[tuple[object, float, float, float]]
    tol: float
    max_diff: float = 0.0
    worst: object = None

    @property
    def passed(self) -> bool:
        return self.max_diff <= self.tol


def compare_distributions(a: Distribution, b: Distribution, tol: float) -> ComparisonReport:
    """Row-wise comparison over the union of labels, with the residual as a final row."""
    rows = []
    for j in sorted(set(a.entries) | set(b.entries)):
        pa, pb = a.entries.get(j, 0.0), b.entries.get(j, 0.0)
        rows.append((j, pa, pb, abs(pa - pb)))
    rows.append(("residual", a.residual, b.residual, abs(a.residual - b.residual)))
    report = ComparisonReport(rows, tol)
    for key, _, _, diff in rows:
        if diff > report.max_diff:
            report.max_diff, report.worst = diff, key
    return report


@dataclass
class SampleReport:
    seed: int | None
    runs: int
    horizon: int
    label_counts: dict[int, int] = field(default_factory=dict)
    step_counts: dict[int, int] = field(default_factory=dict)
    not_halted: int = 0
    expected: Distribution | None = None
    chi2: float = 0.0
    dof: int = 0
    p_value: float = 1.0


def chi_squared(observed: dict, expected: dict, runs: int) -> tuple[float, int, float]:
    """Pearson statistic of counts against probabilities; categories with zero expectation must be empty."""
    if runs == 0:
        return 0.0, 0, 1.0
    stat, k = 0.0, 0
    for key in set(observed) | set(expected):
        e = expected.get(key, 0.0) * runs
        o = observed.get(key, 0)
        if e <= 1e-12 * runs:
            if o:
                return math.inf, max(k - 1, 0), 0.0
            continue
        stat += (o - e) ** 2 / e
        k += 1
    dof = max(k - 1, 0)
    p = float(stats.chi2.sf(stat, dof)) if dof else 1.0
    return stat, dof, p


def sample_monitored(spec: MachineSpec, psi0: StateVector, horizon: int, runs: int, seed: int | None,
                     measure_at_zero: bool = True) -> SampleReport:
    """Repeat :func:`run_monitored` and test the output frequencies against the exact distribution."""
    rng = make_rng(seed)
    labels, steps_ = Counter(), Counter()
    not_halted = 0
    for _ in range(runs):
        rec = run_monitored(spec, psi0, horizon, rng, measure_at_zero)
        if rec.halted_at is None:
            not_halted += 1
        else:
            labels[rec.output_label] += 1
            steps_[rec.halted_at] += 1
    expected = monitored_distribution(spec, psi0, horizon, measure_at_zero)
    observed = dict(labels)
    observed["not-halted"] = not_halted
    probs = dict(expected.entries)
    probs["not-halted"] = expected.residual
    chi2, dof, p = chi_squared(observed, probs, runs)
    return SampleReport(seed, runs, horizon, dict(sorted(labels.items())), dict(sorted(steps_.items())),
                        not_halted, expected, chi2, dof, p)
