import math

import numpy as np
import pytest

from conftest import blank_start, identity_halted_machine
from qtmhalt.core import Configuration, StateVector, Tape, tape_label
from qtmhalt.corpus import random_corpus, random_fresh_state
from qtmhalt.measurement import (
    Distribution,
    chi_squared,
    compare_distributions,
    make_rng,
    measure_halt,
    measure_tape,
    monitored_distribution,
    run_monitored,
    sample_monitored,
    sweep_horizons,
    unmonitored_distribution,
)


def cfg(q, h, cells, halt):
    return Configuration(q, h, Tape.from_mapping(cells), halt)


A = cfg(0, 0, {}, 0)
B = cfg(1, 0, {0: 1}, 1)


def test_measure_halt_probabilities():
    rng = make_rng(1)
    psi = StateVector({A: 0.8, B: 0.6})
    n = 20_000
    outcomes = [measure_halt(psi, rng)[0] for _ in range(n)]
    p = np.mean(outcomes)
    assert abs(p - 0.36) < 3 * math.sqrt(0.36 * 0.64 / n)


def test_measure_halt_post_states():
    rng = make_rng(2)
    psi = StateVector({A: 0.8, B: 0.6j})
    seen = {}
    for _ in range(50):
        bit, post = measure_halt(psi, rng)
        seen[bit] = post
    assert seen[1] == StateVector({B: 1j})
    assert seen[0] == StateVector({A: 1.0})


def test_measure_halt_certain_outcome():
    rng = make_rng(3)
    psi = StateVector({A: 1.0})
    for _ in range(100):
        assert measure_halt(psi, rng) == (0, psi)


def test_measure_rejects_bad_input():
    rng = make_rng(0)
    with pytest.raises(ValueError, match="zero"):
        measure_halt(StateVector(), rng)
    with pytest.raises(ValueError, match="zero"):
        measure_tape(StateVector(), rng)
    with pytest.raises(ValueError, match="normalized"):
        measure_halt(StateVector({A: 2.0}), rng)


def test_measure_tape():
    rng = make_rng(4)
    single = StateVector({B: 1.0})
    assert measure_tape(single, rng) == (2, single)
    s = 1 / math.sqrt(2)
    psi = StateVector({cfg(0, 0, {0: 1}, 1): s, cfg(0, 0, {1: 1}, 1): s})
    n = 100_000
    labels = [measure_tape(psi, rng)[0] for _ in range(n)]
    freq = labels.count(2) / n
    assert abs(freq - 0.5) < 3 * math.sqrt(0.25 / n)
    assert set(labels) == {2, 5}


def test_run_monitored_deterministic_halt():
    spec = identity_halted_machine()
    rng = make_rng(5)
    for _ in range(20):
        rec = run_monitored(spec, blank_start(spec), 3, rng)
        assert (rec.halted_at, rec.output_label) == (1, 1)


def test_run_monitored_horizon_zero(two_phase):
    rng = make_rng(6)
    rec = run_monitored(two_phase, blank_start(two_phase), 0, rng)
    assert rec.halted_at is None and rec.output_label is None
    halted = blank_start(two_phase, tape=Tape.from_mapping({0: 1}), halt=1)
    rec = run_monitored(two_phase, halted, 0, rng)
    assert (rec.halted_at, rec.output_label) == (0, 2)


def test_run_monitored_two_phase_frequencies(two_phase):
    rng = make_rng(7)
    n = 10_000
    steps = [run_monitored(two_phase, blank_start(two_phase), 2, rng).halted_at for _ in range(n)]
    assert set(steps) == {1, 2}
    assert abs(steps.count(1) / n - 0.5) < 3 * math.sqrt(0.25 / n)


def test_outcome_record_invariant():
    from qtmhalt.measurement import OutcomeRecord

    with pytest.raises(ValueError):
        OutcomeRecord(3, None, StateVector())


def test_monitored_identity_machine_any_horizon():
    spec = identity_halted_machine()
    t = Tape.from_mapping({-1: 1, 2: 1})
    psi = blank_start(spec, tape=t, halt=1)
    for n in range(4):
        d = monitored_distribution(spec, psi, n)
        assert d.entries == {tape_label(t): 1.0}
        assert d.residual == 0.0
        assert unmonitored_distribution(spec, psi, n).entries == {tape_label(t): 1.0}


def test_two_phase_distributions(two_phase):
    mon = monitored_distribution(two_phase, blank_start(two_phase), 2)
    unm = unmonitored_distribution(two_phase, blank_start(two_phase), 2)
    for d in (mon, unm):
        assert sorted(d.entries) == [2, 5]
        np.testing.assert_allclose([d.entries[2], d.entries[5]], [0.5, 0.5], atol=1e-15)
        assert d.residual == 0.0
        assert d.is_consistent()
    assert mon.by_step == pytest.approx({1: 0.5, 2: 0.5})
    assert compare_distributions(mon, unm, 1e-10).passed


def test_unmonitored_horizon_zero(two_phase):
    d = unmonitored_distribution(two_phase, blank_start(two_phase), 0)
    assert d.entries == {} and d.residual == 1.0


def test_measuring_at_zero_is_optional(two_phase):
    psi = blank_start(two_phase, tape=Tape.from_mapping({0: 1}), halt=1)
    with_zero = monitored_distribution(two_phase, psi, 2)
    without = monitored_distribution(two_phase, psi, 2, measure_at_zero=False)
    assert with_zero.by_step == {0: 1.0}
    assert without.by_step == {1: 1.0}
    assert with_zero.entries == without.entries == {2: 1.0}


def test_violator_distributions_differ(violator):
    psi = blank_start(violator)
    report = compare_distributions(monitored_distribution(violator, psi, 2),
                                   unmonitored_distribution(violator, psi, 2), 1e-10)
    assert not report.passed
    assert report.max_diff == pytest.approx(0.5)


def test_compare_reports_worst_label():
    a = Distribution({1: 0.5, 2: 0.5}, 0.0)
    b = Distribution({1: 0.5, 2: 0.499}, 0.001)
    r = compare_distributions(a, b, 1e-10)
    assert not r.passed and r.worst == 2
    assert r.max_diff == pytest.approx(1e-3)
    assert [row[0] for row in r.rows] == [1, 2, "residual"]
    same = compare_distributions(a, a, 0.0)
    assert same.passed and same.max_diff == 0.0


def test_sweep_matches_separate_calls():
    spec = random_corpus(5, 1)[0]
    psi = random_fresh_state(make_rng(5), spec)
    for n, mon, unm in sweep_horizons(spec, psi, 6):
        assert mon == monitored_distribution(spec, psi, n)
        assert unm == unmonitored_distribution(spec, psi, n)


def test_probabilities_sum_to_one_on_random_machines():
    rng = make_rng(11)
    for spec in random_corpus(11, 10):
        psi = random_fresh_state(rng, spec)
        for n, mon, unm in sweep_horizons(spec, psi, 8):
            assert mon.is_consistent(1e-10) and unm.is_consistent(1e-10)


def test_chi_squared_helper():
    assert chi_squared({"a": 50, "b": 50}, {"a": 0.5, "b": 0.5}, 100)[0] == 0.0
    stat, dof, p = chi_squared({"a": 60, "b": 40}, {"a": 0.5, "b": 0.5}, 100)
    assert (stat, dof) == (4.0, 1)
    assert p == pytest.approx(0.0455, abs=1e-4)
    assert chi_squared({"a": 1}, {"b": 1.0}, 1)[2] == 0.0
    assert chi_squared({}, {"a": 1.0}, 0) == (0.0, 0, 1.0)


def test_sampling_is_reproducible(two_phase):
    a = sample_monitored(two_phase, blank_start(two_phase), 2, 500, seed=3)
    b = sample_monitored(two_phase, blank_start(two_phase), 2, 500, seed=3)
    assert a.label_counts == b.label_counts and a.step_counts == b.step_counts
    assert a.seed == 3
    assert sum(a.label_counts.values()) + a.not_halted == 500
