import math

import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st

from conftest import blank_start, flip_machine, non_orthogonal_machine
from qtmhalt.analysis import Reach, Window, register_family
from qtmhalt.core import norm_sq, random_state
from qtmhalt.corpus import fresh_configurations, random_sweep_machine
from qtmhalt.evolution import evolve, step
from qtmhalt.machine import (
    INV_SQRT2,
    INV_SQRT2_TEXT,
    LEFT,
    RIGHT,
    Branch,
    MachineSpec,
    MissingRuleError,
    ParseError,
    SemanticError,
    parse_machine,
    serialize_machine,
    validate_halt_preservation,
    validate_unitarity,
)
from qtmhalt.measurement import make_rng

MINIMAL = """qtm 1
alphabet 1
states 1
initial 0
rule 0 0 0 -> 0 1 0 R 1 0
rule 0 1 0 -> 0 1 0 R 1 0
"""


def test_parse_minimal():
    spec = parse_machine(MINIMAL)
    assert spec.state_count == 1
    assert spec.alphabet_size == 1
    assert spec.branches(0, 0, 0) == (Branch(0, 1, 0, RIGHT, 1 + 0j),)


def test_parse_bundled(two_phase):
    assert (two_phase.state_count, two_phase.alphabet_size, two_phase.initial_state) == (3, 2, 0)
    amps = [b.amp for b in two_phase.branches(0, 0, 0)]
    assert amps == [INV_SQRT2, INV_SQRT2]
    assert [b.amp for b in two_phase.branches(2, 0, 0)] == [INV_SQRT2, -INV_SQRT2]


def test_inv_sqrt2_has_17_digits():
    assert INV_SQRT2_TEXT == "0.70710678118654752"
    assert INV_SQRT2 == math.sqrt(0.5)
    assert abs(2 * INV_SQRT2**2 - 1) < 1e-15


def test_comments_and_blank_lines():
    text = "# header\n\n" + MINIMAL.replace("states 1", "states 1   # one state")
    assert parse_machine(text) == parse_machine(MINIMAL)


def test_duplicate_key_is_semantic_error():
    text = MINIMAL + "rule 0 0 0 -> 0 0 0 L 1 0\n"
    with pytest.raises(SemanticError, match=r"duplicate rule key \(0, 0, 0\)") as err:
        parse_machine(text)
    assert err.value.line == 7


def test_repeated_target_is_rejected():
    text = MINIMAL.replace("rule 0 0 0 -> 0 1 0 R 1 0", "rule 0 0 0 -> 0 1 0 R 1 0\nrule 0 0 0 -> 0 1 0 R 1 0")
    with pytest.raises(SemanticError, match="duplicate target"):
        parse_machine(text)


@pytest.mark.parametrize(
    "text, line, column",
    [
        ("qtm 2\n", 1, 5),
        ("alphabet 2\n", 1, 1),
        ("qtm 1\nalphabet two\n", 2, 10),
        ("qtm 1\nalphabet 2\nstates 1\ninitial 0\nrule 0 0 0 -> 0 1 0 X 1 0\n", 5, 21),
        ("qtm 1\nalphabet 2\nstates 1\ninitial 0\nrule 0 0 0 0 1 0 R 1 0\n", 5, 1),
        ("qtm 1\nalphabet 2\nstates 1\ninitial 0\nrule 0 0 0 -> 0 1 0 R abc 0\n", 5, 23),
        ("qtm 1\nfrobnicate 3\n", 2, 1),
    ],
)
def test_syntax_errors_carry_position(text, line, column):
    with pytest.raises(ParseError) as err:
        parse_machine(text)
    assert (err.value.line, err.value.column) == (line, column)


@pytest.mark.parametrize(
    "body, message",
    [
        ("rule 0 0 0 -> 0 1 5 R 1 0", "unknown state 5"),
        ("rule 0 0 3 -> 0 1 0 R 1 0", "unknown symbol 3"),
        ("rule 0 2 0 -> 0 1 0 R 1 0", "halt bit"),
        ("rule 0 0 0 -> 0 1 0 R inf 0", "not finite"),
    ],
)
def test_semantic_errors(body, message):
    text = "qtm 1\nalphabet 2\nstates 1\ninitial 0\n" + body + "\n"
    with pytest.raises(SemanticError, match=message):
        parse_machine(text)


def test_missing_header():
    with pytest.raises(ParseError, match="initial"):
        parse_machine("qtm 1\nalphabet 2\nstates 1\n")
    with pytest.raises(ParseError, match="empty"):
        parse_machine("# nothing\n")


def test_header_after_rules_rejected():
    with pytest.raises(ParseError, match="precede"):
        parse_machine("qtm 1\nalphabet 1\ninitial 0\nrule 0 0 0 -> 0 1 0 R 1 0\nstates 1\n")


@st.composite
def specs(draw):
    A = draw(st.integers(1, 3))
    Q = draw(st.integers(1, 3))
    rules = {}
    for key in [(p, n, s) for p in range(Q) for n in (0, 1) for s in range(A)]:
        if not draw(st.booleans()):
            continue
        targets = draw(st.lists(st.tuples(st.integers(0, A - 1), st.integers(0, 1), st.integers(0, Q - 1),
                                          st.sampled_from([LEFT, RIGHT])), min_size=1, max_size=3, unique=True))
        amps = draw(st.lists(st.complex_numbers(max_magnitude=2, allow_nan=False, allow_infinity=False),
                             min_size=len(targets), max_size=len(targets)))
        rules[key] = tuple(Branch(*t, a) for t, a in zip(targets, amps))
    return MachineSpec(A, Q, draw(st.integers(0, Q - 1)), rules)


@seed(31337)
@settings(max_examples=150, deadline=None)
@given(specs())
def test_serialize_roundtrip(spec):
    text = serialize_machine(spec)
    assert parse_machine(text) == spec
    assert serialize_machine(parse_machine(text)) == text


def test_halt_preservation_pass_and_fail(two_phase, permutation, violator):
    assert validate_halt_preservation(two_phase).ok
    assert validate_halt_preservation(permutation).ok
    report = validate_halt_preservation(violator)
    assert not report.ok
    assert {v[0] for v in report.violations} == {(0, 1, 0), (1, 1, 0), (2, 1, 0)}
    assert all("halt-preservation violation" in line for line in report.lines())


def test_halt_bit_reset_is_a_violation():
    spec = MachineSpec(1, 1, 0, {(0, 1, 0): (Branch(0, 0, 0, RIGHT, 1.0),)})
    report = validate_halt_preservation(spec)
    assert [why for *_, why in report.violations] == ["resets the halt bit"]


def test_unitarity_window_pass_for_reversible_machine():
    report = validate_unitarity(flip_machine(), Window(3))
    assert report.ok, list(report.lines())
    assert report.columns_checked > 0
    assert report.max_deviation < 1e-12


def test_unitarity_window_fail_names_column_pair():
    report = validate_unitarity(non_orthogonal_machine(), Window(2))
    assert not report.ok
    assert report.max_deviation == pytest.approx(INV_SQRT2, abs=1e-12)
    a, b = report.worst_pair
    # the two overlapping columns differ only in the symbol under the head
    assert (a.q, a.h, a.halt) == (b.q, b.h, b.halt)
    assert {a.tape[a.h], b.tape[b.h]} == {0, 1}
    assert any("offending column pair" in line for line in report.lines())


@pytest.mark.parametrize("name", ["two_phase", "permutation", "halt_violator"])
def test_bundled_machines_isometric_on_reachable_set(name):
    from qtmhalt.machines import load_bundled

    spec = load_bundled(name)
    report = validate_unitarity(spec, Reach(register_family(spec), 12))
    assert report.ok, list(report.lines())
    assert report.max_deviation < 1e-12


def test_bundled_halting_machines_fail_full_window(two_phase):
    # a machine that halts cannot be unitary on a whole window: the halted
    # sector it feeds is already filled by the halted configurations' own images
    report = validate_unitarity(two_phase, Window(2))
    assert not report.ok


def test_key_norm_and_missing_rule_reported():
    spec = MachineSpec(1, 1, 0, {(0, 0, 0): (Branch(0, 0, 0, RIGHT, 0.5),)})
    report = validate_unitarity(spec, Window(1))
    assert report.key_norm_violations == [((0, 0, 0), 0.25)]
    assert report.missing_rules == [(0, 1, 0)]
    assert not report.ok


def test_missing_rule_raises_on_step():
    spec = MachineSpec(2, 1, 0, {(0, 0, 0): (Branch(0, 0, 0, RIGHT, 1.0),)})
    psi = blank_start(spec)
    step(spec, psi)
    with pytest.raises(MissingRuleError):
        step(spec, blank_start(spec, halt=1))


@pytest.mark.parametrize("seed_", range(5))
def test_validated_specs_preserve_norm(seed_):
    rng = make_rng(seed_)
    spec = random_sweep_machine(rng)
    assert validate_unitarity(spec, Reach(fresh_configurations(spec, 1), 4)).ok
    configs = fresh_configurations(spec, 2)
    for _ in range(100):
        psi = random_state(rng, [configs[i] for i in rng.choice(len(configs), size=min(4, len(configs)), replace=False)])
        assert math.isclose(norm_sq(step(spec, psi)), 1.0, abs_tol=1e-12)
    assert math.isclose(norm_sq(evolve(spec, psi, 50)), 1.0, abs_tol=1e-12)
