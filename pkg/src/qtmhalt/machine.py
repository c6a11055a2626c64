"""Machine descriptions: transition amplitudes, file format and well-formedness checks.

The quantum transition function is stored as a table keyed by
``(p, n0, sigma)`` (internal state, halt bit, symbol under the head).  Each
key maps to the list of branches ``(tau, n0', q, d, c)``: write ``tau``, set
the halt bit to ``n0'``, enter state ``q``, move by ``d`` and carry amplitude
``c``.
"""
from __future__ import annotations

import math
import re
from decimal import Decimal
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple

import numpy as np

LEFT, RIGHT = -1, 1
_DIRS = {"L": LEFT, "R": RIGHT}
_DIR_NAMES = {LEFT: "L", RIGHT: "R"}

#: ``1/sqrt2`` expanded to 17 significant digits (computed in decimal, so the
#: last digit is correctly rounded rather than inherited from a float division).
INV_SQRT2_TEXT = f"{1 / Decimal(2).sqrt():.17g}"
INV_SQRT2 = float(INV_SQRT2_TEXT)
_SPECIAL_AMPLITUDES = {"1/sqrt2": INV_SQRT2, "+1/sqrt2": INV_SQRT2, "-1/sqrt2": -INV_SQRT2}

FORMAT_VERSION = 1


class ParseError(ValueError):
    """Malformed machine document."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.message, self.line, self.column = message, line, column
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)


class SemanticError(ParseError):
    """Well-formed syntax describing an inconsistent machine."""


class MissingRuleError(KeyError):
    """A reachable ``(p, n0, sigma)`` key has no transition list."""


class Branch(NamedTuple):
    tau: int
    halt: int
    q: int
    d: int
    amp: complex


@dataclass(frozen=True)
class MachineSpec:
    alphabet_size: int
    state_count: int
    initial_state: int
    rules: Mapping[tuple[int, int, int], tuple[Branch, ...]]
    blank: int = 0

    def __post_init__(self):
        if self.alphabet_size < 1 or self.state_count < 1:
            raise ValueError("alphabet and state set must be non-empty")
        if not 0 <= self.initial_state < self.state_count:
            raise ValueError(f"initial state {self.initial_state} out of range")
        rules = {}
        for key in sorted(self.rules):
            p, n0, s = key
            self._check_state(p), self._check_symbol(s), self._check_bit(n0)
            branches = tuple(Branch(*b) for b in self.rules[key])
            for b in branches:
                self._check_symbol(b.tau), self._check_bit(b.halt), self._check_state(b.q)
                if b.d not in (LEFT, RIGHT):
                    raise ValueError(f"direction {b.d} is not -1 or +1")
                if not (math.isfinite(complex(b.amp).real) and math.isfinite(complex(b.amp).imag)):
                    raise ValueError(f"non-finite amplitude in rule {key}")
            rules[key] = tuple(b._replace(amp=complex(b.amp)) for b in branches)
        object.__setattr__(self, "rules", rules)

    def _check_state(self, q):
        if not 0 <= q < self.state_count:
            raise ValueError(f"state {q} out of range")

    def _check_symbol(self, s):
        if not 0 <= s < self.alphabet_size:
            raise ValueError(f"symbol {s} out of range")

    @staticmethod
    def _check_bit(b):
        if b not in (0, 1):
            raise ValueError(f"halt bit {b} is not 0 or 1")

    def branches(self, p: int, n0: int, sigma: int) -> tuple[Branch, ...]:
        try:
            return self.rules[(p, n0, sigma)]
        except KeyError:
            raise MissingRuleError((p, n0, sigma)) from None

    def keys(self):
        """The full declared key space ``states x {0,1} x alphabet``."""
        return [(p, n0, s) for p in range(self.state_count) for n0 in (0, 1) for s in range(self.alphabet_size)]

    @property
    def directions(self) -> frozenset[int]:
        return frozenset(b.d for bs in self.rules.values() for b in bs)

    def __eq__(self, other):
        if not isinstance(other, MachineSpec):
            return NotImplemented
        return (self.alphabet_size, self.state_count, self.initial_state, self.blank, self.rules) == (
            other.alphabet_size, other.state_count, other.initial_state, other.blank, other.rules)

    def __hash__(self):
        return hash((self.alphabet_size, self.state_count, self.initial_state, len(self.rules)))


# ---------------------------------------------------------------------------
# file format

_TOKEN = re.compile(r"\S+")


def _tokens(line: str):
    code = line.split("#", 1)[0]
    return [(m.group(), m.start() + 1) for m in _TOKEN.finditer(code)]


def _int(tok, col, lineno, what):
    if not re.fullmatch(r"[+-]?\d+", tok):
        raise ParseError(f"expected integer {what}, got {tok!r}", lineno, col)
    return int(tok)


def _amplitude(tok, col, lineno):
    if tok in _SPECIAL_AMPLITUDES:
        return _SPECIAL_AMPLITUDES[tok]
    try:
        value = float(tok)
    except ValueError:
        raise ParseError(f"expected a decimal amplitude, got {tok!r}", lineno, col) from None
    if not math.isfinite(value):
        raise SemanticError(f"amplitude {tok!r} is not finite", lineno, col)
    return value


def parse_machine(text: str) -> MachineSpec:
    """Parse a ``qtm 1`` machine document."""
    header: dict[str, int] = {}
    rules: dict[tuple[int, int, int], list[Branch]] = {}
    current = None
    seen_magic = False

    for lineno, line in enumerate(text.splitlines(), start=1):
        toks = _tokens(line)
        if not toks:
            continue
        word, col = toks[0]
        if not seen_magic:
            if word != "qtm" or len(toks) != 2:
                raise ParseError("document must start with 'qtm <version>'", lineno, col)
            version = _int(toks[1][0], toks[1][1], lineno, "format version")
            if version != FORMAT_VERSION:
                raise ParseError(f"unsupported format version {version}", lineno, toks[1][1])
            seen_magic = True
            continue
        if word in ("alphabet", "states", "initial"):
            if len(toks) != 2:
                raise ParseError(f"'{word}' takes exactly one integer", lineno, col)
            if word in header:
                raise SemanticError(f"'{word}' declared twice", lineno, col)
            if word != "initial" and rules:
                raise ParseError(f"'{word}' must precede the rules", lineno, col)
            header[word] = _int(toks[1][0], toks[1][1], lineno, word)
            continue
        if word != "rule":
            raise ParseError(f"unknown directive {word!r}", lineno, col)
        if "alphabet" not in header or "states" not in header:
            raise ParseError("'alphabet' and 'states' must precede the rules", lineno, col)
        if len(toks) != 11 or toks[4][0] != "->":
            raise ParseError("expected 'rule p n0 sigma -> tau n0' q d re im'", lineno, col)
        (p, pc), (n0, nc), (sg, sc) = toks[1:4]
        (tau, tc), (n1, n1c), (q, qc), (d, dc), (re_, rc), (im_, ic) = toks[5:11]
        p = _int(p, pc, lineno, "state")
        n0 = _int(n0, nc, lineno, "halt bit")
        sg = _int(sg, sc, lineno, "symbol")
        tau = _int(tau, tc, lineno, "symbol")
        n1 = _int(n1, n1c, lineno, "halt bit")
        q = _int(q, qc, lineno, "state")
        if d not in _DIRS:
            raise ParseError(f"direction must be L or R, got {d!r}", lineno, dc)
        amp = complex(_amplitude(re_, rc, lineno), _amplitude(im_, ic, lineno))

        for value, c, limit, what in ((p, pc, header["states"], "state"), (q, qc, header["states"], "state"),
                                      (sg, sc, header["alphabet"], "symbol"), (tau, tc, header["alphabet"], "symbol")):
            if not 0 <= value < limit:
                raise SemanticError(f"unknown {what} {value}", lineno, c)
        for value, c in ((n0, nc), (n1, n1c)):
            if value not in (0, 1):
                raise SemanticError(f"halt bit must be 0 or 1, got {value}", lineno, c)

        key = (p, n0, sg)
        if key != current:
            if key in rules:
                raise SemanticError(f"duplicate rule key {key}", lineno, col)
            current = key
            rules[key] = []
        branch = Branch(tau, n1, q, _DIRS[d], amp)
        if any(b[:4] == branch[:4] for b in rules[key]):
            raise SemanticError(f"duplicate target {branch[:3] + (d,)} for rule key {key}", lineno, col)
        rules[key].append(branch)

    if not seen_magic:
        raise ParseError("empty document", 1, 1)
    for word in ("alphabet", "states", "initial"):
        if word not in header:
            raise ParseError(f"missing '{word}' declaration")
    if header["alphabet"] < 1 or header["states"] < 1:
        raise SemanticError("alphabet and state set must be non-empty")
    if not 0 <= header["initial"] < header["states"]:
        raise SemanticError(f"unknown initial state {header['initial']}")
    return MachineSpec(header["alphabet"], header["states"], header["initial"],
                       {k: tuple(v) for k, v in rules.items()})


def serialize_machine(spec: MachineSpec) -> str:
    lines = [f"qtm {FORMAT_VERSION}", f"alphabet {spec.alphabet_size}", f"states {spec.state_count}",
             f"initial {spec.initial_state}"]
    for (p, n0, s), branches in spec.rules.items():
        for b in branches:
            lines.append(f"rule {p} {n0} {s} -> {b.tau} {b.halt} {b.q} {_DIR_NAMES[b.d]} "
                         f"{b.amp.real!r} {b.amp.imag!r}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# validation

@dataclass
class HaltPreservationReport:
    violations: list[tuple[tuple[int, int, int], Branch, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def lines(self):
        if self.ok:
            yield "halt preservation: ok"
        for key, b, why in self.violations:
            yield f"halt-preservation violation: rule {key} -> {tuple(b[:4])}: {why}"


def validate_halt_preservation(spec: MachineSpec) -> HaltPreservationReport:
    """Check that halted configurations keep their tape and halt bit.

    Every branch of a key with ``n0 = 1`` must write back the symbol it read
    and keep ``n0' = 1``; only the internal state and head may change.
    """
    report = HaltPreservationReport()
    for (p, n0, s), branches in spec.rules.items():
        if n0 != 1:
            continue
        for b in branches:
            if b.tau != s:
                report.violations.append(((p, n0, s), b, f"writes {b.tau} over {s}"))
            if b.halt != 1:
                report.violations.append(((p, n0, s), b, "resets the halt bit"))
    return report


@dataclass
class UnitarityReport:
    mode: str
    tol: float
    columns_checked: int = 0
    max_deviation: float = 0.0
    worst_pair: tuple | None = None
    key_norm_violations: list[tuple[tuple[int, int, int], float]] = field(default_factory=list)
    missing_rules: list[tuple[int, int, int]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return (self.columns_checked > 0 and self.max_deviation <= self.tol
                and not self.key_norm_violations and not self.missing_rules)

    def lines(self):
        yield (f"unitarity ({self.mode}): {'ok' if self.ok else 'FAILED'}; "
               f"{self.columns_checked} interior columns, max |U^dag U - I| = {self.max_deviation:.3e}")
        if self.columns_checked == 0:
            yield "  no interior columns: truncation too small"
        if self.worst_pair is not None and self.max_deviation > self.tol:
            a, b = self.worst_pair
            yield f"  offending column pair: {a} / {b}"
        for key, n in self.key_norm_violations:
            yield f"  rule {key}: sum |c|^2 = {n:.15g}"
        for key in self.missing_rules:
            yield f"  missing rule for key {key}"


def key_norms(spec: MachineSpec) -> dict[tuple[int, int, int], float]:
    return {k: math.fsum(abs(b.amp) ** 2 for b in bs) for k, bs in spec.rules.items()}


def validate_unitarity(spec: MachineSpec, truncation, tol: float = 1e-12) -> UnitarityReport:
    """Check that ``U`` acts isometrically on the interior of a truncation.

    ``truncation`` is an :class:`~qtmhalt.analysis.Window` (every
    configuration inside a tape window) or a :class:`~qtmhalt.analysis.Reach`
    (configurations reachable from an initial family).  Columns whose images
    leave the truncation are excluded.  The per-key norm condition
    ``sum |c|^2 = 1`` is checked for every declared key.
    """
    from .analysis.truncation import build_truncated

    model = build_truncated(spec, truncation)
    report = UnitarityReport(mode=model.mode, tol=tol)
    for key, n in key_norms(spec).items():
        if abs(n - 1.0) > tol:
            report.key_norm_violations.append((key, n))
    report.missing_rules = sorted(model.missing_keys)
    if model.mode == "reach":
        # reach rows can be inexact exactly because the machine is not isometric,
        # so every column whose images stay inside is checked
        cols = np.flatnonzero(model.col_exact)
    else:
        cols = model.interior_columns(1)
    report.columns_checked = len(cols)
    if len(cols):
        dev, (i, j) = model.gram_deviation(cols)
        report.max_deviation = dev
        report.worst_pair = (model.basis[cols[i]], model.basis[cols[j]])
    return report
