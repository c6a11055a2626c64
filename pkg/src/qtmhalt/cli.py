"""Command-line interface: ``qtmhalt validate | compare | qnd | sample``.

Exit codes: 0 pass, 1 verification failure, 2 unreadable or malformed
machine / arguments, 3 truncation too small or over the size cap.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .analysis import (
    BasisCapError,
    Reach,
    TruncationError,
    Window,
    build_truncated,
    lemma_suite,
    projection_relations_check,
    qnd_check,
    register_family,
)
from .core import Configuration, StateVector, Tape
from .machine import MachineSpec, ParseError, parse_machine, validate_halt_preservation, validate_unitarity
from .machines import BUNDLED, bundled_text
from .measurement import compare_distributions, monitored_distribution, sample_monitored, unmonitored_distribution

EXIT_OK, EXIT_FAIL, EXIT_PARSE, EXIT_TRUNCATION = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _num(x: float) -> str:
    return f"{x:.16g}"


class Reporter:
    """Writes each record either as a text line or as one JSON object per line."""

    def __init__(self, fmt: str, out):
        self.fmt, self.out = fmt, out

    def emit(self, kind: str, text: str, **data):
        if self.fmt == "jsonl":
            line = json.dumps({"kind": kind, **data}, sort_keys=True, default=str)
        else:
            line = text
        self.out.write(line + "\n")


def load_machine(arg: str) -> MachineSpec:
    path = Path(arg)
    if path.is_file():
        text = path.read_text(encoding="utf-8")
    elif arg.removesuffix(".qtm") in BUNDLED:
        text = bundled_text(arg)
    else:
        raise UsageError(f"no machine file or bundled machine named {arg!r}")
    return parse_machine(text)


def parse_tape_literal(text: str, spec: MachineSpec) -> Tape:
    """``"0:1,1:1"`` -> tape with symbol 1 on cells 0 and 1; empty string is the blank tape."""
    cells = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        try:
            i, s = (int(x) for x in part.split(":"))
        except ValueError:
            raise UsageError(f"bad tape cell {part!r}; expected 'cell:symbol'") from None
        if not 0 <= s < spec.alphabet_size:
            raise UsageError(f"symbol {s} outside alphabet of size {spec.alphabet_size}")
        if i in cells:
            raise UsageError(f"cell {i} given twice")
        cells[i] = s
    return Tape.from_mapping(cells, spec.alphabet_size, spec.blank)


def _initial(spec: MachineSpec, args) -> StateVector:
    tape = parse_tape_literal(args.initial, spec)
    return StateVector.basis(Configuration(spec.initial_state, 0, tape, 0))


def _validation(spec: MachineSpec, rep: Reporter, truncation, tol: float) -> bool:
    halt = validate_halt_preservation(spec)
    for line in halt.lines():
        rep.emit("halt_preservation", line, ok=halt.ok)
    uni = validate_unitarity(spec, truncation, tol)
    lines = list(uni.lines())
    rep.emit("unitarity", lines[0], ok=uni.ok, mode=uni.mode, columns=uni.columns_checked,
             max_deviation=uni.max_deviation)
    for line in lines[1:]:
        rep.emit("unitarity_detail", line)
    return halt.ok and uni.ok


def cmd_validate(args, rep: Reporter) -> int:
    spec = load_machine(args.machine)
    if args.window is not None:
        truncation = Window(args.window)
    else:
        tape = parse_tape_literal(args.initial, spec)
        truncation = Reach(register_family(spec, tape), args.steps)
    ok = _validation(spec, rep, truncation, args.tol)
    rep.emit("summary", f"validate: {'PASS' if ok else 'FAIL'}", passed=ok)
    return EXIT_OK if ok else EXIT_FAIL


def _gate(spec, psi, steps, rep, args) -> bool:
    if args.force:
        rep.emit("note", "validation skipped (--force)")
        return True
    return _validation(spec, rep, Reach(psi, steps + 1), 1e-12)


def cmd_compare(args, rep: Reporter) -> int:
    spec = load_machine(args.machine)
    psi = _initial(spec, args)
    if not _gate(spec, psi, args.steps, rep, args):
        rep.emit("summary", "compare: machine failed validation (use --force to run anyway)", passed=False)
        return EXIT_FAIL
    at_zero = not args.no_measure_at_zero
    mon = monitored_distribution(spec, psi, args.steps, at_zero)
    unm = unmonitored_distribution(spec, psi, args.steps)
    report = compare_distributions(mon, unm, args.tol)
    rep.emit("header", "label\tp_monitored\tp_unmonitored\tabs_diff")
    for key, a, b, d in report.rows:
        rep.emit("row", f"{key}\t{_num(a)}\t{_num(b)}\t{_num(d)}", label=key, monitored=a, unmonitored=b, diff=d)
    rep.emit("summary", f"max_diff={_num(report.max_diff)} tol={_num(args.tol)} worst={report.worst} "
                        f"{'PASS' if report.passed else 'FAIL'}",
             max_diff=report.max_diff, tol=args.tol, worst=report.worst, passed=report.passed, steps=args.steps)
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_qnd(args, rep: Reporter) -> int:
    spec = load_machine(args.machine)
    n = args.max_steps
    tape = parse_tape_literal(args.initial, spec)
    if args.window is not None:
        truncation = Window(args.window)
    else:
        truncation = Reach(register_family(spec, tape), args.depth if args.depth is not None else 4 * n + 2)
    model = build_truncated(spec, truncation, max_steps=n)
    model.require(4 * n)
    rep.emit("model", f"truncation={model.mode} basis={model.size} exact_columns={len(model.interior_columns(4 * n))}",
             mode=model.mode, basis=model.size)
    halt = validate_halt_preservation(spec)
    for line in halt.lines():
        rep.emit("halt_preservation", line, ok=halt.ok)

    failures = []
    worst_qnd = 0.0
    for a in range(n + 1):
        for b in range(n + 1):
            c = qnd_check(model, a, b)
            worst_qnd = max(worst_qnd, c)
            if a < b:
                rep.emit("commutator", f"[O({a}),O({b})] max={_num(c)}", n=a, n2=b, value=c)
    if worst_qnd > args.tol:
        failures.append("commutator")
    rel_worst: dict[str, float] = {}
    for a in range(n + 1):
        for b in range(a + 1):
            r = projection_relations_check(model, a, b)
            for k, v in r.deviations.items():
                rel_worst[k] = max(rel_worst.get(k, 0.0), v)
            rep.emit("relations", f"E({a})E({b}) " + " ".join(f"{k}={_num(v)}" for k, v in r.deviations.items()),
                     n=a, n2=b, **r.deviations)
    failures += [f"relation {k}" for k, v in rel_worst.items() if v > args.tol]
    lem = lemma_suite(model, args.trials, args.seed, horizon=n)
    lem.tol = args.tol
    for k, v in lem.deviations.items():
        rep.emit("lemma", f"lemma {k}: max deviation {_num(v)} {'ok' if v <= args.tol else 'FAIL'}",
                 lemma=k, deviation=v, ok=v <= args.tol)
    failures += [f"lemma {k}" for k in lem.failing]
    ok = not failures
    text = "qnd: PASS" if ok else "qnd: FAIL (" + ", ".join(failures) + ")"
    rep.emit("summary", text, passed=ok, failing=failures, seed=args.seed, trials=args.trials, max_steps=n)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_sample(args, rep: Reporter) -> int:
    spec = load_machine(args.machine)
    psi = _initial(spec, args)
    if not _gate(spec, psi, args.steps, rep, args):
        rep.emit("summary", "sample: machine failed validation (use --force to run anyway)", passed=False)
        return EXIT_FAIL
    r = sample_monitored(spec, psi, args.steps, args.runs, args.seed, not args.no_measure_at_zero)
    rep.emit("seed", f"seed={r.seed} runs={r.runs} steps={r.horizon}", seed=r.seed, runs=r.runs, steps=r.horizon)
    rep.emit("header", "label\tcount\tfrequency\tp_exact")
    labels = sorted(set(r.label_counts) | set(r.expected.entries))
    for j in labels:
        cnt = r.label_counts.get(j, 0)
        freq = cnt / r.runs if r.runs else 0.0
        p = r.expected.entries.get(j, 0.0)
        rep.emit("label", f"{j}\t{cnt}\t{_num(freq)}\t{_num(p)}", label=j, count=cnt, frequency=freq, expected=p)
    freq = r.not_halted / r.runs if r.runs else 0.0
    rep.emit("label", f"not-halted\t{r.not_halted}\t{_num(freq)}\t{_num(r.expected.residual)}",
             label="not-halted", count=r.not_halted, frequency=freq, expected=r.expected.residual)
    for k, cnt in r.step_counts.items():
        rep.emit("halting_step", f"halted_at={k}\t{cnt}", step=k, count=cnt)
    passed = r.p_value >= args.alpha
    rep.emit("summary", f"chi2={_num(r.chi2)} dof={r.dof} p={_num(r.p_value)} alpha={_num(args.alpha)} "
                        f"{'PASS' if passed else 'FAIL'}",
             chi2=r.chi2, dof=r.dof, p_value=r.p_value, alpha=args.alpha, passed=passed, seed=r.seed)
    return EXIT_OK if passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qtmhalt", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("machine", help="machine file, or one of: " + ", ".join(BUNDLED))
    common.add_argument("--format", choices=("text", "jsonl"), default="text")
    common.add_argument("--initial", default="", help="initial tape, e.g. '0:1,1:1' (default blank)")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", parents=[common], help="halt preservation and isometry checks")
    v.add_argument("--steps", type=int, default=16, help="depth of the reachable set checked (default 16)")
    v.add_argument("--window", type=int, help="check every configuration in a tape window of this radius instead")
    v.add_argument("--tol", type=float, default=1e-12)
    v.set_defaults(func=cmd_validate)

    c = sub.add_parser("compare", parents=[common], help="monitored vs unmonitored output distribution")
    c.add_argument("--steps", type=int, required=True)
    c.add_argument("--tol", type=float, default=1e-10)
    c.add_argument("--force", action="store_true", help="skip validation")
    c.add_argument("--no-measure-at-zero", action="store_true", help="first halt measurement after step 1")
    c.set_defaults(func=cmd_compare)

    q = sub.add_parser("qnd", parents=[common], help="commutators, projection relations and lemmas")
    q.add_argument("--max-steps", type=int, required=True)
    g = q.add_mutually_exclusive_group()
    g.add_argument("--window", type=int, help="full tape window of this radius")
    g.add_argument("--depth", type=int, help="reachable set depth (default 4*max-steps+2)")
    q.add_argument("--trials", type=int, default=100)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--tol", type=float, default=1e-10)
    q.set_defaults(func=cmd_qnd)

    s = sub.add_parser("sample", parents=[common], help="Monte Carlo runs of the monitored machine")
    s.add_argument("--steps", type=int, required=True)
    s.add_argument("--runs", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--alpha", type=float, default=1e-3, help="chi-squared significance level")
    s.add_argument("--force", action="store_true", help="skip validation")
    s.add_argument("--no-measure-at-zero", action="store_true")
    s.set_defaults(func=cmd_sample)
    return p


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_PARSE if e.code else EXIT_OK
    for name in ("steps", "max_steps", "runs", "trials", "window", "depth"):
        value = getattr(args, name, None)
        if value is not None and value < 0:
            print(f"error: --{name.replace('_', '-')} must be non-negative", file=sys.stderr)
            return EXIT_PARSE
    rep = Reporter(args.format, out)
    try:
        return args.func(args, rep)
    except ParseError as e:
        print(f"parse error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except TruncationError as e:
        hint = ""
        if e.required is not None and not isinstance(e, BasisCapError):
            hint = f" (needs budget {e.required}: try --depth {e.required + 2} or --window {e.required + 1})"
        print(f"truncation error: {e}{hint}", file=sys.stderr)
        return EXIT_TRUNCATION


if __name__ == "__main__":
    sys.exit(main())
