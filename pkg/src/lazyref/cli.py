"""Command-line interface: ``check``, ``run`` and ``smt-dump``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources
from pathlib import Path

from .parser import LazyrefSyntaxError, desugar, parse_program
from .semantics import CBN, CBV, CRASH, DEFAULT_FUEL, FUEL, OPT, VALUE, FuelProbe, LabelFromChecker, eval_expr, format_trace
from .smt import DEFAULT_TIMEOUT, BackendError, emit_smtlib, parse_backend
from .syntax import show_expr
from .typecheck import CheckMode, check_program

EXIT_OK, EXIT_UNSAFE, EXIT_USAGE, EXIT_UNKNOWN = 0, 1, 2, 3
EXIT_CRASH, EXIT_FUEL, EXIT_STUCK = 4, 5, 6

WATERMARK = ("WARNING: eager-naive mode trusts every refinement, including those of "
             "possibly diverging terms; its verdicts are unsound under lazy evaluation.")

DEFAULT_PROBE_FUEL = 1000


class UsageError(Exception):
    pass


def corpus_path(name: str) -> Path:
    """Path of a bundled example program, e.g. ``corpus_path("fib.lzr")``."""
    return Path(str(resources.files("lazyref") / "corpus" / name))


def corpus_files() -> list:
    root = resources.files("lazyref") / "corpus"
    return sorted(Path(str(root / p.name)) for p in root.iterdir() if p.name.endswith(".lzr"))


def _read_source(path: str) -> tuple:
    p = Path(path)
    if not p.exists():
        # Fall back to the bundled corpus: ``examples/fib.lzr`` finds ``fib.lzr``.
        bundled = corpus_path(p.name)
        if bundled.exists():
            p = bundled
    try:
        return str(p), p.read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from exc


def _load(path: str):
    shown, text = _read_source(path)
    try:
        return parse_program(text)
    except LazyrefSyntaxError as exc:
        where = f"{shown}:{exc.span}" if exc.span else shown
        raise UsageError(f"{where}: {type(exc).__name__}: {exc.message}") from exc


def _backend(args):
    spec = args.backend
    if spec is None:
        # $LAZYREF_SOLVER names a solver command, e.g. "z3 -in".
        env = os.environ.get("LAZYREF_SOLVER", "").strip()
        if not env or env == "builtin" or env.startswith("exec:"):
            spec = env or "builtin"
        else:
            spec = "exec:" + env
    try:
        return parse_backend(spec, args.timeout)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _mode(args) -> CheckMode:
    return CheckMode(args.mode)


# ---------------------------------------------------------------------------
# check


def render_report(report, path: str) -> str:
    lines = []
    verdict = report.verdict
    if report.mode == CheckMode.EAGER_NAIVE.value:
        lines.append(WATERMARK)
        verdict += " (UNSOUND MODE)"
    lines.append(verdict)
    if report.bindings:
        lines.append("bindings:")
        for b in report.bindings:
            lines.append(f"  {b.name} :: {b.type}  [{b.termination}]")
    if report.errors:
        lines.append("errors:")
        for d in report.errors:
            where = f"{path}:{d.span}" if d.span else path
            lines.append(f"  {where}: {d.kind} ({d.rule}): {d.message}")
            if d.query_id is not None:
                lines.append(f"    query #{d.query_id}")
    lines.append(f"queries: {report.stats['queries']}, solver time: {report.stats['solver_ms']:.1f} ms")
    return "\n".join(lines)


def check_exit_code(report) -> int:
    if report.unknown:
        return EXIT_UNKNOWN
    return EXIT_OK if report.safe else EXIT_UNSAFE


def cmd_check(args) -> int:
    program = _load(args.file)
    backend = _backend(args)
    try:
        report = check_program(program, _mode(args), backend)
    except BackendError as exc:
        raise UsageError(f"solver backend failed: {exc}") from exc
    if args.format == "json":
        print(json.dumps(report.to_dict(), indent=2))
    else:
        print(render_report(report, args.file))
    return check_exit_code(report)


# ---------------------------------------------------------------------------
# run


def _strategy(args):
    if args.strategy == "cbn":
        return CBN()
    if args.strategy == "cbv":
        return CBV()
    if args.oracle == "checker":
        return OPT(LabelFromChecker.sound())
    return OPT(FuelProbe(args.probe_fuel))


def run_exit_code(outcome) -> int:
    return {VALUE: EXIT_OK, CRASH: EXIT_CRASH, FUEL: EXIT_FUEL}.get(outcome.result, EXIT_STUCK)


def cmd_run(args) -> int:
    program = _load(args.file)
    if args.fuel < 1:
        raise UsageError("--fuel must be at least 1")
    if args.probe_fuel < 1:
        raise UsageError("--probe-fuel must be at least 1")
    outcome = eval_expr(desugar(program), _strategy(args), args.fuel, trace=args.trace)
    if args.format == "json":
        doc = {
            "strategy": args.strategy,
            "result": outcome.result,
            "value": show_expr(outcome.value) if outcome.value is not None else None,
            "steps": outcome.steps,
        }
        if args.trace:
            doc["trace"] = [show_expr(t) for t in outcome.trace]
        print(json.dumps(doc, indent=2))
    else:
        if args.trace:
            print(format_trace(outcome))
        print(outcome.describe())
        print(f"steps: {outcome.steps}")
    return run_exit_code(outcome)


# ---------------------------------------------------------------------------
# smt-dump


def dump_queries(report, out: Path) -> list:
    out.mkdir(parents=True, exist_ok=True)
    index = []
    for rec in report.queries:
        name = f"{rec.id:04d}.smt2"
        (out / name).write_text(emit_smtlib(rec.query), encoding="utf-8")
        origin = rec.query.origin
        index.append({
            "id": rec.id,
            "file": name,
            "rule": origin.rule,
            "span": str(origin.span) if origin.span else None,
            "binding": origin.binding,
            "verdict": type(rec.verdict).__name__,
        })
    (out / "index.json").write_text(json.dumps(index, indent=2) + "\n", encoding="utf-8")
    return index


def cmd_smt_dump(args) -> int:
    program = _load(args.file)
    backend = _backend(args)
    try:
        report = check_program(program, _mode(args), backend)
    except BackendError as exc:
        raise UsageError(f"solver backend failed: {exc}") from exc
    try:
        index = dump_queries(report, Path(args.out))
    except OSError as exc:
        raise UsageError(f"cannot write to {args.out}: {exc.strerror or exc}") from exc
    print(f"wrote {len(index)} queries to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lazyref", description="Verify and run programs of a lazy refinement-typed core language.")
    sub = ap.add_subparsers(dest="command", required=True)

    def solver_flags(p):
        p.add_argument("--mode", choices=[m.value for m in CheckMode], default="sound")
        p.add_argument("--backend", default=None,
                       help="'builtin' or 'exec:<command>' (default: $LAZYREF_SOLVER or builtin)")
        p.add_argument("--timeout", type=float, default=DEFAULT_TIMEOUT, help="seconds per external query")

    c = sub.add_parser("check", help="verify a program")
    c.add_argument("file")
    solver_flags(c)
    c.add_argument("--format", choices=["text", "json"], default="text")
    c.set_defaults(func=cmd_check)

    r = sub.add_parser("run", help="evaluate main")
    r.add_argument("file")
    r.add_argument("--strategy", choices=["cbn", "cbv", "opt"], default="cbn")
    r.add_argument("--fuel", type=int, default=DEFAULT_FUEL)
    r.add_argument("--oracle", choices=["probe", "checker"], default="probe",
                   help="how the optimistic strategy decides triviality")
    r.add_argument("--probe-fuel", type=int, default=DEFAULT_PROBE_FUEL)
    r.add_argument("--trace", action="store_true")
    r.add_argument("--format", choices=["text", "json"], default="text")
    r.set_defaults(func=cmd_run)

    d = sub.add_parser("smt-dump", help="write every SMT query as .smt2 files")
    d.add_argument("file")
    solver_flags(d)
    d.add_argument("--out", default="smt-dump")
    d.set_defaults(func=cmd_smt_dump)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"lazyref: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
