"""``lightrocks`` command line.

Exit codes: 0 success, 1 diagnostics with errors, 2 usage error, 3 run
finished with a non-Success outcome (Deadlock, Timeout, Fault,
PostconditionFailed) or an ill-formed trace.
"""

from __future__ import annotations

import argparse
import os
import sys
from collections import Counter, defaultdict

from . import compiler, dsl, engine, model as m, world

EXIT_OK, EXIT_DIAGNOSTICS, EXIT_USAGE, EXIT_RUN_FAILED = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def search_paths() -> list[str]:
    raw = os.environ.get("LR_PATH", "")
    return [p for p in raw.split(os.pathsep) if p]


def _report(diags, err):
    for d in diags:
        print(d, file=err)
    return any(d.is_error for d in diags)


def diagnose(path, profile="standard", paths=None):
    """Every diagnostic for a model file: syntax, names, validation, flattening.

    Returns ``(model, table, diagnostics)``; later stages run only while the
    earlier ones report no errors.
    """
    parsed, diags = dsl.parse_file(path)
    table = None
    if not any(d.is_error for d in diags):
        table, more = m.resolve_names(parsed, search_paths() if paths is None else paths)
        diags = m.sort_diagnostics(diags + more + m.validate(parsed, table, profile))
        if not any(d.is_error for d in diags):
            diags = m.sort_diagnostics(diags + compiler.flatten_diagnostics(parsed, table))
    return parsed, table, diags


def _load(path, err, profile="standard"):
    """Diagnose and report; returns ``(model, table)`` or None on errors."""
    try:
        parsed, table, diags = diagnose(path, profile)
    except OSError as e:
        print(f"{path}: error: {e.strerror}", file=err)
        return None
    if _report(diags, err):
        return None
    return parsed, table


def cmd_parse(args, out, err):
    parsed, diags = dsl.parse_file(args.file)
    if _report(diags, err):
        return EXIT_DIAGNOSTICS
    for comp in parsed:
        kids = len(comp.children)
        extra = f" extends {comp.extends}" if comp.extends else ""
        print(f"{comp.level} {comp.name}{extra}: {len(comp.starts)} start, {len(comp.ends)} end, "
              f"{len(comp.params)} params, {kids} children, {len(comp.transitions)} transitions",
              file=out)
    return EXIT_OK


def cmd_validate(args, out, err):
    return EXIT_OK if _load(args.file, err, args.profile) else EXIT_DIAGNOSTICS


def cmd_compile(args, out, err):
    loaded = _load(args.file, err)
    if loaded is None:
        return EXIT_DIAGNOSTICS
    _, table = loaded
    try:
        flat = compiler.flatten(table, args.root)
    except compiler.FlattenError as e:
        _report(e.diagnostics, err)
        return EXIT_DIAGNOSTICS
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="\n") as f:
            f.write(dsl.print_model(m.Model([flat.root])))
    if args.dot:
        with open(args.dot, "w", encoding="utf-8", newline="\n") as f:
            f.write(compiler.emit_dot(flat))
    if not args.output and not args.dot:
        out.write(dsl.print_model(m.Model([flat.root])))
    return EXIT_OK


def cmd_run(args, out, err):
    loaded = _load(args.file, err)
    if loaded is None:
        return EXIT_DIAGNOSTICS
    _, table = loaded
    if table.lookup(args.root) is None:
        print(f"{args.file}: error E011: unresolved reference '{args.root}'", file=err)
        return EXIT_DIAGNOSTICS
    try:
        em = world.load_world(args.world)
    except (OSError, ValueError, KeyError) as e:
        print(f"{args.world}: error: {e}", file=err)
        return EXIT_DIAGNOSTICS
    outcome, events, _ = engine.run_model(table, args.root, em, seed=args.seed,
                                          max_ticks=args.max_ticks, dt=args.dt)
    if args.trace:
        engine.write_trace(events, args.trace)
    problems = engine.check_trace(events)
    for p in problems:
        print(f"trace: {p}", file=err)
    print(outcome.line(), file=out)
    if outcome.detail:
        print(f"detail: {outcome.detail}", file=err)
    return EXIT_OK if outcome.status == "Success" and not problems else EXIT_RUN_FAILED


def summarize_trace(events) -> list[str]:
    entered = Counter(ev.subject for ev in events if ev.kind == "Entered")
    stops = defaultdict(Counter)
    for ev in events:
        if ev.kind == "StopTriggered":
            stops[ev.subject][ev.data.get("reason", "?")] += 1
    lines = []
    for subject in sorted(set(entered) | set(stops)):
        reasons = ", ".join(f"{r}={n}" for r, n in sorted(stops[subject].items()))
        lines.append(f"{subject}: entered={entered[subject]}" + (f" stops: {reasons}" if reasons else ""))
    final = [ev for ev in events if ev.kind == "RunResult"]
    if final:
        d = final[-1].data
        lines.append(f"result: {d.get('status')} ticks={final[-1].tick} end={d.get('end')}")
    return lines


def cmd_trace(args, out, err):
    try:
        events = engine.read_trace(args.file)
    except (OSError, ValueError, KeyError) as e:
        print(f"{args.file}: error: {e}", file=err)
        return EXIT_DIAGNOSTICS
    problems = engine.check_trace(events)
    for p in problems:
        print(f"trace: {p}", file=err)
    if args.summary:
        for line in summarize_trace(events):
            print(line, file=out)
    else:
        print(f"{len(events)} events", file=out)
    return EXIT_RUN_FAILED if problems else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lightrocks", description="LightRocks model toolchain.",
                epilog="Exit codes: 0 ok, 1 diagnostics with errors, 2 usage error, "
                       "3 run not successful. LR_PATH adds model search directories.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("parse", help="parse a model and summarise its components")
    s.add_argument("file")
    s.set_defaults(func=cmd_parse)

    s = sub.add_parser("validate", help="report diagnostics")
    s.add_argument("file")
    s.add_argument("--profile", choices=["standard", "generic"], default="standard")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("compile", help="flatten a component, write model and/or DOT")
    s.add_argument("file")
    s.add_argument("--root", required=True)
    s.add_argument("-o", "--output", metavar="OUT.lr")
    s.add_argument("--dot", metavar="OUT.dot")
    s.set_defaults(func=cmd_compile)

    s = sub.add_parser("run", help="execute a component in a simulated cell")
    s.add_argument("file")
    s.add_argument("--root", required=True)
    s.add_argument("--world", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--max-ticks", type=int, default=engine.DEFAULT_MAX_TICKS)
    s.add_argument("--dt", type=float, default=engine.DEFAULT_DT)
    s.add_argument("--trace", metavar="OUT.jsonl")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("trace", help="inspect a JSONL trace")
    s.add_argument("file")
    s.add_argument("--summary", action="store_true")
    s.set_defaults(func=cmd_trace)
    return p


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    return args.func(args, out, err)


if __name__ == "__main__":
    sys.exit(main())
