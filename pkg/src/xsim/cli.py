"""``xsim`` command line: validate, run, profile, analyze, amdahl, render."""

from __future__ import annotations

import argparse
import csv
import io
import json
import re
import sys
from decimal import Decimal, InvalidOperation
from pathlib import Path

from . import __version__
from .analysis import amdahl_limit_speedup, amdahl_table, xta_bounds
from .errors import DeadlockDetected, XsimError
from .kernel import load, run
from .machine import ledger_percentages, resolve_spec
from .parser import bundled_names, load_bundled, load_program
from .peripherals import frames_from_trace, glyph_frames, load_glyphs
from .profiler import profile, render_ledger, render_reports, reports_json
from .trace import load_stimulus, to_csv, to_jsonl
from .validator import validate

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2

_UNITS = {"ns": 1, "us": 1_000, "ms": 1_000_000, "s": 1_000_000_000}
_TIME_RE = re.compile(r"^\s*([0-9]+(?:\.[0-9]+)?)\s*(ns|us|ms|s)?\s*$")


class UsageError(Exception):
    pass


def parse_time(text: str) -> int:
    """``"100ms"`` -> 100000000. Bare numbers are nanoseconds."""
    m = _TIME_RE.match(text)
    if not m:
        raise argparse.ArgumentTypeError(f"bad time {text!r}; use e.g. 500ns, 2us, 100ms, 1s")
    try:
        ns = Decimal(m.group(1)) * _UNITS[m.group(2) or "ns"]
    except InvalidOperation:
        raise argparse.ArgumentTypeError(f"bad time {text!r}") from None
    if ns != ns.to_integral_value():
        raise argparse.ArgumentTypeError(f"{text!r} is not a whole number of nanoseconds")
    return int(ns)


def parse_n_range(text: str) -> list[int]:
    """``"1,2,4,8"`` or ``"1-8"`` (or a mix) -> sorted unique core counts."""
    values = set()
    try:
        for part in text.split(","):
            part = part.strip()
            if "-" in part:
                lo, hi = (int(x) for x in part.split("-", 1))
                values.update(range(lo, hi + 1))
            else:
                values.add(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad core-count list {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("core counts must be integers >= 1")
    return sorted(values)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xsim", description=__doc__)
    parser.add_argument("--version", action="version", version=f"xsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def program_cmd(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("program", help="program JSON file or bundled program name")
        p.add_argument("--spec", default="startkit", help="device profile name or JSON file")
        p.add_argument("--format", choices=("text", "json", "csv"), default="text")
        return p

    p = program_cmd("validate", "check resources and print the ledger")

    p = program_cmd("run", "simulate and print the trace and the ledger")
    p.add_argument("--stimulus", help="JSON list of {at_ns, port, value}")
    p.add_argument("--until", type=parse_time, help="stop time, e.g. 100ms")
    p.add_argument("--trace", dest="trace_path", help="write the trace here instead of stdout")

    p = program_cmd("profile", "simulate and print task, resource and platform reports")
    p.add_argument("--stimulus")
    p.add_argument("--until", type=parse_time)

    p = program_cmd("analyze", "best/worst-case timing bounds per block")
    p.add_argument("--contention", type=int, default=1)
    p.add_argument("--path-budget", type=int, default=10 ** 6)

    p = program_cmd("render", "print LED matrix frames as 3x3 text blocks")
    p.add_argument("--stimulus")
    p.add_argument("--until", type=parse_time)

    p = sub.add_parser("glyphs", help="print the frames for a string of glyphs")
    p.add_argument("text")
    p.add_argument("--glyphs", default="default", help="glyph JSON file")

    p = sub.add_parser("amdahl", help="T(n) and S(n) table")
    p.add_argument("--B", dest="serial", type=float, required=True, help="serial fraction")
    p.add_argument("--n", dest="ns", type=parse_n_range, default=[1, 2, 4, 8])
    p.add_argument("--t1", type=parse_time, default=1_000_000, help="single-core time")
    p.add_argument("--format", choices=("text", "json", "csv"), default="text")

    p = sub.add_parser("list", help="list bundled programs")
    return parser


def _load_program(ref: str):
    path = Path(ref)
    if path.is_file():
        return load_program(path)
    if ref in bundled_names():
        return load_bundled(ref)
    raise UsageError(f"no such program file or bundled program: {ref}")


def _stimulus(args):
    if not getattr(args, "stimulus", None):
        return None
    path = Path(args.stimulus)
    if not path.is_file():
        raise UsageError(f"no such stimulus file: {args.stimulus}")
    try:
        return load_stimulus(path.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise UsageError(f"bad stimulus file: {exc}") from None


def _ledger_out(ledger, fmt: str) -> str:
    rows = ledger_percentages(ledger)
    if fmt == "json":
        return json.dumps([{"resource": r.resource, "used": r.used_cell(), "free": r.free_cell()}
                           for r in rows], indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("resource", "used", "free"))
        for r in rows:
            w.writerow((r.resource, r.used_cell(), r.free_cell()))
        return buf.getvalue()
    return render_ledger(ledger)


def _simulate(args):
    program = _load_program(args.program)
    spec = resolve_spec(args.spec)
    state = load(program, spec, _stimulus(args))
    try:
        _, trace = run(state, getattr(args, "until", None))
        return state, trace, None
    except DeadlockDetected as exc:
        return state, exc.trace, exc


def cmd_validate(args, out):
    ledger = validate(_load_program(args.program), resolve_spec(args.spec))
    out.write(_ledger_out(ledger, args.format))
    return EXIT_OK


def cmd_run(args, out):
    state, trace, deadlock = _simulate(args)
    text = to_csv(trace) if args.format == "csv" else to_jsonl(trace)
    if args.trace_path:
        Path(args.trace_path).write_text(text, encoding="utf-8")
    else:
        out.write(text)
    if args.trace_path or args.format == "text":
        out.write(render_ledger(state.ledger))
    if deadlock is not None:
        raise deadlock
    return EXIT_OK


def cmd_profile(args, out):
    state, trace, deadlock = _simulate(args)
    profiles = profile(trace)
    render = reports_json if args.format == "json" else render_reports
    out.write(render(profiles, state.ledger))
    if deadlock is not None:
        raise deadlock
    return EXIT_OK


def cmd_analyze(args, out):
    program = _load_program(args.program)
    spec = resolve_spec(args.spec)
    validate(program, spec)
    bounds = xta_bounds(program, spec, args.contention, args.path_budget)
    rows = sorted(bounds.per_block.items(), key=lambda kv: _path_key(kv[0]))
    if args.format == "json":
        out.write(json.dumps({
            "best_ns": bounds.best_ns, "worst_ns": bounds.worst_ns, "paths": bounds.paths,
            "contention": args.contention, "assumed": list(bounds.assumed),
            "blocks": [{"block": k, "best_ns": b, "worst_ns": w} for k, (b, w) in rows],
        }, indent=2) + "\n")
        return EXIT_OK
    if args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("block", "best_ns", "worst_ns"))
        w.writerows((k, b, wc) for k, (b, wc) in rows)
        out.write(buf.getvalue())
        return EXIT_OK
    width = max([len("block")] + [len(k) for k, _ in rows])
    out.write(f"{'block'.ljust(width)}  {'best_ns':>10}  {'worst_ns':>10}\n")
    for k, (b, w) in rows:
        out.write(f"{k.ljust(width)}  {b:>10}  {w:>10}\n")
    out.write(f"\ncontention {args.contention}: best {bounds.best_ns} ns, "
              f"worst {bounds.worst_ns} ns over {bounds.paths} path(s)\n")
    for key in bounds.assumed:
        out.write(f"assumed zero wait: {key}\n")
    return EXIT_OK


def _path_key(block: str):
    return [(0, int(p), "") if p.isdigit() else (1, 0, p) for p in block.split("/")]


def cmd_render(args, out):
    state, trace, deadlock = _simulate(args)
    for t, grid in frames_from_trace(trace):
        out.write(f"@{t} ns\n{grid.render()}\n\n")
    if deadlock is not None:
        raise deadlock
    return EXIT_OK


def cmd_glyphs(args, out):
    try:
        glyphs = load_glyphs(args.glyphs)
    except FileNotFoundError:
        raise UsageError(f"no such glyph file: {args.glyphs}") from None
    for char, grid in zip(args.text, glyph_frames(args.text, glyphs)):
        out.write(f"{char}\n{grid.render()}\n\n")
    return EXIT_OK


def cmd_amdahl(args, out):
    table = amdahl_table(args.t1, args.serial, args.ns)
    limit = amdahl_limit_speedup(args.serial)
    if args.format == "json":
        out.write(json.dumps({
            "B": args.serial, "t1_ns": args.t1, "limit_speedup": None if limit == float("inf") else limit,
            "rows": [{"n": n, "t_n_ns": t, "speedup": s} for n, t, s in table],
        }, indent=2) + "\n")
        return EXIT_OK
    if args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("n", "t_n_ns", "speedup"))
        w.writerows((n, t, f"{s:.6f}") for n, t, s in table)
        out.write(buf.getvalue())
        return EXIT_OK
    out.write(f"{'n':>8}  {'T(n) ns':>14}  {'S(n)':>10}\n")
    for n, t, s in table:
        out.write(f"{n:>8}  {t:>14}  {s:>10.4f}\n")
    out.write(f"limit S = {'inf' if limit == float('inf') else f'{limit:.4f}'}\n")
    return EXIT_OK


def cmd_list(args, out):
    for name in bundled_names():
        out.write(name + "\n")
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate, "run": cmd_run, "profile": cmd_profile,
    "analyze": cmd_analyze, "render": cmd_render, "glyphs": cmd_glyphs,
    "amdahl": cmd_amdahl, "list": cmd_list,
}


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return COMMANDS[args.command](args, out)
    except UsageError as exc:
        err.write(f"xsim: error: {exc}\n")
        return EXIT_USAGE
    except XsimError as exc:
        err.write(f"xsim: {type(exc).__name__}: {exc}\n")
        return EXIT_DOMAIN
    except OSError as exc:
        err.write(f"xsim: error: {exc}\n")
        return EXIT_USAGE
