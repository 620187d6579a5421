"""Per-task profiles from a trace and the three report shapes built on them."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from decimal import Decimal

from .errors import IncompleteTrace
from .machine import DeviceSpec, ResourceLedger, ledger_percentages
from .trace import sort_trace

MICRO_THRESHOLD_NS = 1000


@dataclass(frozen=True)
class TaskProfile:
    task_name: str
    instructions_retired: int
    busy_ns: int
    blocked_ns: int
    end_to_end_ns: int


class _Acc:
    __slots__ = ("name", "instructions", "blocked", "elapsed", "open_since",
                 "fork_since", "live_children")

    def __init__(self, name):
        self.name = name
        self.instructions = 0
        self.blocked = 0
        self.elapsed = 0
        self.open_since = None
        self.fork_since = None
        self.live_children = 0


def profile(trace) -> list[TaskProfile]:
    """Aggregate a complete trace per task, ordered by first start.

    ``blocked_ns`` covers rendezvous, event and timed waits plus the time a
    parent spends suspended until its par branches join. The rest of the
    span between start and end is busy time, slot contention included.
    A task forked more than once accumulates over all its runs.
    """
    accs: dict[str, _Acc] = {}
    parent_of: dict[str, _Acc] = {}
    deadlock = None

    for e in sort_trace(list(trace)):
        name = e.detail.get("task")
        if e.kind == "task_start":
            acc = accs.setdefault(name, _Acc(name))
            if acc.open_since is not None:
                raise IncompleteTrace(f"task {name!r} started twice without ending")
            acc.open_since = e.time_ns
            parent = accs.get(e.detail.get("parent"))
            if parent is not None:
                parent_of[name] = parent
                if parent.live_children == 0:
                    parent.fork_since = e.time_ns
                parent.live_children += 1
        elif e.kind == "deadlock":
            deadlock = e
        elif name is None or e.kind in ("core_alloc", "core_free"):
            continue
        elif name not in accs or accs[name].open_since is None:
            raise IncompleteTrace(f"{e.kind} for task {name!r} outside its run")
        elif e.kind == "task_end":
            acc = accs[name]
            acc.elapsed += e.time_ns - acc.open_since
            acc.open_since = None
            parent = parent_of.get(name)
            if parent is not None:
                parent.live_children -= 1
                if parent.live_children == 0:
                    parent.blocked += e.time_ns - parent.fork_since
        elif e.kind == "instr_block":
            accs[name].instructions += e.detail["instructions"]
        elif "blocked_ns" in e.detail:
            accs[name].blocked += e.detail["blocked_ns"]

    open_tasks = [a for a in accs.values() if a.open_since is not None]
    if open_tasks and deadlock is None:
        raise IncompleteTrace("tasks without task_end: " + ", ".join(a.name for a in open_tasks))
    if deadlock is not None:
        end = deadlock.time_ns
        for entry in deadlock.detail.get("blocked", ()):
            acc = accs.get(entry["task"])
            if acc is not None and "since_ns" in entry:
                acc.blocked += end - entry["since_ns"]
        for acc in open_tasks:
            acc.elapsed += end - acc.open_since
            if acc.live_children:
                acc.blocked += end - acc.fork_since

    return [TaskProfile(a.name, a.instructions, a.elapsed - a.blocked, a.blocked, a.elapsed)
            for a in accs.values()]


def format_duration(ns: int) -> str:
    """``125ns`` below a microsecond, otherwise ``2.548 micro sec``."""
    if ns < MICRO_THRESHOLD_NS:
        return f"{ns}ns"
    return f"{Decimal(ns) / 1000:.3f} micro sec"


def _table(headers, rows) -> list[str]:
    widths = [max(len(str(c)) for c in col) for col in zip(headers, *rows)]
    lines = []
    for row in [headers, *rows]:
        lines.append("  ".join(str(c).ljust(w) for c, w in zip(row, widths)).rstrip())
    return lines


def platform_summary(spec: DeviceSpec) -> str:
    return (f"{spec.core_count} logical cores, {spec.chanend_count} channels, "
            f"{spec.memory_bytes} bytes memory, {spec.timer_count} timers, "
            f"{spec.core_clock_hz // 1_000_000} MHz core clock, "
            f"{spec.port_clock_hz // 1_000_000} MHz port clock")


def render_ledger(ledger: ResourceLedger | None) -> str:
    """Used/free table for a ledger; headers only when there is none."""
    rows = ledger_percentages(ledger) if ledger is not None else []
    lines = ["Resource usage"]
    lines += _table(("Resource", "Used", "Free"),
                    [(r.resource, r.used_cell(), r.free_cell()) for r in rows])
    return "\n".join(lines) + "\n"


def render_reports(profiles, ledger: ResourceLedger | None = None,
                   spec: DeviceSpec | None = None) -> str:
    """Task time table, resource usage table and platform summary as text."""
    if spec is None and ledger is not None:
        spec = ledger.spec
    out = ["Task execution time"]
    out += _table(("Task", "Time"), [(p.task_name, format_duration(p.end_to_end_ns))
                                     for p in profiles])
    out += ["", render_ledger(ledger), "Platform"]
    if spec is not None:
        out.append(platform_summary(spec))
    return "\n".join(out) + "\n"


def reports_json(profiles, ledger: ResourceLedger | None = None,
                 spec: DeviceSpec | None = None) -> str:
    if spec is None and ledger is not None:
        spec = ledger.spec
    rows = ledger_percentages(ledger) if ledger is not None else []
    doc = {
        "tasks": [dict(asdict(p), time=format_duration(p.end_to_end_ns)) for p in profiles],
        "resources": [
            {"resource": r.resource, "used": r.used, "used_pct": str(r.used_pct),
             "free": r.free, "free_pct": None if r.free_pct is None else str(r.free_pct),
             "used_cell": r.used_cell(), "free_cell": r.free_cell()}
            for r in rows
        ],
        "platform": spec.to_dict() if spec is not None else None,
    }
    return json.dumps(doc, indent=2) + "\n"
