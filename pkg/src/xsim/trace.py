"""Trace events and their JSON-lines / CSV encodings."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

KINDS = (
    "task_start", "task_end", "instr_block", "chan_send", "chan_recv",
    "port_drive", "select_taken", "timer_wake", "core_alloc", "core_free",
    "deadlock",
)

COLUMNS = ("t_ns", "kind", "core", "detail")


@dataclass(frozen=True)
class TraceEvent:
    time_ns: int
    kind: str
    core: int
    detail: dict = field(default_factory=dict, hash=False)

    def to_dict(self) -> dict:
        return {"t_ns": self.time_ns, "kind": self.kind, "core": self.core, "detail": self.detail}

    def to_json(self) -> str:
        # sort_keys also orders the top-level keys, so build the line by hand
        detail = json.dumps(self.detail, sort_keys=True, separators=(",", ":"))
        return (f'{{"t_ns":{self.time_ns},"kind":{json.dumps(self.kind)},'
                f'"core":{self.core},"detail":{detail}}}')

    @classmethod
    def from_dict(cls, data: dict) -> "TraceEvent":
        return cls(int(data["t_ns"]), data["kind"], int(data["core"]), dict(data.get("detail") or {}))


def sort_trace(events: list) -> list:
    """Order by time, then core, keeping emission order for exact ties."""
    return sorted(events, key=lambda e: (e.time_ns, e.core))


def to_jsonl(events) -> str:
    return "".join(e.to_json() + "\n" for e in events)


def from_jsonl(text: str) -> list:
    return [TraceEvent.from_dict(json.loads(line)) for line in text.splitlines() if line.strip()]


def to_csv(events) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for e in events:
        writer.writerow([e.time_ns, e.kind, e.core,
                         json.dumps(e.detail, sort_keys=True, separators=(",", ":"))])
    return buf.getvalue()


def from_csv(text: str) -> list:
    rows = csv.DictReader(io.StringIO(text))
    return [TraceEvent(int(r["t_ns"]), r["kind"], int(r["core"]), json.loads(r["detail"])) for r in rows]


def load_stimulus(text: str) -> list:
    """Parse a stimulus schedule: a JSON list of ``{at_ns, port, value}``."""
    raw = json.loads(text)
    if not isinstance(raw, list):
        raise ValueError("stimulus file must hold a JSON list")
    schedule = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict) or set(item) != {"at_ns", "port", "value"}:
            raise ValueError(f"stimulus entry {i} must have exactly at_ns, port, value")
        at, value = item["at_ns"], item["value"]
        if not isinstance(at, int) or at < 0 or not isinstance(value, int) or value < 0:
            raise ValueError(f"stimulus entry {i} needs non-negative integer at_ns and value")
        schedule.append((at, item["port"], value))
    return schedule
