"""Structured task programs: the simulator's input language.

A program is a tree of statements. ``Par`` forks named tasks onto free cores,
``Select`` waits on the first ready event, everything else is a straight-line
operation on channels, ports, timers or the issue pipeline.

Word-valued operands are either an ``int`` constant or the ``str`` name of a
variable bound earlier in the same task by ``ChanIn``/``PortIn``/a selected
channel case.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Union

Value = Union[int, str]

WORD_MASK = 0xFFFF_FFFF


@dataclass(frozen=True)
class Compute:
    instructions: int


@dataclass(frozen=True)
class ChanOut:
    channel: str
    value: Value
    wait_bound_ns: int | None = None


@dataclass(frozen=True)
class ChanIn:
    channel: str
    bind: str
    wait_bound_ns: int | None = None


@dataclass(frozen=True)
class PortOut:
    port: str
    value: Value


@dataclass(frozen=True)
class PortOutAt:
    port: str
    at_port_ticks: int
    value: Value
    wait_bound_ns: int | None = None


@dataclass(frozen=True)
class PortIn:
    port: str
    bind: str


@dataclass(frozen=True)
class TimerWaitUntil:
    timer: str
    at_ref_ticks: int
    wait_bound_ns: int | None = None


@dataclass(frozen=True)
class ChanReadable:
    channel: str
    bind: str | None = None
    wait_bound_ns: int | None = None


@dataclass(frozen=True)
class TimerAt:
    timer: str
    at_ref_ticks: int


@dataclass(frozen=True)
class PortChanged:
    port: str
    wait_bound_ns: int | None = None


Event = Union[ChanReadable, TimerAt, PortChanged]


@dataclass(frozen=True)
class TaskBody:
    name: str
    statements: tuple = ()


@dataclass(frozen=True)
class Select:
    cases: tuple  # of (Event, TaskBody)


@dataclass(frozen=True)
class Par:
    branches: tuple  # of TaskBody


@dataclass(frozen=True)
class Repeat:
    count: int | None  # None marks an unbounded loop; rejected by validation
    body: TaskBody


Stmt = Union[Compute, ChanOut, ChanIn, PortOut, PortOutAt, PortIn,
             TimerWaitUntil, Select, Par, Repeat]

#: statements that cost exactly one issue slot
SLOT_OPS = (ChanOut, ChanIn, PortOut, PortOutAt, PortIn, TimerWaitUntil, Select)


@dataclass(frozen=True)
class Program:
    name: str
    main: TaskBody
    channels: tuple = ()
    declared_stack_bytes: dict = field(default_factory=dict, hash=False)
    declared_program_bytes: int | None = None
    declared_chanends: int | None = None
    glyphs: str | None = None
    tasks: dict = field(default_factory=dict, hash=False)


def walk(body: TaskBody) -> Iterator[Stmt]:
    """Yield every statement under ``body`` in source order, descending into
    select cases, loop bodies and par branches."""
    for stmt in body.statements:
        yield stmt
        for child in children(stmt):
            yield from walk(child)


def children(stmt: Stmt) -> list[TaskBody]:
    if isinstance(stmt, Select):
        return [case_body for _, case_body in stmt.cases]
    if isinstance(stmt, Par):
        return list(stmt.branches)
    if isinstance(stmt, Repeat):
        return [stmt.body]
    return []


def task_bodies(program: Program) -> Iterator[TaskBody]:
    """The main task and every task reachable through ``Par``, each once."""
    stack = [program.main]
    while stack:
        body = stack.pop(0)
        yield body
        for stmt in walk_task(body):
            if isinstance(stmt, Par):
                stack.extend(stmt.branches)


def walk_task(body: TaskBody) -> Iterator[Stmt]:
    """Like :func:`walk` but stops at par branches, which are separate tasks."""
    for stmt in body.statements:
        yield stmt
        if not isinstance(stmt, Par):
            for child in children(stmt):
                yield from walk_task(child)


def uses(stmt: Stmt) -> tuple[set, set, set]:
    """(channels, ports, timers) named directly by ``stmt``."""
    chans, ports, timers = set(), set(), set()
    if isinstance(stmt, (ChanOut, ChanIn)):
        chans.add(stmt.channel)
    elif isinstance(stmt, (PortOut, PortOutAt, PortIn)):
        ports.add(stmt.port)
    elif isinstance(stmt, TimerWaitUntil):
        timers.add(stmt.timer)
    elif isinstance(stmt, Select):
        for event, _ in stmt.cases:
            if isinstance(event, ChanReadable):
                chans.add(event.channel)
            elif isinstance(event, TimerAt):
                timers.add(event.timer)
            else:
                ports.add(event.port)
    return chans, ports, timers
