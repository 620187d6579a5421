"""Static resource check: the compiler's core-allocation pass.

Demands are computed from the program tree alone. A ``Par`` needs the sum of
its branches' demands (the parent is suspended and branch 0 runs on its core);
sequential statements need the maximum of theirs.
"""

from __future__ import annotations

from . import ir
from .errors import (ChanendExhausted, CoreExhausted, MemoryExhausted,
                     TimerExhausted, UnboundedLoop, UnknownPort)
from .machine import DeviceSpec, ResourceLedger

BYTES_PER_STMT = 4
CHANENDS_PER_CHANNEL = 2


def core_demand(body: ir.TaskBody) -> int:
    peak = 1
    for stmt in body.statements:
        peak = max(peak, _stmt_cores(stmt))
    return peak


def _stmt_cores(stmt) -> int:
    if isinstance(stmt, ir.Par):
        return sum(core_demand(b) for b in stmt.branches)
    return max((core_demand(child) for child in ir.children(stmt)), default=1)


def stack_demand(body: ir.TaskBody, stacks: dict, own: str | None = None) -> int:
    """Peak bytes of live stack while ``body`` runs.

    A suspended parent keeps its frame, so a par adds its branches' peaks on
    top of the parent's own declared stack.
    """
    own_bytes = stacks.get(own if own is not None else body.name, 0)
    return own_bytes + _nested_stack(body, stacks)


def _nested_stack(body: ir.TaskBody, stacks: dict) -> int:
    extra = 0
    for stmt in body.statements:
        if isinstance(stmt, ir.Par):
            extra = max(extra, sum(stack_demand(b, stacks) for b in stmt.branches))
        else:
            for child in ir.children(stmt):
                extra = max(extra, _nested_stack(child, stacks))
    return extra


def count_statements(body: ir.TaskBody) -> int:
    return sum(1 for _ in ir.walk(body))


def _resources(program: ir.Program):
    ports, timers = set(), set()
    for stmt in ir.walk(program.main):
        _, p, t = ir.uses(stmt)
        ports |= p
        timers |= t
        if isinstance(stmt, ir.Repeat) and stmt.count is None:
            raise UnboundedLoop(f"loop {stmt.body.name!r} has no constant bound")
    return ports, timers


def validate(program: ir.Program, spec: DeviceSpec) -> ResourceLedger:
    ports, timers = _resources(program)
    unknown_ports = sorted(ports - set(spec.port_widths))
    if unknown_ports:
        raise UnknownPort(f"ports {unknown_ports} do not exist on this device")

    cores = core_demand(program.main)
    if cores > spec.core_count:
        raise CoreExhausted(f"program needs {cores} logical cores, device has {spec.core_count}")

    chanends = program.declared_chanends
    if chanends is None:
        chanends = CHANENDS_PER_CHANNEL * len(program.channels)
    if chanends > spec.chanend_count:
        raise ChanendExhausted(f"program needs {chanends} chanends, device has {spec.chanend_count}")

    if len(timers) > spec.timer_count:
        raise TimerExhausted(f"program uses {len(timers)} timers, device has {spec.timer_count}")

    stack = stack_demand(program.main, program.declared_stack_bytes, own="main")
    code = program.declared_program_bytes
    if code is None:
        code = BYTES_PER_STMT * count_statements(program.main)
    if stack + code > spec.memory_bytes:
        raise MemoryExhausted(
            f"program needs {stack + code} bytes ({stack} stack + {code} code), "
            f"device has {spec.memory_bytes}")

    return ResourceLedger(
        chanends_used=chanends,
        cores_used=cores,
        timers_used=len(timers),
        stack_bytes_used=stack,
        program_bytes_used=code,
        spec=spec,
    )
