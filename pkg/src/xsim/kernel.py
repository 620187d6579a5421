"""Deterministic discrete-event execution of a validated program.

Timing model
------------
The shared pipeline issues one instruction per core-clock cycle. Issue slots
are handed out in *rounds*: a round starts with the set ``R`` of runnable
cores, lasts ``len(R)`` cycles, and gives each member exactly one slot, in
round-robin order starting from ``rr_cursor``. A slot's effect (channel
transfer, port write, ...) happens at the slot's own cycle; the issuing core
continues with its next statement when the round ends. So with ``n`` cores
runnable every core retires one instruction per ``2n`` ns at 500 MHz.

A core that is woken mid-round (rendezvous partner arrived, timer expired,
timed port write done) joins the next round. If the pipeline is idle when it
wakes, a new round starts at that instant.

At a single instant the kernel applies, in order: external events (timed
port drives, stimulus), the end of the current round, the start of the next
round, the slots issued at that instant, then wakeups. Blocked selects are
resolved in the wakeup phase, after every slot at that instant has been
issued, so the lowest-index ready case wins ties.

``Compute``, ``Par`` bookkeeping, loop control and task end cost no slots
beyond the instructions they declare; every other statement costs one slot.
"""

from __future__ import annotations

import copy
import heapq
from collections import deque
from dataclasses import dataclass, field

from . import ir
from .errors import (DeadlockDetected, SimulationError, TimestampInPast,
                     UnboundVariable, UnknownPort)
from .machine import DeviceSpec, ResourceLedger
from .trace import TraceEvent, sort_trace
from .validator import validate

RUNNABLE = "runnable"
BLOCKED = "blocked"
SUSPENDED = "suspended"
DONE = "done"

SCHEDULER_CORE = -1


class _Frame:
    __slots__ = ("stmts", "index", "left")

    def __init__(self, stmts, left=0):
        self.stmts = stmts
        self.index = 0
        self.left = left


class _Task:
    def __init__(self, name: str, body: ir.TaskBody, core: int, parent, started_ns: int):
        self.name = name
        self.core = core
        self.parent = parent
        self.frames = [_Frame(body.statements)]
        self.env: dict = {}
        self.status = RUNNABLE
        self.op = None
        self.op_seq = 0
        self.compute_left = 0
        self.compute_start = None
        self.needs_advance = True
        self.block = None  # (kind, since_ns, payload)
        self.pending_children = 0
        self.children: list = []
        self.started_ns = started_ns

    def describe_block(self) -> str:
        kind, _, payload = self.block
        if kind == "select":
            parts = []
            for event, _ in payload["cases"]:
                if isinstance(event, ir.ChanReadable):
                    parts.append(f"chan {event.channel}")
                elif isinstance(event, ir.TimerAt):
                    parts.append(f"timer {event.timer}")
                else:
                    parts.append(f"port {event.port}")
            return "select(" + ", ".join(parts) + ")"
        if kind in ("chan_out", "chan_in"):
            return f"{kind} {payload[0]}"
        return f"{kind} {payload}"


class _Round:
    __slots__ = ("start", "order", "seqs", "next_slot", "batch", "end", "cycle")

    def __init__(self, start, order, batch, cycle):
        self.start = start
        self.order = order
        self.seqs = [t.op_seq for t in order]
        self.batch = batch
        self.cycle = cycle
        self.end = start + batch * len(order) * cycle
        self.next_slot = len(order) if batch > 1 or _all_compute(order) else 0

    def next_slot_time(self):
        if self.next_slot >= len(self.order):
            return None
        return self.start + self.next_slot * self.cycle


def _all_compute(tasks) -> bool:
    return all(isinstance(t.op, ir.Compute) for t in tasks)


@dataclass
class SimState:
    program: ir.Program
    spec: DeviceSpec
    ledger: ResourceLedger
    now: int = 0
    port_values: dict = field(default_factory=dict)
    pending_rendezvous: dict = field(default_factory=dict)
    rr_cursor: int = 0
    tasks: list = field(default_factory=list)
    core_task: list = field(default_factory=list)
    core_held: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    finished: bool = False
    started: bool = False
    record_slots: bool = False
    slot_log: list = field(default_factory=list)
    instructions_retired: int = 0
    _externals: list = field(default_factory=list)
    _ext_seq: int = 0
    _round: _Round | None = None
    _woken: list = field(default_factory=list)

    @property
    def cores(self) -> list[str]:
        out = []
        for core, task in enumerate(self.core_task):
            if task is None:
                out.append("held" if self.core_held[core] else "idle")
            elif task.status == BLOCKED:
                out.append(f"blocked:{task.name}:{task.describe_block()}")
            else:
                out.append(f"running:{task.name}")
        return out

    @property
    def port_counters(self) -> dict:
        ticks = self.now // self.spec.tick_ns
        return {port: ticks for port in self.spec.port_widths}

    @property
    def timer_values(self) -> dict:
        timers = set()
        for stmt in ir.walk(self.program.main):
            timers |= ir.uses(stmt)[2]
        ticks = self.now // self.spec.tick_ns
        return {name: ticks for name in sorted(timers)}

    @property
    def allocated_cores(self) -> int:
        return sum(self.core_held)


def load(program: ir.Program, spec: DeviceSpec, stimulus=None, record_slots: bool = False) -> SimState:
    """Validate ``program`` and place its main task on core 0 at time 0."""
    ledger = validate(program, spec)
    state = SimState(program=program, spec=spec, ledger=ledger, record_slots=record_slots)
    state.port_values = {port: 0 for port in spec.port_widths}
    state.pending_rendezvous = {c: {"senders": deque(), "receivers": deque()} for c in program.channels}
    state.core_task = [None] * spec.core_count
    state.core_held = [False] * spec.core_count
    main = _Task("main", program.main, 0, None, 0)
    state.tasks.append(main)
    state.core_task[0] = main
    state.core_held[0] = True
    for at_ns, port, value in stimulus or ():
        if port not in spec.port_widths:
            raise UnknownPort(f"stimulus drives unknown port {port!r}")
        _push_external(state, at_ns, "stimulus", (port, value))
    return state


def _push_external(state: SimState, time_ns: int, kind: str, payload) -> None:
    heapq.heappush(state._externals, (time_ns, state._ext_seq, kind, payload))
    state._ext_seq += 1


def _clone(state: SimState) -> SimState:
    # program, spec and ledger are immutable; share them between copies
    memo = {id(state.program): state.program, id(state.spec): state.spec,
            id(state.ledger): state.ledger}
    for body in ir.task_bodies(state.program):
        memo[id(body.statements)] = body.statements
        for stmt in ir.walk(body):
            memo[id(stmt)] = stmt
            for child in ir.children(stmt):
                memo[id(child.statements)] = child.statements
    return copy.deepcopy(state, memo)


def run(state: SimState, until_ns: int | None = None):
    """Advance a copy of ``state`` to completion or to ``until_ns``.

    Returns ``(final_state, trace)``; the input state is left untouched.
    Raises :class:`DeadlockDetected` when tasks remain but nothing can move.
    """
    sim = _Kernel(_clone(state))
    sim.run(until_ns)
    return sim.state, sort_trace(sim.state.trace)


def step(state: SimState) -> SimState:
    """Process exactly one instant; returns the advanced copy."""
    sim = _Kernel(_clone(state))
    sim.step_once()
    return sim.state


def simulate(program: ir.Program, spec: DeviceSpec, stimulus=None, until_ns=None):
    return run(load(program, spec, stimulus), until_ns)


class _Kernel:
    def __init__(self, state: SimState):
        self.state = state
        self.spec = state.spec
        self.cycle = state.spec.cycle_ns
        self.tick = state.spec.tick_ns

    # -- driver -------------------------------------------------------------

    def next_time(self):
        st = self.state
        if not st.started:
            return 0
        times = []
        if st._round is not None:
            slot = st._round.next_slot_time()
            if slot is not None:
                times.append(slot)
            times.append(st._round.end)
        if st._externals:
            times.append(st._externals[0][0])
        return min(times) if times else None

    def run(self, until_ns):
        while True:
            t = self.next_time()
            if t is None:
                break
            if until_ns is not None and t > until_ns:
                self.state.now = max(self.state.now, until_ns)
                return
            self.instant(t)
        if not self.state.finished:
            self.deadlock()

    def step_once(self):
        t = self.next_time()
        if t is None:
            if not self.state.finished:
                self.deadlock()
            return
        self.instant(t)

    def instant(self, t: int):
        st = self.state
        st.now = t
        self.apply_externals(t)
        if not st.started:
            st.started = True
            self.emit(0, "core_alloc", 0, task="main")
            self.emit(0, "task_start", 0, task="main")
            self.advance(st.tasks[0], 0)
        if st._round is not None and st._round.end == t:
            self.end_round(t)
        if st._round is None:
            self.form_round(t)
        while True:
            self.issue_slots(t)
            self.resolve_wakeups(t)
            if st._round is None and self.form_round(t):
                continue
            break

    # -- events -------------------------------------------------------------

    def emit(self, t, kind, core, **detail):
        self.state.trace.append(TraceEvent(t, kind, core, detail))

    def apply_externals(self, t):
        st = self.state
        while st._externals and st._externals[0][0] == t:
            _, _, kind, payload = heapq.heappop(st._externals)
            if kind == "stimulus":
                port, value = payload
                st.port_values[port] = value & _port_mask(self.spec, port)
                self.emit(t, "port_drive", SCHEDULER_CORE, port=port, source="stimulus",
                          value=st.port_values[port])
            elif kind == "drive":
                task, port, value = payload
                st.port_values[port] = value
                self.emit(t, "port_drive", task.core, port=port, value=value, task=task.name,
                          blocked_ns=t - task.block[1])
                st._woken.append(task)
            elif kind == "timer":
                task, seq = payload
                if task.status == BLOCKED and task.block[0] == "timer_wait" and task.op_seq == seq:
                    self.emit(t, "timer_wake", task.core, task=task.name, timer=task.block[2],
                              blocked_ns=t - task.block[1])
                    st._woken.append(task)
            # "select" entries only make sure this instant is visited

    # -- rounds -------------------------------------------------------------

    def form_round(self, t) -> bool:
        st = self.state
        n_cores = self.spec.core_count
        runnable = [task for task in st.core_task
                    if task is not None and task.status == RUNNABLE and not task.needs_advance]
        if not runnable:
            return False
        runnable.sort(key=lambda task: (task.core - st.rr_cursor) % n_cores)
        length = len(runnable) * self.cycle
        batch = 1
        if _all_compute(runnable):
            batch = min(task.compute_left for task in runnable)
            if st._externals:
                horizon = st._externals[0][0] - t
                batch = max(1, min(batch, -(-horizon // length)))
        rnd = _Round(t, runnable, batch, self.cycle)
        for i, task in enumerate(runnable):
            if isinstance(task.op, ir.Compute) and task.compute_start is None:
                task.compute_start = t + i * self.cycle
        st._round = rnd
        return True

    def issue_slots(self, t):
        rnd = self.state._round
        if rnd is None:
            return
        while rnd.next_slot_time() == t:
            task = rnd.order[rnd.next_slot]
            rnd.next_slot += 1
            if task.status == RUNNABLE and task.op is not None and not isinstance(task.op, ir.Compute):
                self.execute(task, t)

    def end_round(self, t):
        st = self.state
        rnd = st._round
        st._round = None
        st.rr_cursor = (rnd.order[-1].core + 1) % self.spec.core_count
        if st.record_slots:
            for r in range(rnd.batch):
                for i, task in enumerate(rnd.order):
                    st.slot_log.append((rnd.start + (r * len(rnd.order) + i) * self.cycle, task.core))
        for task, seq in zip(rnd.order, rnd.seqs):
            if task.status != RUNNABLE or task.op_seq != seq:
                continue
            if isinstance(task.op, ir.Compute):
                task.compute_left -= rnd.batch
                st.instructions_retired += rnd.batch
                if task.compute_left == 0:
                    self.emit(t, "instr_block", task.core, task=task.name,
                              instructions=task.op.instructions, start_ns=task.compute_start)
                    self.complete_op(task)
        for task in rnd.order:
            if task.status == RUNNABLE and task.needs_advance:
                self.advance(task, t)

    def complete_op(self, task):
        task.op = None
        task.op_seq += 1
        task.needs_advance = True

    # -- slot operations ----------------------------------------------------

    def execute(self, task: _Task, t: int):
        st = self.state
        op = task.op
        if isinstance(op, ir.ChanOut):
            value = self.resolve(task, op.value) & ir.WORD_MASK
            queues = st.pending_rendezvous[op.channel]
            if queues["receivers"]:
                receiver = queues["receivers"].popleft()
                self.transfer(task, receiver, op.channel, value, t, sender_waited=0,
                              receiver_waited=t - receiver.block[1])
                receiver.env[receiver.block[2][1]] = value
                st._woken.append(receiver)
                self.complete_op(task)
            else:
                self.block(task, "chan_out", t, (op.channel, value))
                queues["senders"].append(task)
        elif isinstance(op, ir.ChanIn):
            queues = st.pending_rendezvous[op.channel]
            if queues["senders"]:
                sender = queues["senders"].popleft()
                value = sender.block[2][1]
                self.transfer(sender, task, op.channel, value, t,
                              sender_waited=t - sender.block[1], receiver_waited=0)
                task.env[op.bind] = value
                st._woken.append(sender)
                self.complete_op(task)
            else:
                self.block(task, "chan_in", t, (op.channel, op.bind))
                queues["receivers"].append(task)
        elif isinstance(op, ir.PortOut):
            value = self.resolve(task, op.value) & _port_mask(self.spec, op.port)
            st.port_values[op.port] = value
            self.emit(t, "port_drive", task.core, port=op.port, value=value, task=task.name,
                      blocked_ns=0)
            self.complete_op(task)
        elif isinstance(op, ir.PortOutAt):
            counter = t // self.tick
            if op.at_port_ticks <= counter:
                raise TimestampInPast(
                    f"task {task.name!r}: port {op.port!r} timestamp {op.at_port_ticks} "
                    f"is not after the current counter {counter}")
            value = self.resolve(task, op.value) & _port_mask(self.spec, op.port)
            self.block(task, "port_out_at", t, op.port)
            _push_external(st, op.at_port_ticks * self.tick, "drive", (task, op.port, value))
        elif isinstance(op, ir.PortIn):
            task.env[op.bind] = st.port_values[op.port]
            self.complete_op(task)
        elif isinstance(op, ir.TimerWaitUntil):
            target = op.at_ref_ticks * self.tick
            if target <= t:
                self.emit(t, "timer_wake", task.core, task=task.name, timer=op.timer, blocked_ns=0)
                self.complete_op(task)
            else:
                self.block(task, "timer_wait", t, op.timer)
                _push_external(st, target, "timer", (task, task.op_seq))
        elif isinstance(op, ir.Select):
            armed = {"cases": op.cases,
                     "ports": {e.port: st.port_values[e.port]
                               for e, _ in op.cases if isinstance(e, ir.PortChanged)}}
            case = self.ready_case(op.cases, armed["ports"], t, armed=False)
            if case is not None:
                task.block = ("select", t, armed)
                self.take_case(task, case, t)
                task.block = None
                self.complete_op(task)
            else:
                self.block(task, "select", t, armed)
                for event, _ in op.cases:
                    if isinstance(event, ir.TimerAt):
                        _push_external(st, event.at_ref_ticks * self.tick, "select", task)
        else:
            raise SimulationError(f"cannot issue {op!r}")

    def block(self, task, kind, t, payload):
        task.status = BLOCKED
        task.block = (kind, t, payload)

    def transfer(self, sender, receiver, channel, value, t, sender_waited, receiver_waited):
        self.emit(t, "chan_send", sender.core, task=sender.name, chan=channel, value=value,
                  blocked_ns=sender_waited)
        self.emit(t, "chan_recv", receiver.core, task=receiver.name, chan=channel, value=value,
                  blocked_ns=receiver_waited)

    def ready_case(self, cases, armed_ports, t, armed=True):
        st = self.state
        for j, (event, _) in enumerate(cases):
            if isinstance(event, ir.ChanReadable):
                if st.pending_rendezvous[event.channel]["senders"]:
                    return j
            elif isinstance(event, ir.TimerAt):
                if event.at_ref_ticks * self.tick <= t:
                    return j
            elif armed and st.port_values[event.port] != armed_ports[event.port]:
                return j
        return None

    def take_case(self, task, j, t):
        st = self.state
        event, body = task.block[2]["cases"][j]
        waited = t - task.block[1]
        if isinstance(event, ir.ChanReadable):
            sender = st.pending_rendezvous[event.channel]["senders"].popleft()
            value = sender.block[2][1]
            self.transfer(sender, task, event.channel, value, t,
                          sender_waited=t - sender.block[1], receiver_waited=0)
            if event.bind:
                task.env[event.bind] = value
            st._woken.append(sender)
        self.emit(t, "select_taken", task.core, task=task.name, case=j, blocked_ns=waited)
        task.frames.append(_Frame(body.statements))

    def resolve(self, task, value):
        if isinstance(value, int):
            return value
        try:
            return task.env[value]
        except KeyError:
            raise UnboundVariable(f"task {task.name!r} reads unbound variable {value!r}") from None

    # -- wakeups and control flow -------------------------------------------

    def resolve_wakeups(self, t):
        st = self.state
        for task in st.core_task:
            if task is None or task.status != BLOCKED or task.block[0] != "select":
                continue
            case = self.ready_case(task.block[2]["cases"], task.block[2]["ports"], t)
            if case is not None:
                self.take_case(task, case, t)
                st._woken.append(task)
        woken, st._woken = st._woken, []
        for task in sorted(woken, key=lambda x: x.core):
            task.status = RUNNABLE
            task.block = None
            self.complete_op(task)
            self.advance(task, t)
        if woken:
            self.cut_batch(t)

    def cut_batch(self, t):
        """End a batched round at its first boundary after ``t`` so newly
        runnable cores join as they would without batching."""
        rnd = self.state._round
        if rnd is None or rnd.batch == 1:
            return
        length = len(rnd.order) * self.cycle
        rounds = (t - rnd.start) // length + 1
        if rounds < rnd.batch:
            rnd.batch = rounds
            rnd.end = rnd.start + rounds * length

    def advance(self, task: _Task, t: int):
        """Run zero-cost statements until the task needs a slot, blocks, or ends."""
        task.needs_advance = False
        while True:
            if not task.frames:
                self.finish(task, t)
                return
            frame = task.frames[-1]
            if frame.index >= len(frame.stmts):
                if frame.left > 0:
                    frame.left -= 1
                    frame.index = 0
                else:
                    task.frames.pop()
                continue
            stmt = frame.stmts[frame.index]
            frame.index += 1
            if isinstance(stmt, ir.Compute):
                if stmt.instructions == 0:
                    continue
                task.compute_left = stmt.instructions
                task.compute_start = None
                self.set_op(task, stmt)
                return
            if isinstance(stmt, ir.Repeat):
                if stmt.count and stmt.body.statements:
                    task.frames.append(_Frame(stmt.body.statements, left=stmt.count - 1))
                continue
            if isinstance(stmt, ir.Par):
                self.fork(task, stmt, t)
                return
            self.set_op(task, stmt)
            return

    def set_op(self, task, stmt):
        task.op = stmt
        task.op_seq += 1
        task.status = RUNNABLE

    def fork(self, parent: _Task, par: ir.Par, t: int):
        st = self.state
        free = [c for c in range(self.spec.core_count) if not st.core_held[c]]
        needed = len(par.branches) - 1
        if needed > len(free):
            raise SimulationError(f"no free core for par in task {parent.name!r}")
        if st.allocated_cores + needed > st.ledger.cores_used:
            raise SimulationError("runtime core usage exceeds the validated ledger")
        parent.status = SUSPENDED
        parent.op = None
        parent.pending_children = len(par.branches)
        children = []
        for i, branch in enumerate(par.branches):
            core = parent.core if i == 0 else free[i - 1]
            if i:
                st.core_held[core] = True
                self.emit(t, "core_alloc", core, task=branch.name)
            child = _Task(branch.name, branch, core, parent, t)
            st.tasks.append(child)
            st.core_task[core] = child
            self.emit(t, "task_start", core, task=branch.name, parent=parent.name)
            children.append(child)
        parent.children = children
        for child in children:
            self.advance(child, t)

    def finish(self, task: _Task, t: int):
        st = self.state
        task.status = DONE
        task.op = None
        self.emit(t, "task_end", task.core, task=task.name)
        st.core_task[task.core] = None
        parent = task.parent
        if parent is None:
            st.core_held[task.core] = False
            self.emit(t, "core_free", task.core, task=task.name)
            st.finished = True
            return
        parent.pending_children -= 1
        if parent.pending_children:
            return
        for child in parent.children:
            if child.core != parent.core:
                st.core_held[child.core] = False
                self.emit(t, "core_free", child.core, task=child.name)
        st.core_task[parent.core] = parent
        parent.status = RUNNABLE
        self.advance(parent, t)

    def deadlock(self):
        st = self.state
        blocked = [{"task": task.name, "core": task.core, "on": task.describe_block(),
                    "since_ns": task.block[1]}
                   for task in st.tasks if task.status == BLOCKED]
        self.emit(st.now, "deadlock", SCHEDULER_CORE, blocked=blocked)
        names = ", ".join(f"{b['task']} ({b['on']})" for b in blocked)
        raise DeadlockDetected(f"deadlock at {st.now} ns: {names}", blocked,
                               sort_trace(st.trace), st)


def _port_mask(spec: DeviceSpec, port: str) -> int:
    return (1 << spec.port_widths[port]) - 1
