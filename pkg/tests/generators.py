"""Seeded random programs for the timing-bound bracketing checks."""

from __future__ import annotations

import json
import random

from xsim.analysis import xta_bounds
from xsim.kernel import simulate
from xsim.machine import default_spec
from xsim.parser import parse_program

CYCLE_NS = 2


class _Gen:
    def __init__(self, rng: random.Random, contention: int):
        self.rng = rng
        self.s = CYCLE_NS * contention
        self.c = contention

    def future_tick(self, ub):
        # strictly after any instant the issuing slot could occupy
        return (ub + self.s) // 10 + self.rng.randint(1, 25)

    def body(self, ub, depth, in_loop, size=None):
        stmts = []
        for _ in range(size if size is not None else self.rng.randint(0, 4)):
            stmt, ub = self.stmt(ub, depth, in_loop)
            stmts.append(stmt)
        return stmts, ub

    def stmt(self, ub, depth, in_loop):
        rng, s = self.rng, self.s
        kinds = ["compute", "compute", "out", "in", "wait"]
        if not in_loop:
            kinds.append("out_at")
        if depth < 2:
            kinds += ["select", "repeat"]
        kind = rng.choice(kinds)
        if kind == "compute":
            n = rng.randint(1, 40)
            return {"op": "compute", "n": n}, ub + n * s
        if kind == "out":
            return {"op": "port_out", "port": "led_a", "value": rng.randint(0, 1)}, ub + s
        if kind == "in":
            return {"op": "port_in", "port": "button", "bind": "b"}, ub + s
        if kind == "wait":
            at = max(0, ub // 10 + rng.randint(-5, 25))
            return {"op": "timer_wait", "timer": "t0", "at": at}, ub + at * 10 + s
        if kind == "out_at":
            at = self.future_tick(ub)
            return ({"op": "port_out_at", "port": "led32", "at": at, "value": rng.randint(0, 7)},
                    ub + at * 10 + s)
        if kind == "select":
            cases, ends = [], []
            for _ in range(rng.randint(1, 3)):
                at = max(0, ub // 10 + rng.randint(-5, 25))
                body, end = self.body(ub + at * 10 + s, depth + 1, in_loop)
                cases.append({"on": "timer", "timer": "t1", "at": at, "body": body})
                ends.append(end)
            return {"op": "select", "cases": cases}, max(ends)
        count = rng.randint(0, 3)
        body, end = self.body(0, depth + 1, True)
        # a loop body's timestamps only matter on its first pass
        first, _ = body, end
        return {"op": "repeat", "count": count, "body": first}, ub + count * end


def random_target(rng: random.Random, contention: int) -> list:
    """A rendezvous-free statement list whose timed port writes never lie in the past."""
    stmts, _ = _Gen(rng, contention).body(0, 0, False, size=rng.randint(1, 5))
    return stmts


def standalone(stmts) -> "object":
    return parse_program(json.dumps({"name": "target", "main": stmts}))


def with_background(stmts, contention: int, busy_ns: int):
    """``stmts`` as task ``target`` beside ``contention - 1`` always-runnable compute tasks."""
    tasks = {"target": stmts}
    n = busy_ns // CYCLE_NS + 100
    for i in range(1, contention):
        tasks[f"bg{i}"] = [{"op": "compute", "n": n}]
    doc = {"name": "bracket", "tasks": tasks, "main": [{"op": "par", "tasks": list(tasks)}]}
    return parse_program(json.dumps(doc))


def target_span(trace) -> int:
    start = next(e.time_ns for e in trace if e.kind == "task_start" and e.detail["task"] == "target")
    end = next(e.time_ns for e in trace if e.kind == "task_end" and e.detail["task"] == "target")
    return end - start


def bracket_violations(count, seed):
    """Programs whose simulated span falls outside their static bounds."""
    spec = default_spec()
    rng = random.Random(seed)
    bad = []
    for _ in range(count):
        c = rng.randint(1, 4)
        stmts = random_target(rng, c)
        b = xta_bounds(standalone(stmts), spec, c)
        _, trace = simulate(with_background(stmts, c, b.worst_ns), spec)
        span = target_span(trace)
        if not b.best_ns <= span <= b.worst_ns:
            bad.append((c, stmts, b.best_ns, span, b.worst_ns))
    return bad
