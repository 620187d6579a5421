import random

import pytest

from xsim.errors import (ChanendExhausted, CoreExhausted, MemoryExhausted, TimerExhausted,
                         UnboundedLoop, UnknownPort)
from xsim.parser import load_bundled
from xsim.validator import core_demand, stack_demand, validate

from conftest import program


def par_of(n, body=None):
    tasks = {f"w{i}": list(body or []) for i in range(n)}
    return [{"op": "par", "tasks": list(tasks)}], tasks


def test_sequential_program_uses_one_core(spec):
    led = validate(program([{"op": "compute", "n": 5}]), spec)
    assert led.cores_used == 1 and led.chanends_used == 0 and led.timers_used == 0


def test_eight_branches_fit(spec):
    assert validate(program(*par_of(8)), spec).cores_used == 8


def test_nine_branches_exhaust_cores(spec):
    with pytest.raises(CoreExhausted):
        validate(program(*par_of(9)), spec)


def test_nested_par_adds_up(spec):
    tasks = {"outer1": [{"op": "par", "tasks": ["in1", "in2", "in3"]}], "outer2": [],
             "in1": [], "in2": [], "in3": []}
    prog = program([{"op": "par", "tasks": ["outer1", "outer2"]}], tasks)
    assert core_demand(prog.main) == 4


def test_sequential_pars_take_the_max(spec):
    tasks = {"a": [], "b": [], "c": [], "d": [], "e": []}
    prog = program([{"op": "par", "tasks": ["a", "b"]}, {"op": "par", "tasks": ["c", "d", "e"]}], tasks)
    assert validate(prog, spec).cores_used == 3


def test_par_order_does_not_matter(spec):
    rng = random.Random(7)
    tasks = {f"w{i}": [{"op": "compute", "n": i}] for i in range(5)}
    tasks["w0"] = [{"op": "par", "tasks": ["x", "y"]}]
    tasks.update(x=[], y=[])
    stacks = {name: rng.randint(0, 100) for name in tasks}
    names = [f"w{i}" for i in range(5)]
    seen = set()
    for _ in range(5):
        rng.shuffle(names)
        led = validate(program([{"op": "par", "tasks": list(names)}], tasks, stacks=stacks), spec)
        seen.add((led.cores_used, led.stack_bytes_used, led.program_bytes_used))
    assert len(seen) == 1


def test_chanends_two_per_channel(spec):
    assert validate(program([], channels=["a", "b", "c"]), spec).chanends_used == 6


def test_declared_chanends_win(spec):
    assert validate(program([], channels=["a"], chanends=3), spec).chanends_used == 3


def test_chanend_exhaustion(spec):
    with pytest.raises(ChanendExhausted):
        validate(program([], chanends=33), spec)
    with pytest.raises(ChanendExhausted):
        validate(program([], channels=[f"c{i}" for i in range(17)]), spec)


def test_timers_counted_once_each(spec):
    main = [{"op": "timer_wait", "timer": "t", "at": 5}, {"op": "timer_wait", "timer": "t", "at": 9},
            {"op": "select", "cases": [{"on": "timer", "timer": "u", "at": 3, "body": []}]}]
    assert validate(program(main), spec).timers_used == 2


def test_timer_exhaustion(spec):
    main = [{"op": "timer_wait", "timer": f"t{i}", "at": 1} for i in range(11)]
    with pytest.raises(TimerExhausted):
        validate(program(main), spec)


def test_program_bytes_default_and_override(spec):
    main = [{"op": "compute", "n": 1}, {"op": "repeat", "count": 2, "body": [{"op": "compute", "n": 1}]}]
    assert validate(program(main), spec).program_bytes_used == 12
    assert validate(program(main, program_bytes=4120), spec).program_bytes_used == 4120


def test_stack_sums_live_tasks(spec):
    main, tasks = par_of(3)
    stacks = {"main": 10, "w0": 100, "w1": 200, "w2": 300}
    prog = program(main, tasks, stacks=stacks)
    assert stack_demand(prog.main, prog.declared_stack_bytes, own="main") == 610


def test_memory_exhaustion(spec):
    with pytest.raises(MemoryExhausted):
        validate(program([], stacks={"main": 60000}, program_bytes=6000), spec)


def test_unbounded_loop(spec):
    with pytest.raises(UnboundedLoop):
        validate(program([{"op": "repeat", "count": None, "body": []}]), spec)


def test_unknown_port(spec):
    with pytest.raises(UnknownPort):
        validate(program([{"op": "port_out", "port": "gpio9", "value": 1}]), spec)


def test_servo_ledger(spec):
    led = validate(load_bundled("servo"), spec)
    assert (led.cores_used, led.timers_used, led.chanends_used) == (1, 1, 0)
    assert led.memory_bytes_used == 336


def test_multitask_ledger(spec):
    led = validate(load_bundled("multitask4"), spec)
    assert (led.chanends_used, led.cores_used, led.timers_used) == (3, 4, 4)
    assert (led.stack_bytes_used, led.program_bytes_used) == (604, 4120)
