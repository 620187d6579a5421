
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from xsim.errors import DeadlockDetected, TimestampInPast, UnknownPort
from xsim.kernel import load, run, simulate, step
from xsim.machine import default_spec
from xsim.trace import to_jsonl

from conftest import program


def ends(trace):
    return {e.detail["task"]: e.time_ns for e in trace if e.kind == "task_end"}


def kinds(trace, kind):
    return [e for e in trace if e.kind == kind]


def par(*bodies, channels=(), **extra):
    tasks = {f"w{i}": list(b) for i, b in enumerate(bodies)}
    return program([{"op": "par", "tasks": list(tasks)}], tasks, channels=channels, **extra)


# -- initial state and basic timing ------------------------------------------

def test_load_places_main_on_core_zero(spec):
    state = load(program([{"op": "compute", "n": 1}]), spec)
    assert state.now == 0
    assert state.cores[0] == "running:main" and set(state.cores[1:]) == {"idle"}
    assert set(state.port_values.values()) == {0}
    assert set(state.port_counters.values()) == {0}


def test_par_of_four_allocates_four_cores(spec):
    state = step(load(par(*[[{"op": "compute", "n": 9}]] * 4), spec))
    assert state.allocated_cores == 4
    assert sum(c.startswith("running") for c in state.cores) == 4


def test_unknown_port_at_load(spec):
    with pytest.raises(UnknownPort):
        load(program([{"op": "port_out", "port": "gpio7", "value": 1}]), spec)


def test_single_compute(spec):
    _, trace = simulate(program([{"op": "compute", "n": 500}]), spec)
    assert ends(trace)["main"] == 1000
    (block,) = kinds(trace, "instr_block")
    assert block.detail["instructions"] == 500 and block.detail["start_ns"] == 0


def test_two_cores_share_the_pipeline(spec):
    _, trace = simulate(par([{"op": "compute", "n": 500}], [{"op": "compute", "n": 500}]), spec)
    assert ends(trace)["w0"] == ends(trace)["w1"] == 2000


def test_compute_zero(spec):
    _, trace = simulate(program([{"op": "compute", "n": 0}]), spec)
    assert ends(trace)["main"] == 0


def test_uneven_compute(spec):
    # 3 cores for 100 rounds, then 2 cores
    _, trace = simulate(par([{"op": "compute", "n": 100}], [{"op": "compute", "n": 300}],
                            [{"op": "compute", "n": 300}]), spec)
    e = ends(trace)
    assert e["w0"] == 600
    assert e["w1"] == e["w2"] == 600 + 200 * 4


# -- rendezvous ---------------------------------------------------------------

def test_rendezvous_completes_when_the_later_party_issues(spec):
    prog = par([{"op": "timer_wait", "timer": "ts", "at": 10},
                {"op": "chan_out", "chan": "c", "value": 0xDEAD}],
               [{"op": "timer_wait", "timer": "tr", "at": 30},
                {"op": "chan_in", "chan": "c", "bind": "x"},
                {"op": "port_out", "port": "led32", "value": "x"}],
               channels=["c"])
    final, trace = simulate(prog, spec)
    send, = kinds(trace, "chan_send")
    recv, = kinds(trace, "chan_recv")
    assert send.time_ns == recv.time_ns == 300
    assert recv.detail["value"] == 0xDEAD and final.port_values["led32"] == 0xDEAD
    assert send.detail["blocked_ns"] == 200 and recv.detail["blocked_ns"] == 0


def test_rendezvous_symmetric(spec):
    prog = par([{"op": "timer_wait", "timer": "ts", "at": 30},
                {"op": "chan_out", "chan": "c", "value": 5}],
               [{"op": "timer_wait", "timer": "tr", "at": 10},
                {"op": "chan_in", "chan": "c", "bind": "x"}],
               channels=["c"])
    _, trace = simulate(prog, spec)
    recv, = kinds(trace, "chan_recv")
    assert recv.time_ns == 300 and recv.detail["blocked_ns"] == 200 and recv.detail["value"] == 5


def test_rendezvous_under_contention(spec):
    # both compute side by side at 4 ns/instr; the sender then waits for the
    # receiver's remaining 99 instructions at full rate
    prog = par([{"op": "compute", "n": 50}, {"op": "chan_out", "chan": "c", "value": 1}],
               [{"op": "compute", "n": 149}, {"op": "chan_in", "chan": "c", "bind": "x"}],
               channels=["c"])
    _, trace = simulate(prog, spec)
    send, = kinds(trace, "chan_send")
    assert send.time_ns == 400 and send.detail["blocked_ns"] == 200


def test_two_receivers_deadlock(spec):
    prog = par([{"op": "chan_in", "chan": "c", "bind": "x"}],
               [{"op": "chan_in", "chan": "c", "bind": "y"}], channels=["c"])
    with pytest.raises(DeadlockDetected) as info:
        simulate(prog, spec)
    blocked = {b["task"] for b in info.value.blocked}
    assert blocked == {"w0", "w1"}
    assert info.value.trace[-1].kind == "deadlock"


def test_channel_waiters_are_fifo(spec):
    prog = par([{"op": "chan_out", "chan": "c", "value": 1}],
               [{"op": "chan_out", "chan": "c", "value": 2}],
               [{"op": "compute", "n": 10}, {"op": "chan_in", "chan": "c", "bind": "a"},
                {"op": "chan_in", "chan": "c", "bind": "b"}],
               channels=["c"])
    _, trace = simulate(prog, spec)
    assert [e.detail["value"] for e in kinds(trace, "chan_recv")] == [1, 2]


# -- select --------------------------------------------------------------------

def select_prog(cases, extra_tasks=(), channels=("c",)):
    return par([{"op": "select", "cases": cases}], *extra_tasks, channels=channels)


def test_select_timer_beats_silent_channel(spec):
    prog = program([{"op": "select", "cases": [
        {"on": "timer", "timer": "t", "at": 50, "body": []},
        {"on": "chan", "chan": "c", "body": []}]}], channels=["c"])
    _, trace = simulate(prog, spec)
    taken, = kinds(trace, "select_taken")
    assert taken.detail["case"] == 0 and taken.time_ns == 500


def test_select_tie_goes_to_lowest_index(spec):
    # the sender's slot and the timer both land at 10 ns
    prog = select_prog([{"on": "chan", "chan": "c", "bind": "v", "body": []},
                        {"on": "timer", "timer": "t", "at": 1, "body": []}],
                       [[{"op": "compute", "n": 4}, {"op": "chan_out", "chan": "c", "value": 3}]])
    _, trace = simulate(prog, spec)
    taken, = kinds(trace, "select_taken")
    assert taken.time_ns == 10 and taken.detail["case"] == 0
    flipped = select_prog([{"on": "timer", "timer": "t", "at": 1, "body": []},
                           {"on": "chan", "chan": "c", "body": []}],
                          [[{"op": "compute", "n": 4}, {"op": "chan_out", "chan": "c", "value": 3}]])
    with pytest.raises(DeadlockDetected):
        simulate(flipped, spec)  # timer case wins, the sender is then stranded


def test_select_ready_channel_dispatches_immediately(spec):
    prog_rev = par([{"op": "chan_out", "chan": "c", "value": 3}],
                   [{"op": "select", "cases": [{"on": "chan", "chan": "c", "body": []}]}], channels=["c"])
    _, trace = simulate(prog_rev, spec)
    taken, = kinds(trace, "select_taken")
    assert taken.detail["blocked_ns"] == 0 and taken.time_ns == 2


def test_select_on_port_change_with_stimulus(spec):
    prog = program([{"op": "select", "cases": [
        {"on": "port", "port": "button", "body": [{"op": "port_out", "port": "led_a", "value": 1}]}]}])
    final, trace = simulate(prog, spec, stimulus=[(700, "button", 1)])
    taken, = kinds(trace, "select_taken")
    assert taken.time_ns == 700
    assert final.port_values["led_a"] == 1


# -- timed output and timers ---------------------------------------------------

def test_timed_output_from_reset(spec):
    _, trace = simulate(program([{"op": "port_out_at", "port": "led32", "at": 100, "value": 1}]), spec)
    drive, = kinds(trace, "port_drive")
    assert drive.time_ns == 1000 and drive.detail["value"] == 1


def test_timed_output_sequence(spec):
    prog = program([{"op": "port_out_at", "port": "led32", "at": 100, "value": 1},
                    {"op": "port_out_at", "port": "led32", "at": 200, "value": 0}])
    _, trace = simulate(prog, spec)
    assert [(e.time_ns, e.detail["value"]) for e in kinds(trace, "port_drive")] == [(1000, 1), (2000, 0)]


def test_timestamp_in_past(spec):
    with pytest.raises(TimestampInPast):
        simulate(program([{"op": "port_out_at", "port": "led32", "at": 0, "value": 1}]), spec)


def test_timer_wait(spec):
    prog = program([{"op": "timer_wait", "timer": "t", "at": 7}, {"op": "compute", "n": 1}])
    _, trace = simulate(prog, spec)
    wake, = kinds(trace, "timer_wake")
    assert wake.time_ns == 70 and wake.detail["blocked_ns"] == 70
    assert ends(trace)["main"] == 72


def test_until_stops_early(spec):
    state, trace = run(load(program([{"op": "compute", "n": 1000}]), spec), until_ns=100)
    assert state.now == 100 and not state.finished
    assert "task_end" not in {e.kind for e in trace}
    rest, trace2 = run(state)
    assert ends(trace2)["main"] == 2000


def test_run_leaves_input_state_untouched(spec):
    state = load(program([{"op": "compute", "n": 10}]), spec)
    run(state)
    assert state.now == 0 and state.trace == []


def test_repeat_with_par_frees_cores(spec):
    tasks = {"a": [{"op": "compute", "n": 2}], "b": [{"op": "compute", "n": 3}]}
    prog = program([{"op": "repeat", "count": 3, "body": [{"op": "par", "tasks": ["a", "b"]}]}], tasks)
    final, trace = simulate(prog, spec)
    assert len(kinds(trace, "core_alloc")) == 1 + 3
    assert len(kinds(trace, "core_free")) == 1 + 3
    assert final.allocated_cores == 0


# -- invariants ----------------------------------------------------------------

compute_bodies = st.lists(st.lists(st.integers(1, 60), min_size=1, max_size=3), min_size=1, max_size=6)


def compute_par(bodies):
    return par(*[[{"op": "compute", "n": n} for n in body] for body in bodies])


@settings(max_examples=60, deadline=None)
@given(compute_bodies)
def test_conservation_and_fairness(bodies):
    spec = default_spec()
    state, trace = run(load(compute_par(bodies), spec, record_slots=True))
    total = sum(map(sum, bodies))
    assert state.instructions_retired == total
    # every cycle from 0 to the end granted exactly one slot: the pipeline never idles
    times = [t for t, _ in state.slot_log]
    assert times == list(range(0, 2 * total, 2))
    assert ends(trace)["main"] == 2 * total
    # between two slots of a core, every other core still running gets exactly one
    by_core = {}
    for t, core in state.slot_log:
        by_core.setdefault(core, []).append(t)
    for core, ts in by_core.items():
        for a, b in zip(ts, ts[1:]):
            between = [c for t, c in state.slot_log if a < t < b]
            assert len(between) == len(set(between))
            live = {c for c, cts in by_core.items() if c != core and cts[0] < a and cts[-1] > b}
            assert live <= set(between)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.lists(st.sampled_from(
    [("compute", 2), ("out", "led_a", 1), ("wait", 4), ("send", "c", 3), ("recv", "c")]),
    max_size=4), min_size=1, max_size=3))
def test_determinism(tasks):
    spec = default_spec()
    prog = oracles.to_program(tasks)
    outputs = []
    for _ in range(2):
        try:
            outputs.append(to_jsonl(simulate(prog, spec)[1]))
        except DeadlockDetected as exc:
            outputs.append(to_jsonl(exc.trace))
    assert outputs[0] == outputs[1]


def test_instruction_rate_is_capped(spec):
    prog = par([{"op": "compute", "n": 40}, {"op": "timer_wait", "timer": "t", "at": 30},
                {"op": "compute", "n": 10}], [{"op": "compute", "n": 25}])
    state, _ = run(load(prog, spec, record_slots=True))
    times = [t for t, _ in state.slot_log]
    assert len(times) == len(set(times))
    assert all(t % 2 == 0 for t in times)


# -- oracle equivalence ----------------------------------------------------------

def test_oracle_equivalence_small(spec):
    family = oracles.oracle_family(extra=50)[::7]
    failures = [(t, msg) for t in family if (msg := oracles.compare_with_oracles(spec, t))]
    assert failures == []


def test_wake_during_long_compute(spec):
    # the timer fires while the other core runs a batched block; the woken
    # core must join the very next round (232 ns), not the end of the block
    tasks = [[("wait", 23), ("compute", 1)], [("compute", 1000)]]
    _, trace = simulate(oracles.to_program(tasks), spec)
    assert ends(trace)["task0"] == 236
    assert ends(trace) == oracles.naive_schedule(tasks)["ends"]


def test_naive_oracle_hand_example():
    # one shared 4 ns round, then task0 alone for two 2 ns rounds
    expected = oracles.naive_schedule([[("compute", 3)], [("compute", 1)]])
    assert expected["ends"] == {"task0": 8, "task1": 4, "main": 8}
