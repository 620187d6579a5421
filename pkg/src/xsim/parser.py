"""JSON program files <-> :class:`~xsim.ir.Program`.

Statements are tagged objects::

    {"op": "port_out_at", "port": "led32", "at": 100, "value": 1}

``main`` is a statement list; ``tasks`` maps task names to statement lists and
``par`` refers to them by name, so each named task is one parallel branch.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from . import ir
from .errors import DuplicateName, ParseError, UnknownConstruct

TOP_LEVEL_KEYS = {"name", "channels", "tasks", "main", "stacks", "program_bytes",
                  "chanends", "glyphs"}

_STMT_FIELDS = {
    "compute": {"n"},
    "chan_out": {"chan", "value", "wait_bound_ns"},
    "chan_in": {"chan", "bind", "wait_bound_ns"},
    "port_out": {"port", "value"},
    "port_out_at": {"port", "at", "value", "wait_bound_ns"},
    "port_in": {"port", "bind"},
    "timer_wait": {"timer", "at", "wait_bound_ns"},
    "select": {"cases"},
    "par": {"tasks"},
    "repeat": {"count", "body"},
}

_CASE_FIELDS = {
    "chan": {"chan", "bind", "wait_bound_ns", "body"},
    "timer": {"timer", "at", "body"},
    "port": {"port", "wait_bound_ns", "body"},
}


def _reject_duplicates(pairs):
    seen = {}
    for key, value in pairs:
        if key in seen:
            raise DuplicateName(f"duplicate key {key!r}")
        seen[key] = value
    return seen


class _Decoder:
    def __init__(self, raw: dict):
        self.raw = raw
        self.channels: tuple = ()
        self.task_specs: dict = {}
        self.built: dict = {}
        self.in_progress: set = set()
        self.referenced: set = set()

    def program(self) -> ir.Program:
        raw = self.raw
        if not isinstance(raw, dict):
            raise ParseError("program must be a JSON object")
        unknown = set(raw) - TOP_LEVEL_KEYS
        if unknown:
            raise UnknownConstruct(f"unknown top-level keys {sorted(unknown)}")
        name = raw.get("name")
        if not isinstance(name, str) or not name:
            raise ParseError("program needs a non-empty string 'name'", path="name")

        channels = raw.get("channels", [])
        if not isinstance(channels, list) or not all(isinstance(c, str) for c in channels):
            raise ParseError("'channels' must be a list of names", path="channels")
        if len(set(channels)) != len(channels):
            raise DuplicateName("channel declared twice", path="channels")
        self.channels = tuple(channels)

        tasks = raw.get("tasks", {})
        if not isinstance(tasks, dict):
            raise ParseError("'tasks' must map task names to statement lists", path="tasks")
        if "main" in tasks:
            raise DuplicateName("'main' is reserved for the entry task", path="tasks.main")
        self.task_specs = tasks

        main = self.task("main", raw.get("main", []), "main")
        for task_name in tasks:
            if task_name not in self.built:
                self.task(task_name, tasks[task_name], f"tasks.{task_name}")

        stacks = raw.get("stacks", {})
        if not isinstance(stacks, dict) or not all(_is_nat(v) for v in stacks.values()):
            raise ParseError("'stacks' must map task names to byte counts", path="stacks")
        for task_name in stacks:
            if task_name != "main" and task_name not in tasks:
                raise ParseError(f"stack declared for unknown task {task_name!r}", path="stacks")

        program_bytes = raw.get("program_bytes")
        if program_bytes is not None and not _is_nat(program_bytes):
            raise ParseError("'program_bytes' must be a non-negative integer", path="program_bytes")
        chanends = raw.get("chanends")
        if chanends is not None and not _is_nat(chanends):
            raise ParseError("'chanends' must be a non-negative integer", path="chanends")
        glyphs = raw.get("glyphs")
        if glyphs is not None and not isinstance(glyphs, str):
            raise ParseError("'glyphs' must name a glyph set", path="glyphs")

        return ir.Program(
            name=name,
            main=main,
            channels=self.channels,
            declared_stack_bytes=dict(stacks),
            declared_program_bytes=program_bytes,
            declared_chanends=chanends,
            glyphs=glyphs,
            tasks={task_name: self.built[task_name] for task_name in tasks},
        )

    def task(self, name: str, raw_stmts, path: str) -> ir.TaskBody:
        if name in self.built:
            return self.built[name]
        self.in_progress.add(name)
        body = self.body(name, raw_stmts, path)
        self.in_progress.discard(name)
        _check_bindings(body, path)
        self.built[name] = body
        return body

    def body(self, name: str, raw_stmts, path: str) -> ir.TaskBody:
        if not isinstance(raw_stmts, list):
            raise ParseError("statement list expected", path=path)
        stmts = tuple(self.stmt(s, f"{path}[{i}]", f"{name}/{i}") for i, s in enumerate(raw_stmts))
        return ir.TaskBody(name, stmts)

    def stmt(self, raw, path: str, block: str):
        if not isinstance(raw, dict) or "op" not in raw:
            raise ParseError("statement must be an object with an 'op'", path=path)
        op = raw["op"]
        if op not in _STMT_FIELDS:
            raise UnknownConstruct(f"unknown statement op {op!r}", path=path)
        extra = set(raw) - _STMT_FIELDS[op] - {"op"}
        if extra:
            raise UnknownConstruct(f"unexpected fields {sorted(extra)} for {op!r}", path=path)

        if op == "compute":
            return ir.Compute(_nat(raw, "n", path))
        if op == "chan_out":
            return ir.ChanOut(self.chan(raw, path), _value(raw, path), _bound(raw, path))
        if op == "chan_in":
            return ir.ChanIn(self.chan(raw, path), _name(raw, "bind", path), _bound(raw, path))
        if op == "port_out":
            return ir.PortOut(_name(raw, "port", path), _value(raw, path))
        if op == "port_out_at":
            return ir.PortOutAt(_name(raw, "port", path), _nat(raw, "at", path),
                                _value(raw, path), _bound(raw, path))
        if op == "port_in":
            return ir.PortIn(_name(raw, "port", path), _name(raw, "bind", path))
        if op == "timer_wait":
            return ir.TimerWaitUntil(_name(raw, "timer", path), _nat(raw, "at", path),
                                     _bound(raw, path))
        if op == "select":
            return self.select(raw, path, block)
        if op == "par":
            return self.par(raw, path)
        count = raw.get("count", "missing")
        if count is not None and not _is_nat(count):
            raise ParseError("repeat 'count' must be a non-negative integer or null", path=path)
        return ir.Repeat(count, self.body(f"{block}/body", raw.get("body", []), f"{path}.body"))

    def select(self, raw, path: str, block: str) -> ir.Select:
        cases = raw.get("cases")
        if not isinstance(cases, list) or not cases:
            raise ParseError("select needs at least one case", path=path)
        built = []
        for j, case in enumerate(cases):
            case_path = f"{path}.cases[{j}]"
            if not isinstance(case, dict) or case.get("on") not in _CASE_FIELDS:
                raise UnknownConstruct("case needs 'on' of chan/timer/port", path=case_path)
            on = case["on"]
            extra = set(case) - _CASE_FIELDS[on] - {"on"}
            if extra:
                raise UnknownConstruct(f"unexpected fields {sorted(extra)} in {on!r} case", path=case_path)
            if on == "chan":
                bind = case.get("bind")
                if bind is not None and not isinstance(bind, str):
                    raise ParseError("'bind' must be a variable name", path=case_path)
                event = ir.ChanReadable(self.chan(case, case_path), bind, _bound(case, case_path))
            elif on == "timer":
                event = ir.TimerAt(_name(case, "timer", case_path), _nat(case, "at", case_path))
            else:
                event = ir.PortChanged(_name(case, "port", case_path), _bound(case, case_path))
            body = self.body(f"{block}/case{j}", case.get("body", []), f"{case_path}.body")
            built.append((event, body))
        return ir.Select(tuple(built))

    def par(self, raw, path: str) -> ir.Par:
        names = raw.get("tasks")
        if not isinstance(names, list) or not names or not all(isinstance(n, str) for n in names):
            raise ParseError("par needs a non-empty list of task names", path=path)
        branches = []
        for task_name in names:
            if task_name not in self.task_specs:
                raise ParseError(f"par refers to undefined task {task_name!r}", path=path)
            if task_name in self.referenced:
                raise DuplicateName(f"task {task_name!r} started by more than one par branch", path=path)
            if task_name in self.in_progress:
                raise ParseError(f"task {task_name!r} forks itself", path=path)
            self.referenced.add(task_name)
            branches.append(self.task(task_name, self.task_specs[task_name], f"tasks.{task_name}"))
        return ir.Par(tuple(branches))

    def chan(self, raw, path: str) -> str:
        channel = _name(raw, "chan", path)
        if channel not in self.channels:
            raise ParseError(f"undeclared channel {channel!r}", path=path)
        return channel


def _is_nat(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool) and value >= 0


def _nat(raw, key, path):
    value = raw.get(key)
    if not _is_nat(value):
        raise ParseError(f"{key!r} must be a non-negative integer", path=path)
    return value


def _name(raw, key, path):
    value = raw.get(key)
    if not isinstance(value, str) or not value:
        raise ParseError(f"{key!r} must be a non-empty name", path=path)
    return value


def _value(raw, path):
    value = raw.get("value")
    if isinstance(value, str) and value:
        return value
    if _is_nat(value) and value <= ir.WORD_MASK:
        return value
    raise ParseError("'value' must be a 32-bit word or a variable name", path=path)


def _bound(raw, path):
    value = raw.get("wait_bound_ns")
    if value is not None and not _is_nat(value):
        raise ParseError("'wait_bound_ns' must be a non-negative integer", path=path)
    return value


def _check_bindings(body: ir.TaskBody, path: str) -> None:
    bound = set()
    used = []
    for stmt in ir.walk_task(body):
        if isinstance(stmt, (ir.ChanIn, ir.PortIn)):
            bound.add(stmt.bind)
        elif isinstance(stmt, ir.Select):
            bound.update(e.bind for e, _ in stmt.cases if isinstance(e, ir.ChanReadable) and e.bind)
        if isinstance(stmt, (ir.ChanOut, ir.PortOut, ir.PortOutAt)) and isinstance(stmt.value, str):
            used.append(stmt.value)
    for var in used:
        if var not in bound:
            raise ParseError(f"variable {var!r} is never bound in task {body.name!r}", path=path)


def parse_program(text: str) -> ir.Program:
    try:
        raw = json.loads(text, object_pairs_hook=_reject_duplicates)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno, column=exc.colno) from None
    return _Decoder(raw).program()


def load_program(path) -> ir.Program:
    return parse_program(Path(path).read_text(encoding="utf-8"))


# -- serialisation -----------------------------------------------------------

def _with_bound(out, bound):
    if bound is not None:
        out["wait_bound_ns"] = bound
    return out


def stmt_to_json(stmt) -> dict:
    if isinstance(stmt, ir.Compute):
        return {"op": "compute", "n": stmt.instructions}
    if isinstance(stmt, ir.ChanOut):
        return _with_bound({"op": "chan_out", "chan": stmt.channel, "value": stmt.value}, stmt.wait_bound_ns)
    if isinstance(stmt, ir.ChanIn):
        return _with_bound({"op": "chan_in", "chan": stmt.channel, "bind": stmt.bind}, stmt.wait_bound_ns)
    if isinstance(stmt, ir.PortOut):
        return {"op": "port_out", "port": stmt.port, "value": stmt.value}
    if isinstance(stmt, ir.PortOutAt):
        return _with_bound({"op": "port_out_at", "port": stmt.port, "at": stmt.at_port_ticks,
                            "value": stmt.value}, stmt.wait_bound_ns)
    if isinstance(stmt, ir.PortIn):
        return {"op": "port_in", "port": stmt.port, "bind": stmt.bind}
    if isinstance(stmt, ir.TimerWaitUntil):
        return _with_bound({"op": "timer_wait", "timer": stmt.timer, "at": stmt.at_ref_ticks},
                           stmt.wait_bound_ns)
    if isinstance(stmt, ir.Select):
        cases = []
        for event, body in stmt.cases:
            if isinstance(event, ir.ChanReadable):
                case = {"on": "chan", "chan": event.channel}
                if event.bind is not None:
                    case["bind"] = event.bind
                _with_bound(case, event.wait_bound_ns)
            elif isinstance(event, ir.TimerAt):
                case = {"on": "timer", "timer": event.timer, "at": event.at_ref_ticks}
            else:
                case = _with_bound({"on": "port", "port": event.port}, event.wait_bound_ns)
            case["body"] = [stmt_to_json(s) for s in body.statements]
            cases.append(case)
        return {"op": "select", "cases": cases}
    if isinstance(stmt, ir.Par):
        return {"op": "par", "tasks": [b.name for b in stmt.branches]}
    if isinstance(stmt, ir.Repeat):
        return {"op": "repeat", "count": stmt.count,
                "body": [stmt_to_json(s) for s in stmt.body.statements]}
    raise TypeError(f"not a statement: {stmt!r}")


def program_to_json(program: ir.Program) -> dict:
    out = {
        "name": program.name,
        "channels": list(program.channels),
        "tasks": {name: [stmt_to_json(s) for s in body.statements]
                  for name, body in program.tasks.items()},
        "main": [stmt_to_json(s) for s in program.main.statements],
        "stacks": dict(program.declared_stack_bytes),
    }
    if program.declared_program_bytes is not None:
        out["program_bytes"] = program.declared_program_bytes
    if program.declared_chanends is not None:
        out["chanends"] = program.declared_chanends
    if program.glyphs is not None:
        out["glyphs"] = program.glyphs
    return out


def serialize(program: ir.Program) -> str:
    return json.dumps(program_to_json(program), indent=2) + "\n"


# -- bundled examples --------------------------------------------------------

def bundled_names() -> list[str]:
    folder = resources.files("xsim") / "programs"
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".json"))


def bundled_path(name: str):
    return resources.files("xsim") / "programs" / f"{name}.json"


def load_bundled(name: str) -> ir.Program:
    path = bundled_path(name)
    if not path.is_file():
        raise FileNotFoundError(f"no bundled program named {name!r}")
    return parse_program(path.read_text(encoding="utf-8"))
