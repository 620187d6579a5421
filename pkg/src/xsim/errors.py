"""Exception hierarchy shared by every xsim module."""

from __future__ import annotations


class XsimError(Exception):
    """Base class for all domain errors raised by xsim."""


class UnknownProfile(XsimError):
    pass


class ParseError(XsimError):
    """Malformed program text.

    ``line``/``column`` are set for syntax errors; semantic errors found after
    decoding carry a dotted ``path`` to the offending node instead.
    """

    def __init__(self, message: str, line: int | None = None,
                 column: int | None = None, path: str | None = None):
        self.line = line
        self.column = column
        self.path = path
        where = []
        if line is not None:
            where.append(f"line {line}, column {column}")
        if path:
            where.append(f"at {path}")
        super().__init__(f"{message} ({'; '.join(where)})" if where else message)


class DuplicateName(ParseError):
    pass


class UnknownConstruct(ParseError):
    pass


class ValidationError(XsimError):
    pass


class CoreExhausted(ValidationError):
    pass


class ChanendExhausted(ValidationError):
    pass


class TimerExhausted(ValidationError):
    pass


class MemoryExhausted(ValidationError):
    pass


class UnboundedLoop(ValidationError):
    pass


class UnknownPort(ValidationError):
    pass


class SimulationError(XsimError):
    pass


class TimestampInPast(SimulationError):
    pass


class UnboundVariable(SimulationError):
    pass


class DeadlockDetected(SimulationError):
    """No core can make progress while tasks remain.

    ``blocked`` lists one mapping per stuck task; ``trace`` is the event stream
    up to and including the final ``deadlock`` event.
    """

    def __init__(self, message: str, blocked: list[dict], trace: list, state=None):
        super().__init__(message)
        self.blocked = blocked
        self.trace = trace
        self.state = state


class InsufficientEdges(XsimError):
    pass


class UnknownGlyph(XsimError):
    pass


class IncompleteTrace(XsimError):
    pass


class DomainError(XsimError):
    pass


class PathExplosion(XsimError):
    pass
