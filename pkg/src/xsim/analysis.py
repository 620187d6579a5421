"""Amdahl's-law projections and static best/worst-case timing bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from . import ir
from .errors import DomainError, PathExplosion, UnboundedLoop
from .machine import DeviceSpec

DEFAULT_PATH_BUDGET = 10 ** 6


# -- Amdahl ------------------------------------------------------------------

@dataclass(frozen=True)
class AmdahlParams:
    t1_ns: int
    serial_fraction: float
    n: int


def _check_fraction(b) -> Fraction:
    if isinstance(b, bool) or not isinstance(b, (int, float, Fraction)) or not 0 <= b <= 1:
        raise DomainError(f"serial fraction must lie in [0, 1], got {b!r}")
    return Fraction(b)


def _check_n(n) -> int:
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise DomainError(f"core count must be an integer >= 1, got {n!r}")
    return n


def _scaled(b: Fraction, n: int) -> Fraction:
    return b + (1 - b) / n


def amdahl_time(p: AmdahlParams) -> int:
    """T(n) = T(1)·(B + (1−B)/n), rounded half-up to whole nanoseconds."""
    if isinstance(p.t1_ns, bool) or not isinstance(p.t1_ns, int) or p.t1_ns <= 0:
        raise DomainError(f"T(1) must be a positive integer of ns, got {p.t1_ns!r}")
    b = _check_fraction(p.serial_fraction)
    n = _check_n(p.n)
    return math.floor(p.t1_ns * _scaled(b, n) + Fraction(1, 2))


def amdahl_speedup(b, n: int) -> float:
    """S(n) = 1 / (B + (1−B)/n).

    Evaluated as n / (B·n + 1 − B) in exact rationals, so S(0, n) == n and
    S(1, n) == 1 come out exactly.
    """
    frac = _check_fraction(b)
    n = _check_n(n)
    return float(Fraction(n) / (frac * n + 1 - frac))


def amdahl_limit_time(t1_ns: int, b) -> int:
    """Time left when n grows without bound: the serial part T(1)·B."""
    frac = _check_fraction(b)
    return math.floor(t1_ns * frac + Fraction(1, 2))


def amdahl_limit_speedup(b) -> float:
    frac = _check_fraction(b)
    return math.inf if frac == 0 else float(1 / frac)


def amdahl_table(t1_ns: int, b, ns) -> list[tuple[int, int, float]]:
    return [(n, amdahl_time(AmdahlParams(t1_ns, b, n)), amdahl_speedup(b, n)) for n in ns]


# -- timing bounds -------------------------------------------------------------

@dataclass(frozen=True)
class TimingBounds:
    best_ns: int
    worst_ns: int
    per_block: dict = field(default_factory=dict)
    assumed: tuple = ()
    paths: int = 1


class _Bounds:
    """Walks the IR once, pricing every statement at a fixed contention."""

    def __init__(self, spec: DeviceSpec, contention: int, budget: int):
        self.slot = spec.cycle_ns * contention
        self.tick = spec.tick_ns
        self.budget = budget
        self.per_block: dict = {}
        self.assumed: list = []

    def body(self, body: ir.TaskBody, key: str):
        best = worst = 0
        paths = 1
        for i, stmt in enumerate(body.statements):
            b, w, p = self.stmt(stmt, f"{key}/{i}")
            best += b
            worst += w
            paths *= p
            self.check(paths, key)
        self.per_block[key] = (best, worst)
        return best, worst, paths

    def check(self, paths, key):
        if paths > self.budget:
            raise PathExplosion(f"more than {self.budget} paths through {key!r}")

    def blocking(self, declared, timestamp_ns, key) -> tuple[int, int]:
        """(best, worst) duration of an op that may block.

        Best is 0. A literal timestamp bounds the wake instant, so the op is
        done at most one round after it; a declared relative bound also pays
        the issuing round. Without either the wait is assumed to be 0.
        """
        if declared is not None:
            return 0, declared + 2 * self.slot
        if timestamp_ns is not None:
            return 0, timestamp_ns + self.slot
        self.assumed.append(key)
        return 0, 0

    def stmt(self, stmt, key):
        s = self.slot
        if isinstance(stmt, ir.Compute):
            cost = (stmt.instructions * s, stmt.instructions * s, 1)
        elif isinstance(stmt, (ir.PortOut, ir.PortIn)):
            cost = (s, s, 1)
        elif isinstance(stmt, (ir.ChanOut, ir.ChanIn)):
            cost = (*self.blocking(stmt.wait_bound_ns, None, key), 1)
        elif isinstance(stmt, ir.PortOutAt):
            cost = (*self.blocking(stmt.wait_bound_ns, stmt.at_port_ticks * self.tick, key), 1)
        elif isinstance(stmt, ir.TimerWaitUntil):
            cost = (*self.blocking(stmt.wait_bound_ns, stmt.at_ref_ticks * self.tick, key), 1)
        elif isinstance(stmt, ir.Select):
            bests, worsts, paths = [], [], 0
            for j, (event, case_body) in enumerate(stmt.cases):
                case_key = f"{key}/case{j}"
                b, w, p = self.body(case_body, case_key)
                if isinstance(event, ir.TimerAt):
                    eb, ew = self.blocking(None, event.at_ref_ticks * self.tick, case_key)
                else:
                    eb, ew = self.blocking(event.wait_bound_ns, None, case_key)
                bests.append(eb + b)
                worsts.append(ew + w)
                paths += p
            self.check(paths, key)
            cost = (min(bests), max(worsts), paths)
        elif isinstance(stmt, ir.Par):
            results = [self.body(branch, branch.name) for branch in stmt.branches]
            paths = 1
            for _, _, p in results:
                paths *= p
                self.check(paths, key)
            cost = (max(r[0] for r in results), max(r[1] for r in results), paths)
        elif isinstance(stmt, ir.Repeat):
            if stmt.count is None:
                raise UnboundedLoop(f"loop at {key!r} has no constant bound")
            b, w, p = self.body(stmt.body, f"{key}/body")
            paths = 1
            for _ in range(stmt.count if p > 1 else 0):
                paths *= p
                self.check(paths, key)
            cost = (b * stmt.count, w * stmt.count, paths)
        else:
            raise TypeError(f"not a statement: {stmt!r}")
        self.per_block[key] = cost[:2]
        return cost


def xta_bounds(program: ir.Program, spec: DeviceSpec, contention: int = 1,
               path_budget: int = DEFAULT_PATH_BUDGET) -> TimingBounds:
    """Best/worst end-to-end time of each task, block by block.

    Every issued slot costs ``2·contention`` ns (at 500 MHz). Blocking
    statements (channel ops, timed waits and port writes, selects) add
    nothing to the best case. Their worst case is the literal timestamp plus
    one round, or a declared ``wait_bound_ns`` plus two rounds; rendezvous
    and port events without a declared bound are priced at 0 and listed in
    ``assumed``. The bounds hold when ``contention`` cores stay runnable.

    Path counts are tracked exactly; min/max are taken over the same path
    set in closed form because costs along a path are additive.
    """
    if isinstance(contention, bool) or not isinstance(contention, int) \
            or not 1 <= contention <= spec.core_count:
        raise DomainError(f"contention must be in 1..{spec.core_count}, got {contention!r}")
    walker = _Bounds(spec, contention, path_budget)
    best, worst, paths = walker.body(program.main, "main")
    return TimingBounds(best, worst, dict(walker.per_block), tuple(walker.assumed), paths)
