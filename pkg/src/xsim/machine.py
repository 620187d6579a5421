"""Static device description and the resource ledger.

The built-in ``startkit`` profile describes the user tile of an xCORE
startKIT: 8 logical cores sharing a 500 MHz issue pipeline, 32 channel ends,
10 hardware timers, 64 KiB of SRAM and 100 MHz ports.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

from .errors import UnknownProfile

ALLOWED_PORT_WIDTHS = frozenset({1, 4, 8, 16, 20, 32})
NS_PER_S = 1_000_000_000

SPEC_DIR_ENV = "XSIM_SPEC_DIR"


@dataclass(frozen=True)
class DeviceSpec:
    core_count: int
    chanend_count: int
    timer_count: int
    memory_bytes: int
    core_clock_hz: int
    port_clock_hz: int
    port_widths: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("core_count", "chanend_count", "timer_count", "memory_bytes",
                     "core_clock_hz", "port_clock_hz"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value <= 0:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        for clock in ("core_clock_hz", "port_clock_hz"):
            if NS_PER_S % getattr(self, clock):
                raise ValueError(f"{clock} must divide 1 GHz so ticks are whole nanoseconds")
        for port, width in self.port_widths.items():
            if width not in ALLOWED_PORT_WIDTHS:
                raise ValueError(f"port {port!r} has unsupported width {width}")
        object.__setattr__(self, "port_widths", MappingProxyType(dict(self.port_widths)))

    @property
    def cycle_ns(self) -> int:
        """Length of one issue slot (core clock period)."""
        return NS_PER_S // self.core_clock_hz

    @property
    def tick_ns(self) -> int:
        """Port / reference-timer tick length."""
        return NS_PER_S // self.port_clock_hz

    def to_dict(self) -> dict:
        return {
            "core_count": self.core_count,
            "chanend_count": self.chanend_count,
            "timer_count": self.timer_count,
            "memory_bytes": self.memory_bytes,
            "core_clock_hz": self.core_clock_hz,
            "port_clock_hz": self.port_clock_hz,
            "port_widths": dict(self.port_widths),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "DeviceSpec":
        expected = {"core_count", "chanend_count", "timer_count", "memory_bytes",
                    "core_clock_hz", "port_clock_hz", "port_widths"}
        missing = expected - set(data)
        unknown = set(data) - expected
        if missing or unknown:
            raise ValueError(f"bad device profile: missing {sorted(missing)}, unknown {sorted(unknown)}")
        return cls(**{key: data[key] for key in expected})


STARTKIT_PORTS = {
    "led32": 20,   # 3x3 matrix, bits 0-2 and 7-12
    "led_a": 1,
    "led_b": 1,
    "button": 1,
    "servo": 1,
}

_BUILTIN = {
    "startkit": DeviceSpec(
        core_count=8,
        chanend_count=32,
        timer_count=10,
        memory_bytes=65536,
        core_clock_hz=500_000_000,
        port_clock_hz=100_000_000,
        port_widths=STARTKIT_PORTS,
    ),
}


def default_spec(profile_name: str = "startkit") -> DeviceSpec:
    try:
        return _BUILTIN[profile_name]
    except KeyError:
        raise UnknownProfile(f"unknown device profile {profile_name!r}") from None


def load_spec_file(path: str | os.PathLike) -> DeviceSpec:
    with open(path, encoding="utf-8") as fh:
        return DeviceSpec.from_dict(json.load(fh))


def resolve_spec(name_or_path: str) -> DeviceSpec:
    """Look up a profile by file path, then ``$XSIM_SPEC_DIR/<name>.json``, then built-ins."""
    candidate = Path(name_or_path)
    if candidate.suffix == ".json" and candidate.is_file():
        return load_spec_file(candidate)
    spec_dir = os.environ.get(SPEC_DIR_ENV)
    if spec_dir:
        custom = Path(spec_dir) / f"{name_or_path}.json"
        if custom.is_file():
            return load_spec_file(custom)
    return default_spec(name_or_path)


@dataclass(frozen=True)
class ResourceLedger:
    chanends_used: int
    cores_used: int
    timers_used: int
    stack_bytes_used: int
    program_bytes_used: int
    spec: DeviceSpec

    def __post_init__(self):
        checks = [
            ("chanends_used", self.chanends_used, self.spec.chanend_count),
            ("cores_used", self.cores_used, self.spec.core_count),
            ("timers_used", self.timers_used, self.spec.timer_count),
            ("memory", self.stack_bytes_used + self.program_bytes_used, self.spec.memory_bytes),
        ]
        for name, used, capacity in checks:
            if used < 0 or used > capacity:
                raise ValueError(f"{name}={used} outside 0..{capacity}")
        if self.stack_bytes_used < 0 or self.program_bytes_used < 0:
            raise ValueError("memory usage cannot be negative")

    @property
    def memory_bytes_used(self) -> int:
        return self.stack_bytes_used + self.program_bytes_used


@dataclass(frozen=True)
class LedgerRow:
    resource: str
    used: int
    used_pct: Decimal
    free: int | None
    free_pct: Decimal | None

    def used_cell(self) -> str:
        return format_cell(self.used, self.used_pct)

    def free_cell(self) -> str:
        if self.free is None:
            return ""
        return format_cell(self.free, self.free_pct)


_CENT = Decimal("0.01")


def percent(part: int, whole: int) -> Decimal:
    """100*part/whole rounded half-up to two decimals, computed exactly."""
    exact = Fraction(100 * part, whole)
    cents = math.floor(exact * 100 + Fraction(1, 2))
    return (Decimal(cents) / 100).quantize(_CENT)


def format_pct(value: Decimal) -> str:
    text = f"{value:.2f}".rstrip("0").rstrip(".")
    return f"{text}%"


def format_cell(count: int, pct: Decimal) -> str:
    return f"{count}({format_pct(pct)})"


def ledger_percentages(ledger: ResourceLedger) -> list[LedgerRow]:
    """Rows in the order the device tools print them.

    Memory is split into stack and program rows; the stack row carries the
    free space left by both.
    """
    spec = ledger.spec
    rows = []

    def simple(resource, used, capacity):
        free = capacity - used
        rows.append(LedgerRow(resource, used, percent(used, capacity), free, percent(free, capacity)))

    simple("Chanends", ledger.chanends_used, spec.chanend_count)
    simple("Logical Cores", ledger.cores_used, spec.core_count)
    mem_free = spec.memory_bytes - ledger.memory_bytes_used
    rows.append(LedgerRow("Memory(Stack)", ledger.stack_bytes_used,
                          percent(ledger.stack_bytes_used, spec.memory_bytes),
                          mem_free, percent(mem_free, spec.memory_bytes)))
    rows.append(LedgerRow("Memory(Program)", ledger.program_bytes_used,
                          percent(ledger.program_bytes_used, spec.memory_bytes), None, None))
    simple("Timers", ledger.timers_used, spec.timer_count)
    return rows
