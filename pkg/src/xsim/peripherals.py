"""Board I/O used by the demos: the 3x3 LED matrix, glyphs and PWM analysis."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

from .errors import InsufficientEdges, UnknownGlyph

ACTIVE_HIGH = "active_high"
ACTIVE_LOW = "active_low"

# LED k (1..9, row-major) -> bit of the 20-bit matrix port
DEFAULT_BITS = {1: 0, 2: 1, 3: 2, 4: 7, 5: 8, 6: 9, 7: 10, 8: 11, 9: 12}

# perimeter LEDs in clockwise order, starting top-left
PERIMETER = (1, 2, 3, 6, 9, 8, 7, 4)


@dataclass(frozen=True)
class LedGrid:
    cells: tuple = ((False,) * 3,) * 3

    def __post_init__(self):
        rows = tuple(tuple(bool(c) for c in row) for row in self.cells)
        if len(rows) != 3 or any(len(row) != 3 for row in rows):
            raise ValueError("LedGrid needs exactly 3x3 cells")
        object.__setattr__(self, "cells", rows)

    @classmethod
    def from_flat(cls, bits: Sequence) -> "LedGrid":
        if len(bits) != 9:
            raise ValueError("expected 9 cells")
        return cls(tuple(tuple(bits[3 * r:3 * r + 3]) for r in range(3)))

    @classmethod
    def from_leds(cls, leds) -> "LedGrid":
        """Grid with the given LED indices (1..9) lit."""
        lit = set(leds)
        return cls.from_flat([k in lit for k in range(1, 10)])

    def is_on(self, k: int) -> bool:
        row, col = divmod(k - 1, 3)
        return self.cells[row][col]

    def lit(self) -> list[int]:
        return [k for k in range(1, 10) if self.is_on(k)]

    def flat(self) -> list[int]:
        return [int(c) for row in self.cells for c in row]

    def render(self) -> str:
        return "\n".join("".join("#" if c else "." for c in row) for row in self.cells)


@dataclass(frozen=True)
class LedMapping:
    port_name: str = "led32"
    bit_of_led: Mapping[int, int] = field(default_factory=lambda: dict(DEFAULT_BITS))
    polarity: str = ACTIVE_HIGH
    port_width: int = 20

    def __post_init__(self):
        bits = dict(self.bit_of_led)
        if sorted(bits) != list(range(1, 10)):
            raise ValueError("mapping must cover LEDs 1..9")
        if len(set(bits.values())) != 9:
            raise ValueError("LED bit indices must be distinct")
        if any(not 0 <= b < self.port_width for b in bits.values()):
            raise ValueError(f"LED bits must be below the port width {self.port_width}")
        if self.polarity not in (ACTIVE_HIGH, ACTIVE_LOW):
            raise ValueError(f"unknown polarity {self.polarity!r}")
        object.__setattr__(self, "bit_of_led", bits)

    @property
    def mask(self) -> int:
        return sum(1 << b for b in self.bit_of_led.values())


def encode_grid(grid: LedGrid, mapping: LedMapping = LedMapping()) -> int:
    word = 0
    for k, bit in mapping.bit_of_led.items():
        on = grid.is_on(k)
        if mapping.polarity == ACTIVE_LOW:
            on = not on
        if on:
            word |= 1 << bit
    return word


def decode_port_word(word: int, mapping: LedMapping = LedMapping()) -> LedGrid:
    lit = []
    for k, bit in mapping.bit_of_led.items():
        on = bool(word >> bit & 1)
        if mapping.polarity == ACTIVE_LOW:
            on = not on
        if on:
            lit.append(k)
    return LedGrid.from_leds(lit)


def frames_from_trace(trace, mapping: LedMapping = LedMapping()) -> list[tuple[int, LedGrid]]:
    """(time, grid) for every write to the matrix port, in trace order."""
    return [(e.time_ns, decode_port_word(e.detail["value"], mapping))
            for e in trace
            if e.kind == "port_drive" and e.detail.get("port") == mapping.port_name]


def render_frames(grids) -> str:
    return "\n\n".join(g.render() for g in grids) + ("\n" if grids else "")


# -- glyphs ------------------------------------------------------------------

GlyphSet = Mapping[str, LedGrid]


def parse_glyphs(data: Mapping) -> dict[str, LedGrid]:
    glyphs = {}
    for char, cells in data.items():
        if len(char) != 1:
            raise ValueError(f"glyph key {char!r} must be a single character")
        if len(cells) != 9 or any(c not in (0, 1) for c in cells):
            raise ValueError(f"glyph {char!r} must be nine 0/1 cells")
        glyphs[char] = LedGrid.from_flat(cells)
    return glyphs


def load_glyphs(source: str | Path | None = None) -> dict[str, LedGrid]:
    """Load a glyph file; ``None`` or ``"default"`` selects the bundled set."""
    if source is None or source == "default":
        text = (resources.files("xsim") / "data" / "glyphs.json").read_text(encoding="utf-8")
    else:
        text = Path(source).read_text(encoding="utf-8")
    return parse_glyphs(json.loads(text))


def glyph_frames(text: str, glyphs: GlyphSet) -> list[LedGrid]:
    frames = []
    for char in text:
        if char not in glyphs:
            raise UnknownGlyph(f"no glyph for {char!r}")
        frames.append(glyphs[char])
    return frames


# -- PWM ---------------------------------------------------------------------

@dataclass(frozen=True)
class PwmSummary:
    period_ns: int
    pulse_width_ns: int
    edge_times: tuple

    @property
    def duty(self) -> float:
        return self.pulse_width_ns / self.period_ns


def bit_transitions(trace, port: str, bit: int) -> list[tuple[int, int]]:
    """(time, new level) for each change of one bit of ``port``; starts from reset 0."""
    level = 0
    changes = []
    for e in trace:
        if e.kind != "port_drive" or e.detail.get("port") != port:
            continue
        new = e.detail["value"] >> bit & 1
        if new != level:
            changes.append((e.time_ns, new))
            level = new
    return changes


def _mean(values) -> int | float:
    total = sum(values)
    q, r = divmod(total, len(values))
    return q if r == 0 else total / len(values)


def analyze_pwm(trace, port: str, bit: int = 0) -> PwmSummary:
    changes = bit_transitions(trace, port, bit)
    if len(changes) < 3:
        raise InsufficientEdges(f"{len(changes)} transitions on {port}[{bit}], need at least 3")
    rises = [t for t, level in changes if level == 1]
    if len(rises) < 2:
        raise InsufficientEdges("need two rising edges to measure a period")
    periods = [b - a for a, b in zip(rises, rises[1:])]
    highs = []
    for (t0, level), (t1, _) in zip(changes, changes[1:]):
        if level == 1:
            highs.append(t1 - t0)
    return PwmSummary(
        period_ns=_mean(periods),
        pulse_width_ns=_mean(highs),
        edge_times=tuple(t for t, _ in changes),
    )
