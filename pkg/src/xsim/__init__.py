"""Deterministic simulator and analysis tools for an xCORE-style multicore microcontroller."""

__version__ = "0.1.0"

from .analysis import AmdahlParams, TimingBounds, amdahl_speedup, amdahl_time, xta_bounds
from .errors import XsimError
from .kernel import SimState, load, run, simulate
from .machine import DeviceSpec, ResourceLedger, default_spec, ledger_percentages
from .parser import load_bundled, load_program, parse_program, serialize
from .profiler import TaskProfile, profile, render_reports
from .trace import TraceEvent
from .validator import validate

__all__ = [
    "AmdahlParams", "DeviceSpec", "ResourceLedger", "SimState", "TaskProfile",
    "TimingBounds", "TraceEvent", "XsimError", "amdahl_speedup", "amdahl_time",
    "default_spec", "ledger_percentages", "load", "load_bundled", "load_program",
    "parse_program", "profile", "render_reports", "run", "serialize", "simulate",
    "validate", "xta_bounds",
]
