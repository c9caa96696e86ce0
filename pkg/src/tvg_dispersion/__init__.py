"""Simulator and verification harness for k-balanced dispersion on time-varying graphs."""

from __future__ import annotations

from .engine import (
    AdversaryClassViolation,
    Algorithm,
    Configuration,
    ConnectivityClass,
    Engine,
    ModelSpec,
    Observation,
    Trace,
    is_balanced,
    trace_hash,
)
from .graph_core import Footprint, Journey, Snapshot, make_footprint

__version__ = "0.1.0"

__all__ = [
    "AdversaryClassViolation",
    "Algorithm",
    "Configuration",
    "ConnectivityClass",
    "Engine",
    "Footprint",
    "Journey",
    "ModelSpec",
    "Observation",
    "Snapshot",
    "Trace",
    "is_balanced",
    "make_footprint",
    "trace_hash",
]
