"""Deterministic playbook orchestration."""

from .interpolate import interpolate
from .records import (
    EventKind,
    ExecStatus,
    ExecutionEvent,
    ExecutionRecord,
    StepRecord,
    StepStatus,
    TERMINAL_STATUSES,
)
from .runner import AUTO_OPERATOR, Engine, SIM_MODES

__all__ = [
    "AUTO_OPERATOR", "Engine", "EventKind", "ExecStatus", "ExecutionEvent",
    "ExecutionRecord", "SIM_MODES", "StepRecord", "StepStatus",
    "TERMINAL_STATUSES", "interpolate",
]
