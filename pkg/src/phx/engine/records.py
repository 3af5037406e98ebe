"""Execution state: records, step records, and the append-only event log."""

from dataclasses import dataclass, field
from enum import Enum


class ExecStatus(str, Enum):
    CREATED = "created"
    RUNNING = "running"
    AWAITING_INPUT = "awaiting-input"
    PAUSED = "paused"
    COMPLETED = "completed"
    FAILED = "failed"
    CANCELLED = "cancelled"


TERMINAL_STATUSES = (ExecStatus.COMPLETED, ExecStatus.FAILED, ExecStatus.CANCELLED)


class StepStatus(str, Enum):
    PENDING = "pending"
    RUNNING = "running"
    AWAITING_APPROVAL = "awaiting-approval"
    SUCCEEDED = "succeeded"
    FAILED = "failed"
    SKIPPED = "skipped"
    TIMED_OUT = "timed-out"


class EventKind(str, Enum):
    EXECUTION_STARTED = "execution-started"
    STEP_ENTERED = "step-entered"
    STEP_SUCCEEDED = "step-succeeded"
    STEP_FAILED = "step-failed"
    STEP_TIMED_OUT = "step-timed-out"
    APPROVAL_REQUESTED = "approval-requested"
    APPROVAL_GRANTED = "approval-granted"
    APPROVAL_DENIED = "approval-denied"
    VARIABLE_SET = "variable-set"
    COMMAND_DISPATCHED = "command-dispatched"
    COMMAND_COMPLETED = "command-completed"
    NOTIFICATION_EMITTED = "notification-emitted"
    EXECUTION_COMPLETED = "execution-completed"
    EXECUTION_FAILED = "execution-failed"
    EXECUTION_CANCELLED = "execution-cancelled"


@dataclass
class ExecutionEvent:
    seq: int
    ts: float
    kind: str
    payload: dict

    def to_json_obj(self):
        return {"seq": self.seq, "ts": self.ts, "kind": self.kind, "payload": self.payload}

    @classmethod
    def from_json_obj(cls, obj):
        return cls(obj["seq"], obj["ts"], obj["kind"], obj.get("payload", {}))


@dataclass
class StepRecord:
    step_id: str
    iteration: int = 0
    status: str = StepStatus.PENDING.value
    attempts: int = 0
    entered_at: float = None
    exited_at: float = None
    outputs: dict = field(default_factory=dict)
    failure_reason: str = None

    def to_json_obj(self):
        obj = {
            "step_id": self.step_id,
            "iteration": self.iteration,
            "status": self.status,
            "attempts": self.attempts,
        }
        if self.entered_at is not None:
            obj["entered_at"] = self.entered_at
        if self.exited_at is not None:
            obj["exited_at"] = self.exited_at
        if self.outputs:
            obj["outputs"] = dict(self.outputs)
        if self.failure_reason is not None:
            obj["failure_reason"] = self.failure_reason
        return obj

    @classmethod
    def from_json_obj(cls, obj):
        return cls(
            step_id=obj["step_id"],
            iteration=obj.get("iteration", 0),
            status=obj.get("status", StepStatus.PENDING.value),
            attempts=obj.get("attempts", 0),
            entered_at=obj.get("entered_at"),
            exited_at=obj.get("exited_at"),
            outputs=dict(obj.get("outputs", {})),
            failure_reason=obj.get("failure_reason"),
        )


@dataclass
class ExecutionRecord:
    execution_id: str
    playbook_id: str
    canonical_hash: str
    mode: str  # live | dry-run | range
    status: str = ExecStatus.CREATED.value
    bindings: dict = field(default_factory=dict)
    step_records: dict = field(default_factory=dict)  # instance key -> StepRecord
    events: list = field(default_factory=list)
    started_at: float = None
    ended_at: float = None
    seed: int = None
    external_bindings: dict = field(default_factory=dict)
    parent_execution_id: str = None
    failure_reason: str = None

    @property
    def terminal(self) -> bool:
        return self.status in (s.value for s in TERMINAL_STATUSES)

    def to_json_obj(self, include_events=False):
        obj = {
            "execution_id": self.execution_id,
            "playbook_id": self.playbook_id,
            "canonical_hash": self.canonical_hash,
            "mode": self.mode,
            "status": self.status,
            "bindings": {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.bindings.items()},
            "step_records": {key: rec.to_json_obj() for key, rec in self.step_records.items()},
            "started_at": self.started_at,
            "ended_at": self.ended_at,
            "seed": self.seed,
            "external_bindings": {
                k: (list(v) if isinstance(v, tuple) else v)
                for k, v in self.external_bindings.items()
            },
        }
        if self.parent_execution_id is not None:
            obj["parent_execution_id"] = self.parent_execution_id
        if self.failure_reason is not None:
            obj["failure_reason"] = self.failure_reason
        if include_events:
            obj["events"] = [e.to_json_obj() for e in self.events]
        return obj

    @classmethod
    def from_json_obj(cls, obj, events=None):
        record = cls(
            execution_id=obj["execution_id"],
            playbook_id=obj["playbook_id"],
            canonical_hash=obj["canonical_hash"],
            mode=obj["mode"],
            status=obj["status"],
            bindings=dict(obj.get("bindings", {})),
            step_records={
                key: StepRecord.from_json_obj(rec)
                for key, rec in obj.get("step_records", {}).items()
            },
            started_at=obj.get("started_at"),
            ended_at=obj.get("ended_at"),
            seed=obj.get("seed"),
            external_bindings=dict(obj.get("external_bindings", {})),
            parent_execution_id=obj.get("parent_execution_id"),
            failure_reason=obj.get("failure_reason"),
        )
        if events is not None:
            record.events = list(events)
        elif "events" in obj:
            record.events = [ExecutionEvent.from_json_obj(e) for e in obj["events"]]
        return record
