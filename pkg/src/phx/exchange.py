"""Standardized information exchange: alert bundles, incident reports,
playbook sharing with integrity verification, and the outbound feed.

Every bundle carries a SHA-256 of its canonical payload; the feed re-verifies
on read, so corruption is detected rather than served. Sharing uses TLP 2.0
labels. There are no signatures: integrity is hash-only by design.
"""

import json
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from .canonical import canonical_json, content_hash
from .engine.records import EventKind, ExecStatus
from .errors import (
    BundleKindError,
    IntegrityMismatchError,
    NonTerminalExecutionError,
    SchemaError,
    StorageError,
)
from .model.parsing import canonical_hash, playbook_from_obj, playbook_to_obj
from .timeutil import now_rfc3339

TLP_LABELS = ("clear", "green", "amber", "amber+strict", "red")
BUNDLE_KINDS = ("alert", "incident-report", "playbook-share")
MIRROR_RETRIES = 3


@dataclass(frozen=True)
class NotificationBundle:
    id: str
    created: str
    sender: str
    kind: str
    tlp: str
    severity: int
    subject: str
    payload: dict
    integrity: str

    def to_json_obj(self):
        return {
            "id": self.id,
            "created": self.created,
            "sender": self.sender,
            "kind": self.kind,
            "tlp": self.tlp,
            "severity": self.severity,
            "subject": self.subject,
            "payload": self.payload,
            "integrity": self.integrity,
        }

    def verify(self):
        actual = content_hash(self.payload)
        if actual != self.integrity:
            raise IntegrityMismatchError(self.integrity, actual)

    @classmethod
    def from_json_obj(cls, obj):
        for key in ("id", "created", "sender", "kind", "tlp", "severity", "subject",
                    "payload", "integrity"):
            if key not in obj:
                raise SchemaError(key, "bundle field missing")
        return cls(
            id=obj["id"], created=obj["created"], sender=obj["sender"],
            kind=obj["kind"], tlp=obj["tlp"], severity=obj["severity"],
            subject=obj["subject"], payload=obj["payload"], integrity=obj["integrity"],
        )


def build_bundle(sender, kind, subject, severity, payload, tlp) -> NotificationBundle:
    if kind not in BUNDLE_KINDS:
        raise BundleKindError(kind, "/".join(BUNDLE_KINDS))
    if not isinstance(severity, int) or isinstance(severity, bool) or not 0 <= severity <= 100:
        raise SchemaError("severity", f"severity must be an integer in 0..100, got {severity!r}")
    if tlp not in TLP_LABELS:
        raise SchemaError("tlp", f"unknown TLP label {tlp!r}")
    return NotificationBundle(
        id="bundle--" + str(uuid.uuid4()),
        created=now_rfc3339(),
        sender=sender,
        kind=kind,
        tlp=tlp,
        severity=severity,
        subject=subject,
        payload=payload,
        integrity=content_hash(payload),
    )


class NotificationFeed:
    """Append-only bundle feed, optionally file-backed (JSON Lines)."""

    def __init__(self, path=None):
        self._lock = threading.Lock()
        self._bundles = []
        self._path = Path(path) if path is not None else None
        if self._path is not None and self._path.exists():
            self._load()

    def _load(self):
        with open(self._path, "r", encoding="utf-8") as fh:
            for i, line in enumerate(fh):
                line = line.strip()
                if not line:
                    continue
                try:
                    bundle = NotificationBundle.from_json_obj(json.loads(line))
                except (json.JSONDecodeError, SchemaError) as exc:
                    raise StorageError(f"corrupt feed line {i + 1}: {exc}")
                self._bundles.append(bundle)

    def append(self, bundle: NotificationBundle):
        with self._lock:
            if any(existing.id == bundle.id for existing in self._bundles):
                raise StorageError(f"bundle id {bundle.id} already on feed")
            if self._path is not None:
                self._path.parent.mkdir(parents=True, exist_ok=True)
                with open(self._path, "a", encoding="utf-8") as fh:
                    fh.write(canonical_json(bundle.to_json_obj()) + "\n")
                    fh.flush()
            self._bundles.append(bundle)

    def read(self, cursor=0, limit=100):
        """(bundles, next_cursor) over the (created, id)-ordered view.

        Every returned bundle is re-verified; corruption raises StorageError.
        """
        with self._lock:
            ordered = sorted(self._bundles, key=lambda b: (b.created, b.id))
        page = ordered[cursor:cursor + limit]
        for bundle in page:
            try:
                bundle.verify()
            except IntegrityMismatchError as exc:
                raise StorageError(f"feed bundle {bundle.id} corrupt: {exc.message}")
        return page, cursor + len(page)

    def __len__(self):
        with self._lock:
            return len(self._bundles)


class ExchangeHub:
    """Builds, stores, and mirrors outbound bundles for one organisation."""

    def __init__(self, organisation="phx", feed_path=None, peers=(),
                 mirror_async=True, on_append=None):
        self.organisation = organisation
        self.feed = NotificationFeed(feed_path)
        self.peers = tuple(peers)
        self.mirror_async = mirror_async
        self.on_append = on_append

    def _publish(self, bundle: NotificationBundle) -> NotificationBundle:
        self.feed.append(bundle)
        if self.on_append is not None:
            self.on_append(bundle)
        if self.peers:
            if self.mirror_async:
                threading.Thread(target=self._mirror, args=(bundle,), daemon=True).start()
            else:
                self._mirror(bundle)
        return bundle

    def _mirror(self, bundle: NotificationBundle):
        import httpx

        body = canonical_json(bundle.to_json_obj()).encode("utf-8")
        for peer in self.peers:
            for _attempt in range(MIRROR_RETRIES):
                try:
                    response = httpx.post(
                        peer, content=body,
                        headers={
                            "content-type": "application/json",
                            "X-PHX-Bundle-Id": bundle.id,
                        },
                        timeout=5.0,
                    )
                    if response.status_code < 500:
                        break
                except httpx.HTTPError:
                    continue

    def emit_alert(self, subject, severity, payload, tlp="amber") -> NotificationBundle:
        return self._publish(build_bundle(
            self.organisation, "alert", subject, severity, dict(payload), tlp,
        ))

    def emit_incident_report(self, report, tlp="amber") -> NotificationBundle:
        payload = report.to_json_obj()
        return self._publish(build_bundle(
            self.organisation, "incident-report",
            f"incident report for {report.execution_id}",
            report.severity, payload, tlp,
        ))

    def export_playbook(self, playbook, tlp="amber") -> NotificationBundle:
        payload = {
            "playbook": playbook_to_obj(playbook),
            "playbook_hash": canonical_hash(playbook),
        }
        return self._publish(build_bundle(
            self.organisation, "playbook-share", f"playbook {playbook.name}",
            playbook.severity, payload, tlp,
        ))


def import_playbook(bundle):
    """Parse a playbook-share bundle after verifying both integrity hashes.

    Accepts a NotificationBundle or its JSON object. Lenient parse mode keeps
    unknown fields from foreign producers intact.
    """
    if isinstance(bundle, dict):
        bundle = NotificationBundle.from_json_obj(bundle)
    if bundle.kind != "playbook-share":
        raise BundleKindError(bundle.kind, "playbook-share")
    bundle.verify()
    payload = bundle.payload
    if "playbook" not in payload or "playbook_hash" not in payload:
        raise SchemaError("payload", "playbook-share payload requires playbook and playbook_hash")
    playbook = playbook_from_obj(payload["playbook"], mode="lenient")
    actual = canonical_hash(playbook)
    if actual != payload["playbook_hash"]:
        raise IntegrityMismatchError(payload["playbook_hash"], actual)
    from .model.validation import validate

    report = validate(playbook)
    if not report.executable:
        first = report.errors[0]
        raise SchemaError(first.path, first.message)
    return playbook


@dataclass
class IncidentReport:
    execution_id: str
    playbook_id: str
    playbook_hash: str
    outcome: str  # contained | restored | failed | cancelled
    severity: int
    timeline: list
    metrics: dict
    summary: str
    generated_at: str = field(default_factory=now_rfc3339)

    def to_json_obj(self):
        return {
            "execution_id": self.execution_id,
            "playbook_id": self.playbook_id,
            "playbook_hash": self.playbook_hash,
            "outcome": self.outcome,
            "severity": self.severity,
            "timeline": self.timeline,
            "metrics": self.metrics,
            "summary": self.summary,
            "generated_at": self.generated_at,
        }


_TIMELINE_KINDS = (
    EventKind.APPROVAL_REQUESTED.value,
    EventKind.APPROVAL_GRANTED.value,
    EventKind.APPROVAL_DENIED.value,
    EventKind.STEP_SUCCEEDED.value,
    EventKind.STEP_FAILED.value,
    EventKind.STEP_TIMED_OUT.value,
    EventKind.NOTIFICATION_EMITTED.value,
)


def compile_incident_report(record, severity=50) -> IncidentReport:
    """Condense a terminal execution's event log into an incident report.

    Pure function of the log: the same events always produce the same report
    (generated_at aside).
    """
    if not record.terminal:
        raise NonTerminalExecutionError(record.status)

    events = record.events
    metadata = {}
    for event in events:
        if event.kind == EventKind.EXECUTION_STARTED.value:
            metadata = event.payload.get("metadata", {}) or {}
            break

    injected = set(metadata.get("injected_assets", []))
    first_injection = metadata.get("first_injection_ms")
    restored = {}
    for event in events:
        if event.kind == EventKind.COMMAND_COMPLETED.value:
            for asset in event.payload.get("restored_assets", []):
                restored.setdefault(asset, event.ts)

    if record.status == ExecStatus.COMPLETED.value:
        outcome = "restored" if injected <= set(restored) else "contained"
    elif record.status == ExecStatus.FAILED.value:
        outcome = "failed"
    else:
        outcome = "cancelled"

    metrics = {}
    if first_injection is not None and record.status != ExecStatus.CANCELLED.value:
        ack_times = [
            e.ts for e in events
            if (e.kind == EventKind.STEP_ENTERED.value
                and e.payload.get("step_type") == "action")
            or e.kind == EventKind.APPROVAL_GRANTED.value
        ]
        if ack_times:
            metrics["mtta_ms"] = min(ack_times) - first_injection
        if injected and injected <= set(restored):
            metrics["mttr_ms"] = max(restored[a] for a in injected) - first_injection

    timeline = [
        {"ts": e.ts, "kind": e.kind, "payload": e.payload}
        for e in events if e.kind in _TIMELINE_KINDS
    ]
    summary = (
        f"Execution {record.execution_id} of playbook {record.playbook_id} "
        f"({record.mode}) ended {record.status}; outcome {outcome}; "
        f"{len(restored)}/{len(injected)} injected assets restored."
    )
    return IncidentReport(
        execution_id=record.execution_id,
        playbook_id=record.playbook_id,
        playbook_hash=record.canonical_hash,
        outcome=outcome,
        severity=severity,
        timeline=timeline,
        metrics=metrics,
        summary=summary,
    )
