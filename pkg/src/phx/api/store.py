"""File-backed persistence: inspectable directory-per-entity layout.

    <data_dir>/playbooks/<id>.rp.json          id = canonical-hash prefix
    <data_dir>/executions/<exec id>/record.json
    <data_dir>/executions/<exec id>/events.jsonl   append-then-ack
    <data_dir>/bundles/notifications.jsonl
    <data_dir>/assessments/<id>.json
    <data_dir>/alerts/<id>.json

Record writes are atomic (write-temp-then-rename); event logs are flushed per
append so a killed process loses at most the unwritten suffix. A torn final
event line is tolerated on reload; corruption earlier in a log is an error.
"""

import json
import os
from pathlib import Path

from ..canonical import canonical_json
from ..engine.records import ExecutionEvent, ExecutionRecord
from ..errors import StorageError
from ..model.parsing import canonical_hash, parse_playbook, serialize_playbook

PLAYBOOK_ID_PREFIX_LEN = 16


class Store:
    def __init__(self, data_dir):
        self.root = Path(data_dir)
        for sub in ("playbooks", "executions", "bundles", "assessments", "alerts"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)
        self._event_files = {}

    # -- playbooks -----------------------------------------------------------

    def playbook_path(self, store_id) -> Path:
        return self.root / "playbooks" / f"{store_id}.rp.json"

    def save_playbook(self, playbook) -> tuple:
        """(store id, created) — content addressed, so re-imports dedupe."""
        store_id = canonical_hash(playbook)[:PLAYBOOK_ID_PREFIX_LEN]
        path = self.playbook_path(store_id)
        if path.exists():
            return store_id, False
        self._atomic_write(path, serialize_playbook(playbook))
        return store_id, True

    def get_playbook(self, store_id):
        path = self.playbook_path(store_id)
        if not path.exists():
            return None
        return parse_playbook(path.read_bytes(), mode="lenient")

    def find_playbook_by_embedded_id(self, embedded_id):
        for store_id, playbook in self.list_playbooks():
            if playbook.id == embedded_id:
                return playbook
        return None

    def find_playbook_by_hash(self, full_hash):
        playbook = self.get_playbook(full_hash[:PLAYBOOK_ID_PREFIX_LEN])
        if playbook is not None and canonical_hash(playbook) == full_hash:
            return playbook
        return None

    def delete_playbook(self, store_id) -> bool:
        path = self.playbook_path(store_id)
        if not path.exists():
            return False
        path.unlink()
        return True

    def list_playbooks(self):
        out = []
        for path in sorted((self.root / "playbooks").glob("*.rp.json")):
            store_id = path.name[: -len(".rp.json")]
            out.append((store_id, parse_playbook(path.read_bytes(), mode="lenient")))
        return out

    # -- executions ------------------------------------------------------------

    def execution_dir(self, execution_id) -> Path:
        return self.root / "executions" / execution_id

    def events_path(self, execution_id) -> Path:
        return self.execution_dir(execution_id) / "events.jsonl"

    def append_event(self, execution_id, event: ExecutionEvent):
        fh = self._event_files.get(execution_id)
        if fh is None:
            self.execution_dir(execution_id).mkdir(parents=True, exist_ok=True)
            fh = open(self.events_path(execution_id), "a", encoding="utf-8")
            self._event_files[execution_id] = fh
        fh.write(canonical_json(event.to_json_obj()) + "\n")
        fh.flush()
        os.fsync(fh.fileno())

    def save_record(self, record: ExecutionRecord):
        self.execution_dir(record.execution_id).mkdir(parents=True, exist_ok=True)
        path = self.execution_dir(record.execution_id) / "record.json"
        self._atomic_write(path, canonical_json(record.to_json_obj()).encode("utf-8"))

    def load_events(self, execution_id):
        path = self.events_path(execution_id)
        if not path.exists():
            return []
        events = []
        lines = path.read_text(encoding="utf-8").splitlines()
        for i, line in enumerate(lines):
            if not line.strip():
                continue
            try:
                events.append(ExecutionEvent.from_json_obj(json.loads(line)))
            except (json.JSONDecodeError, KeyError) as exc:
                if i == len(lines) - 1:
                    break  # torn tail from a crash mid-append
                raise StorageError(f"corrupt event log {execution_id} line {i + 1}: {exc}")
        return events

    def load_record(self, execution_id) -> ExecutionRecord:
        path = self.execution_dir(execution_id) / "record.json"
        if not path.exists():
            return None
        record = ExecutionRecord.from_json_obj(json.loads(path.read_text(encoding="utf-8")))
        record.events = self.load_events(execution_id)
        return record

    def list_execution_ids(self):
        return sorted(
            p.name for p in (self.root / "executions").iterdir()
            if (p / "record.json").exists()
        )

    def close_event_log(self, execution_id):
        fh = self._event_files.pop(execution_id, None)
        if fh is not None:
            fh.close()

    # -- assessments --------------------------------------------------------------

    def save_assessment(self, assessment_id, obj):
        path = self.root / "assessments" / f"{assessment_id}.json"
        self._atomic_write(path, canonical_json(obj).encode("utf-8"))

    def load_assessment(self, assessment_id):
        path = self.root / "assessments" / f"{assessment_id}.json"
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    # -- alerts ----------------------------------------------------------------------

    def save_alert(self, alert_id, obj):
        safe = alert_id.replace("/", "_")
        self._atomic_write(self.root / "alerts" / f"{safe}.json",
                           canonical_json(obj).encode("utf-8"))

    def load_alerts(self):
        out = []
        for path in sorted((self.root / "alerts").glob("*.json")):
            out.append(json.loads(path.read_text(encoding="utf-8")))
        return out

    # -- misc ---------------------------------------------------------------------------

    @property
    def feed_path(self) -> Path:
        return self.root / "bundles" / "notifications.jsonl"

    @staticmethod
    def _atomic_write(path: Path, data: bytes):
        tmp = path.with_suffix(path.suffix + ".tmp")
        with open(tmp, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
