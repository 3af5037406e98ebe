"""HTTP service: playbook management, execution control, approvals, alerts,
assessments, the notification feed, and a live SSE stream for the console.

Durability contract: every execution event is flushed to its JSONL log before
it is acknowledged or broadcast, and records are rewritten atomically, so a
killed process can always be restarted against the same data directory.
Non-terminal simulated executions are rehydrated by deterministic replay of
their persisted logs (same seed, approvals re-applied in order).
"""

import logging
import queue
import threading
import uuid

from fastapi import FastAPI, Query, Request, Response
from fastapi.responses import JSONResponse, PlainTextResponse, StreamingResponse

from ..canonical import canonical_json
from ..cyberrange import Scenario, run_assessment, what_if
from ..dispatch import SimulationProfile
from ..engine import Engine, ExecStatus
from ..errors import (
    AlreadyTerminalError,
    NotAwaitingApprovalError,
    PhxError,
    StorageError,
    UnknownExecutionError,
    UnknownStepError,
)
from ..exchange import ExchangeHub, import_playbook
from ..model.parsing import canonical_hash, playbook_from_obj, playbook_to_obj
from ..model.validation import validate
from ..risk import AlertInput, load_risk_model, prioritise, score_alert, select_playbook
from .config import ServiceConfig
from .store import Store

logger = logging.getLogger("phx.api")


class EventBus:
    """Fan-out of live events to SSE subscribers; per-connection queues."""

    def __init__(self):
        self._lock = threading.Lock()
        self._subscribers = []

    def subscribe(self) -> queue.Queue:
        q = queue.Queue()
        with self._lock:
            self._subscribers.append(q)
        return q

    def unsubscribe(self, q):
        with self._lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    def publish(self, event_name, data):
        with self._lock:
            subscribers = list(self._subscribers)
        for q in subscribers:
            q.put((event_name, data))


class Service:
    """Application state shared by the HTTP handlers."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self.store = Store(config.data_dir)
        self.bus = EventBus()
        self.hub = ExchangeHub(
            organisation=config.organisation,
            feed_path=self.store.feed_path,
            peers=config.peers,
            on_append=lambda bundle: self.bus.publish("notification", bundle.to_json_obj()),
        )
        self.profile = (
            SimulationProfile.load(config.profile_path)
            if config.profile_path else SimulationProfile()
        )
        self.risk_model = (
            load_risk_model(config.risk_model_path) if config.risk_model_path else None
        )
        self.engine = Engine(
            playbook_resolver=self._resolve_playbook,
            profile=self.profile,
            event_sink=self._sink_event,
            organisation=config.organisation,
            exchange_hub=self.hub,
        )
        self._sink_enabled = True
        self.alerts = {}
        self.scored = {}
        for obj in self.store.load_alerts():
            alert = AlertInput.from_json_obj(obj["alert"])
            self.alerts[alert.alert_id] = alert
            self.scored[alert.alert_id] = obj
        self.frozen_records = {}
        self._rehydrate_all()

    # -- engine/store wiring ---------------------------------------------------

    def _sink_event(self, record, event):
        if not self._sink_enabled:
            return
        self.store.append_event(record.execution_id, event)
        self.bus.publish("execution-event", {
            "execution_id": record.execution_id,
            **event.to_json_obj(),
        })

    def _resolve_playbook(self, playbook_id):
        playbook = self.store.get_playbook(playbook_id)
        if playbook is not None:
            return playbook
        return self.store.find_playbook_by_embedded_id(playbook_id)

    def persist_execution(self, record):
        self.store.save_record(record)
        for other_id, state in list(self.engine.executions.items()):
            if state.record.parent_execution_id == record.execution_id:
                self.persist_execution(state.record)
        if record.terminal:
            self.store.close_event_log(record.execution_id)

    def _rehydrate_all(self):
        for execution_id in self.store.list_execution_ids():
            try:
                self._rehydrate(execution_id)
            except (PhxError, OSError, ValueError) as exc:
                logger.warning("could not rehydrate %s: %s", execution_id, exc)
                record = self.store.load_record(execution_id)
                if record is not None:
                    self.frozen_records[execution_id] = record

    def _rehydrate(self, execution_id):
        record = self.store.load_record(execution_id)
        if record is None:
            return
        if record.terminal or record.parent_execution_id is not None:
            self.frozen_records[execution_id] = record
            return
        if record.mode == "live":
            record.status = ExecStatus.FAILED.value
            record.failure_reason = "live execution interrupted by service restart"
            self.store.save_record(record)
            self.frozen_records[execution_id] = record
            return
        playbook = self.store.find_playbook_by_hash(record.canonical_hash)
        if playbook is None:
            raise StorageError(f"playbook {record.canonical_hash[:16]} for {execution_id} not stored")
        persisted = record.events
        self._sink_enabled = False
        try:
            replayed = self.engine.start_execution(
                playbook, dict(record.external_bindings), mode=record.mode,
                seed=record.seed, start_at_ms=record.started_at or 0.0,
                execution_id=execution_id,
            )
            self.engine.advance(replayed)
            for event in persisted:
                if event.kind in ("approval-granted", "approval-denied"):
                    payload = event.payload
                    if payload.get("operator") == "range-auto":
                        continue
                    self.engine.approve_manual_step(
                        replayed, payload["step_id"],
                        "approve" if event.kind == "approval-granted" else "deny",
                        payload.get("operator", "unknown"), payload.get("note"),
                    )
        finally:
            self._sink_enabled = True
        replay_objs = [e.to_json_obj() for e in replayed.events[: len(persisted)]]
        persisted_objs = [e.to_json_obj() for e in persisted]
        if replay_objs != persisted_objs:
            raise StorageError(f"replay of {execution_id} diverged from the persisted log")
        for event in replayed.events[len(persisted):]:
            self.store.append_event(execution_id, event)
        self.store.save_record(replayed)

    # -- lookups -------------------------------------------------------------------

    def get_execution_record(self, execution_id):
        try:
            return self.engine.get_record(execution_id)
        except UnknownExecutionError:
            record = self.frozen_records.get(execution_id)
            if record is None:
                record = self.store.load_record(execution_id)
                if record is not None:
                    self.frozen_records[execution_id] = record
            return record


def _error_response(status_code, code, message, path=None):
    body = {"code": code, "message": message}
    if path is not None:
        body["path"] = path
    return JSONResponse(status_code=status_code, content=body)


def create_app(config: ServiceConfig = None) -> FastAPI:
    config = config or ServiceConfig()
    service = Service(config)
    app = FastAPI(title="phx-roar", version="0.1.0")
    app.state.service = service

    @app.exception_handler(PhxError)
    def phx_error_handler(request: Request, exc: PhxError):
        status = 400
        if isinstance(exc, (UnknownExecutionError, UnknownStepError)):
            status = 404
        elif isinstance(exc, (AlreadyTerminalError, NotAwaitingApprovalError)):
            status = 409
        elif isinstance(exc, StorageError):
            status = 500
        return _error_response(status, exc.code, exc.message,
                               path=exc.details.get("path"))

    @app.middleware("http")
    async def auth_middleware(request: Request, call_next):
        if config.token and request.url.path.startswith("/v1"):
            header = request.headers.get("authorization", "")
            if header != f"Bearer {config.token}":
                return _error_response(401, "unauthorized", "missing or invalid bearer token")
        return await call_next(request)

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "organisation": config.organisation}

    # -- playbooks ------------------------------------------------------------

    @app.post("/v1/playbooks")
    def import_playbook_endpoint(body: dict, mode: str = Query("strict")):
        if "kind" in body and "payload" in body:
            playbook = import_playbook(body)
        else:
            playbook = playbook_from_obj(body, mode=mode)
        report = validate(playbook)
        if report.errors:
            return JSONResponse(status_code=422, content={
                "code": "invalid-playbook",
                "message": "playbook has validation errors",
                "report": report.to_json_obj(),
            })
        store_id, created = service.store.save_playbook(playbook)
        return JSONResponse(
            status_code=201 if created else 200,
            content={"id": store_id, "canonical_hash": canonical_hash(playbook),
                     "embedded_id": playbook.id},
        )

    @app.get("/v1/playbooks")
    def list_playbooks():
        out = []
        for store_id, playbook in service.store.list_playbooks():
            report = validate(playbook)
            out.append({
                "id": store_id,
                "embedded_id": playbook.id,
                "name": playbook.name,
                "playbook_types": list(playbook.playbook_types),
                "severity": playbook.severity,
                "priority": playbook.priority,
                "labels": list(playbook.labels),
                "canonical_hash": canonical_hash(playbook),
                "executable": report.executable,
                "warnings": len(report.warnings),
            })
        return {"playbooks": out}

    @app.get("/v1/playbooks/{store_id}")
    def get_playbook(store_id: str):
        playbook = service.store.get_playbook(store_id)
        if playbook is None:
            return _error_response(404, "not-found", f"no playbook {store_id}")
        return playbook_to_obj(playbook)

    @app.delete("/v1/playbooks/{store_id}")
    def delete_playbook(store_id: str):
        if not service.store.delete_playbook(store_id):
            return _error_response(404, "not-found", f"no playbook {store_id}")
        return Response(status_code=204)

    @app.post("/v1/playbooks/{store_id}/validate")
    def validate_playbook(store_id: str):
        playbook = service.store.get_playbook(store_id)
        if playbook is None:
            return _error_response(404, "not-found", f"no playbook {store_id}")
        return validate(playbook).to_json_obj()

    # -- executions -------------------------------------------------------------

    @app.post("/v1/executions")
    def start_execution(body: dict):
        playbook_id = body.get("playbook_id")
        playbook = service.store.get_playbook(playbook_id) if playbook_id else None
        if playbook is None:
            return _error_response(404, "not-found", f"no playbook {playbook_id}")
        mode = body.get("mode", "dry-run")
        if mode == "live" and not config.allow_live:
            return _error_response(403, "live-disabled",
                                   "live mode is disabled on this service (allow_live=false)")
        record = service.engine.start_execution(
            playbook, body.get("bindings", {}), mode=mode, seed=body.get("seed"),
        )
        service.engine.advance(record)
        service.persist_execution(record)
        return JSONResponse(status_code=201, content=record.to_json_obj())

    @app.get("/v1/executions")
    def list_executions():
        ids = set(service.store.list_execution_ids())
        ids.update(service.engine.executions.keys())
        out = []
        for execution_id in sorted(ids):
            record = service.get_execution_record(execution_id)
            if record is None:
                continue
            out.append({
                "execution_id": record.execution_id,
                "playbook_id": record.playbook_id,
                "mode": record.mode,
                "status": record.status,
                "started_at": record.started_at,
                "ended_at": record.ended_at,
            })
        return {"executions": out}

    @app.get("/v1/executions/{execution_id}")
    def get_execution(execution_id: str):
        record = service.get_execution_record(execution_id)
        if record is None:
            return _error_response(404, "not-found", f"no execution {execution_id}")
        return record.to_json_obj(include_events=True)

    @app.get("/v1/executions/{execution_id}/log")
    def get_execution_log(execution_id: str):
        record = service.get_execution_record(execution_id)
        if record is None:
            return _error_response(404, "not-found", f"no execution {execution_id}")
        path = service.store.events_path(execution_id)
        if path.exists():
            text = path.read_text(encoding="utf-8")
        else:
            text = "".join(
                canonical_json(e.to_json_obj()) + "\n" for e in record.events
            )
        return PlainTextResponse(text, media_type="application/x-ndjson")

    @app.post("/v1/executions/{execution_id}/approvals/{step_id}")
    def approve_step(execution_id: str, step_id: str, body: dict):
        record = service.engine.approve_manual_step(
            execution_id, step_id,
            body.get("decision", "approve"), body.get("operator", "unknown"),
            body.get("note"),
        )
        service.persist_execution(record)
        return record.to_json_obj()

    @app.post("/v1/executions/{execution_id}/cancel")
    def cancel_execution(execution_id: str, body: dict = None):
        reason = (body or {}).get("reason", "cancelled by operator")
        record = service.engine.cancel_execution(execution_id, reason)
        service.persist_execution(record)
        return record.to_json_obj()

    # -- alerts -------------------------------------------------------------------

    @app.post("/v1/alerts")
    def post_alert(body: dict):
        if service.risk_model is None:
            return _error_response(503, "no-risk-model", "no risk model configured")
        alert = AlertInput.from_json_obj(body)
        scored = score_alert(service.risk_model, alert)
        obj = scored.to_json_obj()
        service.alerts[alert.alert_id] = alert
        service.scored[alert.alert_id] = obj
        service.store.save_alert(alert.alert_id, obj)
        return JSONResponse(status_code=201, content=obj)

    @app.get("/v1/alerts")
    def list_alerts(order: str = Query(None)):
        if service.risk_model is None:
            return {"alerts": []}
        scored = [
            score_alert(service.risk_model, alert) for alert in service.alerts.values()
        ]
        if order == "priority":
            scored = prioritise(scored)
        else:
            scored = sorted(scored, key=lambda s: s.alert.alert_id)
        return {"alerts": [s.to_json_obj() for s in scored]}

    @app.post("/v1/alerts/{alert_id}/respond")
    def respond_to_alert(alert_id: str, body: dict = None):
        alert = service.alerts.get(alert_id)
        if alert is None:
            return _error_response(404, "not-found", f"no alert {alert_id}")
        catalog = [playbook for _sid, playbook in service.store.list_playbooks()]
        selected = select_playbook(alert, catalog)
        if selected is None:
            return _error_response(404, "no-playbook-matched",
                                   f"no playbook matches alert {alert_id}")
        playbook = next(p for p in catalog if p.id == selected)
        body = body or {}
        mode = body.get("mode", "dry-run")
        if mode == "live" and not config.allow_live:
            return _error_response(403, "live-disabled", "live mode is disabled")
        record = service.engine.start_execution(
            playbook, body.get("bindings", {}), mode=mode, seed=body.get("seed"),
        )
        service.engine.advance(record)
        service.persist_execution(record)
        return JSONResponse(status_code=201, content={
            "execution_id": record.execution_id,
            "playbook_id": selected,
            "status": record.status,
        })

    # -- assessments -----------------------------------------------------------------

    def _run_assessment_job(assessment_id, playbook, scenario, runs, seed):
        try:
            report = run_assessment(
                playbook, scenario, service.profile, runs, seed,
                resolver=service._resolve_playbook, organisation=config.organisation,
            )
            service.store.save_assessment(assessment_id, {
                "status": "completed", "report": report.to_json_obj(),
            })
        except (PhxError, ValueError) as exc:
            service.store.save_assessment(assessment_id, {
                "status": "failed", "error": str(exc),
            })

    @app.post("/v1/assessments")
    def post_assessment(body: dict):
        playbook = service.store.get_playbook(body.get("playbook_id", ""))
        if playbook is None:
            return _error_response(404, "not-found", f"no playbook {body.get('playbook_id')}")
        scenario = Scenario.from_json_obj(body.get("scenario", {}))
        runs = int(body.get("runs", 1))
        seed = int(body.get("seed", 0))
        assessment_id = "assessment--" + str(uuid.uuid4())
        service.store.save_assessment(assessment_id, {"status": "running"})
        thread = threading.Thread(
            target=_run_assessment_job,
            args=(assessment_id, playbook, scenario, runs, seed), daemon=True,
        )
        thread.start()
        return JSONResponse(status_code=202, content={"assessment_id": assessment_id})

    @app.get("/v1/assessments/{assessment_id}")
    def get_assessment(assessment_id: str):
        obj = service.store.load_assessment(assessment_id)
        if obj is None:
            return _error_response(404, "not-found", f"no assessment {assessment_id}")
        return obj

    @app.post("/v1/whatif")
    def post_whatif(body: dict):
        candidate = service.store.get_playbook(body.get("candidate_id", ""))
        baseline = service.store.get_playbook(body.get("baseline_id", ""))
        if candidate is None or baseline is None:
            return _error_response(404, "not-found", "candidate or baseline playbook missing")
        scenario = Scenario.from_json_obj(body.get("scenario", {}))
        comparison = what_if(
            candidate, baseline, scenario, service.profile,
            int(body.get("runs", 1)), int(body.get("seed", 0)),
            resolver=service._resolve_playbook, organisation=config.organisation,
        )
        return comparison.to_json_obj()

    # -- notifications ------------------------------------------------------------------

    @app.post("/v1/notifications")
    def post_notification(body: dict):
        bundle = service.hub.emit_alert(
            subject=body.get("subject", ""),
            severity=body.get("severity", 50),
            payload=body.get("payload", {}),
            tlp=body.get("tlp", "amber"),
        )
        return JSONResponse(status_code=201, content=bundle.to_json_obj())

    @app.get("/v1/notifications")
    def get_notifications(cursor: int = Query(0), limit: int = Query(100)):
        bundles, next_cursor = service.hub.feed.read(cursor, limit)
        return {
            "items": [b.to_json_obj() for b in bundles],
            "next_cursor": next_cursor,
        }

    # -- live event stream ----------------------------------------------------------------

    @app.get("/v1/events")
    def sse_events():
        q = service.bus.subscribe()

        def stream():
            try:
                yield ": connected\n\n"
                while True:
                    try:
                        event_name, data = q.get(timeout=config.sse_heartbeat_s)
                    except queue.Empty:
                        yield ": heartbeat\n\n"
                        continue
                    yield f"event: {event_name}\ndata: {canonical_json(data)}\n\n"
            finally:
                service.bus.unsubscribe(q)

        return StreamingResponse(stream(), media_type="text/event-stream", headers={
            "cache-control": "no-cache",
            "x-accel-buffering": "no",
        })

    return app
