import json
import threading
import time

import httpx
import pytest
from fastapi.testclient import TestClient

from builders import doc
from phx.api import ServiceConfig, create_app, load_config
from phx.canonical import canonical_json
from phx.model import canonical_hash, parse_playbook, playbook_to_obj
from phx.risk import AlertInput, prioritise, score_alert


@pytest.fixture
def config(tmp_path, fixtures_dir):
    return ServiceConfig(
        data_dir=str(tmp_path / "data"),
        organisation="oes-test",
        profile_path=str(fixtures_dir / "default.profile.json"),
        risk_model_path=str(fixtures_dir / "oes-risk.model.json"),
        sse_heartbeat_s=0.2,
    )


@pytest.fixture
def client(config):
    app = create_app(config)
    with TestClient(app) as test_client:
        yield test_client


def post_fixture_playbook(client, fixtures_dir, name):
    body = json.loads((fixtures_dir / f"{name}.rp.json").read_text())
    response = client.post("/v1/playbooks", json=body)
    assert response.status_code in (200, 201), response.text
    return response.json()["id"]


MANUAL_DOC = doc(workflow={
    "start": {"type": "start", "name": "start", "on_completion": "gate"},
    "gate": {"type": "manual", "name": "gate", "instruction": "confirm",
              "on_success": "act"},
    "act": {"type": "action", "name": "act",
             "agent": "agent--00000000-0000-4000-8000-000000000001",
             "commands": [{"command_type": "noop", "content": ""}],
             "on_success": "done"},
    "done": {"type": "end", "name": "end"},
})


class TestPlaybooks:
    def test_import_then_get_round_trips_canonically(self, client, fixtures_dir):
        store_id = post_fixture_playbook(client, fixtures_dir, "minimal")
        got = client.get(f"/v1/playbooks/{store_id}")
        assert got.status_code == 200
        original = parse_playbook((fixtures_dir / "minimal.rp.json").read_bytes())
        assert canonical_json(got.json()) == canonical_json(playbook_to_obj(original))

    def test_idempotent_import_same_id(self, client, fixtures_dir):
        body = json.loads((fixtures_dir / "minimal.rp.json").read_text())
        first = client.post("/v1/playbooks", json=body)
        second = client.post("/v1/playbooks", json=body)
        assert first.status_code == 201
        assert second.status_code == 200
        assert first.json()["id"] == second.json()["id"]
        assert len(client.get("/v1/playbooks").json()["playbooks"]) == 1

    def test_id_is_hash_prefix(self, client, fixtures_dir):
        store_id = post_fixture_playbook(client, fixtures_dir, "minimal")
        playbook = parse_playbook((fixtures_dir / "minimal.rp.json").read_bytes())
        assert store_id == canonical_hash(playbook)[:16]

    def test_invalid_playbook_422_with_report(self, client):
        body = doc(severity=101)
        response = client.post("/v1/playbooks", json=body)
        assert response.status_code == 422
        report = response.json()["report"]
        assert any(f["path"] == "severity" for f in report["findings"])

    def test_bundle_import(self, client, fixtures_dir, tmp_path):
        from phx.exchange import ExchangeHub

        playbook = parse_playbook((fixtures_dir / "minimal.rp.json").read_bytes())
        hub = ExchangeHub(feed_path=tmp_path / "f.jsonl")
        bundle = hub.export_playbook(playbook)
        response = client.post("/v1/playbooks", json=bundle.to_json_obj())
        assert response.status_code == 201
        assert response.json()["canonical_hash"] == canonical_hash(playbook)

    def test_delete(self, client, fixtures_dir):
        store_id = post_fixture_playbook(client, fixtures_dir, "minimal")
        assert client.delete(f"/v1/playbooks/{store_id}").status_code == 204
        assert client.get(f"/v1/playbooks/{store_id}").status_code == 404

    def test_validate_endpoint_reports_warnings(self, client):
        body = doc(variables={"__spare__": {"var_type": "string", "value": "x"}})
        store_id = client.post("/v1/playbooks", json=body).json()["id"]
        report = client.post(f"/v1/playbooks/{store_id}/validate").json()
        assert report["executable"] is True
        assert any("never used" in f["message"] for f in report["findings"])


class TestExecutions:
    def test_dry_run_completes_and_persists(self, client, fixtures_dir, config):
        store_id = post_fixture_playbook(client, fixtures_dir, "minimal")
        response = client.post("/v1/executions", json={
            "playbook_id": store_id, "mode": "dry-run", "seed": 42,
        })
        assert response.status_code == 201
        record = response.json()
        assert record["status"] == "completed"
        execution_id = record["execution_id"]

        got = client.get(f"/v1/executions/{execution_id}").json()
        assert got["status"] == "completed"
        log = client.get(f"/v1/executions/{execution_id}/log").text.strip().splitlines()
        assert json.loads(log[0])["kind"] == "execution-started"
        assert json.loads(log[-1])["kind"] == "execution-completed"

    def test_live_forbidden_by_default(self, client, fixtures_dir):
        store_id = post_fixture_playbook(client, fixtures_dir, "minimal")
        response = client.post("/v1/executions", json={
            "playbook_id": store_id, "mode": "live",
        })
        assert response.status_code == 403

    def test_external_bindings_passed(self, client, fixtures_dir):
        store_id = post_fixture_playbook(client, fixtures_dir, "restore")
        response = client.post("/v1/executions", json={
            "playbook_id": store_id, "mode": "range", "seed": 5,
            "bindings": {"__meter_id__": "meter-1"},
        })
        assert response.status_code == 201
        assert response.json()["status"] == "completed"

    def test_approval_flow(self, client):
        store_id = client.post("/v1/playbooks", json=MANUAL_DOC).json()["id"]
        record = client.post("/v1/executions", json={
            "playbook_id": store_id, "mode": "dry-run", "seed": 1,
        }).json()
        assert record["status"] == "awaiting-input"
        execution_id = record["execution_id"]

        response = client.post(
            f"/v1/executions/{execution_id}/approvals/gate",
            json={"decision": "approve", "operator": "alice", "note": "go"},
        )
        assert response.status_code == 200
        assert response.json()["status"] == "completed"

        again = client.post(
            f"/v1/executions/{execution_id}/approvals/gate",
            json={"decision": "approve", "operator": "alice"},
        )
        assert again.status_code == 409

    def test_cancel(self, client):
        store_id = client.post("/v1/playbooks", json=MANUAL_DOC).json()["id"]
        record = client.post("/v1/executions", json={
            "playbook_id": store_id, "mode": "dry-run", "seed": 1,
        }).json()
        execution_id = record["execution_id"]
        response = client.post(f"/v1/executions/{execution_id}/cancel",
                               json={"reason": "drill over"})
        assert response.json()["status"] == "cancelled"
        assert client.post(f"/v1/executions/{execution_id}/cancel",
                           json={}).status_code == 409

    def test_unknown_execution_404(self, client):
        assert client.get("/v1/executions/exec--nope").status_code == 404


class TestAlerts:
    def test_scoring_and_priority_order_matches_reference(
            self, client, fixtures_dir, oes_risk_model):
        raw_alerts = json.loads((fixtures_dir / "alerts.json").read_text())
        for raw in raw_alerts:
            response = client.post("/v1/alerts", json=raw)
            assert response.status_code == 201
            assert "risk" in response.json()

        listed = client.get("/v1/alerts", params={"order": "priority"}).json()["alerts"]
        got_order = [a["alert"]["alert_id"] for a in listed]
        reference = prioritise([
            score_alert(oes_risk_model, AlertInput.from_json_obj(raw))
            for raw in raw_alerts
        ])
        assert got_order == [s.alert.alert_id for s in reference]

    def test_respond_selects_and_launches(self, client, fixtures_dir):
        post_fixture_playbook(client, fixtures_dir, "meter-restore")
        post_fixture_playbook(client, fixtures_dir, "restore")
        raw = json.loads((fixtures_dir / "alerts.json").read_text())[0]
        client.post("/v1/alerts", json=raw)
        response = client.post(f"/v1/alerts/{raw['alert_id']}/respond",
                               json={"mode": "range", "seed": 3})
        # meter-restore has priority 10 < restore's 20
        meter = parse_playbook((fixtures_dir / "meter-restore.rp.json").read_bytes())
        assert response.status_code == 201
        assert response.json()["playbook_id"] == meter.id
        execution = client.get(
            f"/v1/executions/{response.json()['execution_id']}").json()
        assert execution["status"] == "completed"

    def test_respond_no_match_404(self, client, fixtures_dir):
        raw = dict(json.loads((fixtures_dir / "alerts.json").read_text())[0])
        raw["alert_id"] = "alert--lonely"
        raw["category"] = "insider"
        client.post("/v1/alerts", json=raw)
        response = client.post(f"/v1/alerts/{raw['alert_id']}/respond", json={})
        assert response.status_code == 404
        assert response.json()["code"] == "no-playbook-matched"


class TestAssessmentsAndWhatIf:
    def _scenario(self, fixtures_dir):
        return json.loads((fixtures_dir / "ddos-meter.scenario.json").read_text())

    def _poll(self, client, assessment_id, timeout_s=10.0):
        deadline = time.monotonic() + timeout_s
        while time.monotonic() < deadline:
            obj = client.get(f"/v1/assessments/{assessment_id}").json()
            if obj["status"] != "running":
                return obj
            time.sleep(0.05)
        raise AssertionError("assessment did not finish")

    def test_assessment_roundtrip(self, client, fixtures_dir):
        store_id = post_fixture_playbook(client, fixtures_dir, "meter-restore")
        response = client.post("/v1/assessments", json={
            "playbook_id": store_id,
            "scenario": self._scenario(fixtures_dir),
            "runs": 2, "seed": 7,
        })
        assert response.status_code == 202
        result = self._poll(client, response.json()["assessment_id"])
        assert result["status"] == "completed"
        report = result["report"]
        assert report["per_run"][0]["mttr_ms"] == 100000
        assert report["per_run"][0]["availability"]["smart-meter-portal"] == 0.99

    def test_whatif_endpoint(self, client, fixtures_dir):
        baseline_id = post_fixture_playbook(client, fixtures_dir, "meter-restore")
        candidate_id = post_fixture_playbook(client, fixtures_dir, "meter-restore-fast")
        response = client.post("/v1/whatif", json={
            "candidate_id": candidate_id, "baseline_id": baseline_id,
            "scenario": self._scenario(fixtures_dir), "runs": 1, "seed": 7,
        })
        assert response.status_code == 200
        assert response.json()["deltas"]["mttr_ms"] == -50000


class TestNotifications:
    def test_emit_and_page(self, client):
        for i in range(3):
            response = client.post("/v1/notifications", json={
                "subject": f"note {i}", "severity": 10 + i, "payload": {"n": i},
            })
            assert response.status_code == 201
        page = client.get("/v1/notifications", params={"cursor": 0, "limit": 2}).json()
        assert len(page["items"]) == 2
        rest = client.get("/v1/notifications",
                          params={"cursor": page["next_cursor"]}).json()
        assert len(rest["items"]) == 1

    def test_severity_range_400(self, client):
        response = client.post("/v1/notifications", json={"subject": "x", "severity": 999})
        assert response.status_code == 400


class TestAuth:
    def test_token_required_when_configured(self, tmp_path, fixtures_dir):
        config = ServiceConfig(
            data_dir=str(tmp_path / "data"), token="sekrit",
            risk_model_path=str(fixtures_dir / "oes-risk.model.json"),
        )
        with TestClient(create_app(config)) as client:
            assert client.get("/v1/playbooks").status_code == 401
            ok = client.get("/v1/playbooks",
                            headers={"Authorization": "Bearer sekrit"})
            assert ok.status_code == 200
            assert client.get("/healthz").status_code == 200


class TestConfig:
    def test_toml_and_env_overrides(self, tmp_path):
        path = tmp_path / "phx.toml"
        path.write_text(
            'listen_addr = "0.0.0.0:9000"\n'
            'data_dir = "/tmp/from-file"\n'
            'organisation = "file-org"\n'
            'allow_live = true\n'
            'peers = ["http://peer-a/inbox"]\n'
        )
        config = load_config(path, env={})
        assert config.listen_port == 9000
        assert config.organisation == "file-org"
        assert config.allow_live is True
        assert config.peers == ("http://peer-a/inbox",)

        config = load_config(path, env={
            "PHX_ORG": "env-org", "PHX_ALLOW_LIVE": "false",
            "PHX_DATA_DIR": "/tmp/from-env", "PHX_TOKEN": "t",
            "PHX_PEERS": "http://p1,http://p2",
        })
        assert config.organisation == "env-org"
        assert config.allow_live is False
        assert config.data_dir == "/tmp/from-env"
        assert config.token == "t"
        assert config.peers == ("http://p1", "http://p2")


class TestRestartConsistency:
    def test_terminal_records_reload_identically(self, config, fixtures_dir):
        with TestClient(create_app(config)) as client:
            store_id = post_fixture_playbook(client, fixtures_dir, "minimal")
            record = client.post("/v1/executions", json={
                "playbook_id": store_id, "mode": "dry-run", "seed": 9,
            }).json()
            execution_id = record["execution_id"]
            log_before = client.get(f"/v1/executions/{execution_id}/log").text

        with TestClient(create_app(config)) as client:
            reloaded = client.get(f"/v1/executions/{execution_id}").json()
            assert reloaded["status"] == "completed"
            assert reloaded["step_records"] == record["step_records"]
            assert client.get(f"/v1/executions/{execution_id}/log").text == log_before

    def test_awaiting_execution_rehydrates_and_can_be_approved(self, config):
        with TestClient(create_app(config)) as client:
            store_id = client.post("/v1/playbooks", json=MANUAL_DOC).json()["id"]
            record = client.post("/v1/executions", json={
                "playbook_id": store_id, "mode": "dry-run", "seed": 4,
            }).json()
            execution_id = record["execution_id"]
            assert record["status"] == "awaiting-input"

        with TestClient(create_app(config)) as client:
            reloaded = client.get(f"/v1/executions/{execution_id}").json()
            assert reloaded["status"] == "awaiting-input"
            done = client.post(
                f"/v1/executions/{execution_id}/approvals/gate",
                json={"decision": "approve", "operator": "alice"},
            ).json()
            assert done["status"] == "completed"


class TestSSE:
    def test_stream_delivers_execution_events_in_order(self, config, fixtures_dir):
        import uvicorn

        app = create_app(config)
        server = uvicorn.Server(uvicorn.Config(
            app, host="127.0.0.1", port=0, log_level="error"))
        thread = threading.Thread(target=server.run, daemon=True)
        thread.start()
        deadline = time.monotonic() + 10
        while not server.started:
            assert time.monotonic() < deadline
            time.sleep(0.01)
        port = server.servers[0].sockets[0].getsockname()[1]
        base = f"http://127.0.0.1:{port}"

        received = []
        connected = threading.Event()

        def reader():
            with httpx.stream("GET", f"{base}/v1/events", timeout=10) as response:
                event_name = None
                for line in response.iter_lines():
                    if line.startswith(": connected"):
                        connected.set()
                    if line.startswith("event:"):
                        event_name = line.split(":", 1)[1].strip()
                    elif line.startswith("data:") and event_name:
                        received.append((event_name, json.loads(line[5:])))
                        if event_name == "execution-event" and \
                                received[-1][1].get("kind") == "execution-completed":
                            break

        reader_thread = threading.Thread(target=reader, daemon=True)
        reader_thread.start()
        assert connected.wait(5)

        body = json.loads((fixtures_dir / "minimal.rp.json").read_text())
        store_id = httpx.post(f"{base}/v1/playbooks", json=body).json()["id"]
        record = httpx.post(f"{base}/v1/executions", json={
            "playbook_id": store_id, "mode": "dry-run", "seed": 11,
        }).json()
        reader_thread.join(timeout=10)
        server.should_exit = True
        thread.join(timeout=10)

        execution_events = [d for name, d in received if name == "execution-event"
                            and d["execution_id"] == record["execution_id"]]
        streamed = [(e["seq"], e["ts"], e["kind"]) for e in execution_events]
        assert streamed == sorted(streamed, key=lambda x: x[0])
        assert [k for _, _, k in streamed][0] == "execution-started"
        assert [k for _, _, k in streamed][-1] == "execution-completed"
        seqs = [s for s, _, _ in streamed]
        assert seqs == list(range(1, len(seqs) + 1))
