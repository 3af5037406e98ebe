#!/usr/bin/env python3
"""Regenerate the committed fixtures.

Golden outputs are only written after the hand-computed schedule assertions
pass, so the goldens always encode the independently derived expectations:

  ddos-meter scenario, 10,000 s horizon, portal service down at t=0,
  detection at t=0, fixed 100 ms latencies:
    baseline  restore completes at 99,900 + 100 = 100,000 ms
              -> MTTR 100,000 ms, availability 1 - 100000/10000000 = 0.99
    candidate activate at 100 ms, restore dispatch 100 + 49,800 = 49,900,
              completes at 50,000 ms -> MTTR 50,000 ms; delta -50,000 ms
"""

import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from phx.cyberrange import Scenario, run_assessment, what_if  # noqa: E402
from phx.dispatch import SimulationProfile  # noqa: E402
from phx.model import canonical_hash, parse_playbook, validate  # noqa: E402

FIXTURES = ROOT / "fixtures"

AGENT = "agent--00000000-0000-4000-8000-000000000001"
PORTAL = "target--11111111-2222-4333-8444-555555555555"
METER = "target--aaaaaaaa-bbbb-4ccc-8ddd-eeeeeeeeffff"
LINK = "target--12121212-3434-4565-8787-909090909090"

CREATED = "2026-03-01T09:00:00.000Z"

AGENTS = {AGENT: {"agent_type": "engine-internal", "name": "orchestration engine"}}


def portal_target():
    return {
        "target_type": "service",
        "name": "smart-meter-portal",
        "properties": {"tier": "1", "base_latency_ms": "120"},
    }


MINIMAL = {
    "id": "playbook--3f1c6a7e-9b42-4c39-8e5a-2d7b1f0c4e21",
    "spec_version": "phx-rp-1.0",
    "name": "minimal",
    "description": "smallest legal playbook: start, one noop action, end",
    "playbook_types": ["incident-response"],
    "severity": 10,
    "priority": 90,
    "created": CREATED,
    "modified": CREATED,
    "workflow_start": "start",
    "workflow": {
        "start": {"type": "start", "name": "start", "on_completion": "noop"},
        "noop": {
            "type": "action", "name": "do nothing", "agent": AGENT,
            "commands": [{"command_type": "noop", "content": ""}],
            "on_success": "done",
        },
        "done": {"type": "end", "name": "end"},
    },
    "agent_definitions": AGENTS,
    "labels": ["fixture"],
}

RESTORE = {
    "id": "playbook--7a2e9c4d-1f3b-4a58-9c6e-8b5d2f7e0a13",
    "spec_version": "phx-rp-1.0",
    "name": "meter isolation and restore",
    "description": "operator-gated isolation, restore, and downstream alerting",
    "playbook_types": ["incident-response", "recovery"],
    "severity": 70,
    "priority": 20,
    "created": CREATED,
    "modified": CREATED,
    "workflow_start": "start",
    "workflow": {
        "start": {"type": "start", "name": "start", "on_completion": "confirm"},
        "confirm": {
            "type": "manual",
            "name": "confirm isolation",
            "instruction": "Confirm the affected meter may be isolated from the AMI headend.",
            "on_success": "isolate",
        },
        "isolate": {
            "type": "action", "name": "isolate meter", "agent": AGENT,
            "targets": [METER],
            "commands": [{"command_type": "shell-sim",
                          "content": "isolate __meter_id__ from headend"}],
            "on_success": "restore",
        },
        "restore": {
            "type": "action", "name": "restore meter", "agent": AGENT,
            "targets": [METER],
            "commands": [{"command_type": "shell-sim", "content": "restore __meter_id__"}],
            "on_success": "announce",
        },
        "announce": {
            "type": "action", "name": "notify authority", "agent": AGENT,
            "commands": [{"command_type": "exchange",
                          "content": "meter __meter_id__ restored",
                          "expected_outputs": ["__ticket__"]}],
            "on_success": "done",
        },
        "done": {"type": "end", "name": "end"},
    },
    "playbook_variables": {
        "__meter_id__": {"var_type": "string", "external": True},
        "__ticket__": {"var_type": "string"},
    },
    "agent_definitions": AGENTS,
    "target_definitions": {
        METER: {"target_type": "smart-meter", "name": "meter-cluster-7"},
    },
    "labels": ["ddos", "fixture"],
}

METER_RESTORE = {
    "id": "playbook--5b8d3e2f-6c41-4d7a-9e0b-1a2c3d4e5f60",
    "spec_version": "phx-rp-1.0",
    "name": "portal restore",
    "description": "bring the metering portal back after a volumetric attack",
    "playbook_types": ["incident-response", "recovery"],
    "severity": 80,
    "priority": 10,
    "created": CREATED,
    "modified": CREATED,
    "workflow_start": "start",
    "workflow": {
        "start": {"type": "start", "name": "start", "on_completion": "scrub"},
        "scrub": {
            "type": "action", "name": "scrub and restore portal", "agent": AGENT,
            "targets": [PORTAL],
            "delay_ms": 99900,
            "timeout_ms": 600000,
            "commands": [{"command_type": "shell-sim", "content": "restore portal frontends"}],
            "on_success": "done",
        },
        "done": {"type": "end", "name": "end"},
    },
    "agent_definitions": AGENTS,
    "target_definitions": {PORTAL: portal_target()},
    "service_objectives": [
        {"service": "smart-meter-portal", "metric": "availability", "target": 0.99, "tier": 1},
        {"service": "smart-meter-portal", "metric": "response-time", "target": 200, "tier": 1},
    ],
    "labels": ["ddos", "fixture"],
}

METER_RESTORE_FAST = {
    "id": "playbook--9e4f7a1b-2d3c-4b5a-8f6e-7c8d9e0f1a2b",
    "spec_version": "phx-rp-1.0",
    "name": "portal restore via backup link",
    "description": "what-if: prospective fallback telecom link halves recovery time",
    "playbook_types": ["incident-response", "recovery", "what-if"],
    "severity": 80,
    "priority": 10,
    "created": CREATED,
    "modified": CREATED,
    "workflow_start": "start",
    "workflow": {
        "start": {"type": "start", "name": "start", "on_completion": "failover"},
        "failover": {
            "type": "action", "name": "activate backup link", "agent": AGENT,
            "targets": [LINK],
            "commands": [{"command_type": "shell-sim", "content": "activate fallback path"}],
            "on_success": "scrub",
        },
        "scrub": {
            "type": "action", "name": "restore portal over backup", "agent": AGENT,
            "targets": [PORTAL],
            "delay_ms": 49800,
            "timeout_ms": 600000,
            "commands": [{"command_type": "shell-sim", "content": "restore portal frontends"}],
            "on_success": "done",
        },
        "done": {"type": "end", "name": "end"},
    },
    "agent_definitions": AGENTS,
    "target_definitions": {
        PORTAL: portal_target(),
        LINK: {"target_type": "telecom-link", "name": "fallback-lte-link", "hypothetical": True},
    },
    "service_objectives": [
        {"service": "smart-meter-portal", "metric": "availability", "target": 0.99, "tier": 1},
        {"service": "smart-meter-portal", "metric": "response-time", "target": 200, "tier": 1},
    ],
    "labels": ["ddos", "fixture", "what-if"],
}

SCENARIO = {
    "scenario_id": "scenario--ddos-meter",
    "name": "volumetric attack takes the metering portal down at t=0",
    "duration_ms": 10000000,
    "injections": [
        {"at_ms": 0, "asset_ref": PORTAL, "new_state": "down"},
        {"at_ms": 0, "kind": "detection-alert",
         "alert": {"category": "ddos", "source": "ndr-probe"}},
    ],
}

PROFILE = {
    "defaults": {
        "success_probability": 1.0,
        "latency": {"distribution": "fixed", "params": {"ms": 100}},
    }
}

RISK_MODEL = {
    "name": "oes-risk",
    "root": {
        "name": "overall_risk",
        "scale": ["low", "medium", "high"],
        "children": [
            {"name": "attack_severity", "scale": ["low", "medium", "high"],
             "input_key": "attack_severity"},
            {"name": "asset_criticality", "scale": ["low", "medium", "high"],
             "input_key": "asset_criticality"},
            {"name": "service_tier_exposure", "scale": ["low", "medium", "high"],
             "input_key": "service_tier_exposure"},
        ],
        "rule_table": [
            {"inputs": [a, c, e], "output": min(2, a + (1 if c + e >= 3 else 0))}
            for a in range(3) for c in range(3) for e in range(3)
        ],
        "weights": [0.5, 0.3, 0.2],
    },
}

ALERTS = [
    {
        "alert_id": "alert--0001",
        "received_at": "2026-03-02T10:00:00.000Z",
        "values": {"attack_severity": "high", "asset_criticality": "high",
                   "service_tier_exposure": "medium"},
        "category": "ddos",
        "source": "ndr-probe",
    },
    {
        "alert_id": "alert--0002",
        "received_at": "2026-03-02T10:00:05.000Z",
        "values": {"attack_severity": "medium", "asset_criticality": "high",
                   "service_tier_exposure": "high"},
        "category": "data-breach",
        "source": "siem",
    },
    {
        "alert_id": "alert--0003",
        "received_at": "2026-03-02T09:59:55.000Z",
        "values": {"attack_severity": "high", "asset_criticality": "medium",
                   "service_tier_exposure": "low"},
        "category": "ddos",
        "source": "ueba",
    },
]


def write(name, obj):
    path = FIXTURES / name
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {path.relative_to(ROOT)}")


def main():
    FIXTURES.mkdir(exist_ok=True)
    write("minimal.rp.json", MINIMAL)
    write("restore.rp.json", RESTORE)
    write("meter-restore.rp.json", METER_RESTORE)
    write("meter-restore-fast.rp.json", METER_RESTORE_FAST)
    write("ddos-meter.scenario.json", SCENARIO)
    write("default.profile.json", PROFILE)
    write("oes-risk.model.json", RISK_MODEL)
    write("alerts.json", ALERTS)

    for name in ("minimal", "restore", "meter-restore", "meter-restore-fast"):
        raw = (FIXTURES / f"{name}.rp.json").read_bytes()
        playbook = parse_playbook(raw)
        report = validate(playbook)
        assert not report.errors, (name, [f.path for f in report.errors])

    minimal = parse_playbook((FIXTURES / "minimal.rp.json").read_bytes())
    (FIXTURES / "minimal.rp.json.sha256").write_text(canonical_hash(minimal) + "\n")
    print("wrote fixtures/minimal.rp.json.sha256")

    # hand-computed schedule assertions gate the goldens
    baseline = parse_playbook((FIXTURES / "meter-restore.rp.json").read_bytes())
    candidate = parse_playbook((FIXTURES / "meter-restore-fast.rp.json").read_bytes())
    scenario = Scenario.load(FIXTURES / "ddos-meter.scenario.json")
    profile = SimulationProfile.load(FIXTURES / "default.profile.json")

    report = run_assessment(baseline, scenario, profile, runs=1, base_seed=7)
    run0 = report.per_run[0]
    assert run0.mttr_ms == 100000, run0.mttr_ms
    assert run0.availability["smart-meter-portal"] == 0.99, run0.availability
    assert run0.mtta_ms == 0, run0.mtta_ms
    assert run0.completed
    slo = {(r["service"], r["metric"]): r["pass"] for r in report.slo_results}
    assert slo[("smart-meter-portal", "availability")] is True
    assert slo[("smart-meter-portal", "response-time")] is True

    golden = report.to_json_obj()
    golden["generated_at"] = "1970-01-01T00:00:00.000Z"
    write("ddos-meter.golden.json", golden)

    comparison = what_if(candidate, baseline, scenario, profile, runs=1, base_seed=7)
    assert comparison.deltas["mttr_ms"] == -50000, comparison.deltas
    assert comparison.candidate.per_run[0].mttr_ms == 50000
    golden_cmp = comparison.to_json_obj()
    golden_cmp["candidate"]["generated_at"] = "1970-01-01T00:00:00.000Z"
    golden_cmp["baseline"]["generated_at"] = "1970-01-01T00:00:00.000Z"
    write("whatif-link.golden.json", golden_cmp)

    print("all fixture assertions passed")


if __name__ == "__main__":
    main()
