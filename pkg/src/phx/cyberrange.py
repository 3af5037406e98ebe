"""Playbook-ingesting resilience range.

Builds a simulated environment straight from a playbook's target definitions
(hypothetical ones included), injects incident scenarios, executes the
playbook in range mode over N seeded runs, and scores the orchestration:
time to acknowledge, time to remediate, per-service availability, and
service-level-objective compliance. Effectiveness here is operationalized
as that metric triple; the format itself does not define it.

Asset restoration vocabulary: a range-mode action whose interpolated content
starts with the token ``restore`` flips every asset on its target list back
to ``up`` at the command's completion time.
"""

import csv
import io
import json
from dataclasses import dataclass, field

from .canonical import content_hash
from .dispatch import SimulationProfile
from .engine import Engine, EventKind, ExecStatus
from .errors import MissingMeasurementError, ScenarioError, ScenarioMismatchError
from .model.parsing import canonical_hash
from .model.validation import reachable_from
from .timeutil import now_rfc3339

ASSET_STATES = ("up", "degraded", "down")
RESTORE_TOKEN = "restore"


@dataclass
class SimulatedAsset:
    id: str
    name: str
    target_type: str
    service: bool
    hypothetical: bool
    timeline: list = field(default_factory=list)  # (t_ms, state), strictly increasing

    def state_at(self, t) -> str:
        state = "up"
        for at, new_state in self.timeline:
            if at > t:
                break
            state = new_state
        return state

    def up_time(self, horizon_ms) -> float:
        total = 0.0
        state = "up"
        cursor = 0.0
        for at, new_state in self.timeline:
            if at >= horizon_ms:
                break
            if state == "up":
                total += max(0.0, at - cursor)
            cursor = max(cursor, at)
            state = new_state
        if state == "up":
            total += max(0.0, horizon_ms - cursor)
        return total


@dataclass
class SimulatedEnvironment:
    assets: dict  # asset id -> SimulatedAsset
    environment_hash: str

    def transition(self, asset_id, t, new_state):
        asset = self.assets[asset_id]
        if asset.state_at(t) == new_state:
            return False
        asset.timeline.append((t, new_state))
        asset.timeline.sort(key=lambda pair: pair[0])
        return True


@dataclass(frozen=True)
class Injection:
    at_ms: float
    asset_ref: str = None
    new_state: str = None
    kind: str = "asset-state"  # asset-state | detection-alert
    alert: tuple = ()

    def to_json_obj(self):
        if self.kind == "detection-alert":
            obj = {"at_ms": self.at_ms, "kind": self.kind}
            if self.alert:
                obj["alert"] = dict(self.alert)
            return obj
        return {"at_ms": self.at_ms, "asset_ref": self.asset_ref, "new_state": self.new_state}


@dataclass(frozen=True)
class Scenario:
    scenario_id: str
    name: str
    duration_ms: float
    injections: tuple = ()
    bindings: tuple = ()  # external variable bindings handed to the execution

    def asset_injections(self):
        return [inj for inj in self.injections if inj.kind == "asset-state"]

    def detections(self):
        return [inj for inj in self.injections if inj.kind == "detection-alert"]

    def first_injection_ms(self):
        times = [inj.at_ms for inj in self.asset_injections()]
        return min(times) if times else None

    def to_json_obj(self):
        obj = {
            "scenario_id": self.scenario_id,
            "name": self.name,
            "duration_ms": self.duration_ms,
            "injections": [inj.to_json_obj() for inj in self.injections],
        }
        if self.bindings:
            obj["bindings"] = dict(self.bindings)
        return obj

    @classmethod
    def from_json_obj(cls, obj):
        if not isinstance(obj, dict):
            raise ScenarioError("scenario document must be an object")
        for key in ("scenario_id", "name", "duration_ms"):
            if key not in obj:
                raise ScenarioError(f"scenario missing field {key!r}")
        duration = obj["duration_ms"]
        if not isinstance(duration, (int, float)) or isinstance(duration, bool) or duration <= 0:
            raise ScenarioError(f"duration_ms must be a positive number, got {duration!r}")
        injections = []
        for i, raw in enumerate(obj.get("injections", [])):
            path = f"injections[{i}]"
            if not isinstance(raw, dict) or "at_ms" not in raw:
                raise ScenarioError(f"{path}: expected object with at_ms")
            at = raw["at_ms"]
            if not isinstance(at, (int, float)) or isinstance(at, bool):
                raise ScenarioError(f"{path}.at_ms: expected number")
            if not 0 <= at <= duration:
                raise ScenarioError(f"{path}.at_ms: {at} outside [0, {duration}]")
            if raw.get("kind") == "detection-alert":
                injections.append(Injection(
                    at_ms=at, kind="detection-alert",
                    alert=tuple(sorted(raw.get("alert", {}).items())),
                ))
                continue
            if "asset_ref" not in raw or "new_state" not in raw:
                raise ScenarioError(f"{path}: asset injection requires asset_ref and new_state")
            if raw["new_state"] not in ASSET_STATES:
                raise ScenarioError(f"{path}.new_state: unknown state {raw['new_state']!r}")
            injections.append(Injection(at_ms=at, asset_ref=raw["asset_ref"], new_state=raw["new_state"]))
        return cls(
            scenario_id=obj["scenario_id"],
            name=obj["name"],
            duration_ms=duration,
            injections=tuple(injections),
            bindings=tuple(sorted(obj.get("bindings", {}).items())),
        )

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_obj(json.load(fh))


def generate_environment(playbook, profile: SimulationProfile) -> SimulatedEnvironment:
    """One simulated asset per target definition; hypothetical targets included
    as ordinary assets (that is the point of what-if analysis)."""
    assets = {}
    target_objs = {}
    for tid, target in playbook.target_definitions:
        assets[tid] = SimulatedAsset(
            id=tid,
            name=target.name,
            target_type=target.target_type,
            service=target.target_type == "service",
            hypothetical=target.hypothetical,
        )
        target_objs[tid] = {
            "id": tid,
            "target_type": target.target_type,
            "name": target.name,
            "hypothetical": target.hypothetical,
            "properties": dict(target.properties),
        }
    env_hash = content_hash({"targets": target_objs, "profile": profile.to_json_obj()})
    return SimulatedEnvironment(assets=assets, environment_hash=env_hash)


@dataclass
class RunMetrics:
    run: int
    seed: int
    mtta_ms: float
    mttr_ms: float
    completed: bool
    availability: dict  # service name -> fraction

    def to_json_obj(self):
        return {
            "run": self.run,
            "seed": self.seed,
            "mtta_ms": self.mtta_ms,
            "mttr_ms": self.mttr_ms,
            "completed": self.completed,
            "availability": dict(sorted(self.availability.items())),
        }


@dataclass
class AssessmentReport:
    playbook_id: str
    playbook_hash: str
    scenario_id: str
    profile_hash: str
    environment_hash: str
    runs: int
    base_seed: int
    per_run: list
    aggregates: dict
    slo_results: list
    findings: list
    hypothetical_assets: list
    generated_at: str

    def to_json_obj(self):
        return {
            "playbook_id": self.playbook_id,
            "playbook_hash": self.playbook_hash,
            "scenario_id": self.scenario_id,
            "profile_hash": self.profile_hash,
            "environment_hash": self.environment_hash,
            "runs": self.runs,
            "base_seed": self.base_seed,
            "per_run": [m.to_json_obj() for m in self.per_run],
            "aggregates": self.aggregates,
            "slo_results": self.slo_results,
            "findings": list(self.findings),
            "hypothetical_assets": list(self.hypothetical_assets),
            "generated_at": self.generated_at,
        }

    def to_csv(self) -> str:
        services = sorted({name for m in self.per_run for name in m.availability})
        out = io.StringIO()
        writer = csv.writer(out)
        writer.writerow(["run", "seed", "mtta_ms", "mttr_ms", "completed"]
                        + [f"availability:{name}" for name in services])
        for m in self.per_run:
            writer.writerow(
                [m.run, m.seed,
                 "" if m.mtta_ms is None else m.mtta_ms,
                 "" if m.mttr_ms is None else m.mttr_ms,
                 str(m.completed).lower()]
                + [m.availability.get(name, "") for name in services]
            )
        return out.getvalue()


def _resolve_scenario(scenario, playbook):
    targets = playbook.targets()
    for injection in scenario.asset_injections():
        if injection.asset_ref not in targets:
            raise ScenarioMismatchError(injection.asset_ref)


def _restore_gap_findings(playbook, scenario):
    """Static gaps: injected-down assets no reachable action step restores."""
    steps = playbook.steps()
    successors = {
        sid: [target for _, target in step.successor_edges()] for sid, step in playbook.workflow
    }
    reachable = reachable_from(successors, playbook.workflow_start)
    restorable = set()
    for sid in reachable:
        step = steps[sid]
        if step.type != "action":
            continue
        if any(c.content.split() and c.content.split()[0] == RESTORE_TOKEN for c in step.commands):
            restorable.update(step.targets)
    findings = []
    injected = sorted({
        inj.asset_ref for inj in scenario.asset_injections() if inj.new_state != "up"
    })
    for asset_id in injected:
        if asset_id not in restorable:
            findings.append(f"no step restores asset {asset_id}")
    return findings


def _collect_events(engine, root_record):
    """Events of the root execution and every descendant, as (ts, kind, payload)."""
    out = []
    stack = [root_record.execution_id]
    ids = set()
    while stack:
        execution_id = stack.pop()
        if execution_id in ids:
            continue
        ids.add(execution_id)
        record = engine.executions[execution_id].record
        out.extend((e.ts, e.kind, e.payload) for e in record.events)
        for other_id, state in engine.executions.items():
            if state.record.parent_execution_id == execution_id:
                stack.append(other_id)
    return out


def _single_run(playbook, scenario, profile, seed, run_index, resolver, organisation):
    env = generate_environment(playbook, profile)
    detections = scenario.detections()
    start_at = min((d.at_ms for d in detections), default=0.0)
    first_injection = scenario.first_injection_ms()

    transitions = []  # (t, priority, asset_id, state); injections sort before restores

    for injection in scenario.asset_injections():
        transitions.append((injection.at_ms, 0, injection.asset_ref, injection.new_state))

    def range_hook(content, target_ids, t_done):
        tokens = content.split()
        if not tokens or tokens[0] != RESTORE_TOKEN:
            return []
        restored = [tid for tid in target_ids if tid in env.assets]
        for tid in restored:
            transitions.append((t_done, 1, tid, "up"))
        return restored

    engine = Engine(playbook_resolver=resolver, profile=profile, organisation=organisation)
    injected_assets = sorted({
        inj.asset_ref for inj in scenario.asset_injections() if inj.new_state != "up"
    })
    metadata = {
        "scenario_id": scenario.scenario_id,
        "injected_assets": injected_assets,
        "first_injection_ms": first_injection,
        "duration_ms": scenario.duration_ms,
    }
    record = engine.start_execution(
        playbook, dict(scenario.bindings), mode="range", seed=seed,
        start_at_ms=start_at, metadata=metadata, range_hook=range_hook,
    )
    engine.advance(record)

    # build asset timelines from the merged transition set
    for t, _prio, asset_id, new_state in sorted(transitions, key=lambda x: (x[0], x[1])):
        if t <= scenario.duration_ms:
            env.transition(asset_id, t, new_state)

    events = _collect_events(engine, record)
    mtta = None
    if first_injection is not None:
        ack_times = [
            ts for ts, kind, payload in events
            if (kind == EventKind.STEP_ENTERED.value and payload.get("step_type") == "action")
            or kind == EventKind.APPROVAL_GRANTED.value
        ]
        if ack_times:
            mtta = min(ack_times) - first_injection

    injected_down_services = [
        asset_id for asset_id in injected_assets if env.assets[asset_id].service
    ]
    mttr = None
    restored_all = True
    if injected_down_services:
        candidate_times = sorted({
            t for asset_id in injected_down_services
            for t, _state in env.assets[asset_id].timeline
            if first_injection is None or t >= first_injection
        })
        mttr = None
        for t in candidate_times:
            if all(env.assets[a].state_at(t) == "up" for a in injected_down_services):
                mttr = t - (first_injection or 0.0)
                break
        if mttr is None:
            mttr = scenario.duration_ms
            restored_all = False

    availability = {}
    for asset in env.assets.values():
        if not asset.service:
            continue
        fraction = asset.up_time(scenario.duration_ms) / scenario.duration_ms
        if asset.name in availability:
            fraction = min(fraction, availability[asset.name])
        availability[asset.name] = fraction

    completed = restored_all and record.status == ExecStatus.COMPLETED.value
    return RunMetrics(
        run=run_index, seed=seed, mtta_ms=mtta, mttr_ms=mttr,
        completed=completed, availability=availability,
    ), env, record


def _aggregate(values):
    present = [v for v in values if v is not None]
    if not present:
        return None
    return {
        "mean": sum(present) / len(present),
        "min": min(present),
        "max": max(present),
    }


def run_assessment(playbook, scenario, profile=None, runs=1, base_seed=0,
                   resolver=None, organisation="phx") -> AssessmentReport:
    """Execute the playbook against the scenario over N seeded range runs.

    Run k uses seed base_seed + k; reports are deterministic for fixed inputs
    (generated_at aside).
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    profile = profile or SimulationProfile()
    _resolve_scenario(scenario, playbook)

    per_run = []
    env = None
    for k in range(runs):
        metrics, env, _record = _single_run(
            playbook, scenario, profile, base_seed + k, k, resolver, organisation,
        )
        per_run.append(metrics)

    service_names = sorted({name for m in per_run for name in m.availability})
    aggregates = {
        "mtta_ms": _aggregate([m.mtta_ms for m in per_run]),
        "mttr_ms": _aggregate([m.mttr_ms for m in per_run]),
        "availability": {
            name: _aggregate([m.availability.get(name) for m in per_run])
            for name in service_names
        },
        "completed_runs": sum(1 for m in per_run if m.completed),
    }

    measured = {}
    for name in service_names:
        entry = {}
        agg = aggregates["availability"][name]
        if agg is not None:
            entry["availability"] = agg["mean"]
        base_latency = None
        for _tid, target in playbook.target_definitions:
            if target.target_type == "service" and target.name == name:
                props = target.property_map()
                if "base_latency_ms" in props:
                    base_latency = float(props["base_latency_ms"])
                break
        entry["response-time"] = base_latency if base_latency is not None else 0.0
        measured[name] = entry
    slo_results = check_slo(measured, playbook.service_objectives)

    findings = _restore_gap_findings(playbook, scenario)
    hypothetical = sorted(tid for tid, t in playbook.target_definitions if t.hypothetical)

    return AssessmentReport(
        playbook_id=playbook.id,
        playbook_hash=canonical_hash(playbook),
        scenario_id=scenario.scenario_id,
        profile_hash=profile.profile_hash(),
        environment_hash=env.environment_hash,
        runs=runs,
        base_seed=base_seed,
        per_run=per_run,
        aggregates=aggregates,
        slo_results=slo_results,
        findings=findings,
        hypothetical_assets=hypothetical,
        generated_at=now_rfc3339(),
    )


def check_slo(measured: dict, objectives) -> list:
    """Pass/fail per objective; availability passes at >=, response-time at <=,
    exact boundaries pass."""
    rows = []
    for slo in objectives:
        if slo.service not in measured or slo.metric not in measured[slo.service]:
            raise MissingMeasurementError(slo.service)
        value = measured[slo.service][slo.metric]
        if slo.metric == "availability":
            ok = value >= slo.target
        else:
            ok = value <= slo.target
        rows.append({
            "service": slo.service,
            "metric": slo.metric,
            "tier": slo.tier,
            "target": slo.target,
            "measured": value,
            "pass": ok,
        })
    return rows


@dataclass
class ComparisonReport:
    candidate: AssessmentReport
    baseline: AssessmentReport
    deltas: dict

    def to_json_obj(self):
        return {
            "candidate": self.candidate.to_json_obj(),
            "baseline": self.baseline.to_json_obj(),
            "deltas": self.deltas,
        }


def _mean_of(report, metric):
    agg = report.aggregates.get(metric)
    return None if agg is None else agg["mean"]


def what_if(candidate, baseline, scenario, profile=None, runs=1, base_seed=0,
            resolver=None, organisation="phx") -> ComparisonReport:
    """Assess candidate and baseline under identical conditions and diff them."""
    candidate_report = run_assessment(
        candidate, scenario, profile, runs, base_seed, resolver, organisation)
    baseline_report = run_assessment(
        baseline, scenario, profile, runs, base_seed, resolver, organisation)

    def delta(a, b):
        if a is None or b is None:
            return None
        return a - b

    names = sorted(
        set(candidate_report.aggregates["availability"])
        | set(baseline_report.aggregates["availability"])
    )
    availability_deltas = {}
    for name in names:
        c = candidate_report.aggregates["availability"].get(name)
        b = baseline_report.aggregates["availability"].get(name)
        availability_deltas[name] = delta(
            None if c is None else c["mean"], None if b is None else b["mean"]
        )
    pass_count = lambda report: sum(1 for row in report.slo_results if row["pass"])
    deltas = {
        "mtta_ms": delta(_mean_of(candidate_report, "mtta_ms"), _mean_of(baseline_report, "mtta_ms")),
        "mttr_ms": delta(_mean_of(candidate_report, "mttr_ms"), _mean_of(baseline_report, "mttr_ms")),
        "availability": availability_deltas,
        "slo_pass_count": pass_count(candidate_report) - pass_count(baseline_report),
    }
    return ComparisonReport(candidate_report, baseline_report, deltas)
