"""Playbook document parsing, canonical serialization, and hashing.

Parsing is total: a document either yields a fully validated playbook or a
typed error; no partially built object escapes. Two modes exist:

* strict  — unknown fields anywhere are rejected (authoring).
* lenient — unknown fields are preserved opaquely and re-emitted (exchange).
"""

import json

from ..canonical import canonical_json, content_hash
from ..errors import (
    DanglingReferenceError,
    PlaybookSyntaxError,
    SchemaError,
    VariableTypeError,
    WorkflowCycleError,
)
from ..timeutil import normalize_rfc3339
from .types import (
    AgentDefinition,
    Command,
    DEFAULT_ACTION_TIMEOUT_MS,
    DEFAULT_MANUAL_TIMEOUT_MS,
    DEFAULT_MAX_ITERATIONS,
    ResiliencePlaybook,
    ServiceLevelObjective,
    STEP_TYPES,
    TargetDefinition,
    Variable,
    WorkflowStep,
)

_STEP_FIELDS = {
    "start": ("on_completion",),
    "end": (),
    "action": ("commands", "agent", "targets", "on_success", "on_failure",
               "timeout_ms", "retries", "delay_ms"),
    "manual": ("instruction", "timeout_ms", "on_success", "on_failure"),
    "parallel": ("branches", "on_completion", "on_failure"),
    "if-condition": ("condition", "on_true", "on_false", "on_completion"),
    "while-condition": ("condition", "body", "max_iterations", "on_completion"),
    "switch": ("variable", "cases", "default", "on_completion"),
    "playbook-action": ("playbook_id", "binding_map", "on_success", "on_failure"),
}

_REQUIRED_STEP_FIELDS = {
    "start": ("on_completion",),
    "end": (),
    "action": ("commands", "agent", "on_success"),
    "manual": ("instruction", "on_success"),
    "parallel": ("branches", "on_completion"),
    "if-condition": ("condition", "on_true", "on_completion"),
    "while-condition": ("condition", "body", "on_completion"),
    "switch": ("variable", "cases", "on_completion"),
    "playbook-action": ("playbook_id", "on_success"),
}

_TOP_FIELDS = (
    "id", "spec_version", "name", "description", "playbook_types", "severity",
    "priority", "created", "modified", "workflow_start", "workflow",
    "playbook_variables", "agent_definitions", "target_definitions",
    "service_objectives", "labels",
)


def _join(path, key):
    return f"{path}.{key}" if path else key


def _require(obj, key, path, kind):
    if key not in obj:
        raise SchemaError(_join(path, key), "required field missing")
    return _typed(obj[key], _join(path, key), kind)


def _typed(value, path, kind):
    if kind == "str":
        if not isinstance(value, str):
            raise SchemaError(path, f"expected string, got {type(value).__name__}")
    elif kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise SchemaError(path, f"expected integer, got {type(value).__name__}")
    elif kind == "bool":
        if not isinstance(value, bool):
            raise SchemaError(path, f"expected boolean, got {type(value).__name__}")
    elif kind == "num":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise SchemaError(path, f"expected number, got {type(value).__name__}")
    elif kind == "list":
        if not isinstance(value, list):
            raise SchemaError(path, f"expected array, got {type(value).__name__}")
    elif kind == "obj":
        if not isinstance(value, dict):
            raise SchemaError(path, f"expected object, got {type(value).__name__}")
    return value


def _optional(obj, key, path, kind, default=None):
    if key not in obj or obj[key] is None:
        return default
    return _typed(obj[key], _join(path, key), kind)


def _extras(obj, known, path, mode):
    unknown = {k: v for k, v in obj.items() if k not in known}
    if not unknown:
        return ()
    if mode == "strict":
        key = sorted(unknown)[0]
        raise SchemaError(_join(path, key), "unknown field (strict mode)")
    return tuple(sorted(unknown.items()))


def _string_list(obj, key, path, mode_required=False):
    items = _typed(obj, path, "list")
    out = []
    for i, item in enumerate(items):
        out.append(_typed(item, f"{path}[{i}]", "str"))
    return tuple(out)


def _parse_command(obj, path, mode):
    _typed(obj, path, "obj")
    command_type = _require(obj, "command_type", path, "str")
    content = _require(obj, "content", path, "str")
    expected = obj.get("expected_outputs", [])
    expected = _string_list(expected, "expected_outputs", f"{path}.expected_outputs")
    extras = _extras(obj, ("command_type", "content", "expected_outputs"), path, mode)
    return Command(command_type, content, expected, extras)


def _parse_step(step_id, obj, path, mode):
    _typed(obj, path, "obj")
    step_type = _require(obj, "type", path, "str")
    if step_type not in STEP_TYPES:
        raise SchemaError(f"{path}.type", f"unknown step type {step_type!r}")
    embedded = _optional(obj, "id", path, "str")
    if embedded is not None and embedded != step_id:
        raise SchemaError(f"{path}.id", f"embedded id {embedded!r} differs from key {step_id!r}")
    name = _require(obj, "name", path, "str")

    allowed = ("id", "name", "type") + _STEP_FIELDS[step_type]
    extras = _extras(obj, allowed, path, mode)
    for key in _REQUIRED_STEP_FIELDS[step_type]:
        if key not in obj:
            raise SchemaError(f"{path}.{key}", "required field missing")

    fields = {"id": step_id, "type": step_type, "name": name, "extras": extras}
    for ref in ("on_completion", "on_success", "on_failure", "on_true", "on_false", "body", "default"):
        if ref in _STEP_FIELDS[step_type]:
            fields[ref] = _optional(obj, ref, path, "str")
    if step_type == "action":
        commands = _typed(obj["commands"], f"{path}.commands", "list")
        fields["commands"] = tuple(
            _parse_command(c, f"{path}.commands[{i}]", mode) for i, c in enumerate(commands)
        )
        fields["agent"] = _typed(obj["agent"], f"{path}.agent", "str")
        fields["targets"] = _string_list(obj.get("targets", []), "targets", f"{path}.targets")
        fields["timeout_ms"] = _optional(obj, "timeout_ms", path, "int", DEFAULT_ACTION_TIMEOUT_MS)
        fields["retries"] = _optional(obj, "retries", path, "int", 0)
        fields["delay_ms"] = _optional(obj, "delay_ms", path, "int", 0)
    elif step_type == "manual":
        fields["instruction"] = _typed(obj["instruction"], f"{path}.instruction", "str")
        fields["timeout_ms"] = _optional(obj, "timeout_ms", path, "int", DEFAULT_MANUAL_TIMEOUT_MS)
    elif step_type == "parallel":
        fields["branches"] = _string_list(obj["branches"], "branches", f"{path}.branches")
    elif step_type in ("if-condition", "while-condition"):
        fields["condition"] = _typed(obj["condition"], f"{path}.condition", "str")
        if step_type == "while-condition":
            fields["max_iterations"] = _optional(obj, "max_iterations", path, "int", DEFAULT_MAX_ITERATIONS)
    elif step_type == "switch":
        fields["variable"] = _typed(obj["variable"], f"{path}.variable", "str")
        cases = _typed(obj["cases"], f"{path}.cases", "obj")
        parsed = {}
        for literal, target in cases.items():
            parsed[literal] = _typed(target, f"{path}.cases.{literal}", "str")
        fields["cases"] = tuple(sorted(parsed.items()))
    elif step_type == "playbook-action":
        fields["playbook_id"] = _typed(obj["playbook_id"], f"{path}.playbook_id", "str")
        binding = _optional(obj, "binding_map", path, "obj", {})
        pairs = {}
        for callee, caller in binding.items():
            pairs[callee] = _typed(caller, f"{path}.binding_map.{callee}", "str")
        fields["binding_map"] = tuple(sorted(pairs.items()))
    return WorkflowStep(**fields)


def _parse_variable(name, obj, path, mode):
    _typed(obj, path, "obj")
    embedded = _optional(obj, "name", path, "str")
    if embedded is not None and embedded != name:
        raise SchemaError(f"{path}.name", f"embedded name {embedded!r} differs from key {name!r}")
    var_type = _require(obj, "var_type", path, "str")
    value = obj.get("value")
    constant = _optional(obj, "constant", path, "bool", False)
    external = _optional(obj, "external", path, "bool", False)
    extras = _extras(obj, ("name", "var_type", "value", "constant", "external"), path, mode)
    if isinstance(value, list):
        value = tuple(value)
    return Variable(name, var_type, value, constant, external, extras)


def _parse_agent(agent_id, obj, path, mode):
    _typed(obj, path, "obj")
    embedded = _optional(obj, "id", path, "str")
    if embedded is not None and embedded != agent_id:
        raise SchemaError(f"{path}.id", f"embedded id {embedded!r} differs from key {agent_id!r}")
    return AgentDefinition(
        id=agent_id,
        agent_type=_require(obj, "agent_type", path, "str"),
        name=_require(obj, "name", path, "str"),
        address=_optional(obj, "address", path, "str"),
        extras=_extras(obj, ("id", "agent_type", "name", "address"), path, mode),
    )


def _parse_target(target_id, obj, path, mode):
    _typed(obj, path, "obj")
    embedded = _optional(obj, "id", path, "str")
    if embedded is not None and embedded != target_id:
        raise SchemaError(f"{path}.id", f"embedded id {embedded!r} differs from key {target_id!r}")
    props = _optional(obj, "properties", path, "obj", {})
    for key, value in props.items():
        _typed(value, f"{path}.properties.{key}", "str")
    return TargetDefinition(
        id=target_id,
        target_type=_require(obj, "target_type", path, "str"),
        name=_require(obj, "name", path, "str"),
        hypothetical=_optional(obj, "hypothetical", path, "bool", False),
        properties=tuple(sorted(props.items())),
        extras=_extras(obj, ("id", "target_type", "name", "hypothetical", "properties"), path, mode),
    )


def _parse_slo(obj, path, mode):
    _typed(obj, path, "obj")
    return ServiceLevelObjective(
        service=_require(obj, "service", path, "str"),
        metric=_require(obj, "metric", path, "str"),
        target=_require(obj, "target", path, "num"),
        tier=_require(obj, "tier", path, "int"),
        extras=_extras(obj, ("service", "metric", "target", "tier"), path, mode),
    )


def _normalize_ts(text, path):
    try:
        return normalize_rfc3339(text)
    except ValueError as exc:
        raise SchemaError(path, str(exc))


def playbook_from_obj(obj, mode="strict") -> ResiliencePlaybook:
    """Structural typing of a decoded JSON object; invariants are validate()'s job."""
    if mode not in ("strict", "lenient"):
        raise ValueError(f"unknown parse mode {mode!r}")
    _typed(obj, "$", "obj")
    types = _string_list(_require(obj, "playbook_types", "", "list"), "playbook_types", "playbook_types")

    workflow_obj = _require(obj, "workflow", "", "obj")
    workflow = tuple(sorted(
        (sid, _parse_step(sid, step, f"workflow.{sid}", mode))
        for sid, step in workflow_obj.items()
    ))
    variables_obj = _optional(obj, "playbook_variables", "", "obj", {})
    variables = tuple(sorted(
        (name, _parse_variable(name, var, f"playbook_variables.{name}", mode))
        for name, var in variables_obj.items()
    ))
    agents_obj = _optional(obj, "agent_definitions", "", "obj", {})
    agents = tuple(sorted(
        (aid, _parse_agent(aid, agent, f"agent_definitions.{aid}", mode))
        for aid, agent in agents_obj.items()
    ))
    targets_obj = _optional(obj, "target_definitions", "", "obj", {})
    targets = tuple(sorted(
        (tid, _parse_target(tid, target, f"target_definitions.{tid}", mode))
        for tid, target in targets_obj.items()
    ))
    slos_list = _optional(obj, "service_objectives", "", "list", [])
    slos = tuple(
        _parse_slo(slo, f"service_objectives[{i}]", mode) for i, slo in enumerate(slos_list)
    )

    return ResiliencePlaybook(
        id=_require(obj, "id", "", "str"),
        spec_version=_require(obj, "spec_version", "", "str"),
        name=_require(obj, "name", "", "str"),
        description=_optional(obj, "description", "", "str"),
        playbook_types=tuple(sorted(set(types))),
        severity=_require(obj, "severity", "", "int"),
        priority=_require(obj, "priority", "", "int"),
        created=_normalize_ts(_require(obj, "created", "", "str"), "created"),
        modified=_normalize_ts(_require(obj, "modified", "", "str"), "modified"),
        workflow_start=_require(obj, "workflow_start", "", "str"),
        workflow=workflow,
        playbook_variables=variables,
        agent_definitions=agents,
        target_definitions=targets,
        service_objectives=slos,
        labels=_string_list(_optional(obj, "labels", "", "list", []), "labels", "$.labels"),
        extras=_extras(obj, _TOP_FIELDS, "", mode),
    )


def parse_playbook(document, mode="strict") -> ResiliencePlaybook:
    """Parse and fully validate a playbook document (bytes or str).

    Raises PlaybookSyntaxError, SchemaError, DanglingReferenceError,
    WorkflowCycleError, or VariableTypeError; returns a clean playbook
    otherwise.
    """
    from .validation import validate  # local import: validation depends on types only

    if isinstance(document, (bytes, bytearray)):
        try:
            document = document.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise PlaybookSyntaxError(f"invalid UTF-8 at byte {exc.start}", 0, exc.start)
    try:
        obj = json.loads(document)
    except json.JSONDecodeError as exc:
        raise PlaybookSyntaxError(exc.msg, exc.lineno, exc.colno)
    playbook = playbook_from_obj(obj, mode)
    report = validate(playbook)
    if report.errors:
        # raise the most specific error class first (a cycle usually also
        # breaks reachability; report the cause, not the symptom)
        rank = {"cycle": 0, "reference": 1, "vartype": 2, "schema": 3}
        first = sorted(report.errors, key=lambda f: (rank.get(f.category, 9), f.path))[0]
        if first.category == "reference":
            raise DanglingReferenceError(first.path, first.data.get("ref"))
        if first.category == "cycle":
            raise WorkflowCycleError(first.data.get("cycle", []))
        if first.category == "vartype":
            raise VariableTypeError(
                first.data.get("variable"), first.data.get("expected"), first.data.get("actual")
            )
        raise SchemaError(first.path, first.message)
    return playbook


def _command_obj(command: Command) -> dict:
    obj = {
        "command_type": command.command_type,
        "content": command.content,
        "expected_outputs": list(command.expected_outputs),
    }
    obj.update(dict(command.extras))
    return obj


def _step_obj(step: WorkflowStep) -> dict:
    obj = {"id": step.id, "name": step.name, "type": step.type}
    for ref in ("on_completion", "on_success", "on_failure", "on_true", "on_false", "body", "default"):
        if ref in _STEP_FIELDS[step.type] and getattr(step, ref) is not None:
            obj[ref] = getattr(step, ref)
    if step.type == "action":
        obj["commands"] = [_command_obj(c) for c in step.commands]
        obj["agent"] = step.agent
        obj["targets"] = list(step.targets)
        obj["timeout_ms"] = step.timeout_ms
        obj["retries"] = step.retries
        obj["delay_ms"] = step.delay_ms
    elif step.type == "manual":
        obj["instruction"] = step.instruction
        obj["timeout_ms"] = step.timeout_ms
    elif step.type == "parallel":
        obj["branches"] = list(step.branches)
    elif step.type in ("if-condition", "while-condition"):
        obj["condition"] = step.condition
        if step.type == "while-condition":
            obj["max_iterations"] = step.max_iterations
    elif step.type == "switch":
        obj["variable"] = step.variable
        obj["cases"] = dict(step.cases)
    elif step.type == "playbook-action":
        obj["playbook_id"] = step.playbook_id
        obj["binding_map"] = dict(step.binding_map)
    obj.update(dict(step.extras))
    return obj


def _variable_obj(variable: Variable) -> dict:
    obj = {
        "name": variable.name,
        "var_type": variable.var_type,
        "constant": variable.constant,
        "external": variable.external,
    }
    if variable.value is not None:
        obj["value"] = list(variable.value) if isinstance(variable.value, tuple) else variable.value
    obj.update(dict(variable.extras))
    return obj


def playbook_to_obj(playbook: ResiliencePlaybook) -> dict:
    """JSON object in the document format (canonical field population)."""
    obj = {
        "id": playbook.id,
        "spec_version": playbook.spec_version,
        "name": playbook.name,
        "playbook_types": list(playbook.playbook_types),
        "severity": playbook.severity,
        "priority": playbook.priority,
        "created": playbook.created,
        "modified": playbook.modified,
        "workflow_start": playbook.workflow_start,
        "workflow": {sid: _step_obj(step) for sid, step in playbook.workflow},
        "playbook_variables": {name: _variable_obj(v) for name, v in playbook.playbook_variables},
        "agent_definitions": {},
        "target_definitions": {},
        "service_objectives": [],
        "labels": list(playbook.labels),
    }
    if playbook.description is not None:
        obj["description"] = playbook.description
    for aid, agent in playbook.agent_definitions:
        entry = {"id": aid, "agent_type": agent.agent_type, "name": agent.name}
        if agent.address is not None:
            entry["address"] = agent.address
        entry.update(dict(agent.extras))
        obj["agent_definitions"][aid] = entry
    for tid, target in playbook.target_definitions:
        entry = {
            "id": tid,
            "target_type": target.target_type,
            "name": target.name,
            "hypothetical": target.hypothetical,
            "properties": dict(target.properties),
        }
        entry.update(dict(target.extras))
        obj["target_definitions"][tid] = entry
    for slo in playbook.service_objectives:
        entry = {"service": slo.service, "metric": slo.metric, "target": slo.target, "tier": slo.tier}
        entry.update(dict(slo.extras))
        obj["service_objectives"].append(entry)
    obj.update(dict(playbook.extras))
    return obj


def serialize_playbook(playbook: ResiliencePlaybook) -> bytes:
    """Canonical UTF-8 serialization (stable byte-for-byte)."""
    return canonical_json(playbook_to_obj(playbook)).encode("utf-8")


def canonical_hash(playbook: ResiliencePlaybook) -> str:
    """SHA-256 of the canonical serialization, lower-case hex."""
    return content_hash(playbook_to_obj(playbook))
