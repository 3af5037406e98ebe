"""Playbook invariant checking.

validate() never raises: every broken invariant becomes an error finding,
unreachable steps and unused variables become warnings. A playbook is
executable iff the report carries zero errors.
"""

from dataclasses import dataclass, field

from ..errors import ConditionSyntaxError
from .conditions import Comparison, Literal, VarRef, condition_variables, parse_condition
from .placeholders import scan_placeholders
from .types import (
    AGENT_ID_RE,
    AGENT_TYPES,
    BUILTIN_VARIABLES,
    COMMAND_TYPES,
    PLAYBOOK_ID_RE,
    PLAYBOOK_TYPES,
    ResiliencePlaybook,
    SLO_METRICS,
    SPEC_VERSION,
    TARGET_ID_RE,
    TARGET_TYPES,
    VAR_TYPES,
    VARIABLE_NAME_RE,
    check_variable_value,
)


@dataclass(frozen=True)
class Finding:
    severity: str  # "error" | "warning"
    path: str
    message: str
    category: str = "schema"  # schema | reference | cycle | vartype
    data: dict = field(default_factory=dict)

    def to_json_obj(self):
        return {"severity": self.severity, "path": self.path, "message": self.message}


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple

    @property
    def errors(self):
        return [f for f in self.findings if f.severity == "error"]

    @property
    def warnings(self):
        return [f for f in self.findings if f.severity == "warning"]

    @property
    def executable(self) -> bool:
        return not self.errors

    def to_json_obj(self):
        return {
            "executable": self.executable,
            "findings": [f.to_json_obj() for f in self.findings],
        }


def find_cycle(successors: dict):
    """Return one cycle (list of step ids, closing edge implied) or None.

    successors: step-id -> iterable of successor step-ids.
    """
    WHITE, GREY, BLACK = 0, 1, 2
    color = {node: WHITE for node in successors}
    stack = []

    def visit(node):
        color[node] = GREY
        stack.append(node)
        for succ in successors.get(node, ()):
            if succ not in color:
                continue
            if color[succ] == GREY:
                return stack[stack.index(succ):]
            if color[succ] == WHITE:
                cycle = visit(succ)
                if cycle is not None:
                    return cycle
        stack.pop()
        color[node] = BLACK
        return None

    for node in sorted(successors):
        if color[node] == WHITE:
            cycle = visit(node)
            if cycle is not None:
                return cycle
    return None


def reachable_from(successors: dict, start: str) -> set:
    """Breadth-first reachable set over all successor edges."""
    seen = set()
    frontier = [start] if start in successors else []
    while frontier:
        node = frontier.pop()
        if node in seen:
            continue
        seen.add(node)
        for succ in successors.get(node, ()):
            if succ in successors and succ not in seen:
                frontier.append(succ)
    return seen


def _known_variable_names(playbook) -> set:
    names = {name for name, _ in playbook.playbook_variables}
    for _, step in playbook.workflow:
        for command in step.commands:
            names.update(command.expected_outputs)
    names.update(BUILTIN_VARIABLES)
    return names


def _static_operand_type(operand, variables):
    """Type tag when statically known, else None."""
    if isinstance(operand, Literal):
        value = operand.value
        if isinstance(value, bool):
            return "boolean"
        if isinstance(value, int):
            return "integer"
        if isinstance(value, float):
            return "float"
        if isinstance(value, str):
            return "string"
        return "list"
    if isinstance(operand, VarRef) and operand.name in variables:
        var_type = variables[operand.name].var_type
        return {
            "string": "string", "uri": "string", "ip-address": "string",
            "integer": "integer", "float": "float", "boolean": "boolean",
            "list-of-string": "list",
        }.get(var_type)
    return None


def _walk_comparisons(expr):
    if isinstance(expr, Comparison):
        yield expr
    for attr in ("operand", "left", "right"):
        child = getattr(expr, attr, None)
        if child is not None and not isinstance(child, (VarRef, Literal)):
            yield from _walk_comparisons(child)


def validate(playbook: ResiliencePlaybook) -> ValidationReport:
    findings = []

    def error(path, message, category="schema", **data):
        findings.append(Finding("error", path, message, category, data))

    def warning(path, message):
        findings.append(Finding("warning", path, message))

    steps = playbook.steps()
    variables = playbook.variables()
    agents = playbook.agents()
    targets = playbook.targets()
    known_names = _known_variable_names(playbook)

    # --- top-level fields ---------------------------------------------------
    if playbook.spec_version != SPEC_VERSION:
        error("spec_version", f"unsupported spec_version {playbook.spec_version!r}")
    if not PLAYBOOK_ID_RE.match(playbook.id):
        error("id", "id must have the form playbook--<uuid-v4>")
    if not playbook.name:
        error("name", "name must be non-empty")
    if not playbook.playbook_types:
        error("playbook_types", "at least one playbook type required")
    for ptype in playbook.playbook_types:
        if ptype not in PLAYBOOK_TYPES:
            error("playbook_types", f"unknown playbook type {ptype!r}")
    for attr in ("severity", "priority"):
        value = getattr(playbook, attr)
        if not 0 <= value <= 100:
            error(attr, f"{attr} must be in 0..100, got {value}")
    if playbook.modified < playbook.created:
        error("modified", "modified must not precede created")

    # --- variables ------------------------------------------------------------
    for name, variable in playbook.playbook_variables:
        path = f"playbook_variables.{name}"
        if not VARIABLE_NAME_RE.match(name):
            error(path, f"variable name {name!r} must match __[a-z0-9_-]{{1,64}}__")
        if variable.var_type not in VAR_TYPES:
            error(f"{path}.var_type", f"unknown var_type {variable.var_type!r}")
            continue
        if variable.value is not None:
            reason = check_variable_value(variable.var_type, variable.value)
            if reason is not None:
                error(
                    f"{path}.value", reason, category="vartype",
                    variable=name, expected=variable.var_type,
                    actual=type(variable.value).__name__,
                )
        if variable.constant and variable.value is None:
            error(f"{path}.value", "constant variable requires a value")
        if variable.external and variable.value is not None:
            error(f"{path}.value", "external variable must not carry a value")

    # --- agents / targets -------------------------------------------------------
    for aid, agent in playbook.agent_definitions:
        path = f"agent_definitions.{aid}"
        if not AGENT_ID_RE.match(aid):
            error(path, "agent id must have the form agent--<uuid>")
        if agent.agent_type not in AGENT_TYPES:
            error(f"{path}.agent_type", f"unknown agent_type {agent.agent_type!r}")
        if agent.agent_type == "http-endpoint":
            if not agent.address:
                error(f"{path}.address", "http-endpoint agent requires an address")
            elif "://" not in agent.address:
                error(f"{path}.address", f"address must be an absolute URI: {agent.address!r}")
    for tid, target in playbook.target_definitions:
        path = f"target_definitions.{tid}"
        if not TARGET_ID_RE.match(tid):
            error(path, "target id must have the form target--<uuid>")
        if target.target_type not in TARGET_TYPES:
            error(f"{path}.target_type", f"unknown target_type {target.target_type!r}")
        if target.hypothetical and not playbook.has_type("what-if"):
            error(f"{path}.hypothetical", "hypothetical target outside what-if")

    # --- service objectives -------------------------------------------------------
    service_names = {t.name for _, t in playbook.target_definitions if t.target_type == "service"}
    if playbook.has_type("business-continuity") and not playbook.service_objectives:
        error("service_objectives", "business-continuity playbooks require service objectives")
    for i, slo in enumerate(playbook.service_objectives):
        path = f"service_objectives[{i}]"
        if slo.metric not in SLO_METRICS:
            error(f"{path}.metric", f"unknown metric {slo.metric!r}")
        elif slo.metric == "availability" and not 0 <= slo.target <= 1:
            error(f"{path}.target", f"availability target must be in [0,1], got {slo.target}")
        elif slo.metric == "response-time" and slo.target <= 0:
            error(f"{path}.target", f"response-time target must be positive, got {slo.target}")
        if slo.tier not in (1, 2):
            error(f"{path}.tier", f"tier must be 1 or 2, got {slo.tier}")
        if slo.service not in service_names:
            error(
                f"{path}.service",
                f"no service-type target named {slo.service!r}",
                category="reference", ref=slo.service,
            )

    # --- workflow graph -------------------------------------------------------------
    if not steps:
        error("workflow", "workflow must contain at least one step")
    start = steps.get(playbook.workflow_start)
    if start is None:
        error(
            "workflow_start",
            f"workflow_start {playbook.workflow_start!r} is not a workflow step",
            category="reference", ref=playbook.workflow_start,
        )
    elif start.type != "start":
        error("workflow_start", f"workflow_start must be a start step, got {start.type!r}")

    successors = {}
    for sid, step in playbook.workflow:
        succ = []
        for fieldname, target_id in step.successor_edges():
            if target_id not in steps:
                error(
                    f"workflow.{sid}.{fieldname}",
                    f"successor {target_id!r} is not a workflow step",
                    category="reference", ref=target_id,
                )
            else:
                succ.append(target_id)
        successors[sid] = succ

    cycle = find_cycle(successors)
    if cycle is not None:
        error(
            f"workflow.{cycle[0]}",
            "workflow graph has a cycle: " + " -> ".join(cycle + [cycle[0]]),
            category="cycle", cycle=cycle,
        )

    reachable = reachable_from(successors, playbook.workflow_start)
    if steps and not any(steps[sid].type == "end" for sid in reachable):
        error("workflow", "no end step is reachable from workflow_start")
    for sid in sorted(steps):
        if sid not in reachable:
            warning(f"workflow.{sid}", "step is not reachable from workflow_start")

    # --- per-step invariants ----------------------------------------------------------
    used_names = set()
    for sid, step in playbook.workflow:
        path = f"workflow.{sid}"
        if not step.name:
            error(f"{path}.name", "step name must be non-empty")
        if step.type == "action":
            if not step.commands:
                error(f"{path}.commands", "action requires at least one command")
            if step.agent is not None and step.agent not in agents:
                error(f"{path}.agent", f"unknown agent {step.agent!r}", category="reference", ref=step.agent)
            for j, target_id in enumerate(step.targets):
                if target_id not in targets:
                    error(
                        f"{path}.targets[{j}]", f"unknown target {target_id!r}",
                        category="reference", ref=target_id,
                    )
            if step.timeout_ms is not None and step.timeout_ms <= 0:
                error(f"{path}.timeout_ms", "timeout_ms must be positive")
            if step.retries < 0:
                error(f"{path}.retries", "retries must be >= 0")
            if step.delay_ms < 0:
                error(f"{path}.delay_ms", "delay_ms must be >= 0")
            for j, command in enumerate(step.commands):
                cpath = f"{path}.commands[{j}]"
                if command.command_type not in COMMAND_TYPES:
                    error(f"{cpath}.command_type", f"unknown command_type {command.command_type!r}")
                for token in scan_placeholders(command.content):
                    used_names.add(token)
                    if token not in known_names:
                        error(
                            f"{cpath}.content", f"unknown variable {token!r}",
                            category="reference", ref=token,
                        )
                for name in command.expected_outputs:
                    used_names.add(name)
                    if not VARIABLE_NAME_RE.match(name):
                        error(f"{cpath}.expected_outputs", f"invalid variable name {name!r}")
        elif step.type == "manual":
            if not step.instruction:
                error(f"{path}.instruction", "manual step requires an instruction")
            if step.timeout_ms is not None and step.timeout_ms <= 0:
                error(f"{path}.timeout_ms", "timeout_ms must be positive")
        elif step.type == "parallel":
            if len(step.branches) < 2:
                error(f"{path}.branches", "parallel requires at least two branches")
            sets = []
            for branch in step.branches:
                sets.append((branch, reachable_from(successors, branch)))
            for i in range(len(sets)):
                for j in range(i + 1, len(sets)):
                    overlap = sets[i][1] & sets[j][1]
                    if overlap:
                        error(
                            f"{path}.branches",
                            f"branches {sets[i][0]!r} and {sets[j][0]!r} share steps {sorted(overlap)}",
                        )
        elif step.type == "while-condition":
            if step.max_iterations is not None and step.max_iterations <= 0:
                error(f"{path}.max_iterations", "max_iterations must be positive")
        elif step.type == "switch":
            used_names.add(step.variable)
            if not step.cases:
                error(f"{path}.cases", "switch requires at least one case")
            if step.variable not in known_names:
                error(
                    f"{path}.variable", f"unknown variable {step.variable!r}",
                    category="reference", ref=step.variable,
                )
        elif step.type == "playbook-action":
            for callee, caller in step.binding_map:
                used_names.add(caller)
                if caller not in known_names:
                    error(
                        f"{path}.binding_map.{callee}", f"unknown variable {caller!r}",
                        category="reference", ref=caller,
                    )

        if step.type in ("if-condition", "while-condition") and step.condition is not None:
            cpath = f"{path}.condition"
            try:
                expr = parse_condition(step.condition)
            except ConditionSyntaxError as exc:
                error(cpath, f"condition does not parse: {exc.message}")
            else:
                for name in sorted(condition_variables(expr)):
                    used_names.add(name)
                    if name not in known_names:
                        error(
                            cpath, f"unknown variable {name!r}",
                            category="reference", ref=name,
                        )
                for cmp_node in _walk_comparisons(expr):
                    if cmp_node.op == "CONTAINS":
                        left = _static_operand_type(cmp_node.left, variables)
                        if left is not None and left not in ("string", "list"):
                            error(cpath, f"CONTAINS requires string or list on the left, got {left}")
                    if cmp_node.op == "IN":
                        right = _static_operand_type(cmp_node.right, variables)
                        if right is not None and right != "list":
                            error(cpath, f"IN requires a list on the right, got {right}")

    # --- unused variables ---------------------------------------------------------------
    for name, _variable in playbook.playbook_variables:
        if name not in used_names:
            warning(f"playbook_variables.{name}", "variable is declared but never used")

    ordered = tuple(sorted(findings, key=lambda f: (f.severity, f.path, f.message)))
    return ValidationReport(ordered)
