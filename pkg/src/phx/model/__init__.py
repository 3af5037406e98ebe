"""Resilience playbook format: types, parsing, validation, conditions, hashing."""

from .conditions import (
    AndExpr,
    Comparison,
    Literal,
    NotExpr,
    OrExpr,
    VarRef,
    condition_variables,
    evaluate_condition,
    parse_condition,
)
from .parsing import (
    canonical_hash,
    parse_playbook,
    playbook_from_obj,
    playbook_to_obj,
    serialize_playbook,
)
from .placeholders import scan_placeholders
from .types import (
    AgentDefinition,
    Command,
    ResiliencePlaybook,
    ServiceLevelObjective,
    TargetDefinition,
    Variable,
    WorkflowStep,
    check_variable_value,
    coerce_variable_value,
    render_value,
)
from .validation import Finding, ValidationReport, find_cycle, reachable_from, validate

__all__ = [
    "AgentDefinition", "AndExpr", "Command", "Comparison", "Finding", "Literal",
    "NotExpr", "OrExpr", "ResiliencePlaybook", "ServiceLevelObjective",
    "TargetDefinition", "ValidationReport", "VarRef", "Variable", "WorkflowStep",
    "canonical_hash", "check_variable_value", "coerce_variable_value",
    "condition_variables", "evaluate_condition", "find_cycle", "parse_condition",
    "parse_playbook", "playbook_from_obj", "playbook_to_obj", "reachable_from",
    "render_value", "scan_placeholders", "serialize_playbook", "validate",
]
