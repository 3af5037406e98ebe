"""Qualitative + quantitative alert risk scoring and response selection.

The qualitative side is an ordinal attribute tree: leaves take symbols from
their scales, every internal node aggregates its children through a complete
rule table. The quantitative side maps leaf symbols to normalized ordinals
(index / (len-1)) and folds them up with per-node weights. The two combine
lexicographically when ordering the response queue: qualitative class first,
quantitative score as the refinement.
"""

import itertools
import json
from dataclasses import dataclass

from .errors import MissingLeafError, OutOfScaleError, RiskModelError
from .timeutil import parse_rfc3339


@dataclass(frozen=True)
class QualitativeScale:
    """Ordered symbols, index 0 = best/lowest risk."""

    symbols: tuple

    def __post_init__(self):
        if len(self.symbols) < 2:
            raise RiskModelError(f"scale needs at least 2 symbols, got {list(self.symbols)}")
        if len(set(self.symbols)) != len(self.symbols):
            raise RiskModelError(f"duplicate symbols on scale {list(self.symbols)}")

    def index_of(self, symbol: str) -> int:
        return self.symbols.index(symbol)

    def __len__(self):
        return len(self.symbols)


@dataclass(frozen=True)
class AttributeNode:
    name: str
    scale: QualitativeScale
    input_key: str = None            # leaves only
    children: tuple = ()             # internal only
    rule_table: tuple = ()           # sorted ((child indices...), output index) pairs
    weights: tuple = ()              # internal only, aligned with children

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def rules(self) -> dict:
        return dict(self.rule_table)


@dataclass(frozen=True)
class RiskModel:
    name: str
    root: AttributeNode

    def nodes(self):
        out = []

        def walk(node):
            out.append(node)
            for child in node.children:
                walk(child)

        walk(self.root)
        return out

    def leaves(self):
        return [n for n in self.nodes() if n.is_leaf]


@dataclass(frozen=True)
class AlertInput:
    alert_id: str
    received_at: str
    values: tuple  # sorted (input_key, symbol) pairs
    category: str
    source: str

    def value_map(self) -> dict:
        return dict(self.values)

    def to_json_obj(self):
        return {
            "alert_id": self.alert_id,
            "received_at": self.received_at,
            "values": dict(self.values),
            "category": self.category,
            "source": self.source,
        }

    @classmethod
    def from_json_obj(cls, obj):
        for key in ("alert_id", "received_at", "values", "category", "source"):
            if key not in obj:
                raise RiskModelError(f"alert missing field {key!r}")
        return cls(
            alert_id=obj["alert_id"],
            received_at=obj["received_at"],
            values=tuple(sorted(obj["values"].items())),
            category=obj["category"],
            source=obj["source"],
        )


@dataclass(frozen=True)
class ScoredAlert:
    alert: AlertInput
    qualitative: tuple  # sorted (node name, symbol) pairs
    quantitative: float
    root_symbol: str
    root_index: int

    def to_json_obj(self):
        return {
            "alert": self.alert.to_json_obj(),
            "qualitative": dict(self.qualitative),
            "quantitative": self.quantitative,
            "risk": self.root_symbol,
        }


def validate_model(model: RiskModel):
    """Raise RiskModelError on any structural defect (incomplete tables, bad weights)."""
    names = [n.name for n in model.nodes()]
    if len(set(names)) != len(names):
        raise RiskModelError(f"duplicate node names in model {model.name!r}")
    leaf_keys = [n.input_key for n in model.leaves()]
    if len(set(leaf_keys)) != len(leaf_keys):
        raise RiskModelError("duplicate leaf input keys")
    for node in model.nodes():
        if node.is_leaf:
            if not node.input_key:
                raise RiskModelError(f"leaf {node.name!r} has no input_key")
            continue
        if node.input_key:
            raise RiskModelError(f"internal node {node.name!r} must not carry input_key")
        weights = node.weights
        if len(weights) != len(node.children):
            raise RiskModelError(f"node {node.name!r}: one weight per child required")
        if any(w < 0 for w in weights):
            raise RiskModelError(f"node {node.name!r}: weights must be >= 0")
        if abs(sum(weights) - 1.0) > 1e-9:
            raise RiskModelError(f"node {node.name!r}: weights must sum to 1, got {sum(weights)}")
        rules = node.rules()
        domain = list(itertools.product(*[range(len(c.scale)) for c in node.children]))
        missing = [combo for combo in domain if combo not in rules]
        if missing:
            raise RiskModelError(
                f"node {node.name!r}: rule table incomplete, first missing {missing[0]}"
            )
        if len(rules) != len(domain):
            extra = sorted(set(rules) - set(domain))
            raise RiskModelError(f"node {node.name!r}: rule table has rows outside the domain: {extra[:3]}")
        for combo, output in rules.items():
            if not 0 <= output < len(node.scale):
                raise RiskModelError(
                    f"node {node.name!r}: rule output {output} outside scale of {len(node.scale)}"
                )


def evaluate_qualitative(model: RiskModel, alert: AlertInput) -> dict:
    """Bottom-up symbol assignment for every node; root holds the overall risk."""
    values = alert.value_map()
    assignment = {}

    def walk(node) -> int:
        if node.is_leaf:
            if node.input_key not in values:
                raise MissingLeafError(node.input_key)
            symbol = values[node.input_key]
            if symbol not in node.scale.symbols:
                raise OutOfScaleError(node.input_key, symbol)
            index = node.scale.index_of(symbol)
        else:
            combo = tuple(walk(child) for child in node.children)
            index = node.rules()[combo]
        assignment[node.name] = node.scale.symbols[index]
        return index

    walk(model.root)
    return assignment


def evaluate_quantitative(model: RiskModel, alert: AlertInput) -> float:
    """Weighted mean of normalized leaf ordinals; in [0, 1]."""
    values = alert.value_map()

    def walk(node) -> float:
        if node.is_leaf:
            if node.input_key not in values:
                raise MissingLeafError(node.input_key)
            symbol = values[node.input_key]
            if symbol not in node.scale.symbols:
                raise OutOfScaleError(node.input_key, symbol)
            return node.scale.index_of(symbol) / (len(node.scale) - 1)
        return sum(w * walk(child) for w, child in zip(node.weights, node.children))

    return walk(model.root)


def score_alert(model: RiskModel, alert: AlertInput) -> ScoredAlert:
    assignment = evaluate_qualitative(model, alert)
    quantitative = evaluate_quantitative(model, alert)
    root_symbol = assignment[model.root.name]
    return ScoredAlert(
        alert=alert,
        qualitative=tuple(sorted(assignment.items())),
        quantitative=quantitative,
        root_symbol=root_symbol,
        root_index=model.root.scale.index_of(root_symbol),
    )


def prioritise(scored: list) -> list:
    """Total deterministic response order, most urgent first."""

    def key(item: ScoredAlert):
        return (
            -item.root_index,
            -item.quantitative,
            parse_rfc3339(item.alert.received_at),
            item.alert.alert_id,
        )

    return sorted(scored, key=key)


def select_playbook(alert: AlertInput, catalog: list):
    """Pick the response playbook for an alert, or None.

    Candidates carry the alert category as a label and are typed for
    response (incident-response or recovery); lowest priority value wins,
    canonical hash breaks ties.
    """
    from .model.parsing import canonical_hash

    candidates = []
    for playbook in catalog:
        if alert.category not in playbook.labels:
            continue
        if not ({"incident-response", "recovery"} & set(playbook.playbook_types)):
            continue
        candidates.append((playbook.priority, canonical_hash(playbook), playbook))
    if not candidates:
        return None
    candidates.sort(key=lambda item: (item[0], item[1]))
    return candidates[0][2].id


# --- model file format -----------------------------------------------------------

def _node_from_obj(obj, path):
    if not isinstance(obj, dict):
        raise RiskModelError(f"{path}: expected object")
    for key in ("name", "scale"):
        if key not in obj:
            raise RiskModelError(f"{path}: missing {key!r}")
    scale = QualitativeScale(tuple(obj["scale"]))
    children = tuple(
        _node_from_obj(child, f"{path}.children[{i}]")
        for i, child in enumerate(obj.get("children", []))
    )
    rule_table = ()
    weights = ()
    if children:
        rows = obj.get("rule_table")
        if not isinstance(rows, list):
            raise RiskModelError(f"{path}.rule_table: required for internal nodes")
        table = {}
        for i, row in enumerate(rows):
            if not isinstance(row, dict) or "inputs" not in row or "output" not in row:
                raise RiskModelError(f"{path}.rule_table[{i}]: expected {{inputs, output}}")
            combo = tuple(row["inputs"])
            if combo in table:
                raise RiskModelError(f"{path}.rule_table[{i}]: duplicate row for {combo}")
            table[combo] = row["output"]
        rule_table = tuple(sorted(table.items()))
        weights = tuple(obj.get("weights", []))
    return AttributeNode(
        name=obj["name"],
        scale=scale,
        input_key=obj.get("input_key"),
        children=children,
        rule_table=rule_table,
        weights=weights,
    )


def model_from_obj(obj) -> RiskModel:
    if not isinstance(obj, dict) or "root" not in obj:
        raise RiskModelError("risk model document requires a root node")
    model = RiskModel(name=obj.get("name", "risk-model"), root=_node_from_obj(obj["root"], "root"))
    validate_model(model)
    return model


def _node_to_obj(node: AttributeNode):
    obj = {"name": node.name, "scale": list(node.scale.symbols)}
    if node.is_leaf:
        obj["input_key"] = node.input_key
        return obj
    obj["children"] = [_node_to_obj(child) for child in node.children]
    obj["rule_table"] = [
        {"inputs": list(combo), "output": output} for combo, output in node.rule_table
    ]
    obj["weights"] = list(node.weights)
    return obj


def model_to_obj(model: RiskModel) -> dict:
    return {"name": model.name, "root": _node_to_obj(model.root)}


def load_risk_model(path) -> RiskModel:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_obj(json.load(fh))
