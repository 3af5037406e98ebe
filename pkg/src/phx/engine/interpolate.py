"""Single-pass ``__name__`` substitution inside command content."""

from ..errors import UnboundVariableError
from ..model.placeholders import iter_placeholders
from ..model.types import render_value


def interpolate(content: str, bindings: dict) -> str:
    """Replace each placeholder with its binding's canonical text rendering.

    The scan is a single left-to-right pass; replacement text is never
    re-scanned. An unbound placeholder raises UnboundVariableError.
    """
    out = []
    cursor = 0
    for start, end, token in iter_placeholders(content):
        if token not in bindings:
            raise UnboundVariableError(token)
        out.append(content[cursor:start])
        out.append(render_value(bindings[token]))
        cursor = end
    out.append(content[cursor:])
    return "".join(out)
