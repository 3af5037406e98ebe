"""Shared ``__name__`` placeholder scanning for command content.

The scan is leftmost, shortest-token: between one ``__`` delimiter and the
next, so ``__a____b__`` is two tokens ``__a__`` and ``__b__``, never one.
"""

import re

_PLACEHOLDER_RE = re.compile(r"__[a-z0-9_-]{1,64}?__")


def scan_placeholders(content: str):
    """All placeholder tokens in content, in order of appearance."""
    return [m.group(0) for m in _PLACEHOLDER_RE.finditer(content)]


def iter_placeholders(content: str):
    """(start, end, token) spans for substitution."""
    for m in _PLACEHOLDER_RE.finditer(content):
        yield m.start(), m.end(), m.group(0)
