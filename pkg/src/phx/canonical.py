"""Canonical JSON encoding and content hashing.

Canonical form: object keys sorted ascending by code point, no insignificant
whitespace, UTF-8, floats rendered shortest round-trip (2.50 -> 2.5).
"""

import hashlib
import json


def canonical_json(value) -> str:
    """Encode a JSON-able value in canonical form."""
    return json.dumps(
        value,
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
        allow_nan=False,
    )


def canonical_bytes(value) -> bytes:
    return canonical_json(value).encode("utf-8")


def content_hash(value) -> str:
    """SHA-256 of the canonical encoding, lower-case hex (64 chars)."""
    return hashlib.sha256(canonical_bytes(value)).hexdigest()
