"""RFC 3339 timestamps with millisecond precision (the canonical wire form)."""

import re
import time
from datetime import datetime, timedelta, timezone

_RFC3339 = re.compile(
    r"^(\d{4})-(\d{2})-(\d{2})[Tt ]"
    r"(\d{2}):(\d{2}):(\d{2})(?:\.(\d{1,9}))?"
    r"([Zz]|[+-]\d{2}:\d{2})$"
)


def parse_rfc3339(text: str) -> datetime:
    """Parse an RFC 3339 timestamp to an aware UTC datetime.

    Sub-millisecond digits are truncated; any UTC offset is normalized away.
    """
    m = _RFC3339.match(text)
    if m is None:
        raise ValueError(f"not an RFC 3339 timestamp: {text!r}")
    year, month, day, hour, minute, second = (int(m.group(i)) for i in range(1, 7))
    frac = m.group(7) or ""
    millis = int(frac[:3].ljust(3, "0")) if frac else 0
    offset = m.group(8)
    if offset in ("Z", "z"):
        tz = timezone.utc
    else:
        sign = 1 if offset[0] == "+" else -1
        tz = timezone(sign * timedelta(hours=int(offset[1:3]), minutes=int(offset[4:6])))
    dt = datetime(year, month, day, hour, minute, second, millis * 1000, tzinfo=tz)
    return dt.astimezone(timezone.utc)


def format_rfc3339(dt: datetime) -> str:
    """Canonical rendering: UTC, exactly three fractional digits, trailing Z."""
    dt = dt.astimezone(timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{dt.microsecond // 1000:03d}Z"


def normalize_rfc3339(text: str) -> str:
    return format_rfc3339(parse_rfc3339(text))


def now_rfc3339() -> str:
    return format_rfc3339(datetime.now(timezone.utc))


def now_ms() -> float:
    """Wall clock in epoch milliseconds."""
    return time.time() * 1000.0


def epoch_ms_to_rfc3339(ms: float) -> str:
    """Render an epoch-milliseconds instant (simulated clocks use epoch 0)."""
    return format_rfc3339(datetime.fromtimestamp(ms / 1000.0, tz=timezone.utc))
