"""Clock helpers.

Components never read the system clock directly; they receive a ``Clock``
callable. Production wiring passes ``system_clock``; tests and the scenario
harness pass a shared ``ManualClock``.
"""

import re
from datetime import datetime, timedelta, timezone
from typing import Callable

Clock = Callable[[], datetime]

# fromisoformat before 3.11 only takes 3 or 6 fraction digits
_FRACTION_RE = re.compile(r"\.(\d+)")


def system_clock() -> datetime:
    """Current UTC instant."""
    return datetime.now(timezone.utc)


def to_epoch(instant: datetime) -> int:
    return int(instant.timestamp())


def from_epoch(seconds: int) -> datetime:
    return datetime.fromtimestamp(seconds, tz=timezone.utc)


def parse_instant(value: str) -> datetime:
    """Parse an RFC 3339 timestamp into an aware UTC datetime.

    Fractions of any length are accepted; digits past microseconds are dropped.

    Raises:
        ValueError: If the value is not a timezone-aware timestamp.
    """
    if not isinstance(value, str):
        raise ValueError(f"timestamp must be a string: {value!r}")
    normalized = value.strip().upper().replace("Z", "+00:00")
    normalized = _FRACTION_RE.sub(lambda m: "." + m.group(1)[:6].ljust(6, "0"), normalized, count=1)
    parsed = datetime.fromisoformat(normalized)
    if parsed.tzinfo is None:
        raise ValueError(f"timestamp without timezone: {value}")
    return parsed.astimezone(timezone.utc)


def format_instant(instant: datetime) -> str:
    """RFC 3339 in UTC with a ``Z`` suffix; microseconds only when non-zero."""
    instant = instant.astimezone(timezone.utc)
    timespec = "microseconds" if instant.microsecond else "seconds"
    return instant.replace(tzinfo=None).isoformat(timespec=timespec) + "Z"


class ManualClock:
    """Logical clock advanced only by its owner.

    Example:
        clock = ManualClock(parse_instant("2026-06-15T00:00:00Z"))
        clock.advance(seconds=601)
        server = AuthorizationServer(..., clock=clock)
    """

    def __init__(self, start: datetime):
        self._now = start.astimezone(timezone.utc)

    def __call__(self) -> datetime:
        return self._now

    def advance(self, seconds: float = 0, **kwargs) -> datetime:
        self._now = self._now + timedelta(seconds=seconds, **kwargs)
        return self._now

    def set(self, instant: datetime) -> None:
        self._now = instant.astimezone(timezone.utc)
