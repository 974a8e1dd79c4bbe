"""Shared identifiers, roles, clocks, and calendar helpers.

Ids are 26-character Crockford base-32 strings carrying a 48-bit millisecond
timestamp prefix and 80 bits of randomness, so lexicographic order matches
creation order at millisecond granularity.
"""

from __future__ import annotations

import secrets
import threading
import time
from datetime import date, datetime, timezone
from enum import Enum
from zoneinfo import ZoneInfo, ZoneInfoNotFoundError

from .errors import UnknownTimezone

CROCKFORD32 = "0123456789ABCDEFGHJKMNPQRSTVWXYZ"

_ID_BITS = 128
_ID_CHARS = 26
_TS_BITS = 48
_RAND_BITS = 80


class Role(str, Enum):
    STUDENT = "student"
    INSTRUCTOR = "instructor"
    ADMIN = "admin"

    @property
    def rank(self) -> int:
        return _ROLE_RANK[self]


_ROLE_RANK = {Role.STUDENT: 0, Role.INSTRUCTOR: 1, Role.ADMIN: 2}


def new_id(now_ms: int, entropy: bytes | None = None) -> str:
    """Mint a sortable 26-char id from a millisecond timestamp and 10 random bytes."""
    if now_ms < 0:
        raise ValueError("timestamp must be non-negative")
    if entropy is None:
        entropy = secrets.token_bytes(10)
    if len(entropy) < 10:
        raise ValueError("need at least 10 bytes of entropy")
    value = ((now_ms & ((1 << _TS_BITS) - 1)) << _RAND_BITS) | int.from_bytes(
        entropy[:10], "big"
    )
    chars = []
    for _ in range(_ID_CHARS):
        chars.append(CROCKFORD32[value & 0x1F])
        value >>= 5
    return "".join(reversed(chars))


def id_timestamp_ms(entity_id: str) -> int:
    """Recover the millisecond timestamp encoded in an id prefix."""
    value = 0
    for ch in entity_id:
        value = (value << 5) | CROCKFORD32.index(ch)
    return value >> _RAND_BITS


class Clock:
    """Wall clock in milliseconds since the epoch, monotone non-decreasing.

    A small amount of backwards system-clock drift is absorbed by holding the
    last observed value, which keeps journal timestamps ordered.
    """

    def __init__(self):
        self._last = 0
        self._lock = threading.Lock()

    def now_ms(self) -> int:
        with self._lock:
            t = int(time.time() * 1000)
            if t < self._last:
                t = self._last
            self._last = t
            return t


class ManualClock(Clock):
    """Test clock: time only moves when told to."""

    def __init__(self, start_ms: int = 0):
        super().__init__()
        self._now = start_ms

    def now_ms(self) -> int:
        return self._now

    def set(self, now_ms: int) -> None:
        if now_ms < self._now:
            raise ValueError("clock must not run backwards")
        self._now = now_ms

    def advance(self, delta_ms: int) -> None:
        self.set(self._now + delta_ms)


def local_day(ts_ms: int, tz: str) -> date:
    """Civil date of a UTC millisecond timestamp in an IANA timezone."""
    try:
        zone = ZoneInfo(tz)
    except (ZoneInfoNotFoundError, ValueError, KeyError) as exc:
        raise UnknownTimezone(f"unknown timezone {tz!r}") from exc
    dt = datetime.fromtimestamp(ts_ms / 1000.0, tz=timezone.utc)
    return dt.astimezone(zone).date()


def parse_ts_ms(text: str) -> int:
    """Parse an ISO date or datetime into epoch milliseconds (UTC assumed)."""
    raw = text.strip()
    try:
        dt = datetime.fromisoformat(raw)
    except ValueError:
        raise ValueError(f"not an ISO date/datetime: {text!r}")
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp() * 1000)
