"""Dashboard aggregates and research export, both computed from the journal.

Nothing here reads live state for its numbers: every figure is a fold over
journaled events, so a frozen journal always yields the same dashboard and
an auditor can recount any statistic independently.
"""

from __future__ import annotations

import hashlib

from . import events as ev
from .events import canonical_json
from .quota import REFUND_GATE_REJECT, REFUND_GATEWAY_ERROR


def _in_window(at: int, from_ms: int | None, to_ms: int | None) -> bool:
    if from_ms is not None and at < from_ms:
        return False
    if to_ms is not None and at >= to_ms:
        return False
    return True


def compute_dashboard(store, from_ms: int | None = None, to_ms: int | None = None) -> dict:
    """Aggregate journaled events in [from_ms, to_ms) into dashboard figures."""
    outcomes = {"pass": 0, "reject": 0, "gateway_error": 0, "quota_exhausted": 0}
    reservations: dict[str, tuple[str, str]] = {}  # rid -> (student, day)
    consumed: dict[tuple[str, str], int] = {}
    reflections_total = 0
    reflections_substantive = 0
    escalation_status: dict[str, str] = {}
    tag_counts: dict[str, int] = {}

    for event in store.iter_events():
        if event.kind == ev.QUOTA_RESERVED:
            p = event.payload
            reservations[p["reservation_id"]] = (p["student_id"], p["day"])
        if not _in_window(event.at, from_ms, to_ms):
            continue
        p = event.payload
        if event.kind == ev.QUOTA_RESERVED:
            key = (p["student_id"], p["day"])
            consumed[key] = consumed.get(key, 0) + 1
        elif event.kind == ev.QUOTA_REFUNDED:
            rid = p["reservation_id"]
            if rid in reservations:
                key = reservations[rid]
                consumed[key] = consumed.get(key, 0) - 1
            if p.get("reason") == REFUND_GATEWAY_ERROR:
                outcomes["gateway_error"] += 1
            elif p.get("reason") == REFUND_GATE_REJECT:
                outcomes["reject"] += 1
        elif event.kind == ev.QUOTA_COMMITTED:
            outcomes["pass"] += 1
        elif event.kind == ev.QUOTA_DENIED:
            outcomes["quota_exhausted"] += 1
        elif event.kind == ev.REFLECTION_STORED:
            reflections_total += 1
            if p["reflection"]["substantive"]:
                reflections_substantive += 1
        elif event.kind == ev.ESCALATION_OPENED:
            escalation_status[p["escalation"]["id"]] = p["escalation"]["status"]
        elif event.kind == ev.ESCALATION_STATUS_CHANGED:
            escalation_status[p["escalation_id"]] = p["status"]
        elif event.kind == ev.TAG_APPLIED:
            tag = p["tag"]["tag"]
            tag_counts[tag] = tag_counts.get(tag, 0) + 1

    utilization: dict[str, int] = {}
    for count in consumed.values():
        bucket = str(max(0, count))
        utilization[bucket] = utilization.get(bucket, 0) + 1

    by_status: dict[str, int] = {}
    for status in escalation_status.values():
        by_status[status] = by_status.get(status, 0) + 1

    top_tags = sorted(tag_counts.items(), key=lambda kv: (-kv[1], kv[0]))[:10]

    rate = reflections_substantive / reflections_total if reflections_total else 0.0
    return {
        "window": {"from_ms": from_ms, "to_ms": to_ms},
        "queries_by_outcome": outcomes,
        "quota_utilization": utilization,
        "substantive_reflection_rate": rate,
        "reflections_total": reflections_total,
        "escalations_by_status": by_status,
        "top_tags": [{"tag": t, "count": c} for t, c in top_tags],
    }


# --- research export --------------------------------------------------------

_SENSITIVE_KEYS = ("credential_hash", "token_digest")


def _scrub(value):
    if isinstance(value, dict):
        return {
            k: "[redacted]" if k in _SENSITIVE_KEYS else _scrub(v)
            for k, v in value.items()
        }
    if isinstance(value, list):
        return [_scrub(v) for v in value]
    return value


def pseudonym(handle: str) -> str:
    return "u-" + hashlib.sha256(handle.encode("utf-8")).hexdigest()[:12]


def export_research_log(
    store,
    from_ms: int | None = None,
    to_ms: int | None = None,
    redact: bool = False,
) -> list[str]:
    """Newline-delimited JSON of journaled events in range, header line first.

    Credential hashes and token digests are scrubbed unconditionally. With
    redaction on, every occurrence of a registered handle anywhere in an
    event is replaced by a stable pseudonym, longest handles first so no raw
    handle survives as a substring.
    """
    handles = sorted(store.state.handles.keys(), key=len, reverse=True)
    lines: list[str] = []
    for event in store.iter_events():
        if not _in_window(event.at, from_ms, to_ms):
            continue
        record = {
            "seq": event.seq,
            "at": event.at,
            "kind": event.kind,
            "payload": _scrub(event.payload),
        }
        line = canonical_json(record).decode("utf-8")
        if redact:
            for handle in handles:
                if handle in line:
                    line = line.replace(handle, pseudonym(handle))
        lines.append(line)
    header = canonical_json(
        {
            "type": "header",
            "from_ms": from_ms,
            "to_ms": to_ms,
            "count": len(lines),
            "redacted": redact,
        }
    ).decode("utf-8")
    return [header] + lines
