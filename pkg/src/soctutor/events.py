"""Journaled event records and canonical JSON encoding.

Payloads are canonicalized (sorted keys, compact separators, integral floats
demoted to ints, no NaN/Inf) before they are written or applied, so replaying
a journal folds byte-identical inputs and checksums stay stable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import SerializationError

# Mutation event kinds. The set is open-ended by contract; these are the ones
# this codebase emits.
USER_REGISTERED = "UserRegistered"
SESSION_ISSUED = "SessionIssued"
QUOTA_RESERVED = "QuotaReserved"
QUOTA_COMMITTED = "QuotaCommitted"
QUOTA_REFUNDED = "QuotaRefunded"
QUOTA_DENIED = "QuotaDenied"
CONVERSATION_STARTED = "ConversationStarted"
TURN_APPENDED = "TurnAppended"
STAGE_ADVANCED = "StageAdvanced"
GATE_VERDICT_RECORDED = "GateVerdictRecorded"
INJECTION_FLAGGED = "InjectionFlagged"
REFLECTION_STORED = "ReflectionStored"
ESCALATION_OPENED = "EscalationOpened"
ESCALATION_STATUS_CHANGED = "EscalationStatusChanged"
CHUNK_UPSERTED = "ChunkUpserted"
TAG_APPLIED = "TagApplied"


def canonicalize(value):
    """Return a canonical copy of a JSON-able value, or raise SerializationError."""
    if isinstance(value, bool) or value is None or isinstance(value, (str, int)):
        return value
    if isinstance(value, float):
        if value != value or value in (float("inf"), float("-inf")):
            raise SerializationError("NaN/Inf not canonicalizable")
        if value.is_integer():
            return int(value)
        return value
    if isinstance(value, dict):
        out = {}
        for k, v in value.items():
            if not isinstance(k, str):
                raise SerializationError(f"non-string key {k!r}")
            out[k] = canonicalize(v)
        return out
    if isinstance(value, (list, tuple)):
        return [canonicalize(v) for v in value]
    raise SerializationError(f"not canonicalizable: {type(value).__name__}")


def canonical_json(value) -> bytes:
    return json.dumps(
        canonicalize(value), sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")


@dataclass(frozen=True)
class Event:
    seq: int
    at: int  # epoch ms
    kind: str
    payload: dict

    def to_bytes(self) -> bytes:
        return canonical_json(
            {"at": self.at, "kind": self.kind, "payload": self.payload, "seq": self.seq}
        )

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Event":
        record = json.loads(raw.decode("utf-8"))
        return cls(
            seq=record["seq"],
            at=record["at"],
            kind=record["kind"],
            payload=record["payload"],
        )
