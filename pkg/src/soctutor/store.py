"""Event-sourced application state.

All mutations flow through :meth:`EventStore.commit`: the event is made
durable in the journal first, then folded into the in-memory state by a pure
``apply`` function. Recovery replays the newest valid snapshot plus the
journal tail through the same fold, so a recovered process is byte-identical
to one that never crashed.
"""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass, field

from . import events as ev
from .errors import CorruptJournal
from .events import Event, canonical_json
from .journal import Journal, read_snapshot, snapshot_paths, write_snapshot

logger = logging.getLogger(__name__)

# Conversation stages, in forward order.
STAGE_INTAKE_APPROACH = "intake_approach"
STAGE_INTAKE_ATTEMPTS = "intake_attempts"
STAGE_INTAKE_CONCEPT = "intake_concept"
STAGE_FEEDBACK = "feedback"
STAGE_REFLECTION = "reflection"
STAGE_CLOSED = "closed"
STAGE_ESCALATED = "escalated"

INTAKE_STAGES = (STAGE_INTAKE_APPROACH, STAGE_INTAKE_ATTEMPTS, STAGE_INTAKE_CONCEPT)


@dataclass
class AppState:
    """Live application state; everything in here is canonical-JSON-able."""

    users: dict = field(default_factory=dict)  # user_id -> account
    handles: dict = field(default_factory=dict)  # lowercase handle -> user_id
    sessions: dict = field(default_factory=dict)  # token digest -> session
    ledgers: dict = field(default_factory=dict)  # "student|day" -> {"consumed": n}
    reservations: dict = field(default_factory=dict)  # rid -> reservation
    conversations: dict = field(default_factory=dict)  # conv_id -> conversation
    reflections: dict = field(default_factory=dict)  # reflection_id -> reflection
    escalations: dict = field(default_factory=dict)  # escalation_id -> escalation
    tags: dict = field(default_factory=dict)  # conv_id -> {tag -> record}
    docs: dict = field(default_factory=dict)  # doc_id -> {doc fields, chunks: [...]}

    def to_payload(self) -> dict:
        return {
            "users": self.users,
            "handles": self.handles,
            "sessions": self.sessions,
            "ledgers": self.ledgers,
            "reservations": self.reservations,
            "conversations": self.conversations,
            "reflections": self.reflections,
            "escalations": self.escalations,
            "tags": self.tags,
            "docs": self.docs,
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "AppState":
        return cls(**{k: payload.get(k, {}) for k in cls().to_payload()})

    def canonical_bytes(self) -> bytes:
        return canonical_json(self.to_payload())


def ledger_key(student_id: str, day: str) -> str:
    return f"{student_id}|{day}"


def apply_event(state: AppState, event: Event) -> None:
    """Fold one event into state. Pure: same state + event -> same result."""
    kind, p = event.kind, event.payload
    if kind == ev.USER_REGISTERED:
        account = p["user"]
        state.users[account["id"]] = account
        state.handles[account["handle"]] = account["id"]
    elif kind == ev.SESSION_ISSUED:
        state.sessions[p["token_digest"]] = {
            "user_id": p["user_id"],
            "issued_at": p["issued_at"],
            "expires_at": p["expires_at"],
        }
    elif kind == ev.QUOTA_RESERVED:
        key = ledger_key(p["student_id"], p["day"])
        ledger = state.ledgers.setdefault(key, {"consumed": 0})
        ledger["consumed"] += 1
        state.reservations[p["reservation_id"]] = {
            "student_id": p["student_id"],
            "day": p["day"],
            "status": "provisional",
        }
    elif kind == ev.QUOTA_COMMITTED:
        state.reservations[p["reservation_id"]]["status"] = "committed"
    elif kind == ev.QUOTA_REFUNDED:
        res = state.reservations[p["reservation_id"]]
        res["status"] = "refunded"
        state.ledgers[ledger_key(res["student_id"], res["day"])]["consumed"] -= 1
    elif kind == ev.QUOTA_DENIED:
        pass  # informational: nothing was consumed
    elif kind == ev.CONVERSATION_STARTED:
        conv = dict(p["conversation"])
        conv.setdefault("stage", STAGE_INTAKE_APPROACH)
        conv.setdefault("turns", [])
        conv.setdefault("citations", [])
        conv.setdefault("gate_flags", [])
        state.conversations[conv["id"]] = conv
    elif kind == ev.TURN_APPENDED:
        conv = state.conversations[p["conversation_id"]]
        conv["turns"].append(p["turn"])
        if p.get("stage_after"):
            conv["stage"] = p["stage_after"]
        if p.get("citations"):
            conv["citations"].extend(p["citations"])
    elif kind == ev.STAGE_ADVANCED:
        state.conversations[p["conversation_id"]]["stage"] = p["stage_after"]
    elif kind == ev.GATE_VERDICT_RECORDED:
        conv = state.conversations[p["conversation_id"]]
        conv["gate_flags"].append(
            {
                "outcome": p["outcome"],
                "reasons": p["reasons"],
                "relevance_score": p["relevance_score"],
                "at": event.at,
            }
        )
    elif kind == ev.INJECTION_FLAGGED:
        pass  # the journal entry itself is the record
    elif kind == ev.REFLECTION_STORED:
        reflection = p["reflection"]
        state.reflections[reflection["id"]] = reflection
        conv = state.conversations[reflection["conversation_id"]]
        conv["reflection_id"] = reflection["id"]
        conv["stage"] = p.get("stage_after", STAGE_CLOSED)
    elif kind == ev.ESCALATION_OPENED:
        esc = p["escalation"]
        state.escalations[esc["id"]] = esc
        conv = state.conversations[esc["conversation_id"]]
        conv["stage"] = STAGE_ESCALATED
        conv["escalation_id"] = esc["id"]
    elif kind == ev.ESCALATION_STATUS_CHANGED:
        esc = state.escalations[p["escalation_id"]]
        esc["status"] = p["status"]
        if p["status"] == "claimed":
            esc["claimed_by"] = p["actor_id"]
            esc["claimed_at"] = event.at
        elif p["status"] == "resolved":
            esc["resolved_by"] = p["actor_id"]
            esc["resolved_at"] = event.at
    elif kind == ev.CHUNK_UPSERTED:
        doc = dict(p["doc"])
        doc["chunks"] = p["chunks"]
        state.docs[doc["id"]] = doc
    elif kind == ev.TAG_APPLIED:
        tag = p["tag"]
        state.tags.setdefault(tag["conversation_id"], {})[tag["tag"]] = tag
    else:
        raise CorruptJournal(f"unknown event kind {kind!r} at seq {event.seq}")


@dataclass
class RecoveredStorage:
    state: AppState
    last_seq: int
    snapshot_seq: int


def recover_state(data_dir) -> RecoveredStorage:
    """Rebuild state from the newest valid snapshot plus the journal tail."""
    state = AppState()
    base_seq = 0
    for snap in reversed(snapshot_paths(data_dir)):
        try:
            as_of_seq, blob = read_snapshot(snap)
            state = AppState.from_payload(json.loads(blob.decode("utf-8")))
            base_seq = as_of_seq
            break
        except (ValueError, json.JSONDecodeError) as exc:
            logger.warning("skipping unreadable snapshot %s: %s", snap.name, exc)
    scanner = Journal(data_dir, fsync=False)
    last_seq = base_seq
    try:
        for frame in scanner.iter_frames():
            event = Event.from_bytes(frame)
            if event.seq <= base_seq:
                continue
            if event.seq != last_seq + 1:
                raise CorruptJournal(
                    f"journal gap: expected seq {last_seq + 1}, found {event.seq}"
                )
            apply_event(state, event)
            last_seq = event.seq
    finally:
        scanner.close()
    return RecoveredStorage(state=state, last_seq=last_seq, snapshot_seq=base_seq)


class EventStore:
    """Durable journal + folded live state behind one write sequencer.

    ``commit`` may be called directly for single-event mutations; operations
    that must check state and then write atomically (or write several events)
    wrap the work in ``with store.lock():`` — the lock is reentrant.
    """

    def __init__(self, data_dir, fsync: bool = True):
        self._lock = threading.RLock()
        recovered = recover_state(data_dir)
        self.state = recovered.state
        self._next_seq = recovered.last_seq + 1
        self._snapshot_seq = recovered.snapshot_seq
        self.journal = Journal(data_dir, fsync=fsync)
        self.data_dir = self.journal.dir
        # bumped on every applied event; cheap staleness check for cached views
        self.version = 0
        self.docs_version = 0

    def lock(self):
        return self._lock

    @property
    def last_seq(self) -> int:
        return self._next_seq - 1

    def commit(self, kind: str, payload: dict, at: int) -> Event:
        # Canonicalize outside the seq assignment so a bad payload never
        # consumes a sequence number.
        canonical_payload = json.loads(canonical_json(payload).decode("utf-8"))
        with self._lock:
            event = Event(seq=self._next_seq, at=at, kind=kind, payload=canonical_payload)
            self.journal.append(event.to_bytes())
            apply_event(self.state, event)
            self._next_seq += 1
            self.version += 1
            if kind == ev.CHUNK_UPSERTED:
                self.docs_version += 1
            return event

    def snapshot(self) -> int:
        """Write a snapshot of current state; returns its as-of sequence."""
        with self._lock:
            as_of_seq = self.last_seq
            blob = self.state.canonical_bytes()
            write_snapshot(self.data_dir, as_of_seq, blob)
            self._snapshot_seq = as_of_seq
            self.journal.roll(self._next_seq)
        return as_of_seq

    def maybe_snapshot(self, every_events: int) -> bool:
        with self._lock:
            if self.last_seq - self._snapshot_seq >= every_events:
                self.snapshot()
                return True
        return False

    def prune(self, keep_snapshots: int = 2):
        with self._lock:
            return self.journal.prune(self._snapshot_seq, keep_snapshots)

    def iter_events(self):
        """Read every retained event back from disk, oldest first."""
        scanner = Journal(self.data_dir, fsync=False)
        try:
            for frame in scanner.iter_frames():
                yield Event.from_bytes(frame)
        finally:
            scanner.close()

    def close(self) -> None:
        self.journal.close()
