from __future__ import annotations

import json
import os

import pytest

from helpers import (
    START_MS,
    ingest_fixture_corpus,
    make_service,
    register_student,
    run_one_feedback,
)
from soctutor import events as ev
from soctutor.analytics import export_research_log, pseudonym
from soctutor.errors import CorruptJournal, SerializationError
from soctutor.events import Event, canonical_json, canonicalize
from soctutor.ids import ManualClock
from soctutor.journal import Journal, read_snapshot, snapshot_paths, write_snapshot
from soctutor.store import AppState, EventStore, recover_state


# --- canonical JSON -----------------------------------------------------------


def test_canonical_json_sorts_keys_and_compacts():
    assert canonical_json({"b": 1, "a": 2}) == b'{"a":2,"b":1}'


def test_canonical_json_demotes_integral_floats():
    assert canonicalize({"x": 2.0, "y": 0.75}) == {"x": 2, "y": 0.75}


def test_canonical_json_rejects_nan_and_objects():
    with pytest.raises(SerializationError):
        canonical_json({"x": float("nan")})
    with pytest.raises(SerializationError):
        canonical_json({"x": object()})
    with pytest.raises(SerializationError):
        canonical_json({1: "non-string-key"})


def test_event_round_trips_through_bytes():
    event = Event(seq=7, at=123, kind="TagApplied", payload={"tag": {"t": "x"}})
    assert Event.from_bytes(event.to_bytes()) == event


# --- journal file format --------------------------------------------------------


def test_append_then_iter_round_trip(tmp_path):
    journal = Journal(tmp_path, fsync=False)
    frames = [b'{"seq":1}', b'{"seq":2}', "ütf-8 payload".encode()]
    for frame in frames:
        journal.append(frame)
    journal.close()
    scanner = Journal(tmp_path, fsync=False)
    assert list(scanner.iter_frames()) == frames
    scanner.close()


def test_torn_trailing_frame_is_skipped(tmp_path):
    journal = Journal(tmp_path, fsync=False)
    journal.append(b"complete")
    journal.append(b"to-be-torn")
    journal.close()
    seg = journal.segment_paths()[-1]
    raw = seg.read_bytes()
    seg.write_bytes(raw[:-4])  # cut into the final frame's payload
    scanner = Journal(tmp_path, fsync=False)
    assert list(scanner.iter_frames()) == [b"complete"]
    scanner.close()


def test_snapshot_write_read_verify(tmp_path):
    blob = b'{"users":{}}'
    path = write_snapshot(tmp_path, 42, blob)
    as_of, loaded = read_snapshot(path)
    assert (as_of, loaded) == (42, blob)


def test_snapshot_checksum_detects_corruption(tmp_path):
    path = write_snapshot(tmp_path, 42, b'{"users":{}}')
    raw = bytearray(path.read_bytes())
    raw[-1] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(ValueError):
        read_snapshot(path)


# --- event store ------------------------------------------------------------------


def _store(tmp_path):
    return EventStore(tmp_path / "data", fsync=False)


def test_commit_assigns_monotone_seqs(tmp_path):
    store = _store(tmp_path)
    e1 = store.commit(ev.QUOTA_DENIED, {"student_id": "s", "day": "d"}, 1)
    e2 = store.commit(ev.QUOTA_DENIED, {"student_id": "s", "day": "d"}, 2)
    assert (e1.seq, e2.seq) == (1, 2)
    store.close()


def test_bad_payload_consumes_no_seq(tmp_path):
    store = _store(tmp_path)
    with pytest.raises(SerializationError):
        store.commit("TagApplied", {"x": object()}, 1)
    event = store.commit(ev.QUOTA_DENIED, {"student_id": "s", "day": "d"}, 2)
    assert event.seq == 1
    store.close()


def test_append_continues_after_recovery(tmp_path):
    store = _store(tmp_path)
    for i in range(5):
        store.commit(ev.QUOTA_DENIED, {"student_id": "s", "day": str(i)}, i)
    store.close()
    reopened = _store(tmp_path)
    event = reopened.commit(ev.QUOTA_DENIED, {"student_id": "s", "day": "x"}, 99)
    assert event.seq == 6
    reopened.close()


def test_recover_empty_storage_is_pristine(tmp_path):
    recovered = recover_state(tmp_path / "data")
    assert recovered.last_seq == 0
    assert recovered.state.to_payload() == AppState().to_payload()


def test_journal_gap_refuses_to_start(tmp_path):
    store = _store(tmp_path)
    for i in range(3):
        store.commit(ev.QUOTA_DENIED, {"student_id": "s", "day": str(i)}, i)
    store.close()
    # rewrite the segment without the middle event
    journal = Journal(tmp_path / "data", fsync=False)
    frames = [Event.from_bytes(f) for f in journal.iter_frames()]
    journal.close()
    seg = sorted((tmp_path / "data").glob("seg-*.log"))[0]
    seg.unlink()
    rewritten = Journal(tmp_path / "data", fsync=False)
    for event in frames:
        if event.seq != 2:
            rewritten.append(event.to_bytes())
    rewritten.close()
    with pytest.raises(CorruptJournal) as err:
        recover_state(tmp_path / "data")
    assert "2" in str(err.value)


def test_snapshot_then_recover_fixed_point(tmp_path, clock):
    service = make_service(tmp_path, clock=clock)
    ingest_fixture_corpus(service)
    student = register_student(service)
    run_one_feedback(service, student)
    service.store.snapshot()
    before = service.store.state.canonical_bytes()
    service.close()

    recovered = recover_state(tmp_path / "soc-data")
    assert recovered.state.canonical_bytes() == before


def test_recovery_equals_snapshot_plus_tail(tmp_path, clock):
    service = make_service(tmp_path, clock=clock)
    ingest_fixture_corpus(service)
    service.store.snapshot()
    student = register_student(service)  # events after the snapshot
    expected = service.store.state.canonical_bytes()
    service.close()

    recovered = recover_state(tmp_path / "soc-data")
    assert recovered.state.canonical_bytes() == expected
    assert recovered.snapshot_seq > 0


def test_corrupt_snapshot_falls_back_to_previous(tmp_path, clock):
    service = make_service(tmp_path, clock=clock)
    register_student(service, "ada")
    service.store.snapshot()
    register_student(service, "grace")
    service.store.snapshot()
    expected = service.store.state.canonical_bytes()
    service.close()

    snaps = snapshot_paths(tmp_path / "soc-data")
    assert len(snaps) == 2
    raw = bytearray(snaps[-1].read_bytes())
    raw[-1] ^= 0xFF
    snaps[-1].write_bytes(bytes(raw))

    recovered = recover_state(tmp_path / "soc-data")
    # same final state: older snapshot plus a longer replay
    assert recovered.state.canonical_bytes() == expected
    assert recovered.snapshot_seq < recovered.last_seq or recovered.snapshot_seq == 0


def test_prune_drops_covered_segments(tmp_path):
    store = _store(tmp_path)
    for i in range(10):
        store.commit(ev.QUOTA_DENIED, {"student_id": "s", "day": str(i)}, i)
    store.snapshot()
    for i in range(3):
        store.commit(ev.QUOTA_DENIED, {"student_id": "s", "day": f"t{i}"}, i)
    removed = store.prune()
    assert removed, "the pre-snapshot segment should be prunable"
    # remaining events still replay cleanly
    recovered = recover_state(tmp_path / "data")
    assert recovered.last_seq == 13
    assert recovered.state.canonical_bytes() == store.state.canonical_bytes()
    store.close()


def test_every_event_prefix_recovers_identically(tmp_path):
    """Event-level replay oracle: each journal prefix folds to the same state
    as a shadow fold of exactly those events."""
    store = _store(tmp_path)
    boundaries = []
    seg = store.journal.segment_paths()[-1]
    events = []
    for i in range(30):
        event = store.commit(
            ev.QUOTA_DENIED, {"student_id": f"s{i % 3}", "day": str(i)}, i
        )
        events.append(event)
        boundaries.append(seg.stat().st_size)
    store.close()

    from soctutor.store import apply_event

    shadow = AppState()
    raw = seg.read_bytes()
    for i, event in enumerate(events):
        apply_event(shadow, event)
        crash_dir = tmp_path / f"crash-{i}"
        crash_dir.mkdir()
        (crash_dir / seg.name).write_bytes(raw[: boundaries[i]])
        recovered = recover_state(crash_dir)
        assert recovered.last_seq == event.seq
        assert recovered.state.canonical_bytes() == shadow.canonical_bytes()


# --- export ---------------------------------------------------------------------


def _journal_events(service):
    return list(service.store.iter_events())


def test_export_full_count_matches_journal(indexed_service):
    register_student(indexed_service, "ada")
    lines = export_research_log(indexed_service.store)
    header = json.loads(lines[0])
    assert header["type"] == "header"
    assert header["count"] == len(lines) - 1 == len(_journal_events(indexed_service))


def test_export_redaction_leaves_no_raw_handles(indexed_service):
    handles = ["ada_lovelace", "grace_hopper"]
    for handle in handles:
        account = register_student(indexed_service, handle)
        run_one_feedback(indexed_service, account)
    lines = export_research_log(indexed_service.store, redact=True)
    body = "\n".join(lines)
    for handle in handles:
        assert handle not in body
        assert pseudonym(handle) in body


def test_export_scrubs_credentials_and_tokens(service):
    register_student(service, "ada")
    service.auth.login("ada", "correct-horse-10")
    for line in export_research_log(service.store):
        record = json.loads(line)
        payload = json.dumps(record.get("payload", {}))
        assert "scrypt$" not in payload
    # the journal does hold the hash (it is the database); exports never do
    stored = [
        e for e in service.store.iter_events() if e.kind == ev.USER_REGISTERED
    ]
    assert stored[0].payload["user"]["credential_hash"].startswith("scrypt$")


def test_export_empty_range_has_header_only(service):
    register_student(service, "ada")
    lines = export_research_log(service.store, from_ms=0, to_ms=1)
    assert len(lines) == 1
    assert json.loads(lines[0])["count"] == 0


def test_plaintext_password_never_journaled(service, tmp_path):
    register_student(service, "ada")
    service.auth.login("ada", "correct-horse-10")
    raw = b"".join(
        p.read_bytes() for p in (tmp_path / "soc-data").glob("seg-*.log")
    )
    assert b"correct-horse-10" not in raw


def test_maybe_snapshot_triggers_on_event_count(tmp_path):
    store = _store(tmp_path)
    for i in range(9):
        store.commit(ev.QUOTA_DENIED, {"student_id": "s", "day": str(i)}, i)
    assert not store.maybe_snapshot(every_events=10)
    store.commit(ev.QUOTA_DENIED, {"student_id": "s", "day": "x"}, 10)
    assert store.maybe_snapshot(every_events=10)
    assert len(snapshot_paths(tmp_path / "data")) == 1
    # the counter resets against the new snapshot
    assert not store.maybe_snapshot(every_events=10)
    store.close()
