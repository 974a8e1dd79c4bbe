"""On-disk journal segments and snapshot files.

Journal format: length-prefixed frames, each frame a 4-byte big-endian payload
length followed by canonical JSON bytes. Segments are named by the first
sequence number they may contain; a new segment is rolled after each snapshot
so fully-snapshotted segments become prunable.

Snapshot format: 8-byte magic ``SOCSNAP1``, 8-byte big-endian as-of sequence,
32-byte SHA-256 of the state blob, then the blob.
"""

from __future__ import annotations

import hashlib
import logging
import os
import struct
from pathlib import Path

from .errors import StorageFull

logger = logging.getLogger(__name__)

SNAP_MAGIC = b"SOCSNAP1"
_SEG_GLOB = "seg-*.log"
_SNAP_GLOB = "snap-*.snap"
_LEN = struct.Struct(">I")


def _seg_name(first_seq: int) -> str:
    return f"seg-{first_seq:020d}.log"


def _snap_name(as_of_seq: int) -> str:
    return f"snap-{as_of_seq:020d}.snap"


class Journal:
    """Append-only frame log over numbered segment files."""

    def __init__(self, data_dir: str | Path, fsync: bool = True):
        self.dir = Path(data_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.fsync = fsync
        segments = self.segment_paths()
        if not segments:
            self._current = self.dir / _seg_name(1)
            self._current.touch()
        else:
            self._current = segments[-1]
        self._handle = open(self._current, "ab")

    def segment_paths(self) -> list[Path]:
        return sorted(self.dir.glob(_SEG_GLOB))

    def append(self, frame: bytes) -> None:
        try:
            self._handle.write(_LEN.pack(len(frame)))
            self._handle.write(frame)
            self._handle.flush()
            if self.fsync:
                os.fsync(self._handle.fileno())
        except OSError as exc:
            raise StorageFull(f"journal write failed: {exc}") from exc

    def roll(self, next_seq: int) -> None:
        """Close the active segment and start a fresh one for seq >= next_seq."""
        self._handle.close()
        self._current = self.dir / _seg_name(next_seq)
        self._current.touch()
        self._handle = open(self._current, "ab")

    def iter_frames(self):
        """Yield raw frames across all segments in order.

        A torn trailing frame (partial length prefix or short payload) marks
        the end of that segment: it belongs to a write that was never
        acknowledged, so it is skipped with a warning.
        """
        for path in self.segment_paths():
            with open(path, "rb") as fh:
                while True:
                    header = fh.read(4)
                    if not header:
                        break
                    if len(header) < 4:
                        logger.warning("torn frame header at end of %s", path.name)
                        break
                    (length,) = _LEN.unpack(header)
                    payload = fh.read(length)
                    if len(payload) < length:
                        logger.warning("torn frame payload at end of %s", path.name)
                        break
                    yield payload

    def prune(self, as_of_seq: int, keep_snapshots: int = 2) -> list[Path]:
        """Delete segments fully covered by a snapshot and old snapshot files."""
        removed = []
        segments = self.segment_paths()
        for i, path in enumerate(segments):
            if path == self._current:
                continue
            nxt = segments[i + 1] if i + 1 < len(segments) else None
            if nxt is None:
                continue
            next_first = int(nxt.name[len("seg-") : -len(".log")])
            if next_first <= as_of_seq + 1:
                path.unlink()
                removed.append(path)
        snaps = snapshot_paths(self.dir)
        for path in snaps[:-keep_snapshots] if keep_snapshots else snaps:
            path.unlink()
            removed.append(path)
        return removed

    def close(self) -> None:
        self._handle.close()


def snapshot_paths(data_dir: str | Path) -> list[Path]:
    return sorted(Path(data_dir).glob(_SNAP_GLOB))


def write_snapshot(data_dir: str | Path, as_of_seq: int, blob: bytes) -> Path:
    path = Path(data_dir) / _snap_name(as_of_seq)
    tmp = path.with_suffix(".tmp")
    digest = hashlib.sha256(blob).digest()
    try:
        with open(tmp, "wb") as fh:
            fh.write(SNAP_MAGIC)
            fh.write(struct.pack(">Q", as_of_seq))
            fh.write(digest)
            fh.write(blob)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except OSError as exc:
        raise StorageFull(f"snapshot write failed: {exc}") from exc
    return path


def read_snapshot(path: str | Path) -> tuple[int, bytes]:
    """Read and verify a snapshot file; raises ValueError on any corruption."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != SNAP_MAGIC:
            raise ValueError(f"bad snapshot magic in {path}")
        (as_of_seq,) = struct.unpack(">Q", fh.read(8))
        digest = fh.read(32)
        blob = fh.read()
    if hashlib.sha256(blob).digest() != digest:
        raise ValueError(f"snapshot checksum mismatch in {path}")
    return as_of_seq, blob
