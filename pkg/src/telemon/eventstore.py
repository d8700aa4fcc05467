"""Append-only event log and research export.

On-disk format, byte exact:

    record   := length(4 bytes, big-endian uint32) crc(4 bytes, big-endian
                uint32, CRC32 of payload) payload(JSON, UTF-8)
    log file := record*

A partial trailing record (crash mid-write) is ignored on read; a full
record whose CRC does not match raises CorruptEvent. Truncating the file
at any record boundary therefore always leaves a replayable prefix.
"""
from __future__ import annotations

import csv
import io
import json
import os
import struct
import threading
import zlib
from pathlib import Path
from typing import Iterator, Optional

from .model import Event

_HEADER = struct.Struct(">II")

# direct identifiers stripped from research exports
EXPORT_EXCLUDED_FIELDS = frozenset({"phone", "gp_contact", "recipient"})


class StorageFailure(Exception):
    """Fatal: the log refuses further writes rather than losing events."""


class CorruptEvent(Exception):
    def __init__(self, seq: int):
        self.seq = seq
        super().__init__(f"corrupt event record at seq {seq}")


def encode_record(payload: dict) -> bytes:
    body = json.dumps(payload, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    return _HEADER.pack(len(body), zlib.crc32(body)) + body


class EventLog:
    """Single-writer append-only log. Readers iterate immutable prefixes."""

    def __init__(self, path: os.PathLike | str, fsync: bool = True):
        self.path = Path(path)
        self.fsync = fsync
        self._lock = threading.Lock()
        self._failed = False
        self._last_seq = 0
        for event in self.iter_events():
            self._last_seq = event.seq
        self._fh = open(self.path, "ab")

    @property
    def last_seq(self) -> int:
        return self._last_seq

    def append(self, event: Event) -> int:
        """Durable before return; seq strictly greater than all prior."""
        with self._lock:
            if self._failed:
                raise StorageFailure("log is in failed state; writes refused")
            if event.seq != self._last_seq + 1:
                raise StorageFailure(
                    f"non-monotone seq {event.seq} after {self._last_seq}"
                )
            try:
                self._fh.write(encode_record(event.to_dict()))
                self._fh.flush()
                if self.fsync:
                    os.fsync(self._fh.fileno())
            except OSError as exc:
                self._failed = True
                raise StorageFailure(str(exc)) from exc
            self._last_seq = event.seq
            return event.seq

    def iter_events(self, from_seq: int = 0) -> Iterator[Event]:
        """Events with seq > from_seq, stopping cleanly at a partial tail."""
        if not self.path.exists():
            return
        seq_guess = 0
        with open(self.path, "rb") as fh:
            while True:
                header = fh.read(_HEADER.size)
                if len(header) < _HEADER.size:
                    return  # clean EOF or torn tail
                length, crc = _HEADER.unpack(header)
                body = fh.read(length)
                seq_guess += 1
                if len(body) < length:
                    return  # torn tail
                if zlib.crc32(body) != crc:
                    raise CorruptEvent(seq_guess)
                event = Event.from_dict(json.loads(body.decode("utf-8")))
                if event.seq > from_seq:
                    yield event

    def close(self) -> None:
        self._fh.close()

    def recover(self) -> None:
        """Clear the fail-stop flag after the operator fixes storage."""
        with self._lock:
            self._failed = False


class MemoryEventLog:
    """Same contract without disk; for property tests and fast simulations."""

    def __init__(self):
        self.events: list[Event] = []
        self._lock = threading.Lock()

    @property
    def last_seq(self) -> int:
        return self.events[-1].seq if self.events else 0

    def append(self, event: Event) -> int:
        with self._lock:
            if event.seq != self.last_seq + 1:
                raise StorageFailure(
                    f"non-monotone seq {event.seq} after {self.last_seq}"
                )
            self.events.append(event)
            return event.seq

    def iter_events(self, from_seq: int = 0) -> Iterator[Event]:
        for event in list(self.events):
            if event.seq > from_seq:
                yield event

    def close(self) -> None:
        pass


def _strip(value):
    if isinstance(value, dict):
        return {
            k: _strip(v) for k, v in value.items() if k not in EXPORT_EXCLUDED_FIELDS
        }
    if isinstance(value, list):
        return [_strip(v) for v in value]
    return value


def export_events(
    log,
    out,
    fmt: str = "jsonl",
    from_seq: int = 0,
    to_seq: Optional[int] = None,
) -> int:
    """Write pseudonymized rows to the text stream `out`; returns row count.

    One row per event in range. patient_id is already an opaque id; phone
    and GP handles never reach the export.
    """
    if fmt not in ("jsonl", "csv"):
        raise ValueError(f"unsupported export format: {fmt}")
    writer = None
    count = 0
    for event in log.iter_events(from_seq):
        if to_seq is not None and event.seq > to_seq:
            break
        row = {
            "seq": event.seq,
            "at": event.at.isoformat(),
            "patient_id": event.patient_id,
            "kind": event.kind,
            "payload": _strip(event.payload),
        }
        if fmt == "jsonl":
            out.write(json.dumps(row, ensure_ascii=False) + "\n")
        else:
            if writer is None:
                writer = csv.DictWriter(
                    out, fieldnames=["seq", "at", "patient_id", "kind", "payload"]
                )
                writer.writeheader()
            row["payload"] = json.dumps(row["payload"], ensure_ascii=False)
            writer.writerow(row)
        count += 1
    return count


def export_to_string(log, fmt: str = "jsonl", from_seq: int = 0,
                     to_seq: Optional[int] = None) -> str:
    buf = io.StringIO()
    export_events(log, buf, fmt=fmt, from_seq=from_seq, to_seq=to_seq)
    return buf.getvalue()
