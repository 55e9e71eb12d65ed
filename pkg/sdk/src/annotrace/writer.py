"""Chunked trace-directory writer.

Implements the on-disk format that the analysis toolkit reads (see
docs/trace-format.md at the repository root): little-endian, per-chunk
string interning, chunks flushed at a byte threshold, meta.bin written
last as the completion sentinel. This is an independent implementation of
the wire format; it shares no code with the reader.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Sequence

MAGIC = b"XSTRACE1"
VERSION = 1

# Category codes fixed by the trace format.
OPERATION = 0
HIGH_LEVEL = 1
BACKEND = 2
SIMULATOR = 3
ACCEL_API = 4
GPU = 5

_HEADER = struct.Struct("<8sHQII")
_U32 = struct.Struct("<I")
_RECORD_FIXED = struct.Struct("<qqBIQQ")


class EventRecord(tuple):
    """(pid, tid, category, name, start_ns, duration_ns, correlation)."""

    __slots__ = ()

    def __new__(cls, pid, tid, category, name, start_ns, duration_ns, correlation=None):
        return super().__new__(cls, (pid, tid, category, name, start_ns, duration_ns, correlation))


def record_cost(record) -> int:
    # length prefix + fixed fields + correlation flag/value + possible
    # first-use string table entry; used for flush-threshold accounting.
    _, _, _, name, _, _, correlation = record
    return 4 + _RECORD_FIXED.size + 1 + (8 if correlation is not None else 0) + 4 + len(name.encode("utf-8"))


class ChunkedTraceWriter:
    """Append records, flush chunks at the threshold, seal with meta.bin."""

    def __init__(self, directory, clock_domain: int, threshold_bytes: int):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.clock_domain = clock_domain
        self.threshold = threshold_bytes
        self.chunk_index = 0
        self._reset_chunk()

    def _reset_chunk(self):
        self._strings: dict[str, int] = {}
        self._string_blob = bytearray()
        self._records = bytearray()
        self._count = 0
        self._size = _HEADER.size + 4

    def _encoded(self, record) -> bytes:
        pid, tid, category, name, start, duration, correlation = record
        idx = self._strings.get(name)
        if idx is None:
            idx = len(self._strings)
            self._strings[name] = idx
            raw = name.encode("utf-8")
            self._string_blob += _U32.pack(len(raw)) + raw
        body = _RECORD_FIXED.pack(pid, tid, category, idx, start, duration)
        if correlation is None:
            body += b"\x00"
        else:
            body += b"\x01" + struct.pack("<q", correlation)
        return _U32.pack(len(body)) + body

    def append(self, record) -> None:
        grows = record_cost(record)
        if record[3] in self._strings:
            grows -= 4 + len(record[3].encode("utf-8"))
        if self._count > 0 and self._size + grows > self.threshold:
            self.flush_chunk()
        self._records += self._encoded(record)
        self._count += 1
        self._size = _HEADER.size + 4 + len(self._string_blob) + len(self._records)

    def flush_chunk(self) -> None:
        if self._count == 0:
            return
        header = _HEADER.pack(MAGIC, VERSION, self.clock_domain, self.chunk_index, self._count)
        payload = header + _U32.pack(len(self._strings)) + bytes(self._string_blob) + bytes(self._records)
        (self.directory / f"trace.{self.chunk_index}.bin").write_bytes(payload)
        self.chunk_index += 1
        self._reset_chunk()

    def finish(self, processes: Sequence[tuple]) -> int:
        """Flush the tail and write meta.bin; returns the chunk count.

        processes: (pid, name, parent, fork_ns, join_ns) tuples.
        """
        self.flush_chunk()
        out = bytearray()
        ordered = sorted(processes, key=lambda p: p[0])
        out += _HEADER.pack(MAGIC, VERSION, self.clock_domain, self.chunk_index, len(ordered))
        for pid, name, parent, fork_ns, join_ns in ordered:
            out += struct.pack("<q", pid)
            raw = name.encode("utf-8")
            out += _U32.pack(len(raw)) + raw
            for value, fmt in ((parent, "<q"), (fork_ns, "<Q"), (join_ns, "<Q")):
                if value is None:
                    out += b"\x00"
                else:
                    out += b"\x01" + struct.pack(fmt, value)
        (self.directory / "meta.bin").write_bytes(bytes(out))
        return self.chunk_index
