"""Chunked binary trace serialization.

A trace directory holds ``trace.<index>.bin`` chunk files plus one
``meta.bin``. Chunks are flushed once they would exceed the byte limit
(default 20 MiB), so book-keeping stays off any critical path while the
on-disk result remains fully specified. meta.bin is written last and acts
as the completion sentinel: a directory without it is an incomplete trace.

Layout (little-endian throughout; see docs/trace-format.md for the
hex-annotated golden file):

  chunk  := header | string_table | record*
  header := magic "XSTRACE1" | version u16 | clock_domain u64
            | chunk_index u32 | record_count u32
  string_table := count u32 | (len u32 | utf8 bytes)*
  record := len u32 | pid i64 | tid i64 | category u8 | name_idx u32
            | start u64 | duration u64 | corr_flag u8 | [correlation i64]

  meta   := magic | version u16 | clock_domain u64 | chunk_count u32
            | process_count u32 | process*
  process := pid i64 | name (u32 + utf8) | parent_flag u8 [parent i64]
            | fork_flag u8 [fork u64] | join_flag u8 [join u64]

Names repeat heavily (kernel and API names), so they are interned per
chunk in the string table.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path
from typing import Iterable, Optional, Union

from .model import Category, Event, ProcessMeta, Trace, require_valid

MAGIC = b"XSTRACE1"
VERSION = 1
DEFAULT_CHUNK_LIMIT = 20 * 2**20  # flush threshold, bytes
MIN_CHUNK_LIMIT = 4096

_HEADER = struct.Struct("<8sHQII")
_META_HEADER = struct.Struct("<8sHQII")
_U32 = struct.Struct("<I")


class TraceFormatError(ValueError):
    """Bad magic, version, or undecodable payload."""


class TruncatedTraceError(ValueError):
    """A chunk index named by meta.bin is missing."""


class IncompleteTraceError(ValueError):
    """meta.bin absent: the writer never completed this directory."""


def _encode_string(text: str) -> bytes:
    raw = text.encode("utf-8")
    return _U32.pack(len(raw)) + raw


def encode_record(event: Event, name_idx: int) -> bytes:
    """Record payload for one event, excluding the length prefix."""
    body = struct.pack(
        "<qqBIQQ",
        event.pid,
        event.tid,
        int(event.category),
        name_idx,
        event.start,
        event.duration,
    )
    if event.correlation is None:
        body += b"\x00"
    else:
        body += b"\x01" + struct.pack("<q", event.correlation)
    return body


def record_size(event: Event) -> int:
    """On-disk bytes for one record including its length prefix."""
    return 4 + 8 + 8 + 1 + 4 + 8 + 8 + 1 + (8 if event.correlation is not None else 0)


def chunk_overhead(names: Iterable[str]) -> int:
    """Header plus string-table bytes for a chunk interning ``names``."""
    table = 4 + sum(4 + len(n.encode("utf-8")) for n in names)
    return _HEADER.size + table


class _ChunkBuilder:
    def __init__(self, clock_domain: int, index: int):
        self.clock_domain = clock_domain
        self.index = index
        self.strings: dict[str, int] = {}
        self.string_blob = bytearray()
        self.records = bytearray()
        self.record_count = 0
        self.size = _HEADER.size + 4  # header + string count

    def size_if_added(self, event: Event) -> int:
        extra = record_size(event)
        if event.name not in self.strings:
            extra += 4 + len(event.name.encode("utf-8"))
        return self.size + extra

    def add(self, event: Event) -> None:
        idx = self.strings.get(event.name)
        if idx is None:
            idx = len(self.strings)
            self.strings[event.name] = idx
            self.string_blob += _encode_string(event.name)
        body = encode_record(event, idx)
        self.records += _U32.pack(len(body)) + body
        self.record_count += 1
        self.size = _HEADER.size + 4 + len(self.string_blob) + len(self.records)

    def finish(self) -> bytes:
        header = _HEADER.pack(MAGIC, VERSION, self.clock_domain, self.index, self.record_count)
        return header + _U32.pack(len(self.strings)) + bytes(self.string_blob) + bytes(self.records)


def _encode_meta(trace: Trace, chunk_count: int) -> bytes:
    out = bytearray()
    processes = sorted(trace.processes, key=lambda m: m.pid)
    out += _META_HEADER.pack(MAGIC, VERSION, trace.clock_domain, chunk_count, len(processes))
    for meta in processes:
        out += struct.pack("<q", meta.pid)
        out += _encode_string(meta.name)
        for value, fmt in ((meta.parent, "<q"), (meta.fork_ns, "<Q"), (meta.join_ns, "<Q")):
            if value is None:
                out += b"\x00"
            else:
                out += b"\x01" + struct.pack(fmt, value)
    return bytes(out)


def write_trace(
    trace: Trace,
    sink: Union[str, os.PathLike],
    chunk_limit_bytes: int = DEFAULT_CHUNK_LIMIT,
) -> int:
    """Serialize ``trace`` into directory ``sink``; returns the chunk count.

    Events are written in their stable sort order, so byte output is
    deterministic for a given trace. A single record larger than the limit
    occupies its own chunk. meta.bin is written only after every chunk
    lands, so readers treat its absence as an incomplete trace.
    """
    if chunk_limit_bytes < MIN_CHUNK_LIMIT:
        raise ValueError(f"chunk_limit_bytes must be >= {MIN_CHUNK_LIMIT}, got {chunk_limit_bytes}")
    require_valid(trace)
    sink = Path(sink)
    sink.mkdir(parents=True, exist_ok=True)

    chunk_index = 0
    builder: Optional[_ChunkBuilder] = None
    for event in trace.sorted_events():
        if builder is None:
            builder = _ChunkBuilder(trace.clock_domain, chunk_index)
        elif builder.size_if_added(event) > chunk_limit_bytes and builder.record_count > 0:
            (sink / f"trace.{builder.index}.bin").write_bytes(builder.finish())
            chunk_index += 1
            builder = _ChunkBuilder(trace.clock_domain, chunk_index)
        builder.add(event)
    if builder is not None and builder.record_count > 0:
        (sink / f"trace.{builder.index}.bin").write_bytes(builder.finish())
        chunk_index += 1

    (sink / "meta.bin").write_bytes(_encode_meta(trace, chunk_index))
    return chunk_index


class _Reader:
    def __init__(self, buf: bytes, context: str):
        self.buf = buf
        self.pos = 0
        self.context = context

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise TraceFormatError(f"format error: {self.context} truncated at byte {self.pos}")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, st: struct.Struct):
        return st.unpack(self.take(st.size))

    def string(self) -> str:
        (n,) = self.unpack(_U32)
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise TraceFormatError(f"format error: bad utf-8 in {self.context}") from exc


def _check_header(reader: _Reader, expect_index: Optional[int]) -> tuple[int, int, int]:
    magic, version, clock_domain, index, count = reader.unpack(_HEADER)
    if magic != MAGIC:
        raise TraceFormatError(f"format error: bad magic {magic!r} in {reader.context}")
    if version != VERSION:
        raise TraceFormatError(f"format error: unsupported version {version} in {reader.context}")
    if expect_index is not None and index != expect_index:
        raise TraceFormatError(
            f"format error: {reader.context} declares chunk index {index}, expected {expect_index}"
        )
    return clock_domain, index, count


def _decode_chunk(buf: bytes, expect_index: int, clock_domain: int, context: str) -> list[Event]:
    reader = _Reader(buf, context)
    chunk_domain, _, count = _check_header(reader, expect_index)
    if chunk_domain != clock_domain:
        raise TraceFormatError(f"format error: {context} clock domain {chunk_domain} != {clock_domain}")
    (n_strings,) = reader.unpack(_U32)
    strings = [reader.string() for _ in range(n_strings)]
    events: list[Event] = []
    for _ in range(count):
        (body_len,) = reader.unpack(_U32)
        body = _Reader(reader.take(body_len), context)
        pid, tid, cat, name_idx, start, duration = body.unpack(struct.Struct("<qqBIQQ"))
        try:
            category = Category(cat)
        except ValueError as exc:
            raise TraceFormatError(f"format error: unknown category {cat} in {context}") from exc
        if name_idx >= len(strings):
            raise TraceFormatError(f"format error: string index {name_idx} out of range in {context}")
        (flag,) = body.unpack(struct.Struct("<B"))
        correlation = None
        if flag == 1:
            (correlation,) = body.unpack(struct.Struct("<q"))
        elif flag != 0:
            raise TraceFormatError(f"format error: bad correlation flag {flag} in {context}")
        events.append(Event(pid, tid, category, strings[name_idx], start, duration, correlation))
    return events


def read_trace(source: Union[str, os.PathLike]) -> Trace:
    """Load a trace directory; inverse of write_trace up to stable ordering."""
    source = Path(source)
    meta_path = source / "meta.bin"
    if not meta_path.exists():
        raise IncompleteTraceError(f"incomplete trace: {source} has no meta.bin")

    reader = _Reader(meta_path.read_bytes(), "meta.bin")
    clock_domain, chunk_count, process_count = _check_header(reader, expect_index=None)
    processes: list[ProcessMeta] = []
    for _ in range(process_count):
        (pid,) = reader.unpack(struct.Struct("<q"))
        name = reader.string()
        values: list[Optional[int]] = []
        for fmt in ("<q", "<Q", "<Q"):
            (flag,) = reader.unpack(struct.Struct("<B"))
            if flag == 1:
                values.append(reader.unpack(struct.Struct(fmt))[0])
            elif flag == 0:
                values.append(None)
            else:
                raise TraceFormatError(f"format error: bad optional flag {flag} in meta.bin")
        processes.append(ProcessMeta(pid, name, values[0], values[1], values[2]))

    events: list[Event] = []
    for index in range(chunk_count):
        chunk_path = source / f"trace.{index}.bin"
        if not chunk_path.exists():
            raise TruncatedTraceError(f"truncated trace: {source} is missing chunk {index}")
        events.extend(_decode_chunk(chunk_path.read_bytes(), index, clock_domain, chunk_path.name))

    events.sort(key=Event.sort_key)
    return Trace(clock_domain, events, processes)
