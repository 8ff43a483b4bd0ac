"""Tabulated traffic samples: one feature row per payload-carrying TCP packet."""

from __future__ import annotations

import csv
import io
import os
import tempfile
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, Optional

from .model import Direction, DomainKind, DomainLabel

HEADER = (
    "event_id",
    "sample_id",
    "stream_id",
    "domain",
    "domain_kind",
    "position_in_stream",
    "size",
    "direction",
)


class SampleFormatError(ValueError):
    def __init__(self, path, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


@dataclass(frozen=True)
class PacketRecord:
    event_id: int
    sample_id: int
    stream_id: int
    domain: DomainLabel
    position_in_stream: int
    size: int
    direction: Direction

    def __post_init__(self):
        if self.position_in_stream < 1:
            raise ValueError(f"position_in_stream must be >= 1, got {self.position_in_stream}")
        if self.size < 0:
            raise ValueError(f"negative packet size {self.size}")
        if not isinstance(self.direction, Direction):
            object.__setattr__(self, "direction", Direction.parse(self.direction))


@dataclass(frozen=True)
class TabulatedTrafficSample:
    """All packet rows of one event invocation, kept in capture (row) order.

    Row order interleaves streams by timestamp; ``streams`` regroups rows per
    stream without disturbing that order.
    """

    event_id: int
    sample_id: int
    records: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        next_pos: dict = {}
        for rec in self.records:
            if rec.event_id != self.event_id or rec.sample_id != self.sample_id:
                raise ValueError(
                    f"record ({rec.event_id}, {rec.sample_id}) does not belong to sample "
                    f"({self.event_id}, {self.sample_id})"
                )
            expected = next_pos.get(rec.stream_id, 1)
            if rec.position_in_stream != expected:
                raise ValueError(
                    f"stream {rec.stream_id}: expected position {expected}, got {rec.position_in_stream}"
                )
            next_pos[rec.stream_id] = expected + 1

    @cached_property
    def streams(self) -> dict:
        grouped: dict = {}
        for rec in self.records:
            grouped.setdefault(rec.stream_id, []).append(rec)
        return {sid: tuple(grouped[sid]) for sid in sorted(grouped)}

    def __len__(self):
        return len(self.records)


def tabulate(streams: Iterable, event_id: int, sample_id: int) -> TabulatedTrafficSample:
    """Turn assembled TCP streams into a tabulated sample."""
    rows = []
    for stream in streams:
        for pkt in stream.packets:
            rec = PacketRecord(
                event_id, sample_id, stream.stream_id, stream.domain,
                pkt.position, pkt.size, pkt.direction,
            )
            rows.append((pkt.timestamp, stream.stream_id, pkt.position, rec))
    rows.sort(key=lambda r: r[:3])
    return TabulatedTrafficSample(event_id, sample_id, tuple(r[3] for r in rows))


def _row(rec: PacketRecord) -> list:
    return [
        rec.event_id, rec.sample_id, rec.stream_id, rec.domain.value, rec.domain.kind.value,
        rec.position_in_stream, rec.size, rec.direction.value,
    ]


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def write_sample(sample: TabulatedTrafficSample, path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HEADER)
    writer.writerows(_row(rec) for rec in sample.records)
    atomic_write_text(path, buf.getvalue())


def _parse_row(path, lineno: int, row: list) -> PacketRecord:
    if len(row) != len(HEADER):
        raise SampleFormatError(path, lineno, f"expected {len(HEADER)} fields, got {len(row)}")
    ev, sm, st, dom, kind, pos, size, direction = row
    try:
        ints = [int(v) for v in (ev, sm, st, pos, size)]
    except ValueError as exc:
        raise SampleFormatError(path, lineno, f"bad integer field ({exc})") from None
    try:
        label = DomainLabel(dom, DomainKind(kind))
    except ValueError as exc:
        raise SampleFormatError(path, lineno, str(exc)) from None
    try:
        d = Direction.parse(direction)
    except ValueError as exc:
        raise SampleFormatError(path, lineno, str(exc)) from None
    try:
        return PacketRecord(ints[0], ints[1], ints[2], label, ints[3], ints[4], d)
    except ValueError as exc:
        raise SampleFormatError(path, lineno, str(exc)) from None


def iter_records(path) -> Iterator[PacketRecord]:
    """Stream rows from a sample file without loading it whole."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != HEADER:
            raise SampleFormatError(path, 1, f"header must be {','.join(HEADER)}")
        for row in reader:
            if not row:
                continue
            yield _parse_row(path, reader.line_num, row)


def read_sample(path, event_id: Optional[int] = None, sample_id: Optional[int] = None) -> TabulatedTrafficSample:
    """Load a sample file.  ``event_id``/``sample_id`` only fill in for header-only files."""
    records = []
    lines = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != HEADER:
            raise SampleFormatError(path, 1, f"header must be {','.join(HEADER)}")
        for row in reader:
            if row:
                records.append(_parse_row(path, reader.line_num, row))
                lines.append(reader.line_num)
    if records:
        event_id, sample_id = records[0].event_id, records[0].sample_id
    next_pos: dict = {}
    for rec, lineno in zip(records, lines):
        if (rec.event_id, rec.sample_id) != (event_id, sample_id):
            raise SampleFormatError(path, lineno, "event_id/sample_id differ from the first row")
        expected = next_pos.get(rec.stream_id, 1)
        if rec.position_in_stream != expected:
            raise SampleFormatError(
                path, lineno, f"stream {rec.stream_id}: expected position {expected}, got {rec.position_in_stream}"
            )
        next_pos[rec.stream_id] = expected + 1
    return TabulatedTrafficSample(event_id or 0, sample_id or 0, tuple(records))
