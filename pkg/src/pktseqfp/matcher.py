"""Detecting a summary fingerprint in a tabulated traffic sample, packet by packet."""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Union

from .fingerprint import SummaryFingerprint, SummarySequence
from .metrics import (
    ENDPOINT_KINDS,
    Technique,
    TechniqueKind,
    endpoint_identifier,
    get_metric,
)
from .tabulation import PacketRecord, TabulatedTrafficSample


class VacuousFingerprintError(ValueError):
    def __init__(self, message: str = "vacuous fingerprint"):
        super().__init__(message)


@dataclass(frozen=True)
class MatchLocation:
    stream_id: int
    end_position: int


@dataclass(frozen=True)
class MatchResult:
    matched: bool
    locations: tuple
    packets_processed: int
    peak_buffered: int = 0

    def to_dict(self) -> dict:
        return {
            "matched": self.matched,
            "packets_processed": self.packets_processed,
            "sequences": [
                None if loc is None else {"stream_id": loc.stream_id, "end_position": loc.end_position}
                for loc in self.locations
            ],
        }


def _sizes_and_directions(window, seq: SummarySequence) -> bool:
    for i, rec in enumerate(window):
        if rec.direction not in seq.directions[i]:
            return False
        if not seq.size_min[i] <= rec.size <= seq.size_max[i]:
            return False
    return True


def _strict(window, seq: SummarySequence) -> bool:
    if not _sizes_and_directions(window, seq):
        return False
    return all(rec.domain.value in {d.value for d in seq.domains[i]} for i, rec in enumerate(window))


def compile_predicate(seq: SummarySequence, technique: Technique) -> Callable:
    """Build the window test for one summary sequence."""
    kind = technique.kind
    if kind is TechniqueKind.SDBF:
        return lambda window: _sizes_and_directions(window, seq)
    if kind is TechniqueKind.ESDBF:
        names = [frozenset(d.value for d in ds) for ds in seq.domains]

        def esdbf(window):
            return _sizes_and_directions(window, seq) and all(
                rec.domain.value in names[i] for i, rec in enumerate(window)
            )

        return esdbf
    if kind in ENDPOINT_KINDS:
        gran = technique.granularity
        allowed = {endpoint_identifier(d, gran) for d in seq.domains[0]} - {None}

        def endpoint(window):
            ident = endpoint_identifier(window[0].domain, gran)
            return ident is not None and ident in allowed

        return endpoint
    metric = get_metric(technique.name)
    if metric.matches is None:
        return lambda window: _strict(window, seq)
    params = dict(technique.params)
    return lambda window: metric.matches(window, seq, params)


def window_matches(window, seq: SummarySequence, technique: Technique) -> bool:
    if len(window) != len(seq):
        raise ValueError(f"window of {len(window)} packets vs summary sequence of {len(seq)}")
    return compile_predicate(seq, technique)(list(window))


def match_sample(
    summary: SummaryFingerprint,
    sample: Union[TabulatedTrafficSample, Iterable[PacketRecord]],
) -> MatchResult:
    """Scan ``sample`` in row order, stopping as soon as every sequence has matched.

    Each stream keeps only its ``n_max`` most recent packets; a summary
    sequence of length n is tested against the last n packets of the stream
    that just received a packet.
    """
    if summary.is_empty:
        raise VacuousFingerprintError()
    records = sample.records if isinstance(sample, TabulatedTrafficSample) else sample
    seqs = summary.sequences
    n_max = summary.n_max
    tests = [compile_predicate(s, summary.technique) for s in seqs]
    lengths = [len(s) for s in seqs]
    locations: list = [None] * len(seqs)
    unmatched = list(range(len(seqs)))
    buffers: dict = {}
    processed = buffered = peak = 0
    for rec in records:
        processed += 1
        buf = buffers.get(rec.stream_id)
        if buf is None:
            buf = buffers[rec.stream_id] = deque(maxlen=n_max)
        if len(buf) < n_max:
            buffered += 1
            peak = max(peak, buffered)
        buf.append(rec)
        fill = len(buf)
        still = []
        for k in unmatched:
            n = lengths[k]
            if n <= fill and tests[k](list(itertools.islice(buf, fill - n, fill))):
                locations[k] = MatchLocation(rec.stream_id, rec.position_in_stream)
            else:
                still.append(k)
        unmatched = still
        if not unmatched:
            break
    return MatchResult(not unmatched, tuple(locations), processed, peak)


def matches(summary: SummaryFingerprint, sample) -> bool:
    return match_sample(summary, sample).matched


def check_loadable(summary: SummaryFingerprint, source: Optional[str] = None) -> SummaryFingerprint:
    """Reject empty fingerprints before any matching work starts."""
    if summary.is_empty:
        where = f" ({source})" if source else ""
        raise VacuousFingerprintError(f"vacuous fingerprint{where}: no sequences to match")
    return summary
