"""Merging samples of several events into one, as traffic behind a NAT would look."""

from __future__ import annotations

from typing import Sequence

from ..tabulation import PacketRecord, TabulatedTrafficSample
from .dataset import Dataset


def merge_samples(samples: Sequence[TabulatedTrafficSample], event_id: int, sample_id: int) -> TabulatedTrafficSample:
    """Union of the streams of ``samples`` under new ids.

    Streams are renumbered consecutively, constituent by constituent, and
    each stream keeps its packets in their original order.  Rows of the
    constituents are concatenated; tabulated samples carry no timestamps, and
    matching only depends on per-stream order.
    """
    if not samples:
        raise ValueError("merge needs at least one sample")
    records = []
    offset = 0
    for sample in samples:
        renumber = {sid: offset + i for i, sid in enumerate(sample.streams, start=1)}
        for r in sample.records:
            records.append(PacketRecord(
                event_id, sample_id, renumber[r.stream_id], r.domain,
                r.position_in_stream, r.size, r.direction,
            ))
        offset += len(renumber)
    return TabulatedTrafficSample(event_id, sample_id, tuple(records))


def nat_merge(dataset: Dataset, groups: Sequence[Sequence[int]], name: str = None) -> Dataset:
    """A dataset whose event k merges the events of ``groups[k-1]``, sample by sample."""
    events = {}
    for new_id, group in enumerate(groups, start=1):
        if not group:
            raise ValueError(f"group {new_id} is empty")
        missing = [e for e in group if e not in dataset.events]
        if missing:
            raise KeyError(f"events {missing} not in dataset {dataset.name!r}")
        events[new_id] = [
            merge_samples([dataset.events[e][k] for e in group], new_id, k + 1)
            for k in range(dataset.T)
        ]
    return Dataset(name or f"{dataset.name}-nat", events)


def merge_datasets(datasets: Sequence[Dataset], name: str = None) -> Dataset:
    """Merge corpora event by event: event e, sample k of the result joins sample k of event e of each."""
    if not datasets:
        raise ValueError("merge needs at least one dataset")
    ids = list(datasets[0].events)
    for ds in datasets[1:]:
        if list(ds.events) != ids or ds.T != datasets[0].T:
            raise ValueError(f"dataset {ds.name!r} does not have the same events and T as {datasets[0].name!r}")
    events = {
        e: [merge_samples([ds.events[e][k] for ds in datasets], e, k + 1) for k in range(datasets[0].T)]
        for e in ids
    }
    return Dataset(name or "+".join(ds.name for ds in datasets), events)
