"""Datasets of tabulated samples, laid out on disk as ``<dir>/<event_id>/<sample_id>.csv``."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from ..tabulation import read_sample, write_sample


@dataclass
class Dataset:
    name: str
    events: dict = field(default_factory=dict)

    def __post_init__(self):
        self.events = {int(e): list(s) for e, s in sorted(self.events.items())}
        counts = {len(s) for s in self.events.values()}
        if len(counts) > 1:
            raise ValueError(f"dataset {self.name!r}: events have differing sample counts {sorted(counts)}")
        for event_id, samples in self.events.items():
            for s in samples:
                if s.event_id != event_id:
                    raise ValueError(f"sample {s.sample_id} filed under event {event_id} has event_id {s.event_id}")

    @property
    def T(self) -> int:
        return len(next(iter(self.events.values()))) if self.events else 0

    def __len__(self):
        return len(self.events)

    def samples(self):
        for samples in self.events.values():
            yield from samples


def _numeric_stem(path: Path):
    try:
        return (0, int(path.stem), path.name)
    except ValueError:
        return (1, 0, path.name)


def load_event_samples(directory, event_id=None) -> list:
    """All sample files of one event directory, ordered by numeric file name."""
    directory = Path(directory)
    files = sorted(directory.glob("*.csv"), key=_numeric_stem)
    out = []
    for i, path in enumerate(files, start=1):
        kind, number, _ = _numeric_stem(path)
        sample_id = number if kind == 0 else i
        out.append(read_sample(path, event_id=event_id, sample_id=sample_id))
    return out


def load_dataset(directory, name=None) -> Dataset:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"dataset directory {directory} does not exist")
    events = {}
    for sub in sorted(p for p in directory.iterdir() if p.is_dir()):
        try:
            event_id = int(sub.name)
        except ValueError:
            continue
        events[event_id] = load_event_samples(sub, event_id)
    return Dataset(name or directory.name, events)


def write_dataset(dataset: Dataset, directory) -> None:
    directory = Path(directory)
    for event_id, samples in dataset.events.items():
        event_dir = directory / str(event_id)
        event_dir.mkdir(parents=True, exist_ok=True)
        for s in samples:
            write_sample(s, event_dir / f"{s.sample_id}.csv")
