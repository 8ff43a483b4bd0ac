"""Closed-world false-positive scanning with event-count binning.

Every summary fingerprint is matched against every sample of every event of
every target dataset.  A fingerprint's false positives in a target dataset
are the distinct foreign events with at least one matching sample; that
count alone decides the bin.  The total number of matching samples is
reported alongside but never binned.

The scan is split into (fingerprint, target event) units.  With a journal
path, each finished unit is appended as one JSON line, and a rerun skips the
units already present, so a long scan can be interrupted and resumed.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from ..fingerprint import SummaryFingerprint, dumps, summarize
from ..matcher import check_loadable, matches
from ..metrics import TechniqueKind
from .dataset import Dataset

log = logging.getLogger(__name__)

DEFAULT_EDGES = (0, 10, 100)


@dataclass(frozen=True)
class Bins:
    """Bins [0, e0], (e0, e1], ..., (e_last, inf) over distinct-event counts."""

    edges: tuple = DEFAULT_EDGES

    def __post_init__(self):
        edges = tuple(int(e) for e in self.edges)
        if not edges:
            raise ValueError("at least one bin edge is needed")
        if edges[0] < 0 or any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValueError(f"bin edges must be non-negative and strictly increasing (got {edges})")
        object.__setattr__(self, "edges", edges)

    @classmethod
    def parse(cls, text: str) -> "Bins":
        try:
            return cls(tuple(int(x) for x in text.split(",") if x.strip()))
        except ValueError as exc:
            raise ValueError(f"bad bin edges {text!r}: {exc}") from None

    @property
    def labels(self) -> tuple:
        out = [_range_label(0, self.edges[0])]
        for lo, hi in zip(self.edges, self.edges[1:]):
            out.append(_range_label(lo + 1, hi))
        out.append(f"{self.edges[-1] + 1}+")
        return tuple(out)

    def label(self, count: int) -> str:
        if count < 0:
            raise ValueError("event counts are non-negative")
        for edge, lab in zip(self.edges, self.labels):
            if count <= edge:
                return lab
        return self.labels[-1]


def _range_label(lo: int, hi: int) -> str:
    return str(lo) if lo == hi else f"{lo}-{hi}"


@dataclass(frozen=True)
class FpRow:
    source: str
    event_id: int
    technique: str
    target: str
    foreign_events: tuple
    fp_samples: int
    own_matches: Optional[int]  # matching samples of the fingerprint's own event, if scanned
    bin: str

    @property
    def fp_events(self) -> int:
        return len(self.foreign_events)

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "event_id": self.event_id,
            "technique": self.technique,
            "target": self.target,
            "fp_events": self.fp_events,
            "fp_samples": self.fp_samples,
            "own_matches": "" if self.own_matches is None else self.own_matches,
            "bin": self.bin,
            "foreign_events": " ".join(str(e) for e in self.foreign_events),
        }


@dataclass
class FalsePositiveReport:
    rows: list
    bins: Bins

    def cells(self) -> dict:
        """{(source, target): Counter(bin label -> fingerprint count)}."""
        out: dict = {}
        for row in self.rows:
            out.setdefault((row.source, row.target), Counter())[row.bin] += 1
        return out


def fingerprint_digest(fp: SummaryFingerprint) -> str:
    return hashlib.sha256(dumps(fp).encode("utf-8")).hexdigest()[:16]


# -- workers -------------------------------------------------------------------

_FPS: dict = {}
_TARGETS: dict = {}


def _init_worker(fps, targets):
    global _FPS, _TARGETS
    _FPS, _TARGETS = fps, targets


def _scan_unit(unit):
    fp_key, target, event_id = unit
    fp = _FPS[fp_key]
    return unit, sum(1 for s in _TARGETS[target].events[event_id] if matches(fp, s))


# -- journal -------------------------------------------------------------------

def _unit_id(fp_key, digest, target, event_id) -> tuple:
    source, fp_event, technique = fp_key
    return (source, fp_event, technique, digest, target, event_id)


def _read_journal(path: Path) -> dict:
    done = {}
    if not path.exists():
        return done
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                key = (rec["source"], int(rec["event_id"]), rec["technique"], rec["digest"],
                       rec["target"], int(rec["target_event"]))
                done[key] = int(rec["matched_samples"])
            except (ValueError, KeyError, TypeError):
                # a torn final line from an interrupted run; the unit is simply redone
                log.warning("%s:%d: ignoring unreadable journal line", path, lineno)
    return done


def _journal_line(uid: tuple, matched: int) -> str:
    source, fp_event, technique, digest, target, event_id = uid
    return json.dumps({
        "source": source, "event_id": fp_event, "technique": technique, "digest": digest,
        "target": target, "target_event": event_id, "matched_samples": matched,
    }, sort_keys=True) + "\n"


# -- scan ----------------------------------------------------------------------

def false_positive_scan(
    fingerprints: Mapping[str, Iterable],
    datasets: Sequence[Dataset],
    *,
    bins: Bins = Bins(),
    jobs: int = 1,
    journal: Optional[os.PathLike] = None,
) -> FalsePositiveReport:
    """Scan each fingerprint against every event of every dataset in ``datasets``.

    ``fingerprints`` maps the name of the dataset a fingerprint was extracted
    from to its fingerprints; an event counts as the fingerprint's own event
    when both the dataset name and the event id agree.
    """
    fps: dict = {}
    for source, group in fingerprints.items():
        for fp in group:
            fp = check_loadable(summarize(fp), f"{source} event {fp.event_id}")
            key = (source, fp.event_id, fp.technique.label)
            if key in fps:
                raise ValueError(f"duplicate fingerprint for {key}")
            fps[key] = fp
    targets = {}
    for ds in datasets:
        if ds.name in targets:
            raise ValueError(f"dataset name {ds.name!r} given twice")
        targets[ds.name] = ds

    digests = {k: fingerprint_digest(fp) for k, fp in fps.items()}
    units = [(k, t, e) for k in sorted(fps) for t in targets for e in targets[t].events]

    done: dict = {}
    jpath = Path(journal) if journal is not None else None
    if jpath is not None:
        done = _read_journal(jpath)
    results = {}
    todo = []
    for unit in units:
        uid = _unit_id(unit[0], digests[unit[0]], unit[1], unit[2])
        if uid in done:
            results[unit] = done[uid]
        else:
            todo.append(unit)
    log.info("false-positive scan: %d units, %d from journal", len(units), len(units) - len(todo))

    custom = any(fp.technique.kind is TechniqueKind.CUSTOM for fp in fps.values())
    jfh = open(jpath, "a", encoding="utf-8") if jpath is not None else None
    try:
        if jobs > 1 and len(todo) > 1 and not custom:
            with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker,
                                     initargs=(fps, targets)) as pool:
                stream = pool.map(_scan_unit, todo, chunksize=max(1, len(todo) // (8 * jobs)))
                _collect(stream, results, digests, jfh)
        else:
            _init_worker(fps, targets)
            _collect(map(_scan_unit, todo), results, digests, jfh)
    finally:
        if jfh is not None:
            jfh.close()

    rows = []
    for key in sorted(fps):
        source, fp_event, technique = key
        for target in targets:
            foreign, samples, own = [], 0, None
            for event_id in targets[target].events:
                matched = results[(key, target, event_id)]
                if target == source and event_id == fp_event:
                    own = matched
                    continue
                if matched:
                    foreign.append(event_id)
                    samples += matched
            rows.append(FpRow(source, fp_event, technique, target, tuple(foreign), samples, own,
                              bins.label(len(foreign))))
    return FalsePositiveReport(rows, bins)


def _collect(stream, results, digests, jfh):
    for unit, matched in stream:
        results[unit] = matched
        if jfh is not None:
            jfh.write(_journal_line(_unit_id(unit[0], digests[unit[0]], unit[1], unit[2]), matched))
            jfh.flush()
