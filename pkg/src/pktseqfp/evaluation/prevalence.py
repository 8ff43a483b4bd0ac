"""Prevalence: the share of a dataset's events that yield a nonempty fingerprint."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional

from ..metrics import TechniqueKind
from ..refinement import ConfigError, RefinementConfig, refine
from .dataset import Dataset

log = logging.getLogger(__name__)


def percent(count: int, total: int) -> int:
    """100 * count / total rounded half up; 0 for an empty total."""
    if total == 0:
        return 0
    return math.floor(Fraction(100 * count, total) + Fraction(1, 2))


@dataclass(frozen=True)
class PrevalenceRow:
    dataset: str
    technique: str
    fingerprintable: int
    total: int
    percentage: int
    # events where every sample holds at least one packet record
    baseline_total: int
    baseline_percentage: int
    empty: bool = False

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "technique": self.technique,
            "fingerprintable": self.fingerprintable,
            "total": self.total,
            "percentage": self.percentage,
            "baseline_total": self.baseline_total,
            "baseline_percentage": self.baseline_percentage,
            "empty": self.empty,
        }


@dataclass
class PrevalenceReport:
    rows: list
    fingerprints: Optional[dict] = None  # {technique label: {event_id: Fingerprint}}

    def row(self, technique: str) -> PrevalenceRow:
        for r in self.rows:
            if r.technique == technique:
                return r
        raise KeyError(technique)


def _refine_event(args):
    samples, config = args
    return refine(samples, config)


def has_baseline_traffic(samples) -> bool:
    return all(len(s.records) > 0 for s in samples)


def prevalence(
    dataset: Dataset,
    configs: Iterable[RefinementConfig],
    *,
    jobs: int = 1,
    keep_fingerprints: bool = False,
) -> PrevalenceReport:
    """Refine every event under every config and count nonempty fingerprints."""
    if isinstance(configs, RefinementConfig):
        configs = [configs]
    configs = list(configs)
    for cfg in configs:
        if dataset.events and cfg.T != dataset.T:
            raise ConfigError(f"config T={cfg.T} but dataset {dataset.name!r} has T={dataset.T}")

    event_ids = list(dataset.events)
    baseline = sum(1 for e in event_ids if has_baseline_traffic(dataset.events[e]))
    rows, kept = [], {}
    for cfg in configs:
        work = [(dataset.events[e], cfg) for e in event_ids]
        # custom metrics live in a per-process registry, so keep them in-process
        if jobs > 1 and len(work) > 1 and cfg.technique.kind is not TechniqueKind.CUSTOM:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                fps = list(pool.map(_refine_event, work, chunksize=max(1, len(work) // (4 * jobs))))
        else:
            fps = [_refine_event(w) for w in work]
        count = sum(1 for fp in fps if not fp.is_empty)
        label = cfg.technique.label
        log.info("%s %s: %d/%d events fingerprintable", dataset.name, label, count, len(event_ids))
        rows.append(PrevalenceRow(
            dataset=dataset.name,
            technique=label,
            fingerprintable=count,
            total=len(event_ids),
            percentage=percent(count, len(event_ids)),
            baseline_total=baseline,
            baseline_percentage=percent(count, baseline),
            empty=not event_ids,
        ))
        if keep_fingerprints:
            kept[label] = dict(zip(event_ids, fps))
    return PrevalenceReport(rows, kept if keep_fingerprints else None)
