"""CSV reports and figures for prevalence and false-positive results."""

from __future__ import annotations

import csv
import io
from collections import Counter
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from ..tabulation import atomic_write_text
from .falsepos import FalsePositiveReport
from .prevalence import PrevalenceRow

PREVALENCE_FIELDS = (
    "dataset", "technique", "fingerprintable", "total", "percentage",
    "baseline_total", "baseline_percentage", "empty",
)
FP_FIELDS = (
    "source", "event_id", "technique", "target", "fp_events", "fp_samples",
    "own_matches", "bin", "foreign_events",
)

# fixed metadata keeps figure bytes identical across runs
_PNG_META = {"Software": None}


def _csv_text(fields, rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def write_prevalence_csv(rows: Sequence[PrevalenceRow], path) -> None:
    atomic_write_text(path, _csv_text(PREVALENCE_FIELDS, [r.to_dict() for r in rows]))


def write_fp_csv(report: FalsePositiveReport, path) -> None:
    atomic_write_text(path, _csv_text(FP_FIELDS, [r.to_dict() for r in report.rows]))


def write_fp_cells_csv(report: FalsePositiveReport, path) -> None:
    """One line per (source, target, technique) cell with fingerprint counts per bin."""
    labels = report.bins.labels
    counts: dict = {}
    for row in report.rows:
        cell = counts.setdefault((row.source, row.target, row.technique), dict.fromkeys(labels, 0))
        cell[row.bin] += 1
    fields = ("source", "target", "technique") + labels
    rows = [
        {"source": s, "target": t, "technique": tech, **cell}
        for (s, t, tech), cell in sorted(counts.items())
    ]
    atomic_write_text(path, _csv_text(fields, rows))


def plot_prevalence(rows: Sequence[PrevalenceRow], path) -> None:
    """Grouped bars of prevalence percentage per technique, one group per dataset."""
    datasets = sorted({r.dataset for r in rows})
    techniques = list(dict.fromkeys(r.technique for r in rows))
    lookup = {(r.dataset, r.technique): r for r in rows}
    width = 0.8 / max(1, len(techniques))
    fig, ax = plt.subplots(figsize=(max(4.5, 1.6 * len(datasets) + 2.5), 3.2))
    for i, tech in enumerate(techniques):
        xs, ys, counts = [], [], []
        for j, ds in enumerate(datasets):
            r = lookup.get((ds, tech))
            if r is None:
                continue
            xs.append(j + (i - (len(techniques) - 1) / 2) * width)
            ys.append(r.percentage)
            counts.append(r.fingerprintable)
        bars = ax.bar(xs, ys, width, label=tech.upper())
        for bar, n in zip(bars, counts):
            ax.annotate(str(n), (bar.get_x() + bar.get_width() / 2, bar.get_height()),
                        ha="center", va="bottom", fontsize=6)
    ax.set_xticks(range(len(datasets)))
    ax.set_xticklabels(datasets)
    ax.set_ylim(0, 110)
    ax.set_ylabel("events with a fingerprint (%)")
    ax.legend(fontsize=7, bbox_to_anchor=(1.01, 1), loc="upper left", frameon=False)
    fig.tight_layout()
    _save(fig, path)


def plot_fp_bins(report: FalsePositiveReport, path) -> None:
    """Stacked bars of the share of fingerprints per bin, one bar per d1:d2 cell and technique."""
    labels = report.bins.labels
    cells: dict = {}
    for row in report.rows:
        cells.setdefault((row.source, row.target, row.technique), Counter())[row.bin] += 1
    keys = sorted(cells)
    several = len({k[2] for k in keys}) > 1
    fig, ax = plt.subplots(figsize=(max(4.0, 0.9 * len(keys) + 2), 3.2))
    bottoms = [0.0] * len(keys)
    cmap = plt.get_cmap("viridis")
    for b, lab in enumerate(labels):
        shares = []
        for k in keys:
            total = sum(cells[k].values())
            shares.append(100.0 * cells[k].get(lab, 0) / total if total else 0.0)
        ax.bar(range(len(keys)), shares, 0.7, bottom=bottoms, label=lab,
               color=cmap(b / max(1, len(labels) - 1)))
        bottoms = [x + y for x, y in zip(bottoms, shares)]
    ax.set_xticks(range(len(keys)))
    ax.set_xticklabels([f"{s}:{t} {tech}" if several else f"{s}:{t}" for s, t, tech in keys],
                       rotation=30, ha="right", fontsize=7)
    ax.set_ylim(0, 100)
    ax.set_ylabel("fingerprints (%)")
    ax.legend(title="false-positive events", fontsize=7, title_fontsize=7,
              bbox_to_anchor=(1.01, 1), loc="upper left", frameon=False)
    fig.tight_layout()
    _save(fig, path)


def _save(fig, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    fig.savefig(tmp, format="png", dpi=150, metadata=_PNG_META)
    plt.close(fig)
    tmp.replace(path)
