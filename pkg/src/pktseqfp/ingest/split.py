"""Cutting one long capture into per-event traffic samples."""

from __future__ import annotations

import bisect
from decimal import Decimal
from pathlib import Path

from .capture import RawCapture


def read_timestamps(path) -> list:
    """One decimal epoch-seconds timestamp per line; blank lines and '#' comments ignored."""
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            out.append(float(Decimal(line)))
        except ArithmeticError:
            raise ValueError(f"{path}:{lineno}: not a timestamp: {line!r}") from None
    return out


def split_by_events(raw: RawCapture, event_timestamps, window_seconds: float) -> list:
    """One capture per event holding the packets stamped in [t, t + window)."""
    if window_seconds <= 0:
        raise ValueError("window_seconds must be positive")
    stamps = list(event_timestamps)
    if any(b < a for a, b in zip(stamps, stamps[1:])):
        raise ValueError("event timestamps must be sorted ascending")
    times = [p.timestamp for p in raw.packets]
    out = []
    for t in stamps:
        lo = bisect.bisect_left(times, t)
        hi = bisect.bisect_left(times, t + window_seconds)
        out.append(RawCapture(raw.packets[lo:hi], raw.linktype))
    return out
