"""Iterative fingerprint refinement.

For every window length n from P down to n_min: slide a window over the first
P packets of every stream, cluster the windows under the technique's metric,
and keep the clusters that span enough distinct samples and are not merely
shorter copies of something already accepted.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from sklearn.cluster import DBSCAN

from .metrics import (
    PacketSequence,
    Technique,
    TechniqueKind,
    canonical_key,
    distance_function,
    has_exact_key,
    is_maximal,
    packet_tokens,
)
from .suffixtree import SequenceIndex

log = logging.getLogger(__name__)

DEFAULT_P = 20


class ConfigError(ValueError):
    """A refinement configuration violates one of its constraints."""


@dataclass(frozen=True)
class RefinementConfig:
    T: int
    technique: Technique = field(default_factory=lambda: Technique(TechniqueKind.SDBF))
    P: int = DEFAULT_P
    n_min: int = 1
    T_min: Optional[int] = None
    epsilon: float = 0.0
    min_pts: Optional[int] = None

    def __post_init__(self):
        if self.T_min is None:
            object.__setattr__(self, "T_min", self.T)
        if self.min_pts is None:
            object.__setattr__(self, "min_pts", self.T)
        if self.T < 1:
            raise ConfigError(f"T must be >= 1 (got T={self.T})")
        if not 1 <= self.n_min <= self.P:
            raise ConfigError(f"need P >= n_min >= 1 (got P={self.P}, n_min={self.n_min})")
        if not 1 <= self.T_min <= self.T:
            raise ConfigError(f"need 1 <= T_min <= T (got T_min={self.T_min}, T={self.T})")
        if self.epsilon < 0:
            raise ConfigError(f"epsilon must be >= 0 (got {self.epsilon})")
        if self.min_pts < 1:
            raise ConfigError(f"min_pts must be >= 1 (got {self.min_pts})")

    @classmethod
    def strict(cls, technique: Technique, T: int, *, P: Optional[int] = None, n_min: Optional[int] = None):
        """The T_min = MinPts = T, epsilon = 0 configuration.

        Endpoint techniques look at a single packet per stream, so they
        default to P = n_min = 1.
        """
        if technique.is_endpoint:
            P = 1 if P is None else P
            n_min = 1 if n_min is None else n_min
        else:
            P = DEFAULT_P if P is None else P
            n_min = 1 if n_min is None else n_min
        return cls(T=T, technique=technique, P=P, n_min=n_min)

    def to_dict(self) -> dict:
        return {
            "technique": self.technique.label,
            "h": self.technique.h,
            "metric_params": dict(self.technique.params),
            "P": self.P,
            "n_min": self.n_min,
            "T": self.T,
            "T_min": self.T_min,
            "epsilon": self.epsilon,
            "min_pts": self.min_pts,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RefinementConfig":
        known = {"technique", "h", "metric_params", "P", "n_min", "T", "T_min", "epsilon", "min_pts"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(sorted(unknown))}")
        technique = Technique.parse(data["technique"], int(data.get("h", 0)), data.get("metric_params") or {})
        return cls(
            T=int(data["T"]),
            technique=technique,
            P=int(data.get("P", DEFAULT_P)),
            n_min=int(data.get("n_min", 1)),
            T_min=data.get("T_min"),
            epsilon=float(data.get("epsilon", 0.0)),
            min_pts=data.get("min_pts"),
        )


@dataclass(frozen=True)
class Cluster:
    members: tuple
    key: object = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        if not self.members:
            raise ValueError("empty cluster")
        n = len(self.members[0])
        if any(len(m) != n for m in self.members):
            raise ValueError("cluster members must all have the same length")

    @property
    def length(self) -> int:
        return len(self.members[0])

    @property
    def sample_ids(self) -> frozenset:
        return frozenset(m.sample_id for m in self.members)

    def __len__(self):
        return len(self.members)


def window_count(stream_length: int, n: int, P: int) -> int:
    return max(0, min(P, stream_length) - n + 1)


def form_sequences(samples: Iterable, n: int, P: int) -> list:
    """Every length-n window over the first P packets of every stream."""
    if n > P:
        raise ValueError(f"window length {n} exceeds prefix length P={P}")
    out = []
    for sample in samples:
        for records in sample.streams.values():
            prefix = records[:P]
            for start in range(len(prefix) - n + 1):
                out.append(PacketSequence.from_records(prefix[start:start + n]))
    return out


def _cluster_exact(seqs, technique, min_pts):
    groups: dict = {}
    for seq in seqs:
        key = canonical_key(technique, seq)
        if key is None:
            continue
        groups.setdefault(key, []).append(seq)
    return [Cluster(tuple(members), key) for key, members in groups.items() if len(members) >= min_pts]


def _cluster_dbscan(seqs, technique, epsilon, min_pts):
    if not seqs:
        return []
    metric = distance_function(technique)
    n = len(seqs)
    # any finite stand-in above epsilon reproduces "never within epsilon"
    far = 2.0 * epsilon + 1.0
    dist = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            d = metric(seqs[i], seqs[j])
            dist[i, j] = dist[j, i] = far if is_maximal(d) else float(d)
    # sklearn wants eps > 0; the smallest positive float admits exactly the zero distances
    eps = epsilon if epsilon > 0 else float(np.nextafter(0.0, 1.0))
    labels = DBSCAN(eps=eps, min_samples=min_pts, metric="precomputed").fit_predict(dist)
    clusters: dict = {}
    for seq, label in zip(seqs, labels):
        if label >= 0:
            clusters.setdefault(int(label), []).append(seq)
    return [Cluster(tuple(clusters[k])) for k in sorted(clusters)]


def cluster_sequences(seqs: Sequence, technique: Technique, epsilon: float, min_pts: int) -> list:
    """Density clustering of equal-length sequences under the technique's metric.

    At epsilon = 0 with an exact technique this is grouping by canonical key,
    which gives the same partition as DBSCAN without the quadratic cost.
    """
    lengths = {len(s) for s in seqs}
    if len(lengths) > 1:
        raise ValueError("cluster_sequences needs sequences of one length")
    if epsilon == 0 and has_exact_key(technique):
        return _cluster_exact(seqs, technique, min_pts)
    return _cluster_dbscan(list(seqs), technique, epsilon, min_pts)


def _member_tokens(technique, cluster):
    return [packet_tokens(technique, m) for m in cluster.members]


def _selection_order(technique, clusters):
    def order(c):
        tokens = min(t for t in _member_tokens(technique, c) if t is not None) if c.key is None else c.key
        return (-len(c.members), tokens)

    try:
        return sorted(clusters, key=order)
    except TypeError:
        return sorted(clusters, key=lambda c: (order(c)[0], repr(order(c)[1])))


def select_clusters(clusters: Sequence, technique: Technique, T_min: int, accepted) -> list:
    """Keep clusters spanning >= T_min samples with no member already covered.

    ``accepted`` (a :class:`SequenceIndex` or compatible) is updated in place
    as clusters are accepted, so the order of ``clusters`` matters.
    """
    kept = []
    for cluster in _selection_order(technique, clusters):
        if len(cluster.sample_ids) < T_min:
            continue
        tokens = _member_tokens(technique, cluster)
        if any(t is None for t in tokens):
            continue
        if any(accepted.contains(t) for t in tokens):
            continue
        accepted.add_cluster(tokens)
        kept.append(cluster)
    return kept


def refine(samples: Sequence, config: RefinementConfig, index_factory=SequenceIndex):
    """Run refinement over the T samples of one event; returns the complete-form fingerprint."""
    from .fingerprint import Fingerprint

    samples = list(samples)
    if len(samples) != config.T:
        raise ConfigError(f"expected T={config.T} samples, got {len(samples)}")
    event_ids = {s.event_id for s in samples}
    if len(event_ids) > 1:
        raise ValueError(f"samples come from several events: {sorted(event_ids)}")
    event_id = event_ids.pop() if event_ids else 0

    longest = max((len(r) for s in samples for r in s.streams.values()), default=0)
    index = index_factory()
    accepted = []
    for n in range(min(config.P, longest), config.n_min - 1, -1):
        seqs = form_sequences(samples, n, config.P)
        clusters = cluster_sequences(seqs, config.technique, config.epsilon, config.min_pts)
        chosen = select_clusters(clusters, config.technique, config.T_min, index)
        if chosen:
            log.debug("event %s: n=%d accepted %d cluster(s)", event_id, n, len(chosen))
        accepted.extend(chosen)
    return Fingerprint(event_id, config.technique, config, tuple(accepted))

