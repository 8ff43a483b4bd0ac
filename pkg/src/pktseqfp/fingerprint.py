"""Fingerprints in complete form (clusters of sequences) and summary form."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

from .metrics import PacketSequence, Technique
from .model import Direction, DomainKind, DomainLabel
from .refinement import Cluster, ConfigError, RefinementConfig
from .tabulation import PacketRecord, atomic_write_text

SCHEMA_VERSION = 1


class FingerprintFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Fingerprint:
    """Complete form: every accepted cluster with all of its member sequences."""

    event_id: int
    technique: Technique
    config: Optional[RefinementConfig]
    clusters: tuple = ()

    def __len__(self):
        return len(self.clusters)

    @property
    def is_empty(self) -> bool:
        return not self.clusters


@dataclass(frozen=True)
class SummarySequence:
    """Per-index value ranges of one cluster."""

    size_min: tuple
    size_max: tuple
    directions: tuple
    domains: tuple

    def __post_init__(self):
        n = len(self.size_min)
        if n == 0:
            raise ValueError("summary sequence needs at least one index")
        if not (len(self.size_max) == len(self.directions) == len(self.domains) == n):
            raise ValueError("summary sequence fields differ in length")
        object.__setattr__(self, "directions", tuple(frozenset(d) for d in self.directions))
        object.__setattr__(self, "domains", tuple(frozenset(d) for d in self.domains))
        for i in range(n):
            if self.size_min[i] > self.size_max[i]:
                raise ValueError(f"index {i}: size_min > size_max")
            if not self.directions[i] or not self.domains[i]:
                raise ValueError(f"index {i}: empty direction or domain set")

    def __len__(self):
        return len(self.size_min)

    @property
    def length(self) -> int:
        return len(self.size_min)


@dataclass(frozen=True)
class SummaryFingerprint:
    event_id: int
    technique: Technique
    config: Optional[RefinementConfig]
    sequences: tuple = ()

    def __len__(self):
        return len(self.sequences)

    @property
    def is_empty(self) -> bool:
        return not self.sequences

    @property
    def n_max(self) -> int:
        return max((len(s) for s in self.sequences), default=0)


def summarize_cluster(cluster: Cluster) -> SummarySequence:
    n = cluster.length
    columns = [[m.packets[i] for m in cluster.members] for i in range(n)]
    return SummarySequence(
        size_min=tuple(min(r.size for r in col) for col in columns),
        size_max=tuple(max(r.size for r in col) for col in columns),
        directions=tuple(frozenset(r.direction for r in col) for col in columns),
        domains=tuple(frozenset(r.domain for r in col) for col in columns),
    )


def summarize(fp) -> SummaryFingerprint:
    if isinstance(fp, SummaryFingerprint):
        return fp
    return SummaryFingerprint(fp.event_id, fp.technique, fp.config, tuple(summarize_cluster(c) for c in fp.clusters))


# -- serialization -------------------------------------------------------------

def _domain_json(d: DomainLabel) -> dict:
    return {"value": d.value, "kind": d.kind.value}


def _domain_from(obj) -> DomainLabel:
    return DomainLabel(obj["value"], DomainKind(obj["kind"]))


def _header(form: str, fp) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "form": form,
        "event_id": fp.event_id,
        "technique": fp.technique.label,
        "h": fp.technique.h,
        "config": fp.config.to_dict() if fp.config is not None else None,
    }


def fingerprint_to_dict(fp) -> dict:
    if isinstance(fp, SummaryFingerprint):
        doc = _header("summary", fp)
        doc["sequences"] = [
            {
                "length": len(seq),
                "packets": [
                    {
                        "index": i,
                        "size_min": seq.size_min[i],
                        "size_max": seq.size_max[i],
                        "directions": sorted(d.value for d in seq.directions[i]),
                        "domains": [_domain_json(d) for d in sorted(seq.domains[i])],
                    }
                    for i in range(len(seq))
                ],
            }
            for seq in fp.sequences
        ]
        return doc
    doc = _header("complete", fp)
    doc["clusters"] = [
        {
            "length": c.length,
            "members": [
                {
                    "sample_id": m.sample_id,
                    "stream_id": m.stream_id,
                    "start_position": m.start_position,
                    "packets": [
                        {"size": r.size, "direction": r.direction.value, "domain": _domain_json(r.domain)}
                        for r in m.packets
                    ],
                }
                for m in c.members
            ],
        }
        for c in fp.clusters
    ]
    return doc


def dumps(fp) -> str:
    return json.dumps(fingerprint_to_dict(fp), indent=2) + "\n"


def write_fingerprint(fp, path) -> None:
    atomic_write_text(path, dumps(fp))


def _member_from(event_id: int, obj) -> PacketSequence:
    start = int(obj["start_position"])
    records = tuple(
        PacketRecord(
            event_id, int(obj["sample_id"]), int(obj["stream_id"]), _domain_from(p["domain"]),
            start + i, int(p["size"]), Direction.parse(p["direction"]),
        )
        for i, p in enumerate(obj["packets"])
    )
    return PacketSequence(event_id, int(obj["sample_id"]), int(obj["stream_id"]), start, records)


def _summary_from(obj) -> SummarySequence:
    packets = sorted(obj["packets"], key=lambda p: p["index"])
    if [p["index"] for p in packets] != list(range(len(packets))) or len(packets) != obj["length"]:
        raise FingerprintFormatError("summary sequence indices are not 0..length-1")
    return SummarySequence(
        size_min=tuple(int(p["size_min"]) for p in packets),
        size_max=tuple(int(p["size_max"]) for p in packets),
        directions=tuple(frozenset(Direction.parse(d) for d in p["directions"]) for p in packets),
        domains=tuple(frozenset(_domain_from(d) for d in p["domains"]) for p in packets),
    )


def fingerprint_from_dict(doc: dict):
    if not isinstance(doc, dict):
        raise FingerprintFormatError("fingerprint document must be a JSON object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise FingerprintFormatError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    try:
        technique = Technique.parse(doc["technique"], int(doc.get("h", 0)),
                                    (doc.get("config") or {}).get("metric_params") or {})
        config = RefinementConfig.from_dict(doc["config"]) if doc.get("config") is not None else None
        event_id = int(doc["event_id"])
        form = doc["form"]
        if form == "summary":
            seqs = tuple(_summary_from(s) for s in doc["sequences"])
            return SummaryFingerprint(event_id, technique, config, seqs)
        if form == "complete":
            clusters = tuple(
                Cluster(tuple(_member_from(event_id, m) for m in c["members"])) for c in doc["clusters"]
            )
            return Fingerprint(event_id, technique, config, clusters)
        raise FingerprintFormatError(f"unknown fingerprint form {form!r}")
    except FingerprintFormatError:
        raise
    except (KeyError, TypeError) as exc:
        raise FingerprintFormatError(f"missing or malformed field: {exc}") from None
    except (ValueError, ConfigError) as exc:
        raise FingerprintFormatError(str(exc)) from None


def loads(text: str):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FingerprintFormatError(f"not valid JSON: {exc}") from None
    return fingerprint_from_dict(doc)


def read_fingerprint(path):
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())
