"""Packet-sequence distance metrics and endpoint identity rules.

Each fingerprinting technique is a notion of when two equal-length packet
sequences are "the same": the size/direction techniques compare packets index
by index, the endpoint techniques only compare who the stream talked to.
Besides the distance itself every technique provides

* a per-packet equality token (used for duplicate suppression), and
* for exact (h=0) configurations, a canonical key whose equality coincides
  with distance 0, which lets clustering at epsilon=0 group by hashing.
"""

from __future__ import annotations

import enum
import functools
import importlib
import importlib.util
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Hashable, Mapping, Optional

from publicsuffixlist import PublicSuffixList

from .model import DomainLabel


class _Maximal:
    """Distance between sequences that can never be clustered together."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "MAXIMAL"

    def __reduce__(self):
        return (_Maximal, ())

    def __eq__(self, other):
        return other is self

    def __hash__(self):
        return hash("MAXIMAL")

    def __lt__(self, other):
        return False

    def __le__(self, other):
        return other is self

    def __gt__(self, other):
        return other is not self

    def __ge__(self, other):
        return True


MAXIMAL = _Maximal()


def is_maximal(d) -> bool:
    return d is MAXIMAL


class TechniqueKind(str, enum.Enum):
    SDBF = "sdbf"
    ESDBF = "esdbf"
    EBF = "ebf"
    FQDNBF = "fqdnbf"
    ESLDBF = "esldbf"
    CUSTOM = "custom"


SEQUENCE_KINDS = (TechniqueKind.SDBF, TechniqueKind.ESDBF)
ENDPOINT_KINDS = (TechniqueKind.EBF, TechniqueKind.FQDNBF, TechniqueKind.ESLDBF)


class Granularity(str, enum.Enum):
    EBF = "ebf"
    FQDN = "fqdn"
    ESLD = "esld"


_GRANULARITY = {
    TechniqueKind.EBF: Granularity.EBF,
    TechniqueKind.FQDNBF: Granularity.FQDN,
    TechniqueKind.ESLDBF: Granularity.ESLD,
}


@dataclass(frozen=True)
class Technique:
    kind: TechniqueKind
    h: int = 0
    name: Optional[str] = None
    params: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", TechniqueKind(self.kind))
        if self.h < 0:
            raise ValueError("h must be >= 0")
        if self.kind is TechniqueKind.CUSTOM and not self.name:
            raise ValueError("custom technique needs a metric name")
        if self.kind is not TechniqueKind.CUSTOM and self.name:
            raise ValueError(f"{self.kind.value} does not take a metric name")
        if isinstance(self.params, Mapping):
            object.__setattr__(self, "params", tuple(sorted(self.params.items())))

    @classmethod
    def parse(cls, text: str, h: int = 0, params: Optional[Mapping] = None) -> "Technique":
        text = text.strip()
        lowered = text.lower()
        if lowered.startswith("custom:"):
            return cls(TechniqueKind.CUSTOM, h, text.split(":", 1)[1], tuple(sorted((params or {}).items())))
        try:
            kind = TechniqueKind(lowered)
        except ValueError:
            raise ValueError(f"unknown technique {text!r}") from None
        if kind is TechniqueKind.CUSTOM:
            raise ValueError("custom technique must be written custom:<name>")
        return cls(kind, h, None, tuple(sorted((params or {}).items())))

    @property
    def label(self) -> str:
        if self.kind is TechniqueKind.CUSTOM:
            return f"custom:{self.name}"
        return self.kind.value

    @property
    def is_endpoint(self) -> bool:
        return self.kind in ENDPOINT_KINDS

    @property
    def granularity(self) -> Optional[Granularity]:
        return _GRANULARITY.get(self.kind)

    def __str__(self):
        return self.label


@dataclass(frozen=True)
class PacketSequence:
    """``n`` consecutive packets of one stream, starting at ``start_position``."""

    event_id: int
    sample_id: int
    stream_id: int
    start_position: int
    packets: tuple

    def __post_init__(self):
        if not self.packets:
            raise ValueError("a packet sequence needs at least one packet")
        for offset, rec in enumerate(self.packets):
            if rec.stream_id != self.stream_id or rec.position_in_stream != self.start_position + offset:
                raise ValueError("packets are not consecutive positions of one stream")

    def __len__(self):
        return len(self.packets)

    @property
    def domain(self) -> DomainLabel:
        return self.packets[0].domain

    @property
    def origin(self) -> tuple:
        return (self.event_id, self.sample_id, self.stream_id, self.start_position)

    @classmethod
    def from_records(cls, records) -> "PacketSequence":
        records = tuple(records)
        first = records[0]
        return cls(first.event_id, first.sample_id, first.stream_id, first.position_in_stream, records)


# -- endpoint identity -------------------------------------------------------

_PSL_PATH = "data/public_suffix_list.dat"


@functools.lru_cache(maxsize=1)
def _psl() -> PublicSuffixList:
    with resources.files(__package__).joinpath(_PSL_PATH).open("rb") as fh:
        return PublicSuffixList(fh, only_icann=True)


@functools.lru_cache(maxsize=65536)
def _registrable(host: str) -> Optional[str]:
    return _psl().privatesuffix(host)


def esld_of(domain: DomainLabel) -> Optional[str]:
    """Registrable domain of a hostname label; None for IPs and bare public suffixes."""
    if domain.is_ip:
        return None
    host = domain.value.rstrip(".").lower()
    return _registrable(host) if host else None


def endpoint_identifier(domain: DomainLabel, granularity: Granularity) -> Optional[str]:
    if granularity is Granularity.EBF:
        return domain.value
    if granularity is Granularity.FQDN:
        return None if domain.is_ip else domain.value
    if granularity is Granularity.ESLD:
        return esld_of(domain)
    raise ValueError(f"unknown granularity {granularity!r}")


# -- distances -----------------------------------------------------------------

def _check_lengths(p1, p2):
    if len(p1) != len(p2):
        raise ValueError(f"cannot compare sequences of length {len(p1)} and {len(p2)}")


def sdbf_distance(p1: PacketSequence, p2: PacketSequence, h: int = 0):
    """Sum of per-index size differences; MAXIMAL on any direction mismatch.

    A total within the slack ``h`` counts as 0.
    """
    _check_lengths(p1, p2)
    total = 0
    for a, b in zip(p1.packets, p2.packets):
        if a.direction != b.direction:
            return MAXIMAL
        total += abs(a.size - b.size)
    return 0 if total <= h else total


def esdbf_distance(p1: PacketSequence, p2: PacketSequence, h: int = 0):
    _check_lengths(p1, p2)
    if p1.domain.value != p2.domain.value:
        return MAXIMAL
    return sdbf_distance(p1, p2, h)


def endpoint_distance(p1: PacketSequence, p2: PacketSequence, granularity) -> object:
    granularity = Granularity(granularity)
    a = endpoint_identifier(p1.domain, granularity)
    if a is None:
        return MAXIMAL
    b = endpoint_identifier(p2.domain, granularity)
    return 0 if a == b else MAXIMAL


# -- custom metrics ------------------------------------------------------------

@dataclass(frozen=True)
class CustomMetric:
    """A user-supplied technique.

    ``distance(p1, p2, params)`` is required.  ``key(seq, params)`` enables the
    exact epsilon=0 grouping path and must be equal exactly when the distance
    is 0; ``token(record, params)`` defines packet equality for duplicate
    suppression; ``matches(window, summary_sequence, params)`` decides summary
    matches.  Missing pieces fall back to the strict size/direction/endpoint
    behaviour.
    """

    name: str
    distance: Callable
    key: Optional[Callable] = None
    token: Optional[Callable] = None
    matches: Optional[Callable] = None


_REGISTRY: dict = {}


def register_metric(name: str, distance: Optional[Callable] = None, *, key=None, token=None, matches=None):
    """Register a custom metric; usable directly or as a decorator on the distance."""

    def _register(fn):
        _REGISTRY[name] = CustomMetric(name, fn, key, token, matches)
        return fn

    if distance is None:
        return _register
    _register(distance)
    return distance


def unregister_metric(name: str) -> None:
    _REGISTRY.pop(name, None)


def get_metric(name: str) -> CustomMetric:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise KeyError(f"no custom metric registered as {name!r}") from None


def registered_metrics() -> list:
    return sorted(_REGISTRY)


def load_metric_module(spec: str) -> None:
    """Import a module (dotted name or .py path) whose import registers metrics."""
    path = Path(spec)
    if spec.endswith(".py") or path.is_file():
        mod_spec = importlib.util.spec_from_file_location(path.stem, path)
        if mod_spec is None or mod_spec.loader is None:
            raise ImportError(f"cannot load metric module {spec}")
        module = importlib.util.module_from_spec(mod_spec)
        mod_spec.loader.exec_module(module)
    else:
        importlib.import_module(spec)


# -- technique dispatch ----------------------------------------------------------

def distance_function(technique: Technique) -> Callable:
    kind = technique.kind
    if kind is TechniqueKind.SDBF:
        return functools.partial(sdbf_distance, h=technique.h)
    if kind is TechniqueKind.ESDBF:
        return functools.partial(esdbf_distance, h=technique.h)
    if kind in ENDPOINT_KINDS:
        return functools.partial(endpoint_distance, granularity=technique.granularity)
    metric = get_metric(technique.name)
    params = dict(technique.params)
    return lambda p1, p2: metric.distance(p1, p2, params)


def sequence_identifier(technique: Technique, seq: PacketSequence) -> Optional[str]:
    """Endpoint identifier of ``seq`` under the technique (None: has none)."""
    if technique.is_endpoint:
        return endpoint_identifier(seq.domain, technique.granularity)
    return seq.domain.value


def packet_tokens(technique: Technique, seq: PacketSequence) -> Optional[tuple]:
    """Per-packet equality tokens; None when the sequence has no identifier."""
    kind = technique.kind
    if kind is TechniqueKind.SDBF:
        return tuple((r.direction.value, r.size) for r in seq.packets)
    if kind is TechniqueKind.ESDBF:
        ident = seq.domain.value
        return tuple((ident, r.direction.value, r.size) for r in seq.packets)
    if kind in ENDPOINT_KINDS:
        ident = endpoint_identifier(seq.domain, technique.granularity)
        return None if ident is None else (ident,) * len(seq)
    metric = get_metric(technique.name)
    if metric.token is not None:
        params = dict(technique.params)
        return tuple(metric.token(r, params) for r in seq.packets)
    return tuple((r.domain.value, r.direction.value, r.size) for r in seq.packets)


def has_exact_key(technique: Technique) -> bool:
    if technique.kind is TechniqueKind.CUSTOM:
        return get_metric(technique.name).key is not None
    return technique.is_endpoint or technique.h == 0


def canonical_key(technique: Technique, seq: PacketSequence) -> Optional[Hashable]:
    """Hashable key equal for two sequences exactly when their distance is 0."""
    if technique.kind is TechniqueKind.CUSTOM:
        metric = get_metric(technique.name)
        if metric.key is None:
            raise ValueError(f"custom metric {technique.name!r} defines no canonical key")
        return metric.key(seq, dict(technique.params))
    if technique.is_endpoint:
        ident = endpoint_identifier(seq.domain, technique.granularity)
        return None if ident is None else (ident,)
    if technique.h != 0:
        raise ValueError("canonical keys only exist for h=0")
    return packet_tokens(technique, seq)
