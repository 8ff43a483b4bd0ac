"""Synthetic datasets with known planted fingerprints, for end-to-end oracles.

Noise packet sizes for sample s are drawn only from sizes congruent to s
modulo T (and never from a planted size of the event), and noise endpoints
are unique per sample.  Any window containing a noise packet therefore
occurs in exactly one sample, so with T_min >= 2 refinement can only ever
recover the planted sequences.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional

from ..fingerprint import Fingerprint
from ..metrics import PacketSequence, Technique, TechniqueKind
from ..model import Direction, DomainKind, DomainLabel, is_ip_literal
from ..refinement import DEFAULT_P, Cluster, RefinementConfig
from ..tabulation import PacketRecord, TabulatedTrafficSample
from .dataset import Dataset


class PlanError(ValueError):
    pass


def _label(value: str) -> DomainLabel:
    return DomainLabel(value, DomainKind.IP if is_ip_literal(value) else DomainKind.SNI)


@dataclass(frozen=True)
class PlantedSequence:
    domain: str
    packets: tuple  # ((size, Direction), ...)
    max_prefix: int = 3

    @property
    def tokens(self) -> tuple:
        return tuple((d.value, s) for s, d in self.packets)


@dataclass(frozen=True)
class NoiseSequence:
    domain: str
    packets: tuple
    samples: tuple


@dataclass(frozen=True)
class EventPlan:
    event_id: int
    planted: tuple = ()
    noise_sequences: tuple = ()


@dataclass(frozen=True)
class NoiseParams:
    streams: tuple = (1, 4)
    packets: tuple = (1, 12)
    sizes: tuple = (40, 1500)


@dataclass(frozen=True)
class PlantPlan:
    T: int
    events: tuple
    noise: NoiseParams = field(default_factory=NoiseParams)
    P: int = DEFAULT_P

    @classmethod
    def from_dict(cls, doc: dict) -> "PlantPlan":
        def packets(raw):
            return tuple((int(s), Direction.parse(d)) for s, d in raw)

        try:
            noise = NoiseParams(**{k: tuple(v) for k, v in (doc.get("noise") or {}).items()})
            events = tuple(
                EventPlan(
                    int(ev["event_id"]),
                    tuple(
                        PlantedSequence(p["domain"], packets(p["packets"]), int(p.get("max_prefix", 3)))
                        for p in ev.get("planted", ())
                    ),
                    tuple(
                        NoiseSequence(n["domain"], packets(n["packets"]), tuple(int(x) for x in n["samples"]))
                        for n in ev.get("noise_sequences", ())
                    ),
                )
                for ev in doc["events"]
            )
            return cls(int(doc["T"]), events, noise, int(doc.get("P", DEFAULT_P)))
        except (KeyError, TypeError) as exc:
            raise PlanError(f"malformed plan: {exc}") from None


def _runs(tokens: tuple):
    return {tokens[i:j] for i in range(len(tokens)) for j in range(i + 1, len(tokens) + 1)}


def validate_plan(plan: PlantPlan) -> None:
    if plan.T < 2:
        raise PlanError("planted datasets need T >= 2")
    lo, hi = plan.noise.sizes
    if lo > hi or lo < 0:
        raise PlanError("noise size range is empty")
    if hi - lo + 1 < plan.T:
        raise PlanError("noise size range must hold at least T sizes")
    seen = set()
    for ev in plan.events:
        if ev.event_id in seen:
            raise PlanError(f"event {ev.event_id} planned twice")
        seen.add(ev.event_id)
        tokens = [p.tokens for p in ev.planted]
        for i, p in enumerate(ev.planted):
            if not p.packets:
                raise PlanError(f"event {ev.event_id}: empty planted sequence")
            if len(p.packets) > plan.P:
                raise PlanError(f"event {ev.event_id}: planted sequence longer than P={plan.P}")
            for j, q in enumerate(tokens):
                if i != j and p.tokens in _runs(q):
                    raise PlanError(f"event {ev.event_id}: planted sequence {i} is contained in planted sequence {j}")
        for n in ev.noise_sequences:
            ntok = tuple((d.value, s) for s, d in n.packets)
            if ntok in tokens:
                raise PlanError(f"event {ev.event_id}: noise sequence is identical to a planted sequence")
            if len(set(n.samples)) >= plan.T or not set(n.samples) <= set(range(1, plan.T + 1)):
                raise PlanError(f"event {ev.event_id}: noise sequence must name fewer than T valid samples")


def _interleave(rng: random.Random, streams: list) -> list:
    """Random merge of per-stream record lists, keeping each stream's order."""
    cursors = [0] * len(streams)
    remaining = [len(s) for s in streams]
    out = []
    while any(remaining):
        live = [i for i, r in enumerate(remaining) if r]
        i = rng.choices(live, weights=[remaining[k] for k in live])[0]
        out.append(streams[i][cursors[i]])
        cursors[i] += 1
        remaining[i] -= 1
    return out


def _sample(plan: PlantPlan, ev: EventPlan, sample_id: int, rng: random.Random) -> TabulatedTrafficSample:
    planted_sizes = {s for p in ev.planted for s, _ in p.packets}
    lo, hi = plan.noise.sizes
    pool = [s for s in range(lo, hi + 1) if s % plan.T == sample_id % plan.T and s not in planted_sizes]
    if not pool:
        raise PlanError(f"event {ev.event_id}: no noise sizes left for sample {sample_id}")

    def noise_packets(k):
        return [(rng.choice(pool), rng.choice(list(Direction))) for _ in range(k)]

    bodies = []  # (domain label, [(size, direction)])
    for p in ev.planted:
        prefix = rng.randint(0, max(0, min(p.max_prefix, plan.P - len(p.packets))))
        bodies.append((_label(p.domain), noise_packets(prefix) + list(p.packets)))
    for n in ev.noise_sequences:
        if sample_id in n.samples:
            bodies.append((_label(n.domain), list(n.packets)))
    for k in range(rng.randint(*plan.noise.streams)):
        length = rng.randint(*plan.noise.packets)
        if rng.random() < 0.25:
            domain = DomainLabel(f"198.18.{sample_id % 256}.{k % 254 + 1}", DomainKind.IP)
        else:
            domain = DomainLabel(f"n{k}.e{ev.event_id}s{sample_id}.noise{sample_id}.net", DomainKind.DNS)
        bodies.append((domain, noise_packets(length)))
    rng.shuffle(bodies)

    streams = []
    for stream_id, (domain, pkts) in enumerate(bodies, start=1):
        streams.append([
            PacketRecord(ev.event_id, sample_id, stream_id, domain, pos, size, direction)
            for pos, (size, direction) in enumerate(pkts, start=1)
        ])
    return TabulatedTrafficSample(ev.event_id, sample_id, tuple(_interleave(rng, streams)))


def _ground_truth(plan: PlantPlan, ev: EventPlan, samples: list) -> Fingerprint:
    config = RefinementConfig.strict(Technique(TechniqueKind.SDBF), plan.T, P=plan.P)
    clusters = []
    for p in ev.planted:
        n = len(p.packets)
        members = []
        for sample in samples:
            for records in sample.streams.values():
                prefix = records[:plan.P]
                for i in range(len(prefix) - n + 1):
                    window = prefix[i:i + n]
                    if tuple((r.direction.value, r.size) for r in window) == p.tokens:
                        members.append(PacketSequence.from_records(window))
        clusters.append(Cluster(tuple(members)))
    return Fingerprint(ev.event_id, config.technique, config, tuple(clusters))


def generate_planted_dataset(plan: PlantPlan, seed: int, name: Optional[str] = None):
    """Build the dataset described by ``plan``; returns (dataset, {event_id: ground truth})."""
    if isinstance(plan, dict):
        plan = PlantPlan.from_dict(plan)
    validate_plan(plan)
    rng = random.Random(seed)
    events, truth = {}, {}
    for ev in plan.events:
        samples = [_sample(plan, ev, s, rng) for s in range(1, plan.T + 1)]
        events[ev.event_id] = samples
        truth[ev.event_id] = _ground_truth(plan, ev, samples)
    return Dataset(name or f"synth-{seed}", events), truth


def random_plan(
    rng: random.Random,
    n_events: int,
    T: int,
    planted_per_event=(1, 2),
    planted_length=(2, 6),
    sizes=(40, 1500),
    domains=("api.example.com", "cdn.example.net", "203.0.113.7", "telemetry.vendor.co.uk"),
) -> PlantPlan:
    """A plan of ``n_events`` events with random planted sequences; none is a run of another."""
    events = []
    for e in range(1, n_events + 1):
        planted = []
        for _ in range(rng.randint(*planted_per_event)):
            k = rng.randint(*planted_length)
            pkts = tuple((rng.randint(*sizes), rng.choice(list(Direction))) for _ in range(k))
            planted.append(PlantedSequence(rng.choice(domains), pkts))
        # drop planted sequences that are runs of other planted ones
        kept = []
        for i, p in enumerate(planted):
            others = [q.tokens for j, q in enumerate(planted) if j != i]
            if p.tokens in {t for q in others for t in _runs(q)}:
                continue
            if p.tokens in [q.tokens for q in kept]:
                continue
            kept.append(p)
        events.append(EventPlan(e, tuple(kept)))
    return PlantPlan(T, tuple(events), NoiseParams(sizes=sizes))
