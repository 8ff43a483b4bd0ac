"""DNS answer log and the SNI -> DNS -> IP domain-label fallback chain."""

from __future__ import annotations

import bisect
import ipaddress
import logging
import struct
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Optional

import dpkt

from ..model import DomainKind, DomainLabel, is_ip_literal
from .capture import TCP, RawCapture

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DnsEntry:
    timestamp: float
    queried_name: str
    resolved_ips: frozenset


@dataclass(frozen=True)
class DnsLog:
    entries: tuple = ()
    _by_ip: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        ordered = tuple(sorted(self.entries, key=lambda e: e.timestamp))
        object.__setattr__(self, "entries", ordered)
        index = defaultdict(list)
        for e in ordered:
            for ip in e.resolved_ips:
                index[str(ipaddress.ip_address(ip))].append(e)
        self._by_ip.update(index)

    def lookup(self, ip: str, at: float) -> Optional[str]:
        """Queried name of the latest entry at or before ``at`` that resolved ``ip``."""
        hits = self._by_ip.get(str(ipaddress.ip_address(ip)))
        if not hits:
            return None
        i = bisect.bisect_right([e.timestamp for e in hits], at)
        return hits[i - 1].queried_name if i else None


def _name(raw) -> str:
    return str(raw).rstrip(".").lower()


def answers_for_query(msg: dpkt.dns.DNS) -> Optional[DnsEntry]:
    """A/AAAA addresses reachable from the question name through CNAMEs."""
    if not msg.qd:
        return None
    qname = _name(msg.qd[0].name)
    cnames = defaultdict(set)
    addrs = defaultdict(set)
    for rr in msg.an:
        owner = _name(rr.name)
        if rr.type == dpkt.dns.DNS_CNAME:
            cnames[owner].add(_name(rr.cname))
        elif rr.type == dpkt.dns.DNS_A and len(rr.rdata) == 4:
            addrs[owner].add(str(ipaddress.IPv4Address(rr.rdata)))
        elif rr.type == dpkt.dns.DNS_AAAA and len(rr.rdata) == 16:
            addrs[owner].add(str(ipaddress.IPv6Address(rr.rdata)))
    seen, todo, ips = set(), [qname], set()
    while todo:
        name = todo.pop()
        if name in seen:
            continue
        seen.add(name)
        ips |= addrs.get(name, set())
        todo.extend(cnames.get(name, ()))
    if not ips:
        return None
    return DnsEntry(0.0, qname, frozenset(ips))


def _dns_messages(payload: bytes, over_tcp: bool) -> Iterable[bytes]:
    if not over_tcp:
        yield payload
        return
    pos = 0
    while pos + 2 <= len(payload):
        (length,) = struct.unpack("!H", payload[pos:pos + 2])
        if pos + 2 + length > len(payload):
            return
        yield payload[pos + 2:pos + 2 + length]
        pos += 2 + length


def extract_dns_log(capture: RawCapture) -> DnsLog:
    """Collect every DNS response with address answers found in ``capture``."""
    entries = []
    for pkt in capture.packets:
        if not pkt.is_dns or pkt.sport != 53 or not pkt.payload:
            continue
        for raw in _dns_messages(pkt.payload, pkt.proto == TCP):
            try:
                msg = dpkt.dns.DNS(raw)
            except (dpkt.UnpackError, struct.error, IndexError, ValueError):
                log.debug("undecodable DNS message in frame %d", pkt.index)
                continue
            if msg.qr != dpkt.dns.DNS_R or msg.rcode != dpkt.dns.DNS_RCODE_NOERR:
                continue
            entry = answers_for_query(msg)
            if entry is not None:
                entries.append(DnsEntry(pkt.timestamp, entry.queried_name, entry.resolved_ips))
    return DnsLog(tuple(entries))


def resolve_domain(stream, sni_observed: Optional[str], dns: DnsLog) -> DomainLabel:
    """Label a stream by SNI, else by the latest matching DNS answer, else by IP."""
    if sni_observed and not is_ip_literal(sni_observed):
        return DomainLabel(sni_observed, DomainKind.SNI)
    start = stream.packets[0].timestamp if stream.packets else float("inf")
    name = dns.lookup(stream.endpoint_ip, start)
    if name and not is_ip_literal(name):
        return DomainLabel(name, DomainKind.DNS)
    return DomainLabel.from_ip(stream.endpoint_ip)
