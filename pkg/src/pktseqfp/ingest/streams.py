"""Assembly of device TCP traffic into payload-carrying, bidirectional streams."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import dpkt

from ..model import Direction, DomainLabel
from .capture import RawCapture
from .dns import DnsLog, extract_dns_log, resolve_domain
from .tls import parse_sni

_SYN = dpkt.tcp.TH_SYN
_ACK = dpkt.tcp.TH_ACK
_CLOSE = dpkt.tcp.TH_FIN | dpkt.tcp.TH_RST

# how many upstream data segments to gather when looking for a Client Hello
_HELLO_SEGMENTS = 4


@dataclass(frozen=True)
class StreamPacket:
    position: int
    size: int
    direction: Direction
    timestamp: float


@dataclass(frozen=True)
class TcpStreamRecord:
    stream_id: int
    endpoint_ip: str
    domain: Optional[DomainLabel]
    packets: tuple

    def __len__(self):
        return len(self.packets)


@dataclass
class _Conn:
    stream_id: int
    endpoint_ip: str
    closed: bool = False
    seen: set = field(default_factory=set)
    packets: list = field(default_factory=list)
    hello: list = field(default_factory=list)


def _conn_key(pkt):
    a, b = (pkt.src, pkt.sport), (pkt.dst, pkt.dport)
    return (a, b) if a <= b else (b, a)


def assemble_streams(
    filtered: RawCapture,
    device_address: str,
    dns: Optional[DnsLog] = None,
) -> list:
    """Group the device's TCP packets into streams of payload-carrying packets.

    Zero-payload segments and retransmissions (same direction, sequence number
    and payload length as an earlier accepted segment) are dropped.  A 4-tuple
    reused by a fresh SYN after FIN/RST starts a new stream.  Streams left
    without packets are omitted.
    """
    if dns is None:
        dns = extract_dns_log(filtered)
    current: dict = {}
    conns: list = []
    for pkt in filtered.packets:
        if not pkt.is_tcp or device_address not in (pkt.src, pkt.dst):
            continue
        key = _conn_key(pkt)
        conn = current.get(key)
        fresh_syn = pkt.tcp_flags & _SYN and not pkt.tcp_flags & _ACK
        if conn is None or (conn.closed and fresh_syn):
            peer = pkt.dst if pkt.src == device_address else pkt.src
            conn = _Conn(stream_id=len(conns) + 1, endpoint_ip=peer)
            current[key] = conn
            conns.append(conn)
        if pkt.tcp_flags & _CLOSE:
            conn.closed = True
        if not pkt.payload:
            continue
        up = pkt.src == device_address
        direction = Direction.UPSTREAM if up else Direction.DOWNSTREAM
        dedup = (direction, pkt.tcp_seq, len(pkt.payload))
        if dedup in conn.seen:
            continue
        conn.seen.add(dedup)
        conn.packets.append((pkt.timestamp, pkt.ip_len, direction))
        if up and len(conn.hello) < _HELLO_SEGMENTS:
            conn.hello.append(pkt.payload)

    streams = []
    for conn in conns:
        if not conn.packets:
            continue
        packets = tuple(
            StreamPacket(i, size, direction, ts)
            for i, (ts, size, direction) in enumerate(conn.packets, start=1)
        )
        stream = TcpStreamRecord(conn.stream_id, conn.endpoint_ip, None, packets)
        sni = parse_sni(b"".join(conn.hello)) if conn.hello else None
        domain = resolve_domain(stream, sni, dns)
        streams.append(TcpStreamRecord(conn.stream_id, conn.endpoint_ip, domain, packets))
    return streams
