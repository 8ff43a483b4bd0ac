"""Packet capture loading, decoding and device-centric filtering."""

from __future__ import annotations

import ipaddress
import logging
import os
import struct
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional

import dpkt

log = logging.getLogger(__name__)

PCAPNG_MAGIC = b"\x0a\x0d\x0d\x0a"

DLT_NULL = 0
DLT_EN10MB = 1
DLT_RAW = 101
DLT_LOOP = 108
DLT_LINUX_SLL = 113
DLT_IPV4 = 228
DLT_IPV6 = 229
_RAW_IP_LINKTYPES = {DLT_RAW, 12, 14, DLT_IPV4, DLT_IPV6}

TCP = dpkt.ip.IP_PROTO_TCP
UDP = dpkt.ip.IP_PROTO_UDP
DNS_PORT = 53

_PRIVATE_NETS = [
    ipaddress.ip_network(n)
    for n in (
        "10.0.0.0/8",
        "172.16.0.0/12",
        "192.168.0.0/16",
        "127.0.0.0/8",
        "169.254.0.0/16",
        "::1/128",
        "fe80::/10",
        "fc00::/7",
    )
]


def is_private(address) -> bool:
    """RFC1918 (and IPv6 ULA), loopback and link-local count as private.

    ``ipaddress``'s own ``is_private`` is not used: it also flags documentation
    and reserved ranges, which would make e.g. 203.0.113.0/24 non-public.
    """
    ip = ipaddress.ip_address(address)
    if ip.version == 6 and ip.ipv4_mapped is not None:
        ip = ip.ipv4_mapped
    return any(ip in net for net in _PRIVATE_NETS if net.version == ip.version)


@dataclass(frozen=True)
class Packet:
    """One captured frame plus the header fields the pipeline needs.

    ``src``/``dst`` are None for non-IP frames; ``malformed`` frames could not
    be decoded and carry no header fields at all.
    """

    index: int
    timestamp: float
    frame: bytes = field(repr=False)
    linktype: int = DLT_EN10MB
    src: Optional[str] = None
    dst: Optional[str] = None
    proto: Optional[int] = None
    sport: Optional[int] = None
    dport: Optional[int] = None
    ip_len: int = 0
    tcp_seq: Optional[int] = None
    tcp_flags: int = 0
    payload: bytes = field(default=b"", repr=False)
    malformed: bool = False

    @property
    def is_ip(self) -> bool:
        return self.src is not None

    @property
    def is_tcp(self) -> bool:
        return self.proto == TCP

    @property
    def is_dns(self) -> bool:
        return self.proto in (TCP, UDP) and DNS_PORT in (self.sport, self.dport)


@dataclass(frozen=True)
class RawCapture:
    packets: tuple = ()
    linktype: int = DLT_EN10MB
    malformed_skipped: int = 0

    def __len__(self):
        return len(self.packets)

    def __iter__(self):
        return iter(self.packets)


_IP_ETHERTYPES = (dpkt.ethernet.ETH_TYPE_IP, dpkt.ethernet.ETH_TYPE_IP6)


def _checked(link, ethertype):
    if ethertype in _IP_ETHERTYPES and not isinstance(link.data, (dpkt.ip.IP, dpkt.ip6.IP6)):
        raise dpkt.UnpackError("truncated IP header")
    return link.data


def _network_layer(linktype: int, frame: bytes):
    if linktype == DLT_EN10MB:
        eth = dpkt.ethernet.Ethernet(frame)
        return _checked(eth, eth.type)
    if linktype == DLT_LINUX_SLL:
        sll = dpkt.sll.SLL(frame)
        return _checked(sll, sll.ethtype)
    if linktype in (DLT_NULL, DLT_LOOP):
        return dpkt.loopback.Loopback(frame).data
    if linktype in _RAW_IP_LINKTYPES:
        version = frame[0] >> 4 if frame else 0
        if version == 4:
            return dpkt.ip.IP(frame)
        if version == 6:
            return dpkt.ip6.IP6(frame)
        raise dpkt.UnpackError(f"bad IP version {version}")
    raise dpkt.UnpackError(f"unsupported link type {linktype}")


def decode_packet(index: int, timestamp: float, frame: bytes, linktype: int) -> Packet:
    """Decode one frame; undecodable frames come back with ``malformed=True``."""
    base = Packet(index=index, timestamp=float(timestamp), frame=bytes(frame), linktype=linktype)
    try:
        ip = _network_layer(linktype, frame)
        if isinstance(ip, dpkt.ip.IP):
            src, dst = ipaddress.IPv4Address(ip.src), ipaddress.IPv4Address(ip.dst)
            ip_len = ip.len
        elif isinstance(ip, dpkt.ip6.IP6):
            src, dst = ipaddress.IPv6Address(ip.src), ipaddress.IPv6Address(ip.dst)
            ip_len = ip.plen + 40
        else:
            return base
        transport = ip.data
        fields = dict(src=str(src), dst=str(dst), ip_len=ip_len, proto=ip.p)
        if isinstance(transport, dpkt.tcp.TCP):
            fields.update(
                sport=transport.sport,
                dport=transport.dport,
                tcp_seq=transport.seq,
                tcp_flags=transport.flags,
                payload=bytes(transport.data),
            )
        elif isinstance(transport, dpkt.udp.UDP):
            fields.update(sport=transport.sport, dport=transport.dport, payload=bytes(transport.data))
        elif ip.p in (TCP, UDP):
            # dpkt leaves the transport as raw bytes when it cannot parse it
            raise dpkt.UnpackError("truncated transport header")
        return replace(base, **fields)
    except (dpkt.UnpackError, struct.error, IndexError, ValueError) as exc:
        log.debug("frame %d undecodable: %s", index, exc)
        return replace(base, malformed=True)


def _reader(fh):
    magic = fh.read(4)
    fh.seek(0)
    if magic == PCAPNG_MAGIC:
        return dpkt.pcapng.Reader(fh)
    return dpkt.pcap.Reader(fh)


def load_capture(path) -> RawCapture:
    """Read a PCAP or PCAP-NG file, sorted by timestamp (ties keep file order)."""
    with open(path, "rb") as fh:
        reader = _reader(fh)
        linktype = reader.datalink()
        packets = [decode_packet(i, ts, buf, linktype) for i, (ts, buf) in enumerate(reader)]
    packets.sort(key=lambda p: (p.timestamp, p.index))
    return RawCapture(tuple(packets), linktype)


def capture_from_packets(packets: Iterable[Packet], linktype: int = DLT_EN10MB) -> RawCapture:
    ordered = sorted(packets, key=lambda p: (p.timestamp, p.index))
    return RawCapture(tuple(ordered), linktype)


def write_capture(capture: RawCapture, path) -> None:
    """Write a capture as classic little-endian PCAP (microsecond stamps)."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            writer = dpkt.pcap.Writer(fh, linktype=capture.linktype)
            for pkt in capture.packets:
                writer.writepkt(pkt.frame, ts=pkt.timestamp)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


@dataclass(frozen=True)
class FilterPolicy:
    device_address: str
    scope: str = "wan"
    dns_exempt: bool = True

    def __post_init__(self):
        addr = str(ipaddress.ip_address(self.device_address))
        object.__setattr__(self, "device_address", addr)
        if not is_private(addr):
            raise ValueError(f"device address {addr} is not in a private range")
        if self.scope not in ("wan", "lan"):
            raise ValueError(f"scope must be 'wan' or 'lan', not {self.scope!r}")


def _peer(pkt: Packet, device: str) -> Optional[str]:
    if pkt.src == device and pkt.dst != device:
        return pkt.dst
    if pkt.dst == device and pkt.src != device:
        return pkt.src
    return None


def keep_packet(pkt: Packet, policy: FilterPolicy) -> bool:
    if not pkt.is_ip:
        return False
    peer = _peer(pkt, policy.device_address)
    if peer is None:
        return False
    if policy.dns_exempt and pkt.is_dns:
        return True
    if policy.scope == "wan":
        return not is_private(peer)
    return is_private(peer)


def filter_sample(raw: RawCapture, policy: FilterPolicy) -> RawCapture:
    """Keep only datagrams between the device and a peer allowed by ``policy``."""
    kept = []
    malformed = raw.malformed_skipped
    for pkt in raw.packets:
        if pkt.malformed:
            malformed += 1
            continue
        if keep_packet(pkt, policy):
            kept.append(pkt)
    if malformed > raw.malformed_skipped:
        log.warning("skipped %d malformed packet(s)", malformed - raw.malformed_skipped)
    return RawCapture(tuple(kept), raw.linktype, malformed)
