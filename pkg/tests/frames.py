"""Fabricating Ethernet frames and capture files with dpkt for ingest tests."""

from __future__ import annotations

import ipaddress
import socket

import dpkt

from pktseqfp.ingest import RawCapture, decode_packet

DEVICE = "192.168.1.50"
SYN, FIN, RST, PSH, ACK = dpkt.tcp.TH_SYN, dpkt.tcp.TH_FIN, dpkt.tcp.TH_RST, dpkt.tcp.TH_PUSH, dpkt.tcp.TH_ACK


def _addr(ip: str) -> bytes:
    return ipaddress.ip_address(ip).packed


def ip_frame(src: str, dst: str, transport, proto: int) -> bytes:
    ip = dpkt.ip.IP(src=_addr(src), dst=_addr(dst), p=proto, ttl=64, data=transport)
    ip.len = len(ip)  # dpkt fills this on bytes() too; set explicitly for clarity
    eth = dpkt.ethernet.Ethernet(src=b"\x02" * 6, dst=b"\x04" * 6, type=dpkt.ethernet.ETH_TYPE_IP, data=ip)
    return bytes(eth)


def tcp_frame(src, dst, sport, dport, seq=0, flags=ACK, payload=b"") -> bytes:
    tcp = dpkt.tcp.TCP(sport=sport, dport=dport, seq=seq, ack=0, flags=flags, data=payload)
    return ip_frame(src, dst, tcp, dpkt.ip.IP_PROTO_TCP)


def udp_frame(src, dst, sport, dport, payload=b"") -> bytes:
    udp = dpkt.udp.UDP(sport=sport, dport=dport, data=payload)
    udp.ulen = len(udp)
    return ip_frame(src, dst, udp, dpkt.ip.IP_PROTO_UDP)


def dns_response(qname: str, answers, cnames=()) -> bytes:
    """Response for ``qname``; ``cnames`` is [(owner, target)], ``answers`` [(owner, ip)]."""
    msg = dpkt.dns.DNS(id=1, qr=dpkt.dns.DNS_R, opcode=dpkt.dns.DNS_QUERY, rcode=dpkt.dns.DNS_RCODE_NOERR)
    msg.qd = [dpkt.dns.DNS.Q(name=qname, type=dpkt.dns.DNS_A)]
    an = []
    for owner, target in cnames:
        an.append(dpkt.dns.DNS.RR(name=owner, type=dpkt.dns.DNS_CNAME, cls=dpkt.dns.DNS_IN, ttl=60, cname=target))
    for owner, ip in answers:
        an.append(dpkt.dns.DNS.RR(name=owner, type=dpkt.dns.DNS_A, cls=dpkt.dns.DNS_IN, ttl=60,
                                  rdata=socket.inet_aton(ip)))
    msg.an = an
    return bytes(msg)


def payload_for_ip_len(ip_len: int) -> bytes:
    """TCP payload giving an IPv4 total length of ``ip_len`` (20 + 20 header bytes)."""
    return b"\x17" * (ip_len - 40)


def capture(frames) -> RawCapture:
    """``frames`` is [(timestamp, frame bytes)]."""
    packets = [decode_packet(i, ts, f, 1) for i, (ts, f) in enumerate(frames)]
    packets.sort(key=lambda p: (p.timestamp, p.index))
    return RawCapture(tuple(packets), 1)


def write_pcap(path, frames) -> None:
    with open(path, "wb") as fh:
        w = dpkt.pcap.Writer(fh)
        for ts, f in frames:
            w.writepkt(f, ts=ts)


def handshake(client_port, server, t0, server_port=443, isn=1000, sisn=5000):
    """SYN, SYN-ACK, ACK between the device and ``server``."""
    return [
        (t0, tcp_frame(DEVICE, server, client_port, server_port, isn, SYN)),
        (t0 + 0.01, tcp_frame(server, DEVICE, server_port, client_port, sisn, SYN | ACK)),
        (t0 + 0.02, tcp_frame(DEVICE, server, client_port, server_port, isn + 1, ACK)),
    ]
