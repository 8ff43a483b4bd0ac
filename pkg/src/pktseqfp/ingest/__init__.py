"""Raw capture ingestion: decode, filter, assemble TCP streams, label domains, split."""

from .capture import (
    FilterPolicy,
    Packet,
    RawCapture,
    capture_from_packets,
    decode_packet,
    filter_sample,
    is_private,
    load_capture,
    write_capture,
)
from .dns import DnsEntry, DnsLog, extract_dns_log, resolve_domain
from .split import read_timestamps, split_by_events
from .streams import StreamPacket, TcpStreamRecord, assemble_streams
from .tls import parse_sni

__all__ = [
    "DnsEntry",
    "DnsLog",
    "FilterPolicy",
    "Packet",
    "RawCapture",
    "StreamPacket",
    "TcpStreamRecord",
    "assemble_streams",
    "capture_from_packets",
    "decode_packet",
    "extract_dns_log",
    "filter_sample",
    "is_private",
    "load_capture",
    "parse_sni",
    "read_timestamps",
    "resolve_domain",
    "split_by_events",
    "write_capture",
]
