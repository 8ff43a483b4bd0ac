"""Server Name Indication extraction from a TLS Client Hello."""

from __future__ import annotations

import struct
from typing import Optional

_HANDSHAKE = 0x16
_CLIENT_HELLO = 0x01
_EXT_SERVER_NAME = 0x0000
_HOST_NAME = 0x00


class _Truncated(Exception):
    pass


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise _Truncated
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("!H", self.take(2))[0]

    def u24(self) -> int:
        return int.from_bytes(self.take(3), "big")


def _handshake_bytes(data: bytes) -> bytes:
    """Concatenate the payloads of consecutive TLS handshake records."""
    out = bytearray()
    pos = 0
    while pos + 5 <= len(data):
        content_type = data[pos]
        if content_type != _HANDSHAKE:
            break
        length = struct.unpack("!H", data[pos + 3:pos + 5])[0]
        out += data[pos + 5:pos + 5 + length]
        pos += 5 + length
    return bytes(out)


def parse_sni(data: bytes) -> Optional[str]:
    """Return the SNI host name in ``data`` (client-to-server TLS bytes), if any.

    Anything malformed, truncated, or not a Client Hello yields None.
    """
    if len(data) < 5 or data[0] != _HANDSHAKE or data[1] != 3:
        return None
    r = _Reader(_handshake_bytes(data))
    try:
        if r.u8() != _CLIENT_HELLO:
            return None
        body = _Reader(r.take(r.u24()))
        body.take(2 + 32)  # legacy_version, random
        body.take(body.u8())  # session id
        body.take(body.u16())  # cipher suites
        body.take(body.u8())  # compression methods
        if body.pos == len(body.buf):
            return None  # no extensions block
        exts = _Reader(body.take(body.u16()))
        while exts.pos < len(exts.buf):
            ext_type = exts.u16()
            ext = _Reader(exts.take(exts.u16()))
            if ext_type != _EXT_SERVER_NAME:
                continue
            names = _Reader(ext.take(ext.u16()))
            while names.pos < len(names.buf):
                name_type = names.u8()
                name = names.take(names.u16())
                if name_type == _HOST_NAME:
                    return _normalize(name)
            return None
    except _Truncated:
        return None
    return None


def _normalize(raw: bytes) -> Optional[str]:
    try:
        name = raw.decode("ascii").rstrip(".").lower()
    except UnicodeDecodeError:
        return None
    if not name or any(c.isspace() for c in name):
        return None
    return name


def build_client_hello(server_name: Optional[str], *, record_split: int = 0) -> bytes:
    """Minimal Client Hello carrying ``server_name``; used to fabricate captures.

    ``record_split`` > 0 fragments the handshake across two TLS records.
    """
    exts = b""
    if server_name is not None:
        host = server_name.encode("ascii")
        entry = bytes([_HOST_NAME]) + struct.pack("!H", len(host)) + host
        sni = struct.pack("!H", len(entry)) + entry
        exts += struct.pack("!HH", _EXT_SERVER_NAME, len(sni)) + sni
    exts += struct.pack("!HH", 0x000B, 2) + b"\x01\x00"  # ec_point_formats
    body = (
        b"\x03\x03"
        + bytes(32)
        + b"\x00"
        + struct.pack("!H", 2) + b"\x13\x01"
        + b"\x01\x00"
        + struct.pack("!H", len(exts)) + exts
    )
    hs = bytes([_CLIENT_HELLO]) + len(body).to_bytes(3, "big") + body
    chunks = [hs[:record_split], hs[record_split:]] if record_split else [hs]
    return b"".join(bytes([_HANDSHAKE, 3, 1]) + struct.pack("!H", len(c)) + c for c in chunks)
