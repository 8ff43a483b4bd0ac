"""Small value types shared by every stage of the pipeline."""

from __future__ import annotations

import enum
import ipaddress
from dataclasses import dataclass


class Direction(str, enum.Enum):
    """Packet direction relative to the fingerprinted device."""

    UPSTREAM = "upstream"
    DOWNSTREAM = "downstream"

    @classmethod
    def parse(cls, token: str) -> "Direction":
        try:
            return cls(token)
        except ValueError:
            raise ValueError(f"unknown direction {token!r}") from None

    def __str__(self) -> str:
        return self.value


class DomainKind(str, enum.Enum):
    """Where a stream's domain label came from."""

    SNI = "SNI"
    DNS = "DNS"
    IP = "IP"

    def __str__(self) -> str:
        return self.value


def is_ip_literal(value: str) -> bool:
    try:
        ipaddress.ip_address(value)
    except ValueError:
        return False
    return True


@dataclass(frozen=True, order=True)
class DomainLabel:
    """Server identity of a stream: a hostname (from SNI or DNS) or a bare IP."""

    value: str
    kind: DomainKind

    def __post_init__(self):
        if not self.value:
            raise ValueError("empty domain label")
        if not isinstance(self.kind, DomainKind):
            object.__setattr__(self, "kind", DomainKind(self.kind))
        ip = is_ip_literal(self.value)
        if ip != (self.kind is DomainKind.IP):
            raise ValueError(f"domain label {self.value!r} inconsistent with kind {self.kind.value}")

    @classmethod
    def from_ip(cls, address) -> "DomainLabel":
        return cls(str(ipaddress.ip_address(address)), DomainKind.IP)

    @property
    def is_ip(self) -> bool:
        return self.kind is DomainKind.IP

    def __str__(self) -> str:
        return self.value
