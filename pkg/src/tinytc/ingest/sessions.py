"""Bidirectional session reassembly, cleaning and fixed-length records."""

from __future__ import annotations

import enum
import struct
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from tinytc.errors import (
    EmptyAfterCleaning,
    EmptySession,
    MalformedHeader,
    UnsupportedProtocol,
)
from tinytc.ingest.pcap import LinkType, RawPacket

RECORD_LENGTH = 784

ETH_HEADER_LEN = 14
ETHERTYPE_IPV4 = 0x0800
ETHERTYPE_IPV6 = 0x86DD
ETHERTYPE_ARP = 0x0806
ETHERTYPE_VLAN = (0x8100, 0x88A8)

TCP_FIN = 0x01
TCP_SYN = 0x02
TCP_ACK = 0x10

DNS_PORT = 53


class Protocol(enum.IntEnum):
    TCP = 6
    UDP = 17


Endpoint = tuple[bytes, int]


@dataclass(frozen=True, order=True)
class SessionKey:
    endpoint_lo: Endpoint
    endpoint_hi: Endpoint
    protocol: Protocol

    @classmethod
    def from_endpoints(cls, a: Endpoint, b: Endpoint, protocol: Protocol) -> "SessionKey":
        lo, hi = (a, b) if a <= b else (b, a)
        return cls(lo, hi, Protocol(protocol))

    def canonical(self) -> "SessionKey":
        return SessionKey.from_endpoints(self.endpoint_lo, self.endpoint_hi, self.protocol)

    def __str__(self) -> str:
        def fmt(ep: Endpoint) -> str:
            return ".".join(str(b) for b in ep[0]) + f":{ep[1]}"
        return f"{self.protocol.name.lower()} {fmt(self.endpoint_lo)} <-> {fmt(self.endpoint_hi)}"


@dataclass
class Session:
    key: SessionKey
    packets: list[RawPacket] = field(default_factory=list)
    label: int | None = None


@dataclass(frozen=True)
class SessionRecord:
    """One fixed-length session vector; ``data`` holds the unscaled bytes."""

    data: np.ndarray
    label: int
    source_key: SessionKey | None = None

    def __post_init__(self):
        if self.data.shape != (RECORD_LENGTH,) or self.data.dtype != np.uint8:
            raise ValueError(f"record data must be uint8[{RECORD_LENGTH}]")

    @property
    def values(self) -> np.ndarray:
        return self.data.astype(np.float32) / np.float32(255.0)


@dataclass(frozen=True)
class HeaderInfo:
    """Offsets and fields of an IPv4 TCP/UDP packet, relative to the frame start."""

    ip_offset: int
    ip_header_len: int
    ip_total_len: int
    protocol: Protocol
    src: Endpoint
    dst: Endpoint
    transport_header_len: int
    payload_len: int
    tcp_flags: int = 0

    @property
    def payload_offset(self) -> int:
        return self.ip_offset + self.ip_header_len + self.transport_header_len


def _ip_offset(packet: RawPacket) -> int:
    data = packet.data
    if packet.link_type is LinkType.RAW_IP:
        return 0
    off = 12
    ethertype = struct.unpack_from("!H", data, off)[0]
    while ethertype in ETHERTYPE_VLAN:
        off += 4
        if off + 2 > len(data):
            raise MalformedHeader("truncated VLAN tag")
        ethertype = struct.unpack_from("!H", data, off)[0]
    if ethertype == ETHERTYPE_IPV6:
        raise UnsupportedProtocol("ipv6")
    if ethertype == ETHERTYPE_ARP:
        raise UnsupportedProtocol("arp")
    if ethertype != ETHERTYPE_IPV4:
        raise UnsupportedProtocol(f"ethertype 0x{ethertype:04x}")
    return off + 2


def parse_headers(packet: RawPacket) -> HeaderInfo:
    data = packet.data
    off = _ip_offset(packet)
    if len(data) < off + 20:
        raise MalformedHeader("truncated IPv4 header")
    version = data[off] >> 4
    if version == 6:
        raise UnsupportedProtocol("ipv6")
    if version != 4:
        raise MalformedHeader(f"IP version {version}")
    ihl = (data[off] & 0x0F) * 4
    total_len = struct.unpack_from("!H", data, off + 2)[0]
    if ihl < 20 or len(data) < off + ihl or total_len < ihl:
        raise MalformedHeader("bad IPv4 header length")
    frag = struct.unpack_from("!H", data, off + 6)[0] & 0x1FFF
    if frag:
        raise MalformedHeader("non-initial IPv4 fragment")
    proto = data[off + 9]
    if proto not in (Protocol.TCP, Protocol.UDP):
        raise UnsupportedProtocol(f"ip protocol {proto}")
    src_ip = bytes(data[off + 12:off + 16])
    dst_ip = bytes(data[off + 16:off + 20])
    t = off + ihl
    if proto == Protocol.TCP:
        if len(data) < t + 20:
            raise MalformedHeader("truncated TCP header")
        sport, dport = struct.unpack_from("!HH", data, t)
        thl = (data[t + 12] >> 4) * 4
        if thl < 20:
            raise MalformedHeader("bad TCP data offset")
        flags = data[t + 13]
    else:
        if len(data) < t + 8:
            raise MalformedHeader("truncated UDP header")
        sport, dport = struct.unpack_from("!HH", data, t)
        thl, flags = 8, 0
    payload = max(total_len - ihl - thl, 0)
    return HeaderInfo(off, ihl, total_len, Protocol(proto), (src_ip, sport), (dst_ip, dport), thl, payload, flags)


def session_key(packet: RawPacket) -> SessionKey:
    info = parse_headers(packet)
    return SessionKey.from_endpoints(info.src, info.dst, info.protocol)


def _skip_reason(exc: Exception) -> str:
    if isinstance(exc, UnsupportedProtocol):
        return str(exc).split()[0] if str(exc) in ("ipv6", "arp") else "unsupported_protocol"
    return "malformed"


def assemble_sessions(packets: Iterable[RawPacket], skipped: Counter | None = None) -> list[Session]:
    """Group TCP/UDP packets by canonical key, ordered by each session's first packet.

    Unparseable packets go to ``skipped`` keyed by reason.
    """
    sessions: dict[SessionKey, Session] = {}
    for pkt in packets:
        try:
            key = session_key(pkt)
        except (UnsupportedProtocol, MalformedHeader) as exc:
            if skipped is not None:
                skipped[_skip_reason(exc)] += 1
            continue
        sess = sessions.get(key)
        if sess is None:
            sess = sessions[key] = Session(key)
        sess.packets.append(pkt)
    # dict preserves insertion order = order of first packet
    return list(sessions.values())


def _dns_is_response(data: bytes, info: HeaderInfo) -> bool | None:
    off = info.payload_offset
    if info.payload_len < 12 or len(data) < off + 3:
        return None
    return bool(data[off + 2] & 0x80)


def clean_session(session: Session, filtered: Counter | None = None) -> Session:
    """Strip link headers, zero IPv4 addresses, drop non-payload and redundant DNS packets."""
    seen_query = seen_response = False
    out: list[RawPacket] = []
    for pkt in session.packets:
        info = parse_headers(pkt)
        if info.protocol is Protocol.TCP and info.payload_len == 0 and info.tcp_flags & (TCP_SYN | TCP_FIN | TCP_ACK):
            if filtered is not None:
                filtered["tcp_no_payload"] += 1
            continue
        if info.protocol is Protocol.UDP and DNS_PORT in (info.src[1], info.dst[1]):
            resp = _dns_is_response(pkt.data, info)
            keep = (resp is False and not seen_query) or (resp is True and not seen_response)
            if not keep:
                if filtered is not None:
                    filtered["dns_redundant"] += 1
                continue
            seen_query |= resp is False
            seen_response |= resp is True
        end = min(len(pkt.data), info.ip_offset + info.ip_total_len)
        ip = bytearray(pkt.data[info.ip_offset:end])
        ip[12:20] = bytes(8)
        out.append(RawPacket(pkt.timestamp_us, LinkType.RAW_IP, bytes(ip), pkt.orig_index))
    if not out:
        raise EmptyAfterCleaning(f"no packets left in session {session.key}")
    return replace(session, packets=out)


def session_bytes(session: Session) -> bytes:
    return b"".join(p.data for p in session.packets)


def to_record(session: Session, label: int, length: int = RECORD_LENGTH) -> SessionRecord:
    raw = session_bytes(session)
    if not raw:
        raise EmptySession(f"session {session.key} has no bytes")
    data = np.zeros(length, dtype=np.uint8)
    chunk = np.frombuffer(raw[:length], dtype=np.uint8)
    data[:len(chunk)] = chunk
    return SessionRecord(data, int(label), session.key)


def records_to_arrays(records: list[SessionRecord]) -> tuple[np.ndarray, np.ndarray]:
    """Stack records into ``X`` (n, 784) float32 in [0, 1] and integer labels ``y``."""
    if not records:
        return np.zeros((0, RECORD_LENGTH), np.float32), np.zeros(0, np.int64)
    X = np.stack([r.data for r in records]).astype(np.float32) / np.float32(255.0)
    y = np.array([r.label for r in records], dtype=np.int64)
    return X, y
