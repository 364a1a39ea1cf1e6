"""Hand-built capture fixtures with independently derived expected records."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from tinytc.ingest.packets import dns_message, ethernet, ipv4, tcp, udp
from tinytc.ingest.pcap import write_capture
from tinytc.ingest.sessions import Protocol

CLIENT, SERVER, RESOLVER = "10.0.0.1", "10.0.0.2", "8.8.8.8"


def zeroed(ip_packet: bytes) -> bytes:
    b = bytearray(ip_packet)
    b[12:20] = bytes(8)
    return bytes(b)


def record_of(*ip_packets: bytes, length: int = 784) -> np.ndarray:
    raw = b"".join(zeroed(p) for p in ip_packets)[:length]
    out = np.zeros(length, np.uint8)
    out[:len(raw)] = np.frombuffer(raw, np.uint8)
    return out


def tcp_ip(src, sport, dst, dport, flags, payload=b""):
    return ipv4(src, dst, Protocol.TCP, tcp(sport, dport, flags, payload))


def udp_ip(src, sport, dst, dport, payload=b""):
    return ipv4(src, dst, Protocol.UDP, udp(sport, dport, payload))


def handshake(sport, dport=443, c=CLIENT, s=SERVER):
    return [tcp_ip(c, sport, s, dport, "S"), tcp_ip(s, dport, c, sport, "SA"), tcp_ip(c, sport, s, dport, "A")]


def teardown(sport, dport=443, c=CLIENT, s=SERVER):
    return [tcp_ip(c, sport, s, dport, "FA"), tcp_ip(s, dport, c, sport, "FA"), tcp_ip(c, sport, s, dport, "A")]


@dataclass
class Golden:
    name: str
    ip_packets: list[bytes]
    expected: list[np.ndarray]
    filtered: dict[str, int] = field(default_factory=dict)
    dropped: dict[str, int] = field(default_factory=dict)

    def capture(self) -> bytes:
        return write_capture((1_000_000 + 1000 * i, ethernet(p)) for i, p in enumerate(self.ip_packets))


def handshake_only() -> Golden:
    pkts = handshake(40000) + teardown(40000)
    return Golden("handshake_only", pkts, [], {"tcp_no_payload": 6}, {"empty_after_cleaning": 1})


def mixed_dns() -> Golden:
    q1 = udp_ip(CLIENT, 5353, RESOLVER, 53, dns_message(1, False, "a.example"))
    q1_retry = udp_ip(CLIENT, 5353, RESOLVER, 53, dns_message(1, False, "a.example"))
    r1 = udp_ip(RESOLVER, 53, CLIENT, 5353, dns_message(1, True, "a.example"))
    r1_dup = udp_ip(RESOLVER, 53, CLIENT, 5353, dns_message(1, True, "a.example"))
    q2 = udp_ip(CLIENT, 5353, RESOLVER, 53, dns_message(2, False, "b.example"))
    return Golden("mixed_dns", [q1, q1_retry, r1, r1_dup, q2], [record_of(q1, r1)], {"dns_redundant": 3})


def long_session() -> Golden:
    data = [tcp_ip(CLIENT, 40001, SERVER, 443, "PA", bytes([i + 1]) * 400) for i in range(3)]
    pkts = handshake(40001) + data + teardown(40001)
    return Golden("long_session", pkts, [record_of(*data)], {"tcp_no_payload": 6})


def short_session() -> Golden:
    # the 4-byte payload frame is below the Ethernet minimum, so it carries a trailer
    small = tcp_ip(SERVER, 443, CLIENT, 40002, "PA", b"\xde\xad\xbe\xef")
    big = tcp_ip(CLIENT, 40002, SERVER, 443, "PA", bytes(range(100)))
    pkts = handshake(40002) + [big, small] + teardown(40002)
    return Golden("short_session", pkts, [record_of(big, small)], {"tcp_no_payload": 6})


def interleaved() -> Golden:
    a = [tcp_ip(CLIENT, 41000, SERVER, 443, "PA", b"A1" * 30), tcp_ip(SERVER, 443, CLIENT, 41000, "PA", b"a1" * 40),
         tcp_ip(CLIENT, 41000, SERVER, 443, "PA", b"A2" * 20)]
    b = [tcp_ip("10.0.0.3", 42000, SERVER, 8443, "PA", b"B1" * 25), tcp_ip(SERVER, 8443, "10.0.0.3", 42000, "PA", b"b1" * 35),
         tcp_ip(SERVER, 8443, "10.0.0.3", 42000, "PA", b"b2" * 15)]
    pkts = [a[0], b[0], a[1], b[1], b[2], a[2]]
    return Golden("interleaved", pkts, [record_of(*a), record_of(*b)])


ALL = (handshake_only, mixed_dns, long_session, short_session, interleaved)
