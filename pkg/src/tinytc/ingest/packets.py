"""Frame builders used by the synthetic corpus and test fixtures."""

from __future__ import annotations

import struct

from tinytc.ingest.sessions import ETHERTYPE_IPV4, Protocol

TCP_FLAGS = {"F": 0x01, "S": 0x02, "R": 0x04, "P": 0x08, "A": 0x10, "U": 0x20}


def ip_checksum(header: bytes) -> int:
    if len(header) % 2:
        header += b"\0"
    total = sum(struct.unpack(f"!{len(header) // 2}H", header))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def ipv4(src: str | bytes, dst: str | bytes, proto: int, body: bytes, ident: int = 0, ttl: int = 64) -> bytes:
    def addr(a):
        return bytes(int(x) for x in a.split(".")) if isinstance(a, str) else bytes(a)
    hdr = bytearray(struct.pack("!BBHHHBBH4s4s", 0x45, 0, 20 + len(body), ident & 0xFFFF, 0x4000,
                                ttl, proto, 0, addr(src), addr(dst)))
    hdr[10:12] = struct.pack("!H", ip_checksum(bytes(hdr)))
    return bytes(hdr) + body


def tcp(sport: int, dport: int, flags: str | int, payload: bytes = b"", seq: int = 0, ack: int = 0) -> bytes:
    if isinstance(flags, str):
        flags = sum(TCP_FLAGS[f] for f in flags)
    return struct.pack("!HHIIBBHHH", sport, dport, seq & 0xFFFFFFFF, ack & 0xFFFFFFFF,
                       5 << 4, flags, 65535, 0, 0) + payload


def udp(sport: int, dport: int, payload: bytes = b"") -> bytes:
    return struct.pack("!HHHH", sport, dport, 8 + len(payload), 0) + payload


def dns_message(ident: int, response: bool, qname: str = "example.com") -> bytes:
    flags = 0x8180 if response else 0x0100
    question = b"".join(bytes([len(p)]) + p.encode() for p in qname.split(".")) + b"\0" + struct.pack("!HH", 1, 1)
    answers = 1 if response else 0
    msg = struct.pack("!HHHHHH", ident, flags, 1, answers, 0, 0) + question
    if response:
        msg += struct.pack("!HHHIH4s", 0xC00C, 1, 1, 60, 4, bytes([93, 184, 216, 34]))
    return msg


def ethernet(payload: bytes, ethertype: int = ETHERTYPE_IPV4,
             src_mac: bytes = b"\x02\x00\x00\x00\x00\x01", dst_mac: bytes = b"\x02\x00\x00\x00\x00\x02",
             pad_to: int = 60) -> bytes:
    frame = dst_mac + src_mac + struct.pack("!H", ethertype) + payload
    if len(frame) < pad_to:
        frame += bytes(pad_to - len(frame))
    return frame


def tcp_frame(src: str, sport: int, dst: str, dport: int, flags: str, payload: bytes = b"", **kw) -> bytes:
    return ethernet(ipv4(src, dst, Protocol.TCP, tcp(sport, dport, flags, payload, **kw)))


def udp_frame(src: str, sport: int, dst: str, dport: int, payload: bytes = b"") -> bytes:
    return ethernet(ipv4(src, dst, Protocol.UDP, udp(sport, dport, payload)))
