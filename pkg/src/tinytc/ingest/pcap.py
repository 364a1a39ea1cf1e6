"""Classic libpcap container reading and writing."""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterable

from tinytc.errors import BadMagic, TruncatedRecord, UnsupportedLinkType

MAGIC_US = 0xA1B2C3D4
MAGIC_NS = 0xA1B23C4D

GLOBAL_HEADER_LEN = 24
RECORD_HEADER_LEN = 16


class LinkType(enum.IntEnum):
    ETHERNET = 1
    RAW_IP = 101

    @property
    def min_header(self) -> int:
        return 14 if self is LinkType.ETHERNET else 20


@dataclass(frozen=True)
class RawPacket:
    timestamp_us: int
    link_type: LinkType
    data: bytes
    orig_index: int

    def __len__(self) -> int:
        return len(self.data)


def _detect_order(magic_bytes: bytes) -> tuple[str, bool]:
    for order in ("<", ">"):
        (magic,) = struct.unpack(order + "I", magic_bytes)
        if magic == MAGIC_US:
            return order, False
        if magic == MAGIC_NS:
            return order, True
    raise BadMagic(f"not a classic pcap file (magic {magic_bytes.hex()})")


def parse_capture(stream: bytes | BinaryIO, skipped: dict | None = None) -> list[RawPacket]:
    """Read every record of a classic pcap capture.

    ``stream`` may be raw bytes or a binary file object. Frames shorter than
    the link header are dropped and tallied under ``skipped['short_frame']``
    when a tally dict is supplied; ``orig_index`` still reflects the position
    in the capture.
    """
    buf = stream if isinstance(stream, (bytes, bytearray, memoryview)) else stream.read()
    buf = bytes(buf)
    if len(buf) < GLOBAL_HEADER_LEN:
        raise BadMagic("capture shorter than the pcap global header")
    order, nanos = _detect_order(buf[:4])
    _, _, _, _, snaplen, network = struct.unpack(order + "HHiIII", buf[4:24])
    try:
        link = LinkType(network)
    except ValueError:
        raise UnsupportedLinkType(f"link type {network} is not supported") from None

    packets: list[RawPacket] = []
    pos = GLOBAL_HEADER_LEN
    index = 0
    rec = struct.Struct(order + "IIII")
    while pos < len(buf):
        if pos + RECORD_HEADER_LEN > len(buf):
            raise TruncatedRecord(f"record header at offset {pos} exceeds remaining bytes")
        ts_sec, ts_frac, incl_len, _orig_len = rec.unpack_from(buf, pos)
        pos += RECORD_HEADER_LEN
        if pos + incl_len > len(buf):
            raise TruncatedRecord(f"record {index} claims {incl_len} bytes, {len(buf) - pos} remain")
        data = buf[pos:pos + min(incl_len, snaplen or incl_len)]
        pos += incl_len
        ts_us = ts_sec * 1_000_000 + (ts_frac // 1000 if nanos else ts_frac)
        if len(data) >= link.min_header:
            packets.append(RawPacket(ts_us, link, data, index))
        elif skipped is not None:
            skipped["short_frame"] = skipped.get("short_frame", 0) + 1
        index += 1
    return packets


def write_capture(
    frames: Iterable[tuple[int, bytes]],
    link_type: LinkType = LinkType.ETHERNET,
    byteorder: str = "<",
    snaplen: int = 65535,
) -> bytes:
    """Serialize ``(timestamp_us, frame)`` pairs as a classic pcap capture."""
    out = bytearray(struct.pack(byteorder + "IHHiIII", MAGIC_US, 2, 4, 0, 0, snaplen, int(link_type)))
    for ts_us, frame in frames:
        sec, usec = divmod(int(ts_us), 1_000_000)
        incl = min(len(frame), snaplen)
        out += struct.pack(byteorder + "IIII", sec, usec, incl, len(frame))
        out += frame[:incl]
    return bytes(out)
