"""Search checkpoint files.

Layout (little-endian)::

    b"MTCK" | u16 version | 32-byte config SHA-256 | u32 payload length
    | payload (UTF-8 JSON: RNG state, parent, log, log offset) | u32 CRC-32 of all preceding bytes
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from pathlib import Path

from tinytc.errors import CorruptCheckpoint

CHECKPOINT_MAGIC = b"MTCK"
CHECKPOINT_VERSION = 1
_HEAD = struct.Struct("<4sH32sI")


def encode_checkpoint(state: dict, config_hash: bytes) -> bytes:
    payload = json.dumps(state, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = _HEAD.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, config_hash, len(payload)) + payload
    return body + struct.pack("<I", zlib.crc32(body))


def decode_checkpoint(buf: bytes, expected_hash: bytes | None = None) -> dict:
    if len(buf) < _HEAD.size + 4:
        raise CorruptCheckpoint("checkpoint truncated")
    magic, version, cfg_hash, length = _HEAD.unpack_from(buf)
    if magic != CHECKPOINT_MAGIC:
        raise CorruptCheckpoint(f"bad magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise CorruptCheckpoint(f"unsupported checkpoint version {version}")
    if len(buf) != _HEAD.size + length + 4:
        raise CorruptCheckpoint("checkpoint truncated or padded")
    (crc,) = struct.unpack_from("<I", buf, len(buf) - 4)
    if zlib.crc32(buf[:-4]) != crc:
        raise CorruptCheckpoint("checksum mismatch")
    if expected_hash is not None and cfg_hash != expected_hash:
        raise CorruptCheckpoint("config hash mismatch")
    try:
        return json.loads(buf[_HEAD.size:_HEAD.size + length].decode("utf-8"))
    except ValueError as exc:
        raise CorruptCheckpoint(f"unreadable payload: {exc}") from None


def write_checkpoint(path, state: dict, config_hash: bytes) -> int:
    data = encode_checkpoint(state, config_hash)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)
    return len(data)


def read_checkpoint(path, expected_hash: bytes | None = None) -> dict:
    return decode_checkpoint(Path(path).read_bytes(), expected_hash)
