"""Record files (``MTCR``) and label maps."""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from tinytc.errors import IngestError
from tinytc.ingest.sessions import RECORD_LENGTH, SessionRecord

RECORD_MAGIC = b"MTCR"
RECORD_VERSION = 1
_HEADER = struct.Struct("<4sIII")


class RecordFileError(IngestError):
    pass


def write_records(path: str | os.PathLike, records: list[SessionRecord]) -> int:
    buf = bytearray(_HEADER.pack(RECORD_MAGIC, RECORD_VERSION, len(records), RECORD_LENGTH))
    for rec in records:
        buf += struct.pack("<H", rec.label)
        buf += rec.data.tobytes()
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(buf)
    os.replace(tmp, path)
    return len(buf)


def read_records(path: str | os.PathLike, scale: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Load a record file as ``(X, y)``; ``X`` is scaled to [0, 1] unless ``scale=False``."""
    buf = Path(path).read_bytes()
    if len(buf) < _HEADER.size:
        raise RecordFileError(f"{path}: too short for a record file")
    magic, version, count, length = _HEADER.unpack_from(buf)
    if magic != RECORD_MAGIC:
        raise RecordFileError(f"{path}: bad magic {magic!r}")
    if version != RECORD_VERSION:
        raise RecordFileError(f"{path}: unsupported record file version {version}")
    stride = 2 + length
    if len(buf) != _HEADER.size + count * stride:
        raise RecordFileError(f"{path}: expected {count} records of {length} bytes")
    body = np.frombuffer(buf, dtype=np.uint8, offset=_HEADER.size).reshape(count, stride)
    y = body[:, :2].copy().view("<u2").ravel().astype(np.int64)
    X = body[:, 2:].copy()
    if scale:
        X = X.astype(np.float32) / np.float32(255.0)
    return X, y


def write_label_map(path: str | os.PathLike, names: list[str]) -> None:
    text = "".join(f"{i}\t{name}\n" for i, name in enumerate(names))
    Path(path).write_text(text, encoding="utf-8")


def read_label_map(path: str | os.PathLike) -> dict[int, str]:
    labels: dict[int, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            idx, name = line.split("\t", 1)
            labels[int(idx)] = name.strip()
        except ValueError:
            raise RecordFileError(f"{path}:{lineno}: expected 'index<TAB>name'") from None
    return labels
