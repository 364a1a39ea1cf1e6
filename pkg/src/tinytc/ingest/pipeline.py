"""Capture-to-records pipeline with per-reason diagnostics."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Callable

from tinytc.errors import EmptyAfterCleaning
from tinytc.ingest.pcap import parse_capture
from tinytc.ingest.sessions import (
    SessionKey,
    SessionRecord,
    assemble_sessions,
    clean_session,
    to_record,
)


@dataclass
class IngestDiagnostics:
    packets: int = 0
    sessions_total: int = 0
    sessions_kept: int = 0
    sessions_dropped: Counter = field(default_factory=Counter)
    skipped: Counter = field(default_factory=Counter)
    filtered: Counter = field(default_factory=Counter)

    def merge(self, other: "IngestDiagnostics") -> "IngestDiagnostics":
        return IngestDiagnostics(
            self.packets + other.packets,
            self.sessions_total + other.sessions_total,
            self.sessions_kept + other.sessions_kept,
            self.sessions_dropped + other.sessions_dropped,
            self.skipped + other.skipped,
            self.filtered + other.filtered,
        )

    def as_dict(self) -> dict:
        return {
            "packets": self.packets,
            "sessions_total": self.sessions_total,
            "sessions_kept": self.sessions_kept,
            "sessions_dropped": dict(sorted(self.sessions_dropped.items())),
            "packets_skipped": dict(sorted(self.skipped.items())),
            "packets_filtered": dict(sorted(self.filtered.items())),
        }


LabelFn = Callable[[SessionKey], "int | None"]


def ingest_capture(
    capture: bytes,
    label: int | LabelFn,
    diagnostics: IngestDiagnostics | None = None,
) -> list[SessionRecord]:
    """Run parse, assemble, clean and record conversion over one capture.

    ``label`` is either one label index for every session (one capture per
    class) or a callable mapping session keys to labels; sessions mapped to
    ``None`` are dropped as ``unlabeled``.
    """
    diag = diagnostics if diagnostics is not None else IngestDiagnostics()
    short_before = diag.skipped["short_frame"]
    packets = parse_capture(capture, skipped=diag.skipped)
    diag.packets += len(packets) + diag.skipped["short_frame"] - short_before
    sessions = assemble_sessions(packets, skipped=diag.skipped)
    diag.sessions_total += len(sessions)
    records = []
    for sess in sessions:
        lab = label(sess.key) if callable(label) else label
        if lab is None:
            diag.sessions_dropped["unlabeled"] += 1
            continue
        try:
            cleaned = clean_session(sess, filtered=diag.filtered)
        except EmptyAfterCleaning:
            diag.sessions_dropped["empty_after_cleaning"] += 1
            continue
        records.append(to_record(cleaned, lab))
        diag.sessions_kept += 1
    return records
