"""Packet capture ingestion: pcap parsing, session reassembly, cleaning, records."""

from tinytc.ingest.pcap import LinkType, RawPacket, parse_capture, write_capture
from tinytc.ingest.pipeline import IngestDiagnostics, ingest_capture
from tinytc.ingest.records import read_label_map, read_records, write_label_map, write_records
from tinytc.ingest.sessions import (
    RECORD_LENGTH,
    Protocol,
    Session,
    SessionKey,
    SessionRecord,
    assemble_sessions,
    clean_session,
    records_to_arrays,
    session_key,
    to_record,
)
from tinytc.ingest.synthetic import CorpusSpec, generate_class_captures, generate_synthetic_corpus

__all__ = [
    "RECORD_LENGTH", "CorpusSpec", "IngestDiagnostics", "LinkType", "Protocol", "RawPacket",
    "Session", "SessionKey", "SessionRecord", "assemble_sessions", "clean_session",
    "generate_class_captures", "generate_synthetic_corpus", "ingest_capture", "parse_capture",
    "read_label_map", "read_records", "records_to_arrays", "session_key", "to_record",
    "write_capture", "write_label_map", "write_records",
]
