"""Deterministic synthetic captures with per-class payload byte signatures.

Every session is a complete TCP conversation (three-way handshake, data in
both directions, FIN teardown). Only the payload bytes depend on the class,
so a classifier has to learn from content rather than from ports or sizes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from tinytc.errors import InvalidSpec
from tinytc.ingest.packets import tcp_frame
from tinytc.ingest.pcap import LinkType, write_capture
from tinytc.ingest.sessions import Protocol, SessionKey

BASE_FAMILIES = ("ascii", "uniform", "sparse", "periodic", "low", "high", "ramp", "gauss80")
SERVER_PORTS = (443, 80, 8443, 993, 5222)
HANDSHAKE_PACKETS = 3
TEARDOWN_PACKETS = 3


@dataclass
class CorpusSpec:
    n_classes: int = 4
    sessions_per_class: int = 50
    families: list[str] | None = None
    class_names: list[str] | None = None
    data_packets: tuple[int, int] = (3, 8)
    payload_size: tuple[int, int] = (80, 320)

    def resolved_families(self) -> list[str]:
        if self.families is not None:
            return list(self.families)
        extra = [f"gauss{c}" for c in (24, 152, 216, 40, 104, 176, 232, 8)]
        return list((BASE_FAMILIES + tuple(extra))[: self.n_classes])

    def resolved_names(self) -> list[str]:
        return list(self.class_names) if self.class_names is not None else self.resolved_families()

    def validate(self) -> None:
        if not 2 <= self.n_classes <= 16:
            raise InvalidSpec(f"n_classes must be in [2, 16], got {self.n_classes}")
        if self.sessions_per_class < 1:
            raise InvalidSpec("sessions_per_class must be >= 1")
        fams = self.resolved_families()
        if len(fams) != self.n_classes:
            raise InvalidSpec("one payload family per class is required")
        if len(set(fams)) != len(fams):
            raise InvalidSpec("payload families must be distinct")
        unknown = [f for f in fams if not _is_family(f)]
        if unknown:
            raise InvalidSpec(f"unknown payload families: {unknown}")
        names = self.resolved_names()
        if len(names) != self.n_classes or len(set(names)) != len(names):
            raise InvalidSpec("class names must be distinct, one per class")
        lo, hi = self.data_packets
        if not 1 <= lo <= hi:
            raise InvalidSpec("data_packets must be a range (lo, hi) with 1 <= lo <= hi")
        lo, hi = self.payload_size
        if not 1 <= lo <= hi <= 1400:
            raise InvalidSpec("payload_size must be within [1, 1400]")


def _is_family(name: str) -> bool:
    if name in BASE_FAMILIES:
        return True
    return name.startswith("gauss") and name[5:].isdigit() and 0 <= int(name[5:]) <= 255


def payload_bytes(family: str, n: int, rng: np.random.Generator) -> bytes:
    if family == "ascii":
        alphabet = np.frombuffer(b"etaoinshrdlu ETAOIN{}\":,0123456789", dtype=np.uint8)
        out = alphabet[rng.integers(0, len(alphabet), n)]
    elif family == "uniform":
        out = rng.integers(0, 256, n)
    elif family == "sparse":
        out = np.where(rng.random(n) < 0.85, 0, rng.integers(1, 256, n))
    elif family == "periodic":
        motif = rng.integers(128, 256, int(rng.integers(4, 12)))
        out = np.resize(motif, n)
    elif family == "low":
        out = rng.integers(0, 64, n)
    elif family == "high":
        out = rng.integers(192, 256, n)
    elif family == "ramp":
        out = (np.arange(n) * int(rng.integers(1, 4)) + int(rng.integers(0, 256))) % 256
    else:
        center = int(family[5:])
        out = np.clip(np.rint(rng.normal(center, 10.0, n)), 0, 255)
    return np.asarray(out, dtype=np.uint8).tobytes()


@dataclass
class _SynthSession:
    key: SessionKey
    label: int
    frames: list[bytes] = field(default_factory=list)


def _build_sessions(spec: CorpusSpec, rng: np.random.Generator) -> list[_SynthSession]:
    families = spec.resolved_families()
    sessions = []
    for label in range(spec.n_classes):
        for _ in range(spec.sessions_per_class):
            s = len(sessions)
            client = f"10.{1 + s // 62500}.{(s // 250) % 250}.{s % 250 + 1}"
            server = f"172.16.{int(rng.integers(0, 256))}.{int(rng.integers(1, 255))}"
            cport = int(rng.integers(1024, 65536))
            sport = SERVER_PORTS[int(rng.integers(0, len(SERVER_PORTS)))]
            cseq, sseq = int(rng.integers(0, 2**32)), int(rng.integers(0, 2**32))
            fw = dict(src=client, sport=cport, dst=server, dport=sport)
            bw = dict(src=server, sport=sport, dst=client, dport=cport)
            frames = [
                tcp_frame(**fw, flags="S", seq=cseq),
                tcp_frame(**bw, flags="SA", seq=sseq, ack=cseq + 1),
                tcp_frame(**fw, flags="A", seq=cseq + 1, ack=sseq + 1),
            ]
            cseq, sseq = cseq + 1, sseq + 1
            for i in range(int(rng.integers(spec.data_packets[0], spec.data_packets[1] + 1))):
                body = payload_bytes(families[label], int(rng.integers(*spec.payload_size, endpoint=True)), rng)
                if i % 2 == 0:
                    frames.append(tcp_frame(**fw, flags="PA", payload=body, seq=cseq, ack=sseq))
                    cseq += len(body)
                else:
                    frames.append(tcp_frame(**bw, flags="PA", payload=body, seq=sseq, ack=cseq))
                    sseq += len(body)
            frames += [
                tcp_frame(**fw, flags="FA", seq=cseq, ack=sseq),
                tcp_frame(**bw, flags="FA", seq=sseq, ack=cseq + 1),
                tcp_frame(**fw, flags="A", seq=cseq + 1, ack=sseq + 1),
            ]
            key = SessionKey.from_endpoints(
                (bytes(int(x) for x in client.split(".")), cport),
                (bytes(int(x) for x in server.split(".")), sport),
                Protocol.TCP,
            )
            sessions.append(_SynthSession(key, label, frames))
    return sessions


def _interleave(sessions: list[_SynthSession], rng: np.random.Generator, t0_us: int) -> list[tuple[int, bytes]]:
    cursors = [0] * len(sessions)
    active = list(range(len(sessions)))
    out = []
    t = t0_us
    while active:
        j = int(rng.integers(0, len(active)))
        s = active[j]
        out.append((t, sessions[s].frames[cursors[s]]))
        t += int(rng.integers(50, 5000))
        cursors[s] += 1
        if cursors[s] == len(sessions[s].frames):
            active.pop(j)
    return out


def generate_synthetic_corpus(spec: CorpusSpec, seed: int) -> tuple[bytes, dict[SessionKey, int]]:
    """Build one interleaved Ethernet capture plus its ground-truth session labels."""
    spec.validate()
    rng = np.random.default_rng(seed)
    sessions = _build_sessions(spec, rng)
    frames = _interleave(sessions, rng, 1_700_000_000_000_000)
    return write_capture(frames, LinkType.ETHERNET), {s.key: s.label for s in sessions}


def generate_class_captures(spec: CorpusSpec, seed: int) -> dict[str, bytes]:
    """Same sessions as :func:`generate_synthetic_corpus`, one capture per class name."""
    spec.validate()
    rng = np.random.default_rng(seed)
    sessions = _build_sessions(spec, rng)
    names = spec.resolved_names()
    out = {}
    for label, name in enumerate(names):
        mine = [s for s in sessions if s.label == label]
        out[name] = write_capture(_interleave(mine, np.random.default_rng([seed, label]), 1_700_000_000_000_000))
    return out
