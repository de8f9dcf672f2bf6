"""Unauthenticated classical channel between the two parties.

Every public exchange goes through :class:`PublicChannel`, which numbers it,
appends it to a :class:`Transcript` and hands it to an optional adversary
hook.  In ``PASSIVE`` mode the hook only gets a copy; in ``MITM`` mode its
return value is what the receiver sees.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, List, NamedTuple, Optional

import numpy as np

from .bits import pack, unpack
from .errors import SessionClosed


class MessageKind(str, Enum):
    BASES = "BASES"
    SIFT_INDICES = "SIFT_INDICES"
    QBER_SAMPLE = "QBER_SAMPLE"
    PARITY = "PARITY"
    PARITY_REPLY = "PARITY_REPLY"
    PERMUTATION_SEED = "PERMUTATION_SEED"
    PA_SEED = "PA_SEED"
    KA_SEED = "KA_SEED"
    AUTH_CHALLENGE = "AUTH_CHALLENGE"
    AUTH_RESPONSE = "AUTH_RESPONSE"
    VERDICT = "VERDICT"


class Mode(str, Enum):
    PASSIVE = "PASSIVE"
    MITM = "MITM"


class PublicMessage(NamedTuple):
    sender: str
    receiver: str
    seq: int
    kind: MessageKind
    payload: bytes

    def to_line(self) -> str:
        return f"{self.seq}\t{self.sender}\t{self.receiver}\t{self.kind.value}\t{self.payload.hex()}"

    @classmethod
    def from_line(cls, line: str) -> "PublicMessage":
        seq, sender, receiver, kind, payload = line.rstrip("\n").split("\t")[:5]
        return cls(sender, receiver, int(seq), MessageKind(kind), bytes.fromhex(payload))


class TranscriptEntry(NamedTuple):
    delivered: PublicMessage
    original: Optional[PublicMessage] = None  # set only when an adversary substituted

    @property
    def substituted(self) -> bool:
        return self.original is not None


@dataclass
class Transcript:
    entries: List[TranscriptEntry] = field(default_factory=list)

    def append(self, delivered: PublicMessage, original: Optional[PublicMessage] = None):
        entries = self.entries
        if entries and delivered.seq <= entries[-1].delivered.seq:
            raise ValueError("transcript sequence numbers must increase")
        entries.append(TranscriptEntry(delivered, original))

    @property
    def messages(self) -> List[PublicMessage]:
        return [e.delivered for e in self.entries]

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.messages)

    def of_kind(self, kind: MessageKind) -> List[PublicMessage]:
        return [m for m in self.messages if m.kind is kind]

    def dumps(self) -> str:
        """Line-delimited form: seq, sender, receiver, kind, payload hex.

        A substituted message carries a sixth ``orig=<hex>`` field holding the
        payload the sender actually put on the wire.
        """
        lines = []
        for e in self.entries:
            line = e.delivered.to_line()
            if e.original is not None:
                line += f"\torig={e.original.payload.hex()}"
            lines.append(line)
        return "".join(line + "\n" for line in lines)

    @classmethod
    def loads(cls, text: str) -> "Transcript":
        t = cls()
        for line in text.splitlines():
            if not line:
                continue
            msg = PublicMessage.from_line(line)
            original = None
            extra = line.split("\t")[5:]
            if extra and extra[0].startswith("orig="):
                original = PublicMessage(msg.sender, msg.receiver, msg.seq, msg.kind,
                                         bytes.fromhex(extra[0][5:]))
            t.append(msg, original)
        return t


# Adversary hook: PASSIVE ignores the return value, MITM delivers it.
Interposer = Callable[[PublicMessage], Optional[PublicMessage]]


class PublicChannel:
    def __init__(self, mode: Mode = Mode.PASSIVE, adversary: Optional[Interposer] = None):
        self.mode = Mode(mode)
        self.adversary = adversary
        self.transcript = Transcript()
        self.closed = False
        self._seq = 0

    def next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def send(self, msg: PublicMessage) -> PublicMessage:
        if self.closed:
            raise SessionClosed(f"cannot send {msg.kind.value}: session closed")
        if self.mode is Mode.PASSIVE:
            if self.adversary is not None:
                self.adversary(msg)
            self.transcript.append(msg)
            return msg
        delivered = self.adversary(msg) if self.adversary is not None else msg
        if delivered is None:
            delivered = msg
        if delivered.kind is not msg.kind:
            raise ValueError("an interposer may only substitute a message of the same kind")
        if delivered.seq != msg.seq or (delivered.sender, delivered.receiver) != (msg.sender, msg.receiver):
            delivered = PublicMessage(msg.sender, msg.receiver, msg.seq, msg.kind, delivered.payload)
        self.transcript.append(delivered, None if delivered == msg else msg)
        return delivered

    def post(self, sender: str, receiver: str, kind: MessageKind, payload: bytes) -> PublicMessage:
        self._seq += 1
        msg = PublicMessage(sender, receiver, self._seq, kind, payload)
        if self.adversary is None and not self.closed:
            # Nothing can intercept or reorder: record directly.
            self.transcript.entries.append(TranscriptEntry(msg))
            return msg
        return self.send(msg)

    def close(self):
        self.closed = True


# -- payload codecs ---------------------------------------------------------
# Every kind that the leak accounting has to read has a fixed layout.

_SAMPLE_REQUEST = b"Q"
_SAMPLE_REPLY = b"R"


def encode_sample_request(indices: np.ndarray, bits: np.ndarray) -> bytes:
    idx = np.asarray(indices, dtype=">u4")
    return _SAMPLE_REQUEST + struct.pack(">I", len(idx)) + idx.tobytes() + pack(bits)


def decode_sample_request(payload: bytes):
    if payload[:1] != _SAMPLE_REQUEST:
        raise ValueError("not a sample request")
    (count,) = struct.unpack_from(">I", payload, 1)
    start = 5 + 4 * count
    indices = np.frombuffer(payload[5:start], dtype=">u4").astype(np.int64)
    return indices, unpack(payload[start:], count)


def encode_sample_reply(bits: np.ndarray) -> bytes:
    return _SAMPLE_REPLY + struct.pack(">I", len(bits)) + pack(bits)


def decode_sample_reply(payload: bytes) -> np.ndarray:
    if payload[:1] != _SAMPLE_REPLY:
        raise ValueError("not a sample reply")
    (count,) = struct.unpack_from(">I", payload, 1)
    return unpack(payload[5:], count)


def sample_disclosure(payload: bytes) -> int:
    """Number of key positions a QBER_SAMPLE payload reveals (replies reveal none new)."""
    if payload[:1] == _SAMPLE_REQUEST and len(payload) >= 5:
        return struct.unpack_from(">I", payload, 1)[0]
    return 0


_PARITY = struct.Struct(">IIB")


def encode_parity(start: int, stop: int, parity: int) -> bytes:
    return _PARITY.pack(start, stop, parity)


def decode_parity(payload: bytes):
    return _PARITY.unpack(payload)


def encode_seed(seed: int) -> bytes:
    return struct.pack(">Q", seed)


def decode_seed(payload: bytes) -> int:
    return struct.unpack(">Q", payload)[0]


def parity_comparisons(messages: Iterable[PublicMessage]) -> int:
    """One PARITY announcement (with its reply) is one compared parity."""
    return sum(1 for m in messages if m.kind is MessageKind.PARITY)


def transcript_leak_bits(t: Transcript | Iterable[PublicMessage]) -> int:
    messages = t.messages if isinstance(t, Transcript) else list(t)
    sampled = sum(sample_disclosure(m.payload) for m in messages if m.kind is MessageKind.QBER_SAMPLE)
    return parity_comparisons(messages) + sampled
